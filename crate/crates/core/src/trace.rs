//! Recorded experiment output and its CSV form.
//!
//! Column order: `t`; per neuron `v.i` (plus `vmeas.i`, `v_hat.i` when an
//! observer runs); gating blocks `w.<id>.k` then `w_hat.<id>.k`; parameters
//! `theta_hat.<id>.k` then `theta_true.<id>.k`; diagnostics
//! `psi.<id>.r.c`, `p_min_eig.<block>`, optionally `p.<block>.r.c`, and
//! finally `psi_norm`, `innovation_norm`. Indices are one-based.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::observer::ObserverMode;

pub const TRACE_VERSION_LINE: &str = "# distobs-trace v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub id: String,
    pub n_theta: usize,
    pub n_w: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObserverLayout {
    /// Gain blocks as `(label, dimension)`: `("all", n_theta)` for the full
    /// observer, one entry per current type otherwise.
    pub gain_blocks: Vec<(String, usize)>,
    /// Whether every entry of every gain block is recorded.
    pub gain_matrices: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLayout {
    pub n_v: usize,
    pub blocks: Vec<BlockLayout>,
    pub observer: Option<ObserverLayout>,
}

pub const FULL_GAIN_LABEL: &str = "all";

impl TraceLayout {
    pub fn new(model: &NetworkModel, mode: Option<ObserverMode>, gain_matrices: bool) -> Self {
        let blocks: Vec<BlockLayout> = model
            .currents
            .iter()
            .enumerate()
            .map(|(j, c)| BlockLayout {
                id: c.id.clone(),
                n_theta: model.n_theta_block(j),
                n_w: model.n_w_block(j),
            })
            .collect();
        let observer = mode.map(|mode| ObserverLayout {
            gain_blocks: match mode {
                ObserverMode::Full => vec![(FULL_GAIN_LABEL.to_string(), model.n_theta())],
                _ => blocks.iter().map(|b| (b.id.clone(), b.n_theta)).collect(),
            },
            gain_matrices,
        });
        TraceLayout {
            n_v: model.n_v(),
            blocks,
            observer,
        }
    }

    pub fn n_theta(&self) -> usize {
        self.blocks.iter().map(|b| b.n_theta).sum()
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        let obs = self.observer.is_some();
        for i in 1..=self.n_v {
            cols.push(format!("v.{i}"));
            if obs {
                cols.push(format!("vmeas.{i}"));
                cols.push(format!("v_hat.{i}"));
            }
        }
        let per_block = |cols: &mut Vec<String>, prefix: &str, size: fn(&BlockLayout) -> usize| {
            for b in &self.blocks {
                for k in 1..=size(b) {
                    cols.push(format!("{prefix}.{}.{k}", b.id));
                }
            }
        };
        per_block(&mut cols, "w", |b| b.n_w);
        if obs {
            per_block(&mut cols, "w_hat", |b| b.n_w);
            per_block(&mut cols, "theta_hat", |b| b.n_theta);
        }
        per_block(&mut cols, "theta_true", |b| b.n_theta);
        if let Some(o) = &self.observer {
            for b in &self.blocks {
                for r in 1..=b.n_theta {
                    for c in 1..=self.n_v {
                        cols.push(format!("psi.{}.{r}.{c}", b.id));
                    }
                }
            }
            for (label, _) in &o.gain_blocks {
                cols.push(format!("p_min_eig.{label}"));
            }
            if o.gain_matrices {
                for (label, n) in &o.gain_blocks {
                    for r in 1..=*n {
                        for c in 1..=*n {
                            cols.push(format!("p.{label}.{r}.{c}"));
                        }
                    }
                }
            }
            cols.push("psi_norm".into());
            cols.push("innovation_norm".into());
        }
        cols
    }

    /// Rebuild the layout implied by a CSV header.
    pub fn from_columns(columns: &[String]) -> Result<Self> {
        let n_v = columns.iter().filter(|c| c.starts_with("v.")).count();
        let has_observer = columns.iter().any(|c| c.starts_with("v_hat."));
        let mut blocks: Vec<BlockLayout> = Vec::new();
        for c in columns {
            if let Some(rest) = c.strip_prefix("theta_true.") {
                let id = rest.rsplit_once('.').map(|(id, _)| id).unwrap_or(rest);
                match blocks.iter_mut().find(|b| b.id == id) {
                    Some(b) => b.n_theta += 1,
                    None => blocks.push(BlockLayout {
                        id: id.to_string(),
                        n_theta: 1,
                        n_w: 0,
                    }),
                }
            }
        }
        for c in columns {
            if let Some(rest) = c.strip_prefix("w.") {
                let id = rest.rsplit_once('.').map(|(id, _)| id).unwrap_or(rest);
                let b = blocks
                    .iter_mut()
                    .find(|b| b.id == id)
                    .ok_or_else(|| Error::MissingColumn(format!("theta_true.{id}.1")))?;
                b.n_w += 1;
            }
        }
        let observer = has_observer.then(|| {
            let gain_blocks = columns
                .iter()
                .filter_map(|c| c.strip_prefix("p_min_eig."))
                .map(|label| {
                    let n = if label == FULL_GAIN_LABEL {
                        blocks.iter().map(|b| b.n_theta).sum()
                    } else {
                        blocks
                            .iter()
                            .find(|b| b.id == label)
                            .map_or(0, |b| b.n_theta)
                    };
                    (label.to_string(), n)
                })
                .collect();
            ObserverLayout {
                gain_blocks,
                gain_matrices: columns.iter().any(|c| c.starts_with("p.")),
            }
        });
        let layout = TraceLayout {
            n_v,
            blocks,
            observer,
        };
        let expected = layout.columns();
        if expected != columns {
            if let Some(missing) = expected.iter().find(|c| !columns.contains(c)) {
                return Err(Error::MissingColumn(missing.clone()));
            }
            return Err(Error::MalformedTrace("unexpected column order".into()));
        }
        Ok(layout)
    }
}

/// Uniformly sampled record of one experiment, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    layout: TraceLayout,
    columns: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl Trace {
    pub fn new(layout: TraceLayout) -> Self {
        let columns = layout.columns();
        let index = columns
            .iter()
            .enumerate()
            .map(|(k, c)| (c.clone(), k))
            .collect();
        Trace {
            layout,
            columns,
            index,
            data: Vec::new(),
        }
    }

    pub fn layout(&self) -> &TraceLayout {
        &self.layout
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::dims("trace row", self.width(), row.len()));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let w = self.width();
        &self.data[s * w..(s + 1) * w]
    }

    pub fn time(&self, s: usize) -> f64 {
        self.row(s)[0]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|s| self.time(s)).collect()
    }

    /// Sample spacing (ms); zero for traces with fewer than two samples.
    pub fn spacing(&self) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            (self.time(self.len() - 1) - self.time(0)) / (self.len() - 1) as f64
        }
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        Ok((0..self.len()).map(|s| self.row(s)[k]).collect())
    }

    pub fn value(&self, s: usize, name: &str) -> Result<f64> {
        Ok(self.row(s)[self.column_index(name)?])
    }

    fn contiguous(&self, s: usize, first: &str, n: usize) -> Result<&[f64]> {
        let k = self.column_index(first)?;
        Ok(&self.row(s)[k..k + n])
    }

    fn first_label(&self, prefix: &str) -> String {
        format!(
            "{prefix}.{}.1",
            self.layout.blocks.first().map_or("", |b| b.id.as_str())
        )
    }

    pub fn theta_true(&self, s: usize) -> Result<&[f64]> {
        self.contiguous(s, &self.first_label("theta_true"), self.layout.n_theta())
    }

    pub fn theta_hat(&self, s: usize) -> Result<&[f64]> {
        self.contiguous(s, &self.first_label("theta_hat"), self.layout.n_theta())
    }

    /// Parameter labels `<id>.<k>` in block order.
    pub fn theta_labels(&self) -> Vec<String> {
        self.layout
            .blocks
            .iter()
            .flat_map(|b| (1..=b.n_theta).map(move |k| format!("{}.{k}", b.id)))
            .collect()
    }

    /// `Psi_j` at sample `s` as an `n_theta^j x n_v` matrix.
    pub fn psi_block(&self, s: usize, j: usize) -> Result<DMatrix<f64>> {
        let b = &self.layout.blocks[j];
        let vals = self.contiguous(s, &format!("psi.{}.1.1", b.id), b.n_theta * self.layout.n_v)?;
        Ok(DMatrix::from_row_slice(b.n_theta, self.layout.n_v, vals))
    }

    /// Recorded gain block `g` at sample `s`, when gain matrices were kept.
    pub fn gain_matrix(&self, s: usize, g: usize) -> Result<DMatrix<f64>> {
        let obs = self
            .layout
            .observer
            .as_ref()
            .ok_or_else(|| Error::MissingColumn("p_min_eig".into()))?;
        let (label, n) = &obs.gain_blocks[g];
        let vals = self.contiguous(s, &format!("p.{label}.1.1"), n * n)?;
        Ok(DMatrix::from_row_slice(*n, *n, vals))
    }

    /// Copy of the first `n` samples.
    pub fn truncated(&self, n: usize) -> Trace {
        let mut out = self.clone();
        out.data.truncate(n.min(self.len()) * self.width());
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut writer = writer;
        writeln!(writer, "{TRACE_VERSION_LINE}")?;
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(&self.columns)?;
        let mut buf = Vec::with_capacity(self.width());
        for s in 0..self.len() {
            buf.clear();
            buf.extend(self.row(s).iter().map(|x| format!("{x:?}")));
            csv.write_record(&buf)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(mut reader: R) -> Result<Trace> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
        if first.trim_end() != TRACE_VERSION_LINE {
            return Err(Error::MalformedTrace(format!(
                "expected `{TRACE_VERSION_LINE}` on the first line, found `{}`",
                first.trim_end()
            )));
        }
        let mut csv = csv::Reader::from_reader(rest.as_bytes());
        let columns: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("t") {
            return Err(Error::MissingColumn("t".into()));
        }
        let layout = TraceLayout::from_columns(&columns)?;
        let mut trace = Trace::new(layout);
        let mut row = Vec::with_capacity(trace.width());
        for rec in csv.records() {
            let rec = rec?;
            row.clear();
            for field in rec.iter() {
                row.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::MalformedTrace(format!("bad number `{field}`: {e}")))?,
                );
            }
            trace.push_row(&row)?;
        }
        Ok(trace)
    }

    pub fn load_csv(path: &Path) -> Result<Trace> {
        Trace::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::presets;

    #[test]
    fn hh2_header_layout() {
        let m = presets::hh_two_neuron();
        let cols = TraceLayout::new(&m, Some(ObserverMode::Distributed), false).columns();
        assert_eq!(
            &cols[..7],
            ["t", "v.1", "vmeas.1", "v_hat.1", "v.2", "vmeas.2", "v_hat.2"]
        );
        assert!(cols.contains(&"theta_hat.Na.1".to_string()));
        assert!(cols.contains(&"psi.G.2.2".to_string()));
        assert!(cols.contains(&"p_min_eig.K".to_string()));
        assert_eq!(cols.last().unwrap(), "innovation_norm");
        // 1 + 6 + 8 + 8 + 6 + 6 + 12 + 3 + 2
        assert_eq!(cols.len(), 52);

        let bare = TraceLayout::new(&m, None, false).columns();
        assert_eq!(bare.len(), 1 + 2 + 8 + 6);

        let full = TraceLayout::new(&m, Some(ObserverMode::Full), true).columns();
        assert!(full.contains(&"p.all.6.6".to_string()));
    }

    #[test]
    fn header_parses_back_to_layout() {
        let m = presets::hh_two_neuron();
        for mode in [
            None,
            Some(ObserverMode::Full),
            Some(ObserverMode::DistributedScalar),
        ] {
            for gm in [false, true] {
                let layout = TraceLayout::new(&m, mode, gm && mode.is_some());
                assert_eq!(
                    TraceLayout::from_columns(&layout.columns()).unwrap(),
                    layout
                );
            }
        }
        let mut cols = TraceLayout::new(&m, Some(ObserverMode::Full), false).columns();
        cols.retain(|c| c != "psi.K.1.2");
        assert!(matches!(
            TraceLayout::from_columns(&cols),
            Err(Error::MissingColumn(c)) if c == "psi.K.1.2"
        ));
    }

    #[test]
    fn rejects_unversioned_csv() {
        let err = Trace::read_csv("t,v.1\n0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedTrace(_)));
    }
}
