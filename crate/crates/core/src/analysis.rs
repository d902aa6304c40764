//! Excitation diagnostics and estimation-quality metrics over recorded traces.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::observer::GainSchedule;
use crate::trace::Trace;

/// Eigenvalues of Gram integrals below this (in magnitude) are rounding.
pub const GRAM_NEGATIVE_TOLERANCE: f64 = 1e-10;

/// Regressor-filter blocks `Psi_j(t)` on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSeries {
    pub times: Vec<f64>,
    pub ids: Vec<String>,
    /// `blocks[j][s]` is `Psi_j` at `times[s]`.
    pub blocks: Vec<Vec<DMatrix<f64>>>,
}

impl PsiSeries {
    pub fn new(times: Vec<f64>, ids: Vec<String>, blocks: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        check_len("psi block ids", blocks.len(), ids.len())?;
        for b in &blocks {
            check_len("psi samples", times.len(), b.len())?;
        }
        Ok(PsiSeries { times, ids, blocks })
    }

    pub fn from_trace(trace: &Trace) -> Result<Self> {
        let layout = trace.layout();
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for j in 0..layout.blocks.len() {
            blocks.push(
                (0..trace.len())
                    .map(|s| trace.psi_block(s, j))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(PsiSeries {
            times: trace.times(),
            ids: layout.blocks.iter().map(|b| b.id.clone()).collect(),
            blocks,
        })
    }

    fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Number of grid intervals covered by a window of `window` ms.
    fn window_steps(&self, window: f64) -> Result<usize> {
        let span = self.span();
        let too_long = || Error::WindowTooLong { window, span };
        if self.times.len() < 2 || !(window > 0.0) {
            return Err(too_long());
        }
        let h = span / (self.times.len() - 1) as f64;
        let n = (window / h).round() as usize;
        if n == 0 || n > self.times.len() - 1 {
            return Err(too_long());
        }
        Ok(n)
    }
}

/// Trapezoidal integrals `int_{t_s}^{t_s + T} f` for every window start on
/// the grid, from cumulative sums.
fn windowed_integrals<T, F>(samples: &[T], times: &[f64], n: usize, zero: F) -> Vec<T>
where
    T: Clone
        + std::ops::Add<Output = T>
        + std::ops::Sub<Output = T>
        + std::ops::Mul<f64, Output = T>,
    F: Fn() -> T,
{
    let mut cumulative = Vec::with_capacity(samples.len());
    cumulative.push(zero());
    for s in 1..samples.len() {
        let h = times[s] - times[s - 1];
        let piece = (samples[s - 1].clone() + samples[s].clone()) * (0.5 * h);
        let next = cumulative[s - 1].clone() + piece;
        cumulative.push(next);
    }
    (0..samples.len() - n)
        .map(|s| cumulative[s + n].clone() - cumulative[s].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeBlock {
    pub id: String,
    /// Smallest eigenvalue of the windowed Gram integral over all windows.
    pub delta_min: f64,
    /// Largest eigenvalue over all windows.
    pub delta_max: f64,
    /// Smallest eigenvalue before clamping rounding noise to zero.
    pub raw_min_eigenvalue: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub window: f64,
    pub threshold: f64,
    pub blocks: Vec<PeBlock>,
    pub pass: bool,
}

impl PeReport {
    pub fn deltas(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.delta_min).collect()
    }
}

/// Windowed excitation `int Psi_j Psi_j^T` for every block; a block passes
/// when its smallest eigenvalue over all windows exceeds `threshold`.
pub fn pe_check(psi: &PsiSeries, window: f64, threshold: f64) -> Result<PeReport> {
    let n = psi.window_steps(window)?;
    let blocks = psi
        .blocks
        .iter()
        .zip(&psi.ids)
        .map(|(series, id)| {
            let k = series.first().map_or(0, |m| m.nrows());
            let grams: Vec<DMatrix<f64>> = series.iter().map(|m| m * m.transpose()).collect();
            let integrals = windowed_integrals(&grams, &psi.times, n, || DMatrix::zeros(k, k));
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for g in integrals {
                let sym = (&g + g.transpose()) * 0.5;
                let eig = SymmetricEigen::new(sym).eigenvalues;
                lo = lo.min(eig.min());
                hi = hi.max(eig.max());
            }
            let clamp = |x: f64| {
                if x < 0.0 && x >= -GRAM_NEGATIVE_TOLERANCE * hi.max(1.0) {
                    0.0
                } else {
                    x
                }
            };
            let delta_min = clamp(lo);
            PeBlock {
                id: id.clone(),
                delta_min,
                delta_max: clamp(hi),
                raw_min_eigenvalue: lo,
                pass: delta_min > threshold,
            }
        })
        .collect::<Vec<_>>();
    Ok(PeReport {
        window,
        threshold,
        pass: blocks.iter().all(|b| b.pass),
        blocks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub window: f64,
    pub beta: f64,
    pub deltas: Vec<f64>,
    pub min_alpha: f64,
    /// Worst (largest) window average of the integrand's top eigenvalue.
    pub lhs: f64,
    /// `(min_alpha - beta) * min_j delta_j alpha_j exp(-2 alpha_j T)`.
    pub rhs: f64,
    pub margin: f64,
    /// False when some `delta_j` is not positive.
    pub excitation: bool,
    pub pass: bool,
    /// `lambda_max(A D + gamma0 Psi Psi^T - Gamma Psi Psi^T - Psi Psi^T Gamma)`
    /// at every sample.
    pub integrand: Vec<f64>,
    /// Window averages of `integrand`, indexed by window start.
    pub windowed: Vec<f64>,
}

/// Largest eigenvalue of `A D + gamma0 Psi Psi^T - Gamma Psi Psi^T - Psi Psi^T Gamma`
/// for stacked blocks `psi` at one instant.
pub fn coupling_matrix(psi: &[DMatrix<f64>], gains: &GainSchedule) -> DMatrix<f64> {
    let sizes: Vec<usize> = psi.iter().map(|m| m.nrows()).collect();
    let n: usize = sizes.iter().sum();
    let n_v = psi.first().map_or(0, |m| m.ncols());
    let mut stacked = DMatrix::zeros(n, n_v);
    let mut gamma = Vec::with_capacity(n);
    let mut off = 0;
    let mut m = DMatrix::zeros(n, n);
    for (j, block) in psi.iter().enumerate() {
        let k = block.nrows();
        stacked.view_mut((off, 0), (k, n_v)).copy_from(block);
        let d = block * block.transpose() * gains.blocks[j].alpha;
        m.view_mut((off, off), (k, k)).copy_from(&d);
        gamma.extend(std::iter::repeat_n(gains.blocks[j].gamma, k));
        off += k;
    }
    let outer = &stacked * stacked.transpose();
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] += (gains.gamma0 - gamma[r] - gamma[c]) * outer[(r, c)];
        }
    }
    m
}

pub fn coupling_check(
    psi: &PsiSeries,
    gains: &GainSchedule,
    window: f64,
    beta: f64,
    deltas: &[f64],
) -> Result<CouplingReport> {
    check_len("gain blocks", psi.blocks.len(), gains.blocks.len())?;
    check_len("deltas", psi.blocks.len(), deltas.len())?;
    for (b, id) in gains.blocks.iter().zip(&psi.ids) {
        if &b.current != id {
            return Err(Error::InvalidParameter(format!(
                "gain block `{}` does not match psi block `{id}`",
                b.current
            )));
        }
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let n = psi.window_steps(window)?;

    let integrand: Vec<f64> = (0..psi.times.len())
        .map(|s| {
            let blocks: Vec<DMatrix<f64>> = psi.blocks.iter().map(|b| b[s].clone()).collect();
            SymmetricEigen::new(coupling_matrix(&blocks, gains))
                .eigenvalues
                .max()
        })
        .collect();
    let windowed: Vec<f64> = windowed_integrals(&integrand, &psi.times, n, || 0.0)
        .into_iter()
        .map(|x| x / window)
        .collect();
    let lhs = windowed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_alpha = gains.min_alpha();
    let floor = gains
        .blocks
        .iter()
        .zip(deltas)
        .map(|(g, d)| d * g.alpha * (-2.0 * g.alpha * window).exp())
        .fold(f64::INFINITY, f64::min);
    let rhs = (min_alpha - beta) * floor;
    let margin = rhs - lhs;
    let excitation = deltas.iter().all(|&d| d > 0.0);
    Ok(CouplingReport {
        window,
        beta,
        deltas: deltas.to_vec(),
        min_alpha,
        lhs,
        rhs,
        margin,
        excitation,
        pass: excitation && margin >= 0.0,
        integrand,
        windowed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub window: f64,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Grid over `(T, beta)`, measuring `delta_j` at each window length.
pub fn coupling_sweep(
    psi: &PsiSeries,
    gains: &GainSchedule,
    windows: &[f64],
    betas: &[f64],
    pe_threshold: f64,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &window in windows {
        let deltas = pe_check(psi, window, pe_threshold)?.deltas();
        for &beta in betas {
            let r = coupling_check(psi, gains, window, beta, &deltas)?;
            out.push(SweepPoint {
                window,
                beta,
                lhs: r.lhs,
                rhs: r.rhs,
                margin: r.margin,
                pass: r.pass,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorOptions {
    /// Lower bound on the denominator of relative errors.
    pub eps_floor: f64,
    /// Length (ms) of the trailing window averaged for `final_window_mean`.
    pub final_window: f64,
    /// `[start, end]` (ms) of the envelope fit.
    pub fit_window: Option<(f64, f64)>,
    /// Bin width (ms) of the upper envelope.
    pub envelope_bin: f64,
}

impl Default for ErrorOptions {
    fn default() -> Self {
        ErrorOptions {
            eps_floor: 1e-9,
            final_window: 50.0,
            fit_window: None,
            envelope_bin: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub label: String,
    pub final_value: f64,
    pub final_error: f64,
    pub final_window_mean: f64,
    /// Slope of the log-error envelope (1/ms); `None` when undefined.
    pub rate: Option<f64>,
    #[serde(skip)]
    pub relative_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub params: Vec<ParamErrors>,
}

pub fn relative_error(estimate: f64, truth: f64, eps_floor: f64) -> f64 {
    (estimate - truth).abs() / truth.abs().max(eps_floor)
}

/// Least-squares slope of `ln(max over bin)` against the time of each bin
/// maximum, over `window`. Bins whose maximum is not positive are skipped;
/// fewer than two usable bins gives `None`.
pub fn fit_log_envelope(
    times: &[f64],
    values: &[f64],
    window: (f64, f64),
    bin: f64,
) -> Option<f64> {
    let (start, end) = window;
    if !(bin > 0.0) || !(end > start) {
        return None;
    }
    let n_bins = ((end - start) / bin).ceil() as usize;
    let mut peaks: Vec<Option<(f64, f64)>> = vec![None; n_bins];
    for (&t, &v) in times.iter().zip(values) {
        if t < start || t > end {
            continue;
        }
        let b = (((t - start) / bin) as usize).min(n_bins - 1);
        if peaks[b].is_none_or(|(_, best)| v > best) {
            peaks[b] = Some((t, v));
        }
    }
    let pts: Vec<(f64, f64)> = peaks
        .into_iter()
        .flatten()
        .filter(|&(_, v)| v > 0.0 && v.is_finite())
        .map(|(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn error_metrics(trace: &Trace, opts: &ErrorOptions) -> Result<ErrorMetrics> {
    if trace.is_empty() {
        return Err(Error::MalformedTrace("trace has no samples".into()));
    }
    let times = trace.times();
    let t_last = *times.last().unwrap();
    let labels = trace.theta_labels();
    let mut params = Vec::with_capacity(labels.len());
    for (k, label) in labels.into_iter().enumerate() {
        let mut err = Vec::with_capacity(trace.len());
        for s in 0..trace.len() {
            err.push(relative_error(
                trace.theta_hat(s)?[k],
                trace.theta_true(s)?[k],
                opts.eps_floor,
            ));
        }
        let tail: Vec<f64> = times
            .iter()
            .zip(&err)
            .filter(|(t, _)| **t >= t_last - opts.final_window)
            .map(|(_, e)| *e)
            .collect();
        let window = opts.fit_window.unwrap_or((times[0], t_last));
        params.push(ParamErrors {
            label,
            final_value: trace.theta_hat(trace.len() - 1)?[k],
            final_error: *err.last().unwrap(),
            final_window_mean: tail.iter().sum::<f64>() / tail.len() as f64,
            rate: fit_log_envelope(&times, &err, window, opts.envelope_bin),
            relative_error: err,
        });
    }
    Ok(ErrorMetrics { params })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Relative error below which an estimate counts as settled.
    pub settle_threshold: f64,
    /// Oscillations are counted only after this time (ms).
    pub oscillation_after: f64,
    pub eps_floor: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            settle_threshold: 0.05,
            oscillation_after: 10.0,
            eps_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Largest deviation from the final value.
    pub transient_peak: f64,
    /// Sign changes of the sample-to-sample increment.
    pub oscillation_score: usize,
    /// First time after which the relative error stays below threshold.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamComparison {
    pub label: String,
    pub a: RunMetrics,
    pub b: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub params: Vec<ParamComparison>,
}

impl Comparison {
    pub fn param(&self, label: &str) -> Option<&ParamComparison> {
        self.params.iter().find(|p| p.label == label)
    }
}

/// Transient, oscillation and settling metrics for one estimate series.
pub fn run_metrics(
    times: &[f64],
    estimate: &[f64],
    truth: &[f64],
    opts: &CompareOptions,
) -> RunMetrics {
    let last = estimate.last().copied().unwrap_or(0.0);
    let transient_peak = estimate
        .iter()
        .map(|x| (x - last).abs())
        .fold(0.0, f64::max);

    let mut oscillation_score = 0;
    let mut prev_sign = 0.0;
    for s in 1..estimate.len() {
        if times[s - 1] < opts.oscillation_after {
            continue;
        }
        let d = estimate[s] - estimate[s - 1];
        if d == 0.0 {
            continue;
        }
        let sign = d.signum();
        if prev_sign != 0.0 && sign != prev_sign {
            oscillation_score += 1;
        }
        prev_sign = sign;
    }

    let mut settling_time = None;
    for s in (0..estimate.len()).rev() {
        if relative_error(estimate[s], truth[s], opts.eps_floor) >= opts.settle_threshold {
            break;
        }
        settling_time = Some(times[s]);
    }
    RunMetrics {
        transient_peak,
        oscillation_score,
        settling_time,
    }
}

/// Side-by-side metrics for every parameter of two traces on one grid.
pub fn compare_runs(a: &Trace, b: &Trace, opts: &CompareOptions) -> Result<Comparison> {
    let (ta, tb) = (a.times(), b.times());
    if ta.len() != tb.len()
        || ta
            .iter()
            .zip(&tb)
            .any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(Error::GridMismatch);
    }
    let labels = a.theta_labels();
    if labels != b.theta_labels() {
        return Err(Error::MalformedTrace(
            "traces estimate different parameters".into(),
        ));
    }
    let series = |t: &Trace, k: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut est = Vec::with_capacity(t.len());
        let mut truth = Vec::with_capacity(t.len());
        for s in 0..t.len() {
            est.push(t.theta_hat(s)?[k]);
            truth.push(t.theta_true(s)?[k]);
        }
        Ok((est, truth))
    };
    let mut params = Vec::with_capacity(labels.len());
    for (k, label) in labels.into_iter().enumerate() {
        let (ea, ra) = series(a, k)?;
        let (eb, rb) = series(b, k)?;
        params.push(ParamComparison {
            label,
            a: run_metrics(&ta, &ea, &ra, opts),
            b: run_metrics(&tb, &eb, &rb, opts),
        });
    }
    Ok(Comparison { params })
}
