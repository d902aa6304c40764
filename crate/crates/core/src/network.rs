//! Conductance-based networks in linear-in-the-parameters form.
//!
//! The membrane equation of neuron `i` is
//! `c_i dv_i/dt = -sum_ion I_ion - sum_syn I_syn - mu_leak (v_i - E_leak) + u_i`,
//! which is split into `dv/dt = sum_j Phi_j^T theta^j + a(v, u)`: every maximal
//! conductance is a parameter and each regressor `Phi_j` (`n_theta^j x n_v`)
//! carries exactly one nonzero entry per row.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kinetics::{gate_derivative, synapse_derivative, GateKinetics, SynapseKinetics};

/// Directed synapse `post <- pre` (zero-based neuron indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub post: usize,
    pub pre: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurrentKind {
    /// One activation gate (exponent `p >= 1`) and an optional inactivation
    /// gate per neuron.
    Intrinsic {
        activation: GateKinetics,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inactivation: Option<GateKinetics>,
    },
    /// One gate and one conductance per edge; edges sorted by `(post, pre)`.
    Synaptic {
        kinetics: SynapseKinetics,
        edges: Vec<Edge>,
    },
}

/// Maximal conductance as a function of time (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSchedule {
    Constant(f64),
    /// `base + amp / (1 + exp(-(t - t0) / tau_r))`
    Logistic {
        base: f64,
        amp: f64,
        t0: f64,
        tau_r: f64,
    },
}

impl ParamSchedule {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ParamSchedule::Constant(c) => c,
            ParamSchedule::Logistic {
                base,
                amp,
                t0,
                tau_r,
            } => base + amp / (1.0 + (-(t - t0) / tau_r).exp()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ParamSchedule::Constant(_))
    }

    /// The schedule stays between `base` and `base + amp`, so checking both
    /// ends covers every `t`.
    pub fn validate(&self) -> Result<()> {
        let (lo, ok) = match *self {
            ParamSchedule::Constant(c) => (c, c.is_finite()),
            ParamSchedule::Logistic {
                base,
                amp,
                t0,
                tau_r,
            } => (
                base.min(base + amp),
                base.is_finite() && amp.is_finite() && t0.is_finite() && tau_r > 0.0,
            ),
        };
        if !ok || lo < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "conductance schedule must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentType {
    pub id: String,
    /// Reversal potential (mV).
    pub nernst: f64,
    #[serde(flatten)]
    pub kind: CurrentKind,
    /// True maximal conductances, one per neuron (intrinsic) or per edge
    /// (synaptic), in mS/cm^2.
    pub conductances: Vec<ParamSchedule>,
}

impl CurrentType {
    pub fn is_synaptic(&self) -> bool {
        matches!(self.kind, CurrentKind::Synaptic { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    /// Membrane capacitance per neuron (uF/cm^2).
    pub capacitance: Vec<f64>,
    /// Leak conductance per neuron (mS/cm^2).
    pub leak_conductance: Vec<f64>,
    /// Leak reversal potential per neuron (mV).
    pub leak_reversal: Vec<f64>,
    /// Current types; their order fixes the block order of every parameter
    /// vector and observer matrix.
    pub currents: Vec<CurrentType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemState {
    /// Membrane voltages (mV).
    pub v: Vec<f64>,
    /// Gating states per current type, ordered by `(neuron, gate)` for
    /// intrinsic types and by edge for synaptic types.
    pub w: Vec<Vec<f64>>,
}

impl NetworkModel {
    pub fn n_v(&self) -> usize {
        self.capacitance.len()
    }

    pub fn n_types(&self) -> usize {
        self.currents.len()
    }

    pub fn n_theta_block(&self, j: usize) -> usize {
        match &self.currents[j].kind {
            CurrentKind::Intrinsic { .. } => self.n_v(),
            CurrentKind::Synaptic { edges, .. } => edges.len(),
        }
    }

    pub fn n_theta(&self) -> usize {
        (0..self.n_types()).map(|j| self.n_theta_block(j)).sum()
    }

    /// Starting index of block `j` inside the stacked parameter vector.
    pub fn theta_offset(&self, j: usize) -> usize {
        (0..j).map(|k| self.n_theta_block(k)).sum()
    }

    pub fn n_w_block(&self, j: usize) -> usize {
        match &self.currents[j].kind {
            CurrentKind::Intrinsic { inactivation, .. } => {
                self.n_v() * if inactivation.is_some() { 2 } else { 1 }
            }
            CurrentKind::Synaptic { edges, .. } => edges.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_v();
        if n == 0 {
            return Err(Error::InvalidParameter("network has no neurons".into()));
        }
        check_len("leak_conductance", n, self.leak_conductance.len())?;
        check_len("leak_reversal", n, self.leak_reversal.len())?;
        for i in 0..n {
            if !(self.capacitance[i] > 0.0 && self.capacitance[i].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "capacitance of neuron {} must be positive",
                    i + 1
                )));
            }
            if !(self.leak_conductance[i] > 0.0 && self.leak_conductance[i].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "leak conductance of neuron {} must be positive",
                    i + 1
                )));
            }
            if !self.leak_reversal[i].is_finite() {
                return Err(Error::InvalidParameter(
                    "leak reversal must be finite".into(),
                ));
            }
        }
        for (j, cur) in self.currents.iter().enumerate() {
            if self.currents[..j].iter().any(|c| c.id == cur.id) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate current id `{}`",
                    cur.id
                )));
            }
            if cur.id.is_empty() || cur.id.contains(['.', ',']) {
                return Err(Error::InvalidParameter(format!(
                    "current id `{}` must be nonempty without '.' or ','",
                    cur.id
                )));
            }
            if !cur.nernst.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "nernst of `{}` not finite",
                    cur.id
                )));
            }
            match &cur.kind {
                CurrentKind::Intrinsic {
                    activation,
                    inactivation,
                } => {
                    activation.validate()?;
                    if activation.exponent < 1 {
                        return Err(Error::InvalidParameter(format!(
                            "activation exponent of `{}` must be at least 1",
                            cur.id
                        )));
                    }
                    if let Some(h) = inactivation {
                        h.validate()?;
                    }
                }
                CurrentKind::Synaptic { kinetics, edges } => {
                    kinetics.validate()?;
                    for e in edges {
                        if e.post >= n || e.pre >= n {
                            return Err(Error::InvalidParameter(format!(
                                "edge {e:?} of `{}` references a missing neuron",
                                cur.id
                            )));
                        }
                        if e.post == e.pre {
                            return Err(Error::InvalidParameter(format!(
                                "edge {e:?} of `{}` is a self-loop",
                                cur.id
                            )));
                        }
                    }
                    if edges.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::InvalidParameter(format!(
                            "edges of `{}` must be sorted by (post, pre) without duplicates",
                            cur.id
                        )));
                    }
                }
            }
            check_len(
                &format!("conductances of `{}`", cur.id),
                self.n_theta_block(j),
                cur.conductances.len(),
            )?;
            for s in &cur.conductances {
                s.validate()?;
            }
        }
        Ok(())
    }

    pub fn validate_state(&self, state: &SystemState) -> Result<()> {
        check_len("voltage vector", self.n_v(), state.v.len())?;
        self.validate_gating(&state.w)?;
        for (j, block) in state.w.iter().enumerate() {
            if block.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidParameter(format!(
                    "gating states of `{}` must lie in [0, 1]",
                    self.currents[j].id
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn validate_gating(&self, w: &[Vec<f64>]) -> Result<()> {
        check_len("gating blocks", self.n_types(), w.len())?;
        for (j, block) in w.iter().enumerate() {
            check_len(
                &format!("gating block `{}`", self.currents[j].id),
                self.n_w_block(j),
                block.len(),
            )?;
        }
        Ok(())
    }

    /// Column (postsynaptic neuron) of the single nonzero entry in row `r`
    /// of `Phi_j`.
    #[inline]
    pub fn regressor_column(&self, j: usize, r: usize) -> usize {
        match &self.currents[j].kind {
            CurrentKind::Intrinsic { .. } => r,
            CurrentKind::Synaptic { edges, .. } => edges[r].post,
        }
    }

    /// Whether `Phi_j` is square and diagonal for every state.
    pub fn regressor_is_diagonal(&self, j: usize) -> bool {
        self.n_theta_block(j) == self.n_v()
            && (0..self.n_theta_block(j)).all(|r| self.regressor_column(j, r) == r)
    }

    /// Nonzero entries of `Phi_j`, row by row, written into `out`.
    ///
    /// Intrinsic row `i`: `-m_i^p h_i^q (v_i - E) / c_i`.
    /// Synaptic row for edge `i <- k`: `-s_ik (v_i - E) / c_i`.
    pub fn regressor_entries(&self, j: usize, v: &[f64], w_j: &[f64], out: &mut [f64]) {
        let cur = &self.currents[j];
        let e = cur.nernst;
        match &cur.kind {
            CurrentKind::Intrinsic {
                activation,
                inactivation,
            } => {
                let stride = if inactivation.is_some() { 2 } else { 1 };
                for (i, o) in out.iter_mut().enumerate() {
                    let m = w_j[i * stride];
                    let mut gate = m.powi(activation.exponent as i32);
                    if let Some(h) = inactivation {
                        gate *= w_j[i * stride + 1].powi(h.exponent as i32);
                    }
                    *o = -gate * (v[i] - e) / self.capacitance[i];
                }
            }
            CurrentKind::Synaptic { edges, .. } => {
                for (r, (o, edge)) in out.iter_mut().zip(edges).enumerate() {
                    let i = edge.post;
                    *o = -w_j[r] * (v[i] - e) / self.capacitance[i];
                }
            }
        }
    }

    /// Dense `Phi_j` (`n_theta^j x n_v`).
    pub fn assemble_phi(&self, j: usize, v: &[f64], w_j: &[f64]) -> Result<DMatrix<f64>> {
        if j >= self.n_types() {
            return Err(Error::dims("current type index", self.n_types(), j));
        }
        check_len("voltage vector", self.n_v(), v.len())?;
        check_len(
            &format!("gating block `{}`", self.currents[j].id),
            self.n_w_block(j),
            w_j.len(),
        )?;
        let rows = self.n_theta_block(j);
        let mut entries = vec![0.0; rows];
        self.regressor_entries(j, v, w_j, &mut entries);
        let mut phi = DMatrix::zeros(rows, self.n_v());
        for (r, val) in entries.into_iter().enumerate() {
            phi[(r, self.regressor_column(j, r))] = val;
        }
        Ok(phi)
    }

    /// Known drift `a(v, u)`: `(-mu_leak (v_i - E_leak) + u_i) / c_i`.
    pub fn assemble_a(&self, v: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("voltage vector", self.n_v(), v.len())?;
        check_len("input vector", self.n_v(), u.len())?;
        let mut out = vec![0.0; self.n_v()];
        self.drift_into(v, u, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn drift_into(&self, v: &[f64], u: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = (-self.leak_conductance[i] * (v[i] - self.leak_reversal[i]) + u[i])
                / self.capacitance[i];
        }
    }

    /// Internal dynamics `g_j(v, w_j)`, written into `out`.
    pub fn gating_derivative(
        &self,
        j: usize,
        v: &[f64],
        w_j: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        match &self.currents[j].kind {
            CurrentKind::Intrinsic {
                activation,
                inactivation,
            } => match inactivation {
                Some(h) => {
                    for i in 0..self.n_v() {
                        out[2 * i] = gate_derivative(w_j[2 * i], v[i], activation)?;
                        out[2 * i + 1] = gate_derivative(w_j[2 * i + 1], v[i], h)?;
                    }
                }
                None => {
                    for i in 0..self.n_v() {
                        out[i] = gate_derivative(w_j[i], v[i], activation)?;
                    }
                }
            },
            CurrentKind::Synaptic { kinetics, edges } => {
                for (r, edge) in edges.iter().enumerate() {
                    out[r] = synapse_derivative(w_j[r], v[edge.pre], kinetics);
                }
            }
        }
        Ok(())
    }

    /// True parameters of block `j` at time `t`.
    pub fn theta_block_at(&self, j: usize, t: f64) -> Vec<f64> {
        self.currents[j]
            .conductances
            .iter()
            .map(|s| s.eval(t))
            .collect()
    }

    /// Stacked true parameter vector at time `t`.
    pub fn theta_at(&self, t: f64) -> Vec<f64> {
        self.currents
            .iter()
            .flat_map(|c| c.conductances.iter().map(move |s| s.eval(t)))
            .collect()
    }

    /// Copy of the model with every conductance frozen at its value at `t`.
    pub fn frozen_at(&self, t: f64) -> NetworkModel {
        let mut out = self.clone();
        for cur in &mut out.currents {
            for s in &mut cur.conductances {
                *s = ParamSchedule::Constant(s.eval(t));
            }
        }
        out
    }

    /// Parameter labels `<id>.<k>` with one-based `k`, in block order.
    pub fn theta_labels(&self) -> Vec<String> {
        self.currents
            .iter()
            .enumerate()
            .flat_map(|(j, c)| (1..=self.n_theta_block(j)).map(move |k| format!("{}.{k}", c.id)))
            .collect()
    }

    /// `dv/dt` and `dw/dt` of the true network at time `t`.
    pub fn system_derivative(&self, state: &SystemState, u: &[f64], t: f64) -> Result<SystemState> {
        check_len("voltage vector", self.n_v(), state.v.len())?;
        check_len("input vector", self.n_v(), u.len())?;
        self.validate_gating(&state.w)?;
        let mut dv = vec![0.0; self.n_v()];
        self.drift_into(&state.v, u, &mut dv);
        let mut entries = Vec::new();
        let mut dw = Vec::with_capacity(self.n_types());
        for j in 0..self.n_types() {
            let rows = self.n_theta_block(j);
            entries.resize(rows, 0.0);
            self.regressor_entries(j, &state.v, &state.w[j], &mut entries);
            for (r, (phi, sched)) in entries
                .iter()
                .zip(&self.currents[j].conductances)
                .enumerate()
            {
                dv[self.regressor_column(j, r)] += phi * sched.eval(t);
            }
            let mut g = vec![0.0; self.n_w_block(j)];
            self.gating_derivative(j, &state.v, &state.w[j], &mut g)?;
            dw.push(g);
        }
        Ok(SystemState { v: dv, w: dw })
    }
}

pub mod presets {
    //! Named models. `hh2` is two Hodgkin–Huxley neurons coupled by
    //! reciprocal GABA-type inhibition.

    use super::*;
    use crate::kinetics::hh;

    pub const NAMES: &[&str] = &["hh2"];

    pub fn model(name: &str) -> Result<NetworkModel> {
        match name {
            "hh2" => Ok(hh_two_neuron()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn initial_state(name: &str) -> Result<SystemState> {
        match name {
            "hh2" => Ok(SystemState {
                v: vec![0.0, -60.0],
                w: vec![vec![0.0, 0.5, 0.0, 0.5], vec![0.0, 0.5], vec![0.0, 0.5]],
            }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn hh_two_neuron() -> NetworkModel {
        let gaba_ramp = |base: f64, amp: f64| ParamSchedule::Logistic {
            base,
            amp,
            t0: 750.0,
            tau_r: 100.0,
        };
        NetworkModel {
            capacitance: vec![1.0, 1.0],
            leak_conductance: vec![0.3, 0.3],
            leak_reversal: vec![-54.4, -54.4],
            currents: vec![
                CurrentType {
                    id: "Na".into(),
                    nernst: 55.0,
                    kind: CurrentKind::Intrinsic {
                        activation: hh::sodium_activation(),
                        inactivation: Some(hh::sodium_inactivation()),
                    },
                    conductances: vec![ParamSchedule::Constant(120.0); 2],
                },
                CurrentType {
                    id: "K".into(),
                    nernst: -77.0,
                    kind: CurrentKind::Intrinsic {
                        activation: hh::potassium_activation(),
                        inactivation: None,
                    },
                    conductances: vec![ParamSchedule::Constant(36.0); 2],
                },
                CurrentType {
                    id: "G".into(),
                    nernst: -80.0,
                    kind: CurrentKind::Synaptic {
                        kinetics: hh::gaba_synapse(),
                        edges: vec![Edge { post: 0, pre: 1 }, Edge { post: 1, pre: 0 }],
                    },
                    conductances: vec![gaba_ramp(0.75, -0.4), gaba_ramp(0.25, 0.4)],
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{hh, sigmoid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hh2() -> NetworkModel {
        presets::hh_two_neuron()
    }

    /// Straight transcription of the per-neuron current balance, written
    /// without the regressor decomposition.
    fn current_balance(model: &NetworkModel, s: &SystemState, u: &[f64], t: f64) -> Vec<f64> {
        let (na, k, g) = (&s.w[0], &s.w[1], &s.w[2]);
        let mu_g = model.theta_block_at(2, t);
        let mut out = vec![0.0; 2];
        for i in 0..2 {
            let v = s.v[i];
            let i_na = 120.0 * na[2 * i].powi(3) * na[2 * i + 1] * (v - 55.0);
            let i_k = 36.0 * k[i].powi(4) * (v + 77.0);
            let i_syn = mu_g[i] * g[i] * (v + 80.0);
            let i_leak = 0.3 * (v + 54.4);
            out[i] = -i_na - i_k - i_syn - i_leak + u[i];
        }
        out
    }

    #[test]
    fn hh2_preset_values() {
        let m = hh2();
        m.validate().unwrap();
        assert_eq!(m.currents[0].nernst, 55.0);
        assert_eq!(m.currents[1].nernst, -77.0);
        assert_eq!(m.currents[2].nernst, -80.0);
        assert_eq!(m.leak_reversal, vec![-54.4; 2]);
        assert_eq!(m.n_theta(), 6);
        assert_eq!(
            m.theta_labels(),
            ["Na.1", "Na.2", "K.1", "K.2", "G.1", "G.2"]
        );
        let far_past = m.theta_block_at(2, -1e6);
        let far_future = m.theta_block_at(2, 1e6);
        assert_relative_eq!(far_past[0], 0.75);
        assert_relative_eq!(far_past[1], 0.25);
        assert_relative_eq!(far_future[0], 0.35, max_relative = 1e-12);
        assert_relative_eq!(far_future[1], 0.65, max_relative = 1e-12);
        let mid = m.theta_block_at(2, 750.0);
        assert_relative_eq!(mid[0], 0.55, max_relative = 1e-14);
        assert_relative_eq!(mid[1], 0.45, max_relative = 1e-14);
        assert_eq!(m.theta_block_at(0, 400.0), vec![120.0, 120.0]);
    }

    #[test]
    fn hh2_schedules_nonnegative_over_horizon() {
        let m = hh2();
        for k in 0..=1300 {
            assert!(m.theta_at(k as f64).iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn sodium_regressor_matches_closed_form() {
        let m = hh2();
        let v = [-20.0, 10.0];
        let w = [0.3, 0.8, 0.6, 0.2];
        let phi = m.assemble_phi(0, &v, &w).unwrap();
        assert_relative_eq!(
            phi[(0, 0)],
            -(0.3f64.powi(3)) * 0.8 * (-20.0 - 55.0),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            phi[(1, 1)],
            -(0.6f64.powi(3)) * 0.2 * (10.0 - 55.0),
            max_relative = 1e-12
        );
        assert_eq!(phi[(0, 1)], 0.0);
        assert_eq!(phi[(1, 0)], 0.0);

        let zero = m.assemble_phi(0, &v, &[0.0; 4]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        let at_reversal = m.assemble_phi(0, &[55.0, 10.0], &w).unwrap();
        assert_eq!(at_reversal[(0, 0)], 0.0);
    }

    #[test]
    fn assemble_phi_checks_dimensions() {
        let m = hh2();
        assert!(m.assemble_phi(0, &[0.0], &[0.0; 4]).is_err());
        assert!(m.assemble_phi(1, &[0.0, 0.0], &[0.0; 4]).is_err());
        assert!(m.assemble_phi(7, &[0.0, 0.0], &[0.0; 4]).is_err());
    }

    #[test]
    fn hh2_regressors_are_diagonal() {
        let m = hh2();
        for j in 0..3 {
            assert!(m.regressor_is_diagonal(j));
        }
    }

    #[test]
    fn synaptic_regressor_with_two_inputs_is_not_diagonal() {
        let mut m = hh2();
        m.capacitance.push(1.0);
        m.leak_conductance.push(0.3);
        m.leak_reversal.push(-54.4);
        for cur in &mut m.currents[..2] {
            cur.conductances.push(cur.conductances[0]);
        }
        if let CurrentKind::Synaptic { edges, .. } = &mut m.currents[2].kind {
            *edges = vec![
                Edge { post: 0, pre: 1 },
                Edge { post: 0, pre: 2 },
                Edge { post: 1, pre: 0 },
            ];
        }
        m.currents[2]
            .conductances
            .push(ParamSchedule::Constant(0.1));
        m.validate().unwrap();
        assert!(!m.regressor_is_diagonal(2));
        let phi = m
            .assemble_phi(2, &[-60.0, -50.0, -40.0], &[0.5, 0.25, 1.0])
            .unwrap();
        assert_eq!(phi.shape(), (3, 3));
        assert_relative_eq!(phi[(0, 0)], -0.5 * 20.0);
        assert_relative_eq!(phi[(1, 0)], -0.25 * 20.0);
        assert_relative_eq!(phi[(2, 1)], -1.0 * 30.0);
    }

    #[test]
    fn validation_rejects_bad_edges() {
        let mut m = hh2();
        if let CurrentKind::Synaptic { edges, .. } = &mut m.currents[2].kind {
            edges[0] = Edge { post: 1, pre: 1 };
        }
        assert!(m.validate().is_err());

        let mut m = hh2();
        if let CurrentKind::Synaptic { edges, .. } = &mut m.currents[2].kind {
            edges.swap(0, 1);
        }
        assert!(m.validate().is_err());

        let mut m = hh2();
        m.currents[2].conductances[0] = ParamSchedule::Logistic {
            base: 0.1,
            amp: -0.4,
            t0: 0.0,
            tau_r: 1.0,
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn drift_examples() {
        let m = hh2();
        assert_eq!(
            m.assemble_a(&[-54.4, -54.4], &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let a = m.assemble_a(&[-44.4, -54.4], &[0.0, 5.0]).unwrap();
        assert_relative_eq!(a[0], -3.0, max_relative = 1e-12);
        assert_eq!(a[1], 5.0);
        assert!(m.assemble_a(&[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn quiet_network_at_leak_reversal_is_at_rest() {
        let mut m = hh2();
        for cur in &mut m.currents {
            for s in &mut cur.conductances {
                *s = ParamSchedule::Constant(0.0);
            }
        }
        let s = SystemState {
            v: vec![-54.4, -54.4],
            w: vec![vec![0.3; 4], vec![0.3; 2], vec![0.3; 2]],
        };
        let d = m.system_derivative(&s, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(d.v, vec![0.0, 0.0]);
    }

    #[test]
    fn single_neuron_hand_arithmetic() {
        let m = NetworkModel {
            capacitance: vec![1.0],
            leak_conductance: vec![0.3],
            leak_reversal: vec![-54.4],
            currents: vec![CurrentType {
                id: "Na".into(),
                nernst: 55.0,
                kind: CurrentKind::Intrinsic {
                    activation: hh::sodium_activation(),
                    inactivation: Some(hh::sodium_inactivation()),
                },
                conductances: vec![ParamSchedule::Constant(120.0)],
            }],
        };
        m.validate().unwrap();
        let s = SystemState {
            v: vec![0.0],
            w: vec![vec![0.5, 0.6]],
        };
        let d = m.system_derivative(&s, &[0.0], 0.0).unwrap();
        // -120 * 0.125 * 0.6 * (0 - 55) = 495 and -0.3 * (0 + 54.4) = -16.32.
        assert_relative_eq!(d.v[0], 495.0 - 16.32, max_relative = 1e-14);
    }

    #[test]
    fn hh2_initial_derivative_matches_direct_transcription() {
        let m = hh2();
        let s = presets::initial_state("hh2").unwrap();
        m.validate_state(&s).unwrap();
        let u = [2.0, 1.0];
        let d = m.system_derivative(&s, &u, 0.0).unwrap();
        let direct = current_balance(&m, &s, &u, 0.0);
        for i in 0..2 {
            assert_relative_eq!(d.v[i], direct[i], max_relative = 1e-12);
        }
        // Synapse onto neuron 1 is driven by neuron 2 and vice versa.
        let syn = hh::gaba_synapse();
        assert_relative_eq!(
            d.w[2][0],
            2.0 * sigmoid(-60.0, &syn.presyn_sigmoid) * 1.0 - 0.0
        );
        assert_relative_eq!(
            d.w[2][1],
            2.0 * sigmoid(0.0, &syn.presyn_sigmoid) * 0.5 - 0.05
        );
    }

    #[test]
    fn frozen_model_is_constant() {
        let m = hh2().frozen_at(0.0);
        assert!(m
            .currents
            .iter()
            .flat_map(|c| &c.conductances)
            .all(|s| s.is_constant()));
        assert_eq!(m.theta_at(0.0), hh2().theta_at(0.0));
        assert_eq!(m.theta_at(1000.0), hh2().theta_at(0.0));
    }

    #[test]
    fn model_json_round_trip() {
        let m = hh2();
        let json = serde_json::to_string(&m).unwrap();
        let back: NetworkModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    fn arb_state() -> impl Strategy<Value = SystemState> {
        (
            prop::array::uniform2(-100.0f64..60.0),
            prop::collection::vec(0.0f64..=1.0, 8),
        )
            .prop_map(|(v, w)| SystemState {
                v: v.to_vec(),
                w: vec![w[..4].to_vec(), w[4..6].to_vec(), w[6..].to_vec()],
            })
    }

    proptest! {
        #[test]
        fn decomposition_reconstructs_current_balance(
            s in arb_state(), u in prop::array::uniform2(-5.0f64..5.0), t in 0.0f64..1300.0,
        ) {
            let m = hh2();
            let d = m.system_derivative(&s, &u, t).unwrap();
            let direct = current_balance(&m, &s, &u, t);
            for i in 0..2 {
                let scale = d.v[i].abs().max(direct[i].abs()).max(1.0);
                prop_assert!((d.v[i] - direct[i]).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn gating_boundary_signs(v in prop::array::uniform2(-120.0f64..60.0)) {
            let m = hh2();
            for edge in [0.0, 1.0] {
                let s = SystemState {
                    v: v.to_vec(),
                    w: vec![vec![edge; 4], vec![edge; 2], vec![edge; 2]],
                };
                let d = m.system_derivative(&s, &[0.0, 0.0], 0.0).unwrap();
                for x in d.w.iter().flatten() {
                    if edge == 0.0 { prop_assert!(*x >= 0.0) } else { prop_assert!(*x <= 0.0) }
                }
            }
        }
    }
}
