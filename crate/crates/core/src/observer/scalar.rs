use nalgebra::{DMatrix, DVector};

use super::{
    check_inputs, gating_estimate_derivative, measured_regressors, AdaptiveObserver, GainSchedule,
    ObserverInit,
};
use crate::error::{check_len, Error, Result};
use crate::network::NetworkModel;
use crate::sim::StateSpace;

/// Distributed observer for diagonal regressors: for type `j` and neuron `i`
/// the filter and gain reduce to scalars `psi[j][i]`, `p[j][i]`, so every
/// neuron and current runs its own update.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarObserverState {
    pub v_hat: Vec<f64>,
    pub w_hat: Vec<Vec<f64>>,
    pub theta_hat: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

fn require_diagonal(model: &NetworkModel) -> Result<()> {
    match (0..model.n_types()).find(|&j| !model.regressor_is_diagonal(j)) {
        Some(j) => Err(Error::NonDiagonal {
            block: model.currents[j].id.clone(),
        }),
        None => Ok(()),
    }
}

impl ScalarObserverState {
    /// `p0` must be diagonal with positive entries.
    pub fn new(model: &NetworkModel, init: &ObserverInit, p0: &[DMatrix<f64>]) -> Result<Self> {
        init.validate(model)?;
        require_diagonal(model)?;
        check_len("P0 blocks", model.n_types(), p0.len())?;
        let mut p = Vec::with_capacity(p0.len());
        for (j, block) in p0.iter().enumerate() {
            let n = model.n_v();
            check_len("P0 block", n, block.nrows())?;
            check_len("P0 block columns", n, block.ncols())?;
            let off_diagonal = (0..n).any(|r| (0..n).any(|c| r != c && block[(r, c)] != 0.0));
            if off_diagonal {
                return Err(Error::InvalidParameter(format!(
                    "P0 block `{}` must be diagonal for the scalar observer",
                    model.currents[j].id
                )));
            }
            let diag: Vec<f64> = block.diagonal().iter().copied().collect();
            if diag.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::NotPositiveDefinite {
                    what: format!("P0 block `{}`", model.currents[j].id),
                });
            }
            p.push(diag);
        }
        Ok(ScalarObserverState {
            v_hat: init.v_hat.clone(),
            w_hat: init.w_hat.clone(),
            theta_hat: init.theta_hat.clone(),
            psi: vec![vec![0.0; model.n_v()]; model.n_types()],
            p,
        })
    }
}

/// Per neuron `i` and type `j`, with `e_i = v_i - v_hat_i` and `phi_i` the
/// `i`-th diagonal entry of `Phi_j`:
///
/// ```text
/// dmu_hat/dt = gamma_j p_i psi_i e_i
/// dpsi_i/dt  = -gamma_j psi_i + phi_i
/// dp_i/dt    = alpha_j p_i - alpha_j p_i^2 psi_i^2
/// ```
pub fn scalar_distributed_derivative(
    model: &NetworkModel,
    obs: &ScalarObserverState,
    v_meas: &[f64],
    u: &[f64],
    gains: &GainSchedule,
) -> Result<ScalarObserverState> {
    require_diagonal(model)?;
    gains.validate(model)?;
    check_inputs(model, &obs.v_hat, &obs.w_hat, v_meas, u)?;
    check_len("theta_hat", model.n_theta(), obs.theta_hat.len())?;
    check_len("psi blocks", model.n_types(), obs.psi.len())?;
    check_len("p blocks", model.n_types(), obs.p.len())?;
    let n = model.n_v();
    for j in 0..model.n_types() {
        check_len("psi block", n, obs.psi[j].len())?;
        check_len("p block", n, obs.p[j].len())?;
        if obs.p[j].iter().any(|&x| !(x > 0.0)) {
            return Err(Error::NotPositiveDefinite {
                what: format!("P block `{}`", model.currents[j].id),
            });
        }
    }

    let entries = measured_regressors(model, v_meas, &obs.w_hat);
    let innovation: Vec<f64> = v_meas.iter().zip(&obs.v_hat).map(|(m, e)| m - e).collect();

    let mut dv = vec![0.0; n];
    model.drift_into(v_meas, u, &mut dv);
    for (j, phi) in entries.iter().enumerate() {
        let off = model.theta_offset(j);
        for i in 0..n {
            dv[i] += phi[i] * obs.theta_hat[off + i];
        }
    }
    for i in 0..n {
        dv[i] += gains.gamma0 * innovation[i];
    }

    let mut dtheta = vec![0.0; model.n_theta()];
    let mut dpsi = Vec::with_capacity(model.n_types());
    let mut dp = Vec::with_capacity(model.n_types());
    for (j, phi) in entries.iter().enumerate() {
        let (gamma, alpha) = (gains.blocks[j].gamma, gains.blocks[j].alpha);
        let off = model.theta_offset(j);
        let (psi, p) = (&obs.psi[j], &obs.p[j]);
        for i in 0..n {
            let p_psi_e = p[i] * psi[i] * innovation[i];
            dv[i] += gamma * (psi[i] * p_psi_e);
            dtheta[off + i] = gamma * p_psi_e;
        }
        dpsi.push((0..n).map(|i| phi[i] - psi[i] * gamma).collect());
        dp.push(
            (0..n)
                .map(|i| {
                    let p_psi = p[i] * psi[i];
                    p[i] * alpha - p_psi * p_psi * alpha
                })
                .collect(),
        );
    }

    Ok(ScalarObserverState {
        v_hat: dv,
        w_hat: gating_estimate_derivative(model, v_meas, &obs.w_hat)?,
        theta_hat: dtheta,
        psi: dpsi,
        p: dp,
    })
}

impl StateSpace for ScalarObserverState {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        self.v_hat.add_scaled(h, &d.v_hat);
        self.w_hat.add_scaled(h, &d.w_hat);
        self.theta_hat.add_scaled(h, &d.theta_hat);
        self.psi.add_scaled(h, &d.psi);
        self.p.add_scaled(h, &d.p);
    }

    fn all_finite(&self) -> bool {
        self.v_hat.all_finite()
            && self.w_hat.all_finite()
            && self.theta_hat.all_finite()
            && self.psi.all_finite()
            && self.p.all_finite()
    }
}

impl AdaptiveObserver for ScalarObserverState {
    type Gains = GainSchedule;

    fn derivative(
        &self,
        model: &NetworkModel,
        v_meas: &[f64],
        u: &[f64],
        gains: &GainSchedule,
    ) -> Result<Self> {
        scalar_distributed_derivative(model, self, v_meas, u, gains)
    }

    fn v_hat(&self) -> &[f64] {
        &self.v_hat
    }

    fn w_hat(&self) -> &[Vec<f64>] {
        &self.w_hat
    }

    fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    fn psi_block(&self, _model: &NetworkModel, j: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.psi[j]))
    }

    fn gain_blocks(&self) -> Vec<DMatrix<f64>> {
        self.p
            .iter()
            .map(|d| DMatrix::from_diagonal(&DVector::from_column_slice(d)))
            .collect()
    }

    fn gain_min_eigenvalues(&self) -> Vec<f64> {
        self.p
            .iter()
            .map(|d| d.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }

    fn gain_state_count(&self) -> usize {
        self.p.iter().map(Vec::len).sum()
    }
}
