use nalgebra::{DMatrix, DVector};

use super::{
    check_inputs, ensure_positive_definite, gating_estimate_derivative, measured_regressors,
    AdaptiveObserver, FullGains, ObserverInit,
};
use crate::error::{check_len, Result};
use crate::network::NetworkModel;
use crate::sim::StateSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct FullObserverState {
    pub v_hat: DVector<f64>,
    pub w_hat: Vec<Vec<f64>>,
    pub theta_hat: DVector<f64>,
    /// `n_theta x n_v` regressor filter.
    pub psi: DMatrix<f64>,
    /// `n_theta x n_theta`, symmetric positive definite.
    pub p: DMatrix<f64>,
}

impl FullObserverState {
    pub fn new(model: &NetworkModel, init: &ObserverInit, p0: DMatrix<f64>) -> Result<Self> {
        init.validate(model)?;
        let n = model.n_theta();
        check_len("P0", n, p0.nrows())?;
        check_len("P0 columns", n, p0.ncols())?;
        ensure_positive_definite(&p0, || "P0".into())?;
        Ok(FullObserverState {
            v_hat: DVector::from_column_slice(&init.v_hat),
            w_hat: init.w_hat.clone(),
            theta_hat: DVector::from_column_slice(&init.theta_hat),
            psi: DMatrix::zeros(n, model.n_v()),
            p: p0,
        })
    }
}

/// Stacked `Phi` (`n_theta x n_v`) at the measured voltage.
pub(super) fn stacked_phi(model: &NetworkModel, entries: &[Vec<f64>]) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(model.n_theta(), model.n_v());
    let mut row = 0;
    for (j, block) in entries.iter().enumerate() {
        for (r, &val) in block.iter().enumerate() {
            phi[(row + r, model.regressor_column(j, r))] = val;
        }
        row += block.len();
    }
    phi
}

/// Time derivative of the non-distributed observer:
///
/// ```text
/// dv_hat/dt = Phi^T theta_hat + a + gamma (I + Psi^T P Psi)(v - v_hat)
/// dw_hat/dt = g(v, w_hat)
/// dtheta/dt = gamma P Psi (v - v_hat)
/// dPsi/dt   = -gamma Psi + Phi
/// dP/dt     = alpha P - alpha P Psi Psi^T P
/// ```
pub fn full_observer_derivative(
    model: &NetworkModel,
    obs: &FullObserverState,
    v_meas: &[f64],
    u: &[f64],
    gains: &FullGains,
) -> Result<FullObserverState> {
    gains.validate()?;
    check_inputs(model, obs.v_hat.as_slice(), &obs.w_hat, v_meas, u)?;
    check_len("theta_hat", model.n_theta(), obs.theta_hat.len())?;
    check_len("Psi rows", model.n_theta(), obs.psi.nrows())?;
    check_len("Psi columns", model.n_v(), obs.psi.ncols())?;
    ensure_positive_definite(&obs.p, || "P".into())?;
    let FullGains { gamma, alpha } = *gains;

    let phi = stacked_phi(model, &measured_regressors(model, v_meas, &obs.w_hat));
    let innovation = DVector::from_iterator(
        model.n_v(),
        v_meas.iter().zip(obs.v_hat.iter()).map(|(m, e)| m - e),
    );
    let p_psi = &obs.p * &obs.psi;
    let p_psi_e = &p_psi * &innovation;

    let mut dv = DVector::zeros(model.n_v());
    model.drift_into(v_meas, u, dv.as_mut_slice());
    dv += phi.tr_mul(&obs.theta_hat);
    dv += &innovation * gamma;
    dv += obs.psi.tr_mul(&p_psi_e) * gamma;

    Ok(FullObserverState {
        v_hat: dv,
        w_hat: gating_estimate_derivative(model, v_meas, &obs.w_hat)?,
        theta_hat: p_psi_e * gamma,
        psi: phi - &obs.psi * gamma,
        p: &obs.p * alpha - (&p_psi * p_psi.transpose()) * alpha,
    })
}

impl StateSpace for FullObserverState {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        self.v_hat.axpy(h, &d.v_hat, 1.0);
        self.w_hat.add_scaled(h, &d.w_hat);
        self.theta_hat.axpy(h, &d.theta_hat, 1.0);
        self.psi.zip_apply(&d.psi, |a, b| *a += h * b);
        self.p.zip_apply(&d.p, |a, b| *a += h * b);
    }

    fn all_finite(&self) -> bool {
        self.v_hat.iter().all(|x| x.is_finite())
            && self.w_hat.all_finite()
            && self.theta_hat.iter().all(|x| x.is_finite())
            && self.psi.iter().all(|x| x.is_finite())
            && self.p.iter().all(|x| x.is_finite())
    }
}

impl AdaptiveObserver for FullObserverState {
    type Gains = FullGains;

    fn derivative(
        &self,
        model: &NetworkModel,
        v_meas: &[f64],
        u: &[f64],
        gains: &FullGains,
    ) -> Result<Self> {
        full_observer_derivative(model, self, v_meas, u, gains)
    }

    fn v_hat(&self) -> &[f64] {
        self.v_hat.as_slice()
    }

    fn w_hat(&self) -> &[Vec<f64>] {
        &self.w_hat
    }

    fn theta_hat(&self) -> &[f64] {
        self.theta_hat.as_slice()
    }

    fn psi_block(&self, model: &NetworkModel, j: usize) -> DMatrix<f64> {
        self.psi
            .rows(model.theta_offset(j), model.n_theta_block(j))
            .into_owned()
    }

    fn gain_blocks(&self) -> Vec<DMatrix<f64>> {
        vec![self.p.clone()]
    }

    fn gain_state_count(&self) -> usize {
        self.p.len()
    }
}
