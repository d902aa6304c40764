use nalgebra::{DMatrix, DVector};

use super::{
    check_inputs, ensure_positive_definite, gating_estimate_derivative, measured_regressors,
    AdaptiveObserver, GainSchedule, ObserverInit,
};
use crate::error::{check_len, Result};
use crate::network::NetworkModel;
use crate::sim::StateSpace;

/// Block-diagonal observer: `Psi_j` (`n_theta^j x n_v`) and `P_j`
/// (`n_theta^j x n_theta^j`) per current type.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedObserverState {
    pub v_hat: DVector<f64>,
    pub w_hat: Vec<Vec<f64>>,
    pub theta_hat: DVector<f64>,
    pub psi: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
}

impl DistributedObserverState {
    pub fn new(model: &NetworkModel, init: &ObserverInit, p0: Vec<DMatrix<f64>>) -> Result<Self> {
        init.validate(model)?;
        check_len("P0 blocks", model.n_types(), p0.len())?;
        for (j, p) in p0.iter().enumerate() {
            let n = model.n_theta_block(j);
            check_len("P0 block", n, p.nrows())?;
            check_len("P0 block columns", n, p.ncols())?;
            ensure_positive_definite(p, || format!("P0 block `{}`", model.currents[j].id))?;
        }
        Ok(DistributedObserverState {
            v_hat: DVector::from_column_slice(&init.v_hat),
            w_hat: init.w_hat.clone(),
            theta_hat: DVector::from_column_slice(&init.theta_hat),
            psi: (0..model.n_types())
                .map(|j| DMatrix::zeros(model.n_theta_block(j), model.n_v()))
                .collect(),
            p: p0,
        })
    }
}

/// Time derivative of the distributed observer:
///
/// ```text
/// dv_hat/dt   = sum_j Phi_j^T theta_j + a
///               + (gamma0 I + sum_j gamma_j Psi_j^T P_j Psi_j)(v - v_hat)
/// dw_hat_j/dt = g_j(v, w_hat_j)
/// dtheta_j/dt = gamma_j P_j Psi_j (v - v_hat)
/// dPsi_j/dt   = -gamma_j Psi_j + Phi_j
/// dP_j/dt     = alpha_j P_j - alpha_j P_j Psi_j Psi_j^T P_j
/// ```
pub fn distributed_observer_derivative(
    model: &NetworkModel,
    obs: &DistributedObserverState,
    v_meas: &[f64],
    u: &[f64],
    gains: &GainSchedule,
) -> Result<DistributedObserverState> {
    gains.validate(model)?;
    check_inputs(model, obs.v_hat.as_slice(), &obs.w_hat, v_meas, u)?;
    check_len("theta_hat", model.n_theta(), obs.theta_hat.len())?;
    check_len("Psi blocks", model.n_types(), obs.psi.len())?;
    check_len("P blocks", model.n_types(), obs.p.len())?;
    for j in 0..model.n_types() {
        let n = model.n_theta_block(j);
        check_len("Psi block rows", n, obs.psi[j].nrows())?;
        check_len("Psi block columns", model.n_v(), obs.psi[j].ncols())?;
        check_len("P block", n, obs.p[j].nrows())?;
        ensure_positive_definite(&obs.p[j], || format!("P block `{}`", model.currents[j].id))?;
    }

    let entries = measured_regressors(model, v_meas, &obs.w_hat);
    let innovation = DVector::from_iterator(
        model.n_v(),
        v_meas.iter().zip(obs.v_hat.iter()).map(|(m, e)| m - e),
    );

    let mut dv = DVector::zeros(model.n_v());
    model.drift_into(v_meas, u, dv.as_mut_slice());

    let mut phis = Vec::with_capacity(model.n_types());
    for (j, block) in entries.iter().enumerate() {
        let mut phi = DMatrix::zeros(block.len(), model.n_v());
        for (r, &val) in block.iter().enumerate() {
            phi[(r, model.regressor_column(j, r))] = val;
        }
        let theta_j = obs.theta_hat.rows(model.theta_offset(j), block.len());
        dv += phi.tr_mul(&theta_j);
        phis.push(phi);
    }
    dv += &innovation * gains.gamma0;

    let mut dtheta = DVector::zeros(model.n_theta());
    let mut dpsi = Vec::with_capacity(model.n_types());
    let mut dp = Vec::with_capacity(model.n_types());
    for (j, phi) in phis.into_iter().enumerate() {
        let (gamma, alpha) = (gains.blocks[j].gamma, gains.blocks[j].alpha);
        let p_psi = &obs.p[j] * &obs.psi[j];
        let p_psi_e = &p_psi * &innovation;
        dv += obs.psi[j].tr_mul(&p_psi_e) * gamma;
        dtheta
            .rows_mut(model.theta_offset(j), phi.nrows())
            .copy_from(&(p_psi_e * gamma));
        dpsi.push(phi - &obs.psi[j] * gamma);
        dp.push(&obs.p[j] * alpha - (&p_psi * p_psi.transpose()) * alpha);
    }

    Ok(DistributedObserverState {
        v_hat: dv,
        w_hat: gating_estimate_derivative(model, v_meas, &obs.w_hat)?,
        theta_hat: dtheta,
        psi: dpsi,
        p: dp,
    })
}

impl StateSpace for DistributedObserverState {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        self.v_hat.axpy(h, &d.v_hat, 1.0);
        self.w_hat.add_scaled(h, &d.w_hat);
        self.theta_hat.axpy(h, &d.theta_hat, 1.0);
        for (x, dx) in self.psi.iter_mut().zip(&d.psi) {
            x.zip_apply(dx, |a, b| *a += h * b);
        }
        for (x, dx) in self.p.iter_mut().zip(&d.p) {
            x.zip_apply(dx, |a, b| *a += h * b);
        }
    }

    fn all_finite(&self) -> bool {
        self.v_hat.iter().all(|x| x.is_finite())
            && self.w_hat.all_finite()
            && self.theta_hat.iter().all(|x| x.is_finite())
            && self
                .psi
                .iter()
                .flat_map(|m| m.iter())
                .all(|x| x.is_finite())
            && self.p.iter().flat_map(|m| m.iter()).all(|x| x.is_finite())
    }
}

impl AdaptiveObserver for DistributedObserverState {
    type Gains = GainSchedule;

    fn derivative(
        &self,
        model: &NetworkModel,
        v_meas: &[f64],
        u: &[f64],
        gains: &GainSchedule,
    ) -> Result<Self> {
        distributed_observer_derivative(model, self, v_meas, u, gains)
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

    fn psi_block(&self, _model: &NetworkModel, j: usize) -> DMatrix<f64> {
        self.psi[j].clone()
    }

    fn gain_blocks(&self) -> Vec<DMatrix<f64>> {
        self.p.clone()
    }

    fn gain_state_count(&self) -> usize {
        self.p.iter().map(|p| p.len()).sum()
    }
}
