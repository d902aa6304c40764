//! Adaptive observers for networks in linear-in-the-parameters form.
//!
//! Three variants share one interface:
//!
//! * [`FullObserverState`]: a single `n_theta x n_theta` gain matrix `P`
//!   updated by continuous-time RLS with exponential forgetting.
//! * [`DistributedObserverState`]: one `P_j` per current type, with its own
//!   learning gain `gamma_j` and forgetting rate `alpha_j`.
//! * [`ScalarObserverState`]: the distributed observer when every `Phi_j` is
//!   diagonal, stored as per-neuron scalars.
//!
//! Regressors, drift and internal dynamics are always evaluated at the
//! measured voltage; only the innovation `v_meas - v_hat` involves `v_hat`.

mod distributed;
mod full;
mod scalar;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::network::NetworkModel;
use crate::sim::StateSpace;

pub use distributed::{distributed_observer_derivative, DistributedObserverState};
pub use full::{full_observer_derivative, FullObserverState};
pub use scalar::{scalar_distributed_derivative, ScalarObserverState};

/// Gains of the non-distributed observer; requires `gamma > alpha > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullGains {
    pub gamma: f64,
    pub alpha: f64,
}

impl FullGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > self.alpha && self.alpha > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "full observer needs gamma > alpha > 0, got gamma={} alpha={}",
                self.gamma, self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockGains {
    /// Id of the current type this block belongs to.
    pub current: String,
    pub gamma: f64,
    pub alpha: f64,
}

/// Output-injection gain `gamma0` plus a learning gain and forgetting rate
/// per current type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSchedule {
    pub gamma0: f64,
    pub blocks: Vec<BlockGains>,
}

impl GainSchedule {
    pub fn uniform(model: &NetworkModel, gamma0: f64, gamma: f64, alpha: f64) -> Self {
        GainSchedule {
            gamma0,
            blocks: model
                .currents
                .iter()
                .map(|c| BlockGains {
                    current: c.id.clone(),
                    gamma,
                    alpha,
                })
                .collect(),
        }
    }

    /// The two gain sets used with the `hh2` network. Set `B` slows the
    /// synaptic block down relative to `A`.
    pub fn preset(name: &str) -> Result<Self> {
        let block = |current: &str, gamma, alpha| BlockGains {
            current: current.into(),
            gamma,
            alpha,
        };
        match name {
            "A" | "a" => Ok(GainSchedule {
                gamma0: 2.0,
                blocks: vec![
                    block("Na", 2.0, 0.15),
                    block("K", 2.0, 0.15),
                    block("G", 2.0, 0.15),
                ],
            }),
            "B" | "b" => Ok(GainSchedule {
                gamma0: 2.0,
                blocks: vec![
                    block("Na", 2.0, 0.15),
                    block("K", 2.0, 0.15),
                    block("G", 0.8, 0.03),
                ],
            }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma0 must be positive, got {}",
                self.gamma0
            )));
        }
        check_len("gain blocks", model.n_types(), self.blocks.len())?;
        for (b, cur) in self.blocks.iter().zip(&model.currents) {
            if b.current != cur.id {
                return Err(Error::InvalidParameter(format!(
                    "gain block `{}` does not match current type `{}`",
                    b.current, cur.id
                )));
            }
            if !(b.gamma > 0.0 && b.alpha > 0.0 && b.gamma.is_finite() && b.alpha.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gains of `{}` must be positive, got gamma={} alpha={}",
                    b.current, b.gamma, b.alpha
                )));
            }
        }
        Ok(())
    }

    pub fn min_alpha(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.alpha)
            .fold(f64::INFINITY, f64::min)
    }
}

impl FullGains {
    pub const HH2: FullGains = FullGains {
        gamma: 2.0,
        alpha: 0.15,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObserverMode {
    Full,
    Distributed,
    DistributedScalar,
}

impl ObserverMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObserverMode::Full => "full",
            ObserverMode::Distributed => "distributed",
            ObserverMode::DistributedScalar => "distributed-scalar",
        }
    }
}

/// Initial estimates shared by every observer variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverInit {
    pub v_hat: Vec<f64>,
    pub w_hat: Vec<Vec<f64>>,
    pub theta_hat: Vec<f64>,
}

impl ObserverInit {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "hh2" => Ok(ObserverInit {
                v_hat: vec![0.0, -60.0],
                w_hat: vec![vec![0.5, 0.0, 0.5, 0.0], vec![0.5, 0.0], vec![0.5, 0.0]],
                theta_hat: vec![78.0, 78.0, 78.0, 78.0, 0.0, 0.0],
            }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        check_len("v_hat", model.n_v(), self.v_hat.len())?;
        model.validate_gating(&self.w_hat)?;
        check_len("theta_hat", model.n_theta(), self.theta_hat.len())?;
        Ok(())
    }
}

/// Initial gain matrix: a scaled identity, one dense matrix, or one matrix
/// per current type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialGain {
    Scaled(f64),
    Matrix(Vec<Vec<f64>>),
    Blocks(Vec<Vec<Vec<f64>>>),
}

impl Default for InitialGain {
    fn default() -> Self {
        InitialGain::Scaled(1.0)
    }
}

fn dense(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    for r in rows {
        check_len(what, n, r.len())?;
    }
    Ok(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
}

impl InitialGain {
    /// Blocks of `P(0)` in current-type order.
    pub fn blocks(&self, model: &NetworkModel) -> Result<Vec<DMatrix<f64>>> {
        let sizes: Vec<usize> = (0..model.n_types())
            .map(|j| model.n_theta_block(j))
            .collect();
        match self {
            InitialGain::Scaled(s) => Ok(sizes
                .iter()
                .map(|&n| DMatrix::identity(n, n) * *s)
                .collect()),
            InitialGain::Blocks(blocks) => {
                check_len("P0 blocks", sizes.len(), blocks.len())?;
                blocks
                    .iter()
                    .zip(&sizes)
                    .map(|(b, &n)| {
                        check_len("P0 block", n, b.len())?;
                        dense(b, "P0 block row")
                    })
                    .collect()
            }
            InitialGain::Matrix(_) => Err(Error::InvalidParameter(
                "a dense P0 cannot initialise a block-distributed observer".into(),
            )),
        }
    }

    pub fn full(&self, model: &NetworkModel) -> Result<DMatrix<f64>> {
        let n = model.n_theta();
        match self {
            InitialGain::Scaled(s) => Ok(DMatrix::identity(n, n) * *s),
            InitialGain::Matrix(rows) => {
                check_len("P0", n, rows.len())?;
                dense(rows, "P0 row")
            }
            InitialGain::Blocks(_) => {
                let blocks = self.blocks(model)?;
                let mut p = DMatrix::zeros(n, n);
                let mut off = 0;
                for b in blocks {
                    let k = b.nrows();
                    p.view_mut((off, off), (k, k)).copy_from(&b);
                    off += k;
                }
                Ok(p)
            }
        }
    }
}

/// Numbers of gain-matrix states each observer variant integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainStateCounts {
    /// `n_theta^2`
    pub full: usize,
    /// `sum_j (n_theta^j)^2`
    pub block: usize,
    /// `sum_j n_theta^j`, when every regressor is diagonal.
    pub diagonal: Option<usize>,
}

pub fn gain_state_counts(model: &NetworkModel) -> GainStateCounts {
    let n = model.n_theta();
    let sizes = (0..model.n_types()).map(|j| model.n_theta_block(j));
    GainStateCounts {
        full: n * n,
        block: sizes.clone().map(|k| k * k).sum(),
        diagonal: (0..model.n_types())
            .all(|j| model.regressor_is_diagonal(j))
            .then(|| sizes.sum()),
    }
}

/// Interface the simulation engine needs from an observer.
pub trait AdaptiveObserver: StateSpace {
    type Gains;

    fn derivative(
        &self,
        model: &NetworkModel,
        v_meas: &[f64],
        u: &[f64],
        gains: &Self::Gains,
    ) -> Result<Self>;

    fn v_hat(&self) -> &[f64];
    fn w_hat(&self) -> &[Vec<f64>];
    fn theta_hat(&self) -> &[f64];

    /// `Psi_j` as an `n_theta^j x n_v` matrix.
    fn psi_block(&self, model: &NetworkModel, j: usize) -> DMatrix<f64>;

    /// Gain matrices: the single `P`, or one `P_j` per current type.
    fn gain_blocks(&self) -> Vec<DMatrix<f64>>;

    /// Smallest eigenvalue of each gain block.
    fn gain_min_eigenvalues(&self) -> Vec<f64> {
        self.gain_blocks()
            .into_iter()
            .map(|p| min_eigenvalue(&p))
            .collect()
    }

    /// Number of integrated gain-matrix entries.
    fn gain_state_count(&self) -> usize;
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub(crate) fn ensure_positive_definite(
    p: &DMatrix<f64>,
    what: impl FnOnce() -> String,
) -> Result<()> {
    let symmetric = (0..p.nrows()).all(|i| (0..i).all(|k| p[(i, k)] == p[(k, i)]));
    if !symmetric || p.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { what: what() });
    }
    Ok(())
}

/// Regressor entries of every block evaluated at `(v_meas, w_hat)`.
pub(crate) fn measured_regressors(
    model: &NetworkModel,
    v_meas: &[f64],
    w_hat: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    (0..model.n_types())
        .map(|j| {
            let mut e = vec![0.0; model.n_theta_block(j)];
            model.regressor_entries(j, v_meas, &w_hat[j], &mut e);
            e
        })
        .collect()
}

pub(crate) fn gating_estimate_derivative(
    model: &NetworkModel,
    v_meas: &[f64],
    w_hat: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    (0..model.n_types())
        .map(|j| {
            let mut g = vec![0.0; model.n_w_block(j)];
            model.gating_derivative(j, v_meas, &w_hat[j], &mut g)?;
            Ok(g)
        })
        .collect()
}

pub(crate) fn check_inputs(
    model: &NetworkModel,
    v_hat: &[f64],
    w_hat: &[Vec<f64>],
    v_meas: &[f64],
    u: &[f64],
) -> Result<()> {
    check_len("v_hat", model.n_v(), v_hat.len())?;
    check_len("measured voltage", model.n_v(), v_meas.len())?;
    check_len("input vector", model.n_v(), u.len())?;
    model.validate_gating(w_hat)
}

/// Any of the three observer variants, as produced by [`init_observer`].
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverState {
    Full(FullObserverState),
    Distributed(DistributedObserverState),
    Scalar(ScalarObserverState),
}

/// Build an observer with `Psi = 0` and the given estimates and `P(0)`.
pub fn init_observer(
    model: &NetworkModel,
    mode: ObserverMode,
    init: &ObserverInit,
    p0: &InitialGain,
) -> Result<ObserverState> {
    init.validate(model)?;
    Ok(match mode {
        ObserverMode::Full => {
            ObserverState::Full(FullObserverState::new(model, init, p0.full(model)?)?)
        }
        ObserverMode::Distributed => ObserverState::Distributed(DistributedObserverState::new(
            model,
            init,
            p0.blocks(model)?,
        )?),
        ObserverMode::DistributedScalar => {
            ObserverState::Scalar(ScalarObserverState::new(model, init, &p0.blocks(model)?)?)
        }
    })
}
