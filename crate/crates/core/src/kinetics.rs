//! Gating nonlinearities: sigmoids, bell-shaped time constants, rate functions,
//! and the first-order gate and synapse ODEs built from them.
//!
//! All voltages are in mV and all times in ms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default magnitude bound applied to exponent arguments before `exp`.
pub const EXP_ARG_BOUND: f64 = 500.0;

/// Voltage range over which kinetics are validated.
pub const WORKING_RANGE: (f64, f64) = (-120.0, 60.0);

#[inline]
fn bounded_exp(x: f64, bound: f64) -> f64 {
    x.clamp(-bound, bound).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmoidParams {
    /// Half-activation voltage.
    pub rho: f64,
    /// Slope factor; negative for inactivation.
    pub kappa: f64,
}

impl SigmoidParams {
    pub fn new(rho: f64, kappa: f64) -> Result<Self> {
        let p = Self { rho, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || !self.kappa.is_finite() || self.kappa == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigmoid needs finite rho and nonzero kappa, got rho={} kappa={}",
                self.rho, self.kappa
            )));
        }
        Ok(())
    }
}

/// `(1 + exp(-(v - rho)/kappa))^-1`, saturating instead of overflowing.
#[inline]
pub fn sigmoid(v: f64, p: &SigmoidParams) -> f64 {
    sigmoid_with_bound(v, p, EXP_ARG_BOUND)
}

#[inline]
pub fn sigmoid_with_bound(v: f64, p: &SigmoidParams, bound: f64) -> f64 {
    1.0 / (1.0 + bounded_exp(-(v - p.rho) / p.kappa, bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellTauParams {
    pub tau_min: f64,
    pub tau_max: f64,
    pub zeta: f64,
    pub chi: f64,
}

impl BellTauParams {
    pub fn new(tau_min: f64, tau_max: f64, zeta: f64, chi: f64) -> Result<Self> {
        let p = Self {
            tau_min,
            tau_max,
            zeta,
            chi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_min > 0.0
            && self.tau_max >= self.tau_min
            && self.tau_max.is_finite()
            && self.zeta.is_finite()
            && self.chi > 0.0
            && self.chi.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "bell time constant needs 0 < tau_min <= tau_max and chi > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `tau_min + (tau_max - tau_min) exp(-(v - zeta)^2 / chi^2)`.
#[inline]
pub fn bell_tau(v: f64, p: &BellTauParams) -> f64 {
    let z = (v - p.zeta) / p.chi;
    p.tau_min + (p.tau_max - p.tau_min) * (-z * z).exp()
}

/// Opening/closing rate functions in the three classic Hodgkin–Huxley shapes,
/// each written in terms of `x = (v - midpoint) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateFunction {
    /// `rate * exp(x)`
    Exp {
        rate: f64,
        midpoint: f64,
        scale: f64,
    },
    /// `rate * x / (1 - exp(-x))`, continuous through `x = 0`.
    ExpLinear {
        rate: f64,
        midpoint: f64,
        scale: f64,
    },
    /// `rate / (1 + exp(-x))`
    Sigmoid {
        rate: f64,
        midpoint: f64,
        scale: f64,
    },
}

impl RateFunction {
    fn parts(&self) -> (f64, f64, f64) {
        match *self {
            RateFunction::Exp {
                rate,
                midpoint,
                scale,
            }
            | RateFunction::ExpLinear {
                rate,
                midpoint,
                scale,
            }
            | RateFunction::Sigmoid {
                rate,
                midpoint,
                scale,
            } => (rate, midpoint, scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (rate, midpoint, scale) = self.parts();
        if !(rate >= 0.0 && rate.is_finite() && midpoint.is_finite() && scale.is_finite())
            || scale == 0.0
        {
            return Err(Error::InvalidParameter(format!(
                "rate function needs rate >= 0 and nonzero scale, got {self:?}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let (rate, midpoint, scale) = self.parts();
        let x = (v - midpoint) / scale;
        match self {
            RateFunction::Exp { .. } => rate * bounded_exp(x, EXP_ARG_BOUND),
            RateFunction::ExpLinear { .. } => {
                if x.abs() < 1e-9 {
                    rate * (1.0 + 0.5 * x)
                } else if x < -EXP_ARG_BOUND {
                    0.0
                } else {
                    rate * -x / (-x).exp_m1()
                }
            }
            RateFunction::Sigmoid { .. } => rate / (1.0 + bounded_exp(-x, EXP_ARG_BOUND)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GateVariant {
    /// Steady state and time constant given directly.
    TauSigma {
        steady_state: SigmoidParams,
        tau: BellTauParams,
    },
    /// Opening rate `alpha(v)` and closing rate `beta(v)`.
    Rates {
        alpha: RateFunction,
        beta: RateFunction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateKinetics {
    #[serde(flatten)]
    pub variant: GateVariant,
    /// Power the gate is raised to in the current law.
    pub exponent: u32,
}

impl GateKinetics {
    pub fn validate(&self) -> Result<()> {
        match &self.variant {
            GateVariant::TauSigma { steady_state, tau } => {
                steady_state.validate()?;
                tau.validate()
            }
            GateVariant::Rates { alpha, beta } => {
                alpha.validate()?;
                beta.validate()?;
                let (lo, hi) = WORKING_RANGE;
                let steps = 360;
                for k in 0..=steps {
                    let v = lo + (hi - lo) * k as f64 / steps as f64;
                    let total = alpha.eval(v) + beta.eval(v);
                    if !(total > 0.0) {
                        return Err(Error::MalformedKinetics {
                            tau: 1.0 / total,
                            v,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Time constant and steady state at `v`. Rate-form kinetics are converted
    /// through `tau = 1/(alpha+beta)`, `sigma = alpha/(alpha+beta)`.
    pub fn tau_sigma(&self, v: f64) -> Result<(f64, f64)> {
        match &self.variant {
            GateVariant::TauSigma { steady_state, tau } => {
                let t = bell_tau(v, tau);
                if !(t > 0.0) {
                    return Err(Error::MalformedKinetics { tau: t, v });
                }
                Ok((t, sigmoid(v, steady_state)))
            }
            GateVariant::Rates { alpha, beta } => {
                let (a, b) = (alpha.eval(v), beta.eval(v));
                let total = a + b;
                if !(total > 0.0) {
                    return Err(Error::MalformedKinetics {
                        tau: 1.0 / total,
                        v,
                    });
                }
                Ok((1.0 / total, a / total))
            }
        }
    }

    pub fn derivative(&self, x: f64, v: f64) -> Result<f64> {
        gate_derivative(x, v, self)
    }
}

/// `dx/dt` for a gating variable.
///
/// Tau-sigma kinetics give `(sigma(v) - x) / tau(v)`; rate kinetics give
/// `alpha(v)(1 - x) - beta(v) x`.
#[inline]
pub fn gate_derivative(x: f64, v: f64, k: &GateKinetics) -> Result<f64> {
    match &k.variant {
        GateVariant::TauSigma { steady_state, tau } => {
            let t = bell_tau(v, tau);
            if !(t > 0.0) {
                return Err(Error::MalformedKinetics { tau: t, v });
            }
            Ok((sigmoid(v, steady_state) - x) / t)
        }
        GateVariant::Rates { alpha, beta } => {
            let (a, b) = (alpha.eval(v), beta.eval(v));
            if !(a + b > 0.0) {
                return Err(Error::MalformedKinetics {
                    tau: 1.0 / (a + b),
                    v,
                });
            }
            Ok(a * (1.0 - x) - b * x)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynapseKinetics {
    /// Binding rate (1/ms).
    pub a_syn: f64,
    /// Unbinding rate (1/ms).
    pub b_syn: f64,
    pub presyn_sigmoid: SigmoidParams,
}

impl SynapseKinetics {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_syn > 0.0
            && self.b_syn > 0.0
            && self.a_syn.is_finite()
            && self.b_syn.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "synapse rates must be positive, got a_syn={} b_syn={}",
                self.a_syn, self.b_syn
            )));
        }
        self.presyn_sigmoid.validate()
    }
}

/// `a_syn sigma(v_pre) (1 - s) - b_syn s`.
#[inline]
pub fn synapse_derivative(s: f64, v_pre: f64, k: &SynapseKinetics) -> f64 {
    k.a_syn * sigmoid(v_pre, &k.presyn_sigmoid) * (1.0 - s) - k.b_syn * s
}

/// Hodgkin–Huxley (1952) kinetics in the modern sign convention
/// (resting potential near -65 mV).
pub mod hh {
    use super::{GateKinetics, GateVariant, RateFunction, SigmoidParams, SynapseKinetics};

    /// Sodium activation `m`, cubed.
    pub fn sodium_activation() -> GateKinetics {
        GateKinetics {
            variant: GateVariant::Rates {
                alpha: RateFunction::ExpLinear {
                    rate: 1.0,
                    midpoint: -40.0,
                    scale: 10.0,
                },
                beta: RateFunction::Exp {
                    rate: 4.0,
                    midpoint: -65.0,
                    scale: -18.0,
                },
            },
            exponent: 3,
        }
    }

    /// Sodium inactivation `h`.
    pub fn sodium_inactivation() -> GateKinetics {
        GateKinetics {
            variant: GateVariant::Rates {
                alpha: RateFunction::Exp {
                    rate: 0.07,
                    midpoint: -65.0,
                    scale: -20.0,
                },
                beta: RateFunction::Sigmoid {
                    rate: 1.0,
                    midpoint: -35.0,
                    scale: 10.0,
                },
            },
            exponent: 1,
        }
    }

    /// Potassium activation `n`, to the fourth power.
    pub fn potassium_activation() -> GateKinetics {
        GateKinetics {
            variant: GateVariant::Rates {
                alpha: RateFunction::ExpLinear {
                    rate: 0.1,
                    midpoint: -55.0,
                    scale: 10.0,
                },
                beta: RateFunction::Exp {
                    rate: 0.125,
                    midpoint: -65.0,
                    scale: -80.0,
                },
            },
            exponent: 4,
        }
    }

    /// GABA-type synapse used by the two-neuron network.
    pub fn gaba_synapse() -> SynapseKinetics {
        SynapseKinetics {
            a_syn: 2.0,
            b_syn: 0.1,
            presyn_sigmoid: SigmoidParams {
                rho: -45.0,
                kappa: 2.0,
            },
        }
    }
}
