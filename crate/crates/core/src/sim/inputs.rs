use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    /// Period in ms.
    pub period: f64,
}

/// `offset + sum_k amplitude_k sin(2 pi t / period_k)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Multisine {
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<SineTerm>,
}

impl Multisine {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().fold(self.offset, |acc, s| {
            acc + s.amplitude * (TAU * t / s.period).sin()
        })
    }
}

/// Injected current per neuron (uA/cm^2) as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSpec {
    Preset { name: String },
    Multisine { channels: Vec<Multisine> },
    Zero,
}

pub const PRESET_NAMES: &[&str] = &["hh2"];

/// Named input waveforms. `hh2` drives the two-neuron network with
/// `u1 = 2 + sin(2 pi t/10) + sin(2 pi t/7) + sin(2 pi t/4)` and
/// `u2 = 1 + 2 sin(2 pi t/9) + sin(2 pi t/5)`.
pub fn input_preset(name: &str) -> Result<InputSpec> {
    let term = |amplitude, period| SineTerm { amplitude, period };
    match name {
        "hh2" => Ok(InputSpec::Multisine {
            channels: vec![
                Multisine {
                    offset: 2.0,
                    terms: vec![term(1.0, 10.0), term(1.0, 7.0), term(1.0, 4.0)],
                },
                Multisine {
                    offset: 1.0,
                    terms: vec![term(2.0, 9.0), term(1.0, 5.0)],
                },
            ],
        }),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Input spec resolved against a neuron count.
#[derive(Debug, Clone)]
pub struct Inputs {
    channels: Vec<Multisine>,
}

impl Inputs {
    pub fn new(spec: &InputSpec, n_v: usize) -> Result<Self> {
        let channels = match spec {
            InputSpec::Preset { name } => return Inputs::new(&input_preset(name)?, n_v),
            InputSpec::Multisine { channels } => channels.clone(),
            InputSpec::Zero => vec![
                Multisine {
                    offset: 0.0,
                    terms: vec![]
                };
                n_v
            ],
        };
        if channels.len() != n_v {
            return Err(Error::dims("input channels", n_v, channels.len()));
        }
        for c in &channels {
            let bad = !c.offset.is_finite()
                || c.terms.iter().any(|s| {
                    !s.amplitude.is_finite() || !(s.period.is_finite() && s.period != 0.0)
                });
            if bad {
                return Err(Error::InvalidParameter(format!(
                    "malformed input channel {c:?}"
                )));
            }
        }
        Ok(Inputs { channels })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    #[inline]
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c.eval(t);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels.len()];
        self.eval_into(t, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hh2_inputs_at_known_times() {
        let u = Inputs::new(&input_preset("hh2").unwrap(), 2).unwrap();
        assert_eq!(u.eval(0.0), vec![2.0, 1.0]);
        // 2 + sin(7 pi) + sin(10 pi) + sin(17.5 pi) = 1
        assert_abs_diff_eq!(u.eval(35.0)[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unknown_preset_and_channel_mismatch() {
        assert!(matches!(
            input_preset("square"),
            Err(Error::UnknownPreset(_))
        ));
        assert!(Inputs::new(&InputSpec::Preset { name: "hh2".into() }, 3).is_err());
        assert_eq!(
            Inputs::new(&InputSpec::Zero, 3).unwrap().eval(4.0),
            vec![0.0; 3]
        );
    }
}
