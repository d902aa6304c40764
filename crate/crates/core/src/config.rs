//! JSON experiment configuration.
//!
//! Units: times in ms, voltages in mV, conductances in mS/cm^2,
//! capacitances in uF/cm^2, inputs in uA/cm^2, SNR in dB.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{presets, NetworkModel, SystemState};
use crate::observer::{FullGains, GainSchedule, InitialGain, ObserverInit, ObserverMode};
use crate::sim::{Experiment, InputSpec, IntegratorConfig, NoiseConfig, ObserverSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Preset(String),
    Inline(NetworkModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GainsConfig {
    /// Named distributed gain set (`A` or `B`).
    Preset(String),
    Full(FullGains),
    Schedule(GainSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// `none`, `full`, `distributed` or `distributed-scalar`.
    pub mode: String,
    /// Required unless `mode` is `none`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsConfig>,
    /// Defaults to the preset's initial estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<ObserverInit>,
    #[serde(default)]
    pub p0: InitialGain,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig {
            mode: "distributed".into(),
            gains: Some(GainsConfig::Preset("A".into())),
            init: None,
            p0: InitialGain::default(),
        }
    }
}

pub fn parse_mode(mode: &str) -> Result<Option<ObserverMode>> {
    match mode {
        "none" => Ok(None),
        "full" => Ok(Some(ObserverMode::Full)),
        "distributed" => Ok(Some(ObserverMode::Distributed)),
        "distributed-scalar" => Ok(Some(ObserverMode::DistributedScalar)),
        other => Err(Error::InvalidParameter(format!(
            "unknown observer mode `{other}` (expected none, full, distributed or distributed-scalar)"
        ))),
    }
}

fn default_pe_window() -> f64 {
    50.0
}

fn default_beta() -> f64 {
    0.01
}

fn default_pe_threshold() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Excitation window `T` (ms).
    #[serde(default = "default_pe_window")]
    pub pe_window: f64,
    /// Decay margin `beta` (1/ms) for the coupling check.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Smallest windowed Gram eigenvalue counted as excited.
    #[serde(default = "default_pe_threshold")]
    pub pe_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            pe_window: default_pe_window(),
            beta: default_beta(),
            pe_threshold: default_pe_threshold(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trace() -> String {
    "trace.csv".into()
}

fn default_summary() -> String {
    "summary.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// File name of the trace CSV inside `dir`.
    #[serde(default = "default_trace")]
    pub trace: String,
    /// File name of the run summary inside `dir`.
    #[serde(default = "default_summary")]
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            trace: default_trace(),
            summary: default_summary(),
        }
    }
}

impl OutputConfig {
    pub fn trace_path(&self) -> PathBuf {
        self.dir.join(&self.trace)
    }

    pub fn summary_path(&self) -> PathBuf {
        self.dir.join(&self.summary)
    }
}

fn default_model() -> ModelSource {
    ModelSource::Preset("hh2".into())
}

fn default_inputs() -> InputSpec {
    InputSpec::Preset { name: "hh2".into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: ModelSource,
    /// Replace every time-varying conductance by its value at this time (ms).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_theta_at: Option<f64>,
    /// True initial state; defaults to the preset's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<SystemState>,
    #[serde(default)]
    pub observer: ObserverConfig,
    pub integrator: IntegratorConfig,
    #[serde(default = "NoiseConfig::off")]
    pub noise: NoiseConfig,
    #[serde(default = "default_inputs")]
    pub inputs: InputSpec,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Noiseless preset run with distributed gain set `A`.
    pub fn preset(name: &str, t_end: f64) -> Result<Self> {
        presets::model(name)?;
        Ok(ExperimentConfig {
            model: ModelSource::Preset(name.into()),
            freeze_theta_at: None,
            initial: None,
            observer: ObserverConfig::default(),
            integrator: IntegratorConfig::new(t_end),
            noise: NoiseConfig::off(),
            inputs: InputSpec::Preset { name: name.into() },
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.to_experiment()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn mode(&self) -> Result<Option<ObserverMode>> {
        parse_mode(&self.observer.mode)
    }

    pub fn build_model(&self) -> Result<NetworkModel> {
        let model = match &self.model {
            ModelSource::Preset(name) => presets::model(name)?,
            ModelSource::Inline(m) => m.clone(),
        };
        Ok(match self.freeze_theta_at {
            Some(t) => model.frozen_at(t),
            None => model,
        })
    }

    fn preset_name(&self) -> Option<&str> {
        match &self.model {
            ModelSource::Preset(name) => Some(name),
            ModelSource::Inline(_) => None,
        }
    }

    fn observer_setup(&self) -> Result<ObserverSetup> {
        let Some(mode) = self.mode()? else {
            return Ok(ObserverSetup::None);
        };
        let gains = self.observer.gains.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!("observer mode `{}` needs gains", mode.as_str()))
        })?;
        let schedule = |g: &GainsConfig| -> Result<GainSchedule> {
            match g {
                GainsConfig::Preset(name) => GainSchedule::preset(name),
                GainsConfig::Schedule(s) => Ok(s.clone()),
                GainsConfig::Full(_) => Err(Error::InvalidParameter(
                    "distributed observers need a gain schedule, not full gains".into(),
                )),
            }
        };
        Ok(match mode {
            ObserverMode::Full => match gains {
                GainsConfig::Full(g) => ObserverSetup::Full(*g),
                // A named distributed set also fixes the full observer's
                // (gamma, alpha) when all its blocks agree with gamma0.
                other => {
                    let s = schedule(other)?;
                    let first = s.blocks.first().ok_or_else(|| {
                        Error::InvalidParameter("gain schedule has no blocks".into())
                    })?;
                    if s.blocks
                        .iter()
                        .any(|b| b.gamma != s.gamma0 || b.alpha != first.alpha)
                    {
                        return Err(Error::InvalidParameter(
                            "full observer needs uniform gains; use {\"full\": {\"gamma\", \"alpha\"}}".into(),
                        ));
                    }
                    ObserverSetup::Full(FullGains {
                        gamma: s.gamma0,
                        alpha: first.alpha,
                    })
                }
            },
            ObserverMode::Distributed => ObserverSetup::Distributed(schedule(gains)?),
            ObserverMode::DistributedScalar => ObserverSetup::DistributedScalar(schedule(gains)?),
        })
    }

    /// Resolve presets and validate everything a run needs.
    pub fn to_experiment(&self) -> Result<Experiment> {
        let model = self.build_model()?;
        let initial = match (&self.initial, self.preset_name()) {
            (Some(s), _) => s.clone(),
            (None, Some(name)) => presets::initial_state(name)?,
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "an inline model needs an initial state".into(),
                ))
            }
        };
        let observer = self.observer_setup()?;
        let observer_init = match (&self.observer.init, self.preset_name()) {
            (Some(init), _) => init.clone(),
            (None, Some(name)) => ObserverInit::preset(name)?,
            (None, None) if observer == ObserverSetup::None => ObserverInit {
                v_hat: initial.v.clone(),
                w_hat: initial.w.clone(),
                theta_hat: vec![0.0; model.n_theta()],
            },
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "an inline model needs observer.init".into(),
                ))
            }
        };
        if let Some(t) = self.freeze_theta_at {
            if !t.is_finite() {
                return Err(Error::InvalidParameter(
                    "freeze_theta_at must be finite".into(),
                ));
            }
        }
        let a = &self.analysis;
        if !(a.pe_window > 0.0 && a.beta > 0.0 && a.pe_threshold >= 0.0) {
            return Err(Error::InvalidParameter(
                "analysis needs pe_window > 0, beta > 0 and pe_threshold >= 0".into(),
            ));
        }
        let exp = Experiment {
            model,
            initial,
            observer,
            observer_init,
            p0: self.observer.p0.clone(),
            integrator: self.integrator.clone(),
            noise: self.noise.clone(),
            inputs: self.inputs.clone(),
        };
        exp.validate()?;
        match &exp.observer {
            ObserverSetup::Full(_) => {
                crate::observer::ensure_positive_definite(&exp.p0.full(&exp.model)?, || {
                    "P0".into()
                })?
            }
            ObserverSetup::Distributed(_) | ObserverSetup::DistributedScalar(_) => {
                for p in exp.p0.blocks(&exp.model)? {
                    crate::observer::ensure_positive_definite(&p, || "P0 block".into())?;
                }
            }
            ObserverSetup::None => {}
        }
        Ok(exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_uses_presets() {
        let cfg = ExperimentConfig::from_json(r#"{"integrator": {"t_end": 5}}"#).unwrap();
        let exp = cfg.to_experiment().unwrap();
        assert_eq!(exp.integrator.dt, 1e-4);
        assert_eq!(exp.integrator.record_stride, 100);
        assert!(!exp.noise.enabled);
        assert_eq!(
            exp.observer_init.theta_hat,
            vec![78.0, 78.0, 78.0, 78.0, 0.0, 0.0]
        );
        assert!(matches!(exp.observer, ObserverSetup::Distributed(ref g) if g.gamma0 == 2.0));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err =
            ExperimentConfig::from_json(r#"{"integrator": {"t_end": 5, "dtt": 1}}"#).unwrap_err();
        assert!(matches!(err, Error::Json(_)));
        let err = ExperimentConfig::from_json(r#"{"integrator": {"t_end": 5}, "colour": 1}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Json(_)));
    }

    #[test]
    fn invalid_values_are_rejected_at_load() {
        for text in [
            r#"{"integrator": {"t_end": 5, "dt": 0}}"#,
            r#"{"integrator": {"t_end": 5}, "observer": {"mode": "kalman", "gains": {"preset": "A"}}}"#,
            r#"{"integrator": {"t_end": 5}, "observer": {"mode": "full", "gains": {"full": {"gamma": 0.1, "alpha": 0.2}}}}"#,
            r#"{"integrator": {"t_end": 5}, "observer": {"mode": "distributed", "gains": {"preset": "C"}}}"#,
            r#"{"integrator": {"t_end": 5}, "observer": {"mode": "distributed", "gains": {"preset": "A"}, "p0": {"scaled": -1}}}"#,
            r#"{"integrator": {"t_end": 5}, "model": {"preset": "hh3"}}"#,
            r#"{"integrator": {"t_end": 5}, "noise": {"enabled": true, "snr_db": 1e999}}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn full_observer_accepts_uniform_named_set() {
        let mut cfg = ExperimentConfig::preset("hh2", 1.0).unwrap();
        cfg.observer.mode = "full".into();
        let exp = cfg.to_experiment().unwrap();
        assert_eq!(exp.observer, ObserverSetup::Full(FullGains::HH2));
        cfg.observer.gains = Some(GainsConfig::Preset("B".into()));
        assert!(cfg.to_experiment().is_err());
    }

    #[test]
    fn freezing_makes_theta_constant() {
        let mut cfg = ExperimentConfig::preset("hh2", 1.0).unwrap();
        cfg.freeze_theta_at = Some(0.0);
        let model = cfg.build_model().unwrap();
        assert_eq!(model.theta_at(0.0), model.theta_at(1300.0));
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            prop_oneof![
                Just("none"),
                Just("full"),
                Just("distributed"),
                Just("distributed-scalar")
            ],
            1u32..200,
            1usize..1000,
            any::<u64>(),
            any::<bool>(),
            10.0f64..60.0,
            proptest::option::of(0.0f64..1300.0),
            0.1f64..10.0,
        )
            .prop_map(|(mode, t_end, stride, seed, noise, snr, freeze, p0)| {
                let mut cfg = ExperimentConfig::preset("hh2", t_end as f64).unwrap();
                cfg.observer.mode = mode.into();
                cfg.observer.p0 = InitialGain::Scaled(p0);
                if mode == "full" {
                    cfg.observer.gains = Some(GainsConfig::Full(FullGains::HH2));
                } else if mode == "distributed-scalar" {
                    cfg.observer.gains =
                        Some(GainsConfig::Schedule(GainSchedule::preset("B").unwrap()));
                }
                cfg.integrator.record_stride = stride;
                cfg.integrator.rng_seed = seed;
                cfg.noise.enabled = noise;
                cfg.noise.snr_db = snr;
                cfg.freeze_theta_at = freeze;
                cfg
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(cfg in arb_config()) {
            let once = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            prop_assert_eq!(&once, &cfg);
            let twice = ExperimentConfig::from_json(&once.to_json().unwrap()).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
