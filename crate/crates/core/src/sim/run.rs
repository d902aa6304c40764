use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::euler::{euler_step_in_place, StateSpace};
use super::inputs::{InputSpec, Inputs};
use super::noise::{add_noise, NoiseConfig};
use crate::error::{Error, Result};
use crate::network::{NetworkModel, SystemState};
use crate::observer::{
    AdaptiveObserver, DistributedObserverState, FullGains, FullObserverState, GainSchedule,
    InitialGain, ObserverInit, ObserverMode, ScalarObserverState,
};
use crate::trace::{Trace, TraceLayout};

fn default_dt() -> f64 {
    1e-4
}

fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Step size (ms).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Horizon (ms).
    pub t_end: f64,
    /// Steps between recorded samples.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Record every gain-matrix entry, not only the smallest eigenvalue.
    #[serde(default)]
    pub record_gain_matrices: bool,
}

impl IntegratorConfig {
    pub fn new(t_end: f64) -> Self {
        IntegratorConfig {
            dt: default_dt(),
            t_end,
            record_stride: default_stride(),
            rng_seed: 0,
            record_gain_matrices: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter(
                "record_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Which observer runs alongside the true system, with its gains.
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverSetup {
    None,
    Full(FullGains),
    Distributed(GainSchedule),
    DistributedScalar(GainSchedule),
}

impl ObserverSetup {
    pub fn mode(&self) -> Option<ObserverMode> {
        match self {
            ObserverSetup::None => None,
            ObserverSetup::Full(_) => Some(ObserverMode::Full),
            ObserverSetup::Distributed(_) => Some(ObserverMode::Distributed),
            ObserverSetup::DistributedScalar(_) => Some(ObserverMode::DistributedScalar),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: NetworkModel,
    pub initial: SystemState,
    pub observer: ObserverSetup,
    pub observer_init: ObserverInit,
    pub p0: InitialGain,
    pub integrator: IntegratorConfig,
    pub noise: NoiseConfig,
    pub inputs: InputSpec,
}

impl Experiment {
    /// The `hh2` network with its standard initial conditions and inputs.
    pub fn hh2(observer: ObserverSetup, t_end: f64) -> Self {
        Experiment {
            model: crate::network::presets::hh_two_neuron(),
            initial: crate::network::presets::initial_state("hh2").expect("preset"),
            observer,
            observer_init: ObserverInit::preset("hh2").expect("preset"),
            p0: InitialGain::default(),
            integrator: IntegratorConfig::new(t_end),
            noise: NoiseConfig::off(),
            inputs: InputSpec::Preset { name: "hh2".into() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.model.validate_state(&self.initial)?;
        self.integrator.validate()?;
        Inputs::new(&self.inputs, self.model.n_v())?;
        if !self.noise.snr_db.is_finite() {
            return Err(Error::InvalidParameter("snr_db must be finite".into()));
        }
        match &self.observer {
            ObserverSetup::None => {}
            ObserverSetup::Full(g) => g.validate()?,
            ObserverSetup::Distributed(g) | ObserverSetup::DistributedScalar(g) => {
                g.validate(&self.model)?
            }
        }
        if self.observer != ObserverSetup::None {
            self.observer_init.validate(&self.model)?;
        }
        Ok(())
    }
}

impl StateSpace for SystemState {
    fn add_scaled(&mut self, h: f64, d: &Self) {
        self.v.add_scaled(h, &d.v);
        self.w.add_scaled(h, &d.w);
    }

    fn all_finite(&self) -> bool {
        self.v.all_finite() && self.w.all_finite()
    }
}

fn at(t: f64) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::StepFailed { .. } => e,
        other => Error::StepFailed {
            t,
            cause: Box::new(other),
        },
    }
}

/// Per-channel RMS of the clean voltage over every integration step of the
/// experiment's horizon.
pub fn reference_rms(exp: &Experiment) -> Result<Vec<f64>> {
    let inputs = Inputs::new(&exp.inputs, exp.model.n_v())?;
    let cfg = &exp.integrator;
    let mut state = exp.initial.clone();
    let mut u = vec![0.0; exp.model.n_v()];
    let mut sum_sq = vec![0.0; exp.model.n_v()];
    let n_steps = cfg.n_steps();
    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        for (s, v) in sum_sq.iter_mut().zip(&state.v) {
            *s += v * v;
        }
        if k == n_steps {
            break;
        }
        inputs.eval_into(t, &mut u);
        euler_step_in_place(
            |t, s| exp.model.system_derivative(s, &u, t),
            &mut state,
            t,
            cfg.dt,
        )
        .map_err(at(t))?;
    }
    Ok(sum_sq
        .into_iter()
        .map(|s| (s / (n_steps + 1) as f64).sqrt())
        .collect())
}

/// Integrate the true network and the configured observer on one grid.
///
/// The true system always evolves with the clean voltage; the observer sees
/// the noisy measurement, freshly drawn every step.
pub fn run_experiment(exp: &Experiment) -> Result<Trace> {
    exp.validate()?;
    let mut noise = exp.noise.clone();
    if noise.enabled && noise.reference_rms.is_none() {
        noise.reference_rms = Some(reference_rms(exp)?);
    }
    let init = &exp.observer_init;
    match &exp.observer {
        ObserverSetup::None => simulate::<FullObserverState>(exp, &noise, None),
        ObserverSetup::Full(g) => {
            let obs = FullObserverState::new(&exp.model, init, exp.p0.full(&exp.model)?)?;
            simulate(exp, &noise, Some((obs, g)))
        }
        ObserverSetup::Distributed(g) => {
            let obs = DistributedObserverState::new(&exp.model, init, exp.p0.blocks(&exp.model)?)?;
            simulate(exp, &noise, Some((obs, g)))
        }
        ObserverSetup::DistributedScalar(g) => {
            let obs = ScalarObserverState::new(&exp.model, init, &exp.p0.blocks(&exp.model)?)?;
            simulate(exp, &noise, Some((obs, g)))
        }
    }
}

fn simulate<O: AdaptiveObserver>(
    exp: &Experiment,
    noise: &NoiseConfig,
    mut observer: Option<(O, &O::Gains)>,
) -> Result<Trace> {
    let model = &exp.model;
    let cfg = &exp.integrator;
    let inputs = Inputs::new(&exp.inputs, model.n_v())?;
    let noise_std = noise.noise_std(model.n_v())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let layout = TraceLayout::new(
        model,
        exp.observer.mode(),
        cfg.record_gain_matrices && observer.is_some(),
    );
    let mut trace = Trace::new(layout);
    let mut row = Vec::with_capacity(trace.width());

    let mut state = exp.initial.clone();
    let mut u = vec![0.0; model.n_v()];
    let n_steps = cfg.n_steps();
    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        inputs.eval_into(t, &mut u);
        let mut v_meas = state.v.clone();
        if noise.enabled {
            add_noise(&mut v_meas, &noise_std, &mut rng);
        }
        if k % cfg.record_stride == 0 {
            row.clear();
            record(
                &mut row,
                model,
                t,
                &state,
                &v_meas,
                observer.as_ref().map(|(o, _)| o),
                cfg.record_gain_matrices,
            );
            trace.push_row(&row)?;
        }
        if k == n_steps {
            break;
        }
        if let Some((obs, gains)) = observer.as_mut() {
            let gains: &O::Gains = gains;
            euler_step_in_place(
                |_, o: &O| o.derivative(model, &v_meas, &u, gains),
                obs,
                t,
                cfg.dt,
            )
            .map_err(at(t))?;
            if !obs.all_finite() {
                return Err(at(t)(Error::NonFinite { t }));
            }
        }
        euler_step_in_place(
            |t, s| model.system_derivative(s, &u, t),
            &mut state,
            t,
            cfg.dt,
        )
        .map_err(at(t))?;
        if !state.all_finite() {
            return Err(at(t)(Error::NonFinite { t }));
        }
    }
    Ok(trace)
}

fn record<O: AdaptiveObserver>(
    row: &mut Vec<f64>,
    model: &NetworkModel,
    t: f64,
    state: &SystemState,
    v_meas: &[f64],
    observer: Option<&O>,
    gain_matrices: bool,
) {
    row.push(t);
    for i in 0..model.n_v() {
        row.push(state.v[i]);
        if let Some(o) = observer {
            row.push(v_meas[i]);
            row.push(o.v_hat()[i]);
        }
    }
    row.extend(state.w.iter().flatten());
    let Some(o) = observer else {
        row.extend(model.theta_at(t));
        return;
    };
    row.extend(o.w_hat().iter().flatten());
    row.extend_from_slice(o.theta_hat());
    row.extend(model.theta_at(t));
    let mut psi_sq = 0.0;
    for j in 0..model.n_types() {
        let psi = o.psi_block(model, j);
        for r in 0..psi.nrows() {
            for c in 0..psi.ncols() {
                row.push(psi[(r, c)]);
                psi_sq += psi[(r, c)] * psi[(r, c)];
            }
        }
    }
    row.extend(o.gain_min_eigenvalues());
    if gain_matrices {
        for p in o.gain_blocks() {
            for r in 0..p.nrows() {
                for c in 0..p.ncols() {
                    row.push(p[(r, c)]);
                }
            }
        }
    }
    row.push(psi_sq.sqrt());
    let innovation: f64 = v_meas
        .iter()
        .zip(o.v_hat())
        .map(|(m, e)| (m - e) * (m - e))
        .sum();
    row.push(innovation.sqrt());
}
