//! Fixed-step integration of the true network together with an observer.

mod euler;
mod inputs;
mod noise;
mod run;

pub use euler::{euler_step, euler_step_in_place, StateSpace};
pub use inputs::{
    input_preset, InputSpec, Inputs, Multisine, SineTerm, PRESET_NAMES as INPUT_PRESETS,
};
pub use noise::{make_measurement, NoiseConfig};
pub use run::{reference_rms, run_experiment, Experiment, IntegratorConfig, ObserverSetup};
