use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use distobs::analysis::{
    compare_runs, coupling_check, coupling_sweep, error_metrics, pe_check, CompareOptions,
    Comparison, CouplingReport, ErrorOptions, PeReport, PsiSeries, SweepPoint,
};
use distobs::config::{parse_mode, ExperimentConfig, GainsConfig};
use distobs::network::presets;
use distobs::observer::{gain_state_counts, GainSchedule, GainStateCounts};
use distobs::sim::{run_experiment, ObserverSetup, INPUT_PRESETS};
use distobs::trace::Trace;

/// Simulate conductance-based networks with full and distributed adaptive observers.
#[derive(Debug, Parser)]
#[command(name = "distobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment; writes the trace CSV and a JSON summary.
    Simulate(SimulateArgs),
    /// Excitation and coupling diagnostics on a recorded trace.
    Check(CheckArgs),
    /// Run two experiments and compare their estimates.
    Compare(CompareArgs),
    /// List the built-in model, input and gain presets.
    Presets,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Overrides applied on top of a config file (or of the preset defaults).
#[derive(Debug, Args, Default)]
struct RunOverrides {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model preset, used when no config is given.
    #[arg(long)]
    preset: Option<String>,
    /// Measurement noise.
    #[arg(long, value_enum)]
    noise: Option<Switch>,
    /// Noise RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Step size (ms).
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    /// Horizon (ms).
    #[arg(long, allow_hyphen_values = true)]
    t_end: Option<f64>,
    /// Steps between recorded samples.
    #[arg(long)]
    stride: Option<usize>,
    /// Output directory.
    #[arg(long, env = "DISTOBS_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunOverrides,
    /// none, full, distributed or distributed-scalar.
    #[arg(long)]
    observer: Option<String>,
    /// Named gain set (A or B).
    #[arg(long)]
    gains: Option<String>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Trace CSV written by `simulate`.
    #[arg(long)]
    trace: PathBuf,
    /// Config supplying gains and analysis options; defaults to hh2 with set A.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named gain set, overriding the config's gains.
    #[arg(long)]
    gains: Option<String>,
    /// Excitation window T (ms).
    #[arg(long)]
    window: Option<f64>,
    /// Decay margin beta (1/ms).
    #[arg(long)]
    beta: Option<f64>,
    /// Also grid the coupling check over these windows (ms) ...
    #[arg(long, value_delimiter = ',')]
    sweep_windows: Vec<f64>,
    /// ... and these betas.
    #[arg(long, value_delimiter = ',')]
    sweep_betas: Vec<f64>,
    /// Output directory for check.json.
    #[arg(long, env = "DISTOBS_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunOverrides,
    /// Config of run B; run A uses --config.
    #[arg(long)]
    config_b: Option<PathBuf>,
    /// Observer of run A
    #[arg(long)]
    observer_a: Option<String>,
    /// Gain set of run A
    #[arg(long)]
    gains_a: Option<String>,
    /// Observer of run B
    #[arg(long)]
    observer_b: Option<String>,
    /// Gain set of run B
    #[arg(long)]
    gains_b: Option<String>,
}

enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
    CheckFailed(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

/// Library errors reaching `?` come from loading or validating inputs;
/// integration failures are classified in [`run`].
impl From<distobs::Error> for Failure {
    fn from(e: distobs::Error) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; exit code 2 is reserved
            // for numerical failures.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Check(args) => check(args),
        Command::Compare(args) => compare(args),
        Command::Presets => {
            presets_listing();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(
    run: &RunOverrides,
    observer: Option<&str>,
    gains: Option<&str>,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::preset(run.preset.as_deref().unwrap_or("hh2"), 1300.0)?,
    };
    if run.config.is_some() && run.preset.is_some() {
        return Err(anyhow!("--preset cannot be combined with --config"));
    }
    if let Some(mode) = observer {
        parse_mode(mode)?;
        cfg.observer.mode = mode.to_string();
    }
    if let Some(set) = gains {
        cfg.observer.gains = Some(GainsConfig::Preset(set.to_string()));
    }
    if let Some(switch) = run.noise {
        cfg.noise.enabled = matches!(switch, Switch::On);
    }
    if let Some(seed) = run.seed {
        cfg.integrator.rng_seed = seed;
    }
    if let Some(dt) = run.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t_end) = run.t_end {
        cfg.integrator.t_end = t_end;
    }
    if let Some(stride) = run.stride {
        cfg.integrator.record_stride = stride;
    }
    if let Some(dir) = &run.out {
        cfg.output.dir = dir.clone();
    }
    cfg.to_experiment()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Outcome<(Trace, f64)> {
    let exp = cfg.to_experiment().map_err(|e| Failure::Config(e.into()))?;
    let start = Instant::now();
    let trace = run_experiment(&exp).map_err(|e| {
        if e.is_numerical() {
            Failure::Numerical(e.into())
        } else {
            Failure::Config(e.into())
        }
    })?;
    Ok((trace, start.elapsed().as_secs_f64()))
}

#[derive(Serialize)]
struct ParamSummary {
    label: String,
    estimate: f64,
    truth: f64,
    relative_error: f64,
    final_window_mean: f64,
    rate: Option<f64>,
}

#[derive(Serialize)]
struct StateCounts {
    #[serde(flatten)]
    counts: GainStateCounts,
    /// Gain-matrix entries integrated by the observer of this run.
    integrated: Option<usize>,
}

fn state_counts(cfg: &ExperimentConfig) -> anyhow::Result<StateCounts> {
    let exp = cfg.to_experiment()?;
    let counts = gain_state_counts(&exp.model);
    let integrated = match exp.observer {
        ObserverSetup::None => None,
        ObserverSetup::Full(_) => Some(counts.full),
        ObserverSetup::Distributed(_) => Some(counts.block),
        ObserverSetup::DistributedScalar(_) => counts.diagonal,
    };
    Ok(StateCounts { counts, integrated })
}

#[derive(Serialize)]
struct Summary {
    observer: String,
    t_end: f64,
    dt: f64,
    samples: usize,
    runtime_s: f64,
    trace: PathBuf,
    state_counts: StateCounts,
    final_errors: Vec<ParamSummary>,
}

fn final_errors(trace: &Trace) -> anyhow::Result<Vec<ParamSummary>> {
    if trace.layout().observer.is_none() {
        return Ok(Vec::new());
    }
    let metrics = error_metrics(trace, &ErrorOptions::default())?;
    let last = trace.len() - 1;
    let truth = trace.theta_true(last)?;
    Ok(metrics
        .params
        .into_iter()
        .zip(truth)
        .map(|(p, &truth)| ParamSummary {
            label: p.label,
            estimate: p.final_value,
            truth,
            relative_error: p.final_error,
            final_window_mean: p.final_window_mean,
            rate: p.rate,
        })
        .collect())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Outcome {
    let cfg = load_config(&args.run, args.observer.as_deref(), args.gains.as_deref())?;
    let (trace, runtime_s) = run(&cfg)?;
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let trace_path = cfg.output.trace_path();
    trace.save_csv(&trace_path)?;
    let summary = Summary {
        observer: cfg.observer.mode.clone(),
        t_end: cfg.integrator.t_end,
        dt: cfg.integrator.dt,
        samples: trace.len(),
        runtime_s,
        trace: trace_path.clone(),
        state_counts: state_counts(&cfg)?,
        final_errors: final_errors(&trace)?,
    };
    write_json(&cfg.output.summary_path(), &summary)?;
    println!(
        "wrote {} ({} samples, {runtime_s:.1} s)",
        trace_path.display(),
        trace.len()
    );
    for p in &summary.final_errors {
        println!(
            "  {:<6} {:>12.6} (true {:.6}, relative error {:.2e})",
            p.label, p.estimate, p.truth, p.relative_error
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    trace: PathBuf,
    pe: PeReport,
    coupling: CouplingReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sweep: Vec<SweepPoint>,
    pass: bool,
}

fn schedule_for(cfg: &ExperimentConfig) -> anyhow::Result<GainSchedule> {
    let model = cfg.build_model()?;
    Ok(match cfg.observer.gains.as_ref() {
        None => GainSchedule::preset("A")?,
        Some(GainsConfig::Preset(name)) => GainSchedule::preset(name)?,
        Some(GainsConfig::Schedule(s)) => s.clone(),
        Some(GainsConfig::Full(g)) => GainSchedule::uniform(&model, g.gamma, g.gamma, g.alpha),
    })
}

fn check(args: CheckArgs) -> Outcome {
    let mut cfg = match &args.config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::preset("hh2", 1300.0)?,
    };
    if let Some(set) = &args.gains {
        cfg.observer.gains = Some(GainsConfig::Preset(set.clone()));
    }
    let window = args.window.unwrap_or(cfg.analysis.pe_window);
    let beta = args.beta.unwrap_or(cfg.analysis.beta);
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());

    let trace = Trace::load_csv(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let psi = PsiSeries::from_trace(&trace)?;
    let gains = schedule_for(&cfg)?;
    let pe = pe_check(&psi, window, cfg.analysis.pe_threshold)?;
    let coupling = coupling_check(&psi, &gains, window, beta, &pe.deltas())?;
    let sweep = if args.sweep_windows.is_empty() && args.sweep_betas.is_empty() {
        Vec::new()
    } else {
        let windows = if args.sweep_windows.is_empty() {
            vec![window]
        } else {
            args.sweep_windows.clone()
        };
        let betas = if args.sweep_betas.is_empty() {
            vec![beta]
        } else {
            args.sweep_betas.clone()
        };
        coupling_sweep(&psi, &gains, &windows, &betas, cfg.analysis.pe_threshold)?
    };

    for b in &pe.blocks {
        println!(
            "PE {:<4} delta {:.4e} .. {:.4e} {}",
            b.id,
            b.delta_min,
            b.delta_max,
            if b.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "coupling: lhs {:.4e} rhs {:.4e} margin {:.4e} {}",
        coupling.lhs,
        coupling.rhs,
        coupling.margin,
        if coupling.pass { "pass" } else { "FAIL" }
    );

    let pass = pe.pass && coupling.pass;
    let verdict = match (pe.pass, coupling.pass) {
        (true, true) => None,
        (false, _) => Some("excitation below threshold".to_string()),
        (true, false) => Some(format!(
            "coupling margin {:.4e} is negative",
            coupling.margin
        )),
    };
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join("check.json");
    write_json(
        &path,
        &CheckReport {
            trace: args.trace,
            pe,
            coupling,
            sweep,
            pass,
        },
    )?;
    println!("wrote {}", path.display());
    match verdict {
        None => Ok(()),
        Some(msg) => Err(Failure::CheckFailed(msg)),
    }
}

#[derive(Serialize)]
struct RunInfo {
    observer: String,
    gains: Option<GainsConfig>,
    runtime_s: f64,
    trace: PathBuf,
    state_counts: StateCounts,
}

#[derive(Serialize)]
struct CompareReport {
    a: RunInfo,
    b: RunInfo,
    metrics: Comparison,
}

fn compare(args: CompareArgs) -> Outcome {
    let cfg_a = load_config(
        &args.run,
        args.observer_a.as_deref(),
        args.gains_a.as_deref(),
    )?;
    let overrides_b = RunOverrides {
        config: args.config_b.clone().or_else(|| args.run.config.clone()),
        preset: args.run.preset.clone(),
        noise: args.run.noise,
        seed: args.run.seed,
        dt: args.run.dt,
        t_end: args.run.t_end,
        stride: args.run.stride,
        out: args.run.out.clone(),
    };
    let cfg_b = load_config(
        &overrides_b,
        args.observer_b.as_deref(),
        args.gains_b.as_deref(),
    )?;
    if cfg_a.mode()?.is_none() || cfg_b.mode()?.is_none() {
        return Err(Failure::Config(anyhow!(
            "compare needs an observer in both runs"
        )));
    }

    let (res_a, res_b) = std::thread::scope(|s| {
        let a = s.spawn(|| run(&cfg_a));
        let b = run(&cfg_b);
        (a.join().expect("run A panicked"), b)
    });
    let ((trace_a, runtime_a), (trace_b, runtime_b)) = (res_a?, res_b?);
    let metrics = compare_runs(&trace_a, &trace_b, &CompareOptions::default())?;

    let out_dir = cfg_a.output.dir.clone();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let info = |cfg: &ExperimentConfig,
                trace: &Trace,
                runtime_s: f64,
                name: &str|
     -> anyhow::Result<RunInfo> {
        let path = out_dir.join(name);
        trace.save_csv(&path)?;
        Ok(RunInfo {
            observer: cfg.observer.mode.clone(),
            gains: cfg.observer.gains.clone(),
            runtime_s,
            trace: path,
            state_counts: state_counts(cfg)?,
        })
    };
    let report = CompareReport {
        a: info(&cfg_a, &trace_a, runtime_a, "trace_a.csv")?,
        b: info(&cfg_b, &trace_b, runtime_b, "trace_b.csv")?,
        metrics,
    };

    let c = &report.a.state_counts.counts;
    let diagonal = c.diagonal.map_or("n/a".to_string(), |d| d.to_string());
    println!(
        "gain states: full {} / block {} / diagonal {diagonal}; integrated A {} ({}), B {} ({})",
        c.full,
        c.block,
        report
            .a
            .state_counts
            .integrated
            .map_or("-".into(), |n| n.to_string()),
        report.a.observer,
        report
            .b
            .state_counts
            .integrated
            .map_or("-".into(), |n| n.to_string()),
        report.b.observer,
    );
    println!(
        "{:<6} {:>12} {:>12} {:>8} {:>8} {:>10} {:>10}",
        "param", "peak A", "peak B", "osc A", "osc B", "settle A", "settle B"
    );
    let settle = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.1}"));
    for p in &report.metrics.params {
        println!(
            "{:<6} {:>12.4} {:>12.4} {:>8} {:>8} {:>10} {:>10}",
            p.label,
            p.a.transient_peak,
            p.b.transient_peak,
            p.a.oscillation_score,
            p.b.oscillation_score,
            settle(p.a.settling_time),
            settle(p.b.settling_time)
        );
    }
    let path = out_dir.join("compare.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn presets_listing() {
    println!("models: {}", presets::NAMES.join(", "));
    println!("inputs: {}", INPUT_PRESETS.join(", "));
    for set in ["A", "B"] {
        let g = GainSchedule::preset(set).expect("named gain set");
        let blocks: Vec<String> = g
            .blocks
            .iter()
            .map(|b| format!("{} gamma {} alpha {}", b.current, b.gamma, b.alpha))
            .collect();
        println!("gains {set}: gamma0 {}; {}", g.gamma0, blocks.join("; "));
    }
    println!("observers: none, full, distributed, distributed-scalar");
}
