//! Acceptance report: one PASS/FAIL line per criterion, with the measured
//! values behind each verdict.
//!
//! Runs as a plain binary (`harness = false`). It exits non-zero only when
//! `DISTOBS_ACCEPTANCE_STRICT` is set and some criterion failed, or when a
//! run itself errors.

use std::time::{Duration, Instant};

use distobs::analysis::{
    coupling_check, error_metrics, pe_check, run_metrics, CompareOptions, ErrorOptions, PsiSeries,
};
use distobs::network::{presets, NetworkModel};
use distobs::observer::{
    gain_state_counts, init_observer, AdaptiveObserver, FullGains, GainSchedule, InitialGain,
    ObserverInit, ObserverMode, ObserverState,
};
use distobs::sim::{run_experiment, Experiment, NoiseConfig, ObserverSetup};
use distobs::trace::Trace;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

type Check = std::result::Result<(bool, String), String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let filter = args.iter().find(|a| !a.starts_with('-')).cloned();

    let criteria = [
        Criterion {
            name: "single-block-equivalence",
            budget: Duration::from_secs(60),
            run: single_block_equivalence,
        },
        Criterion {
            name: "diagonality",
            budget: Duration::from_secs(600),
            run: diagonality,
        },
        Criterion {
            name: "convergence",
            budget: Duration::MAX,
            run: convergence,
        },
        Criterion {
            name: "tracking",
            budget: Duration::MAX,
            run: tracking,
        },
        Criterion {
            name: "state-counts",
            budget: Duration::MAX,
            run: state_counts,
        },
        Criterion {
            name: "invariants",
            budget: Duration::from_secs(120),
            run: invariants,
        },
        Criterion {
            name: "pe-diagnostics",
            budget: Duration::MAX,
            run: pe_diagnostics,
        },
    ];
    if args.iter().any(|a| a == "--list") {
        for c in &criteria {
            println!("{}: test", c.name);
        }
        return;
    }

    let mut failed = 0;
    let mut errored = false;
    let mut total = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.as_deref().is_none_or(|f| c.name.contains(f)))
    {
        total += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && elapsed <= c.budget, detail),
            Err(e) => {
                errored = true;
                (false, format!("error: {e}"))
            }
        };
        if !pass {
            failed += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:<16} [{:.1}s] {detail}",
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{total} criteria passed", total - failed);
    if errored || (failed > 0 && std::env::var_os("DISTOBS_ACCEPTANCE_STRICT").is_some()) {
        std::process::exit(1);
    }
}

fn run(exp: &Experiment) -> std::result::Result<Trace, String> {
    run_experiment(exp).map_err(|e| e.to_string())
}

fn hh2(observer: ObserverSetup, t_end: f64, stride: usize) -> Experiment {
    let mut exp = Experiment::hh2(observer, t_end);
    exp.integrator.record_stride = stride;
    exp
}

fn gains(name: &str) -> GainSchedule {
    GainSchedule::preset(name).expect("named gain set")
}

/// Full and distributed observers agree on a single-current-type network.
fn single_block_equivalence() -> Check {
    let mut model = presets::hh_two_neuron();
    model.currents.truncate(1);
    let init = ObserverInit {
        v_hat: vec![0.0, -60.0],
        w_hat: vec![vec![0.5, 0.0, 0.5, 0.0]],
        theta_hat: vec![78.0, 78.0],
    };
    let initial = distobs::network::SystemState {
        v: vec![0.0, -60.0],
        w: vec![vec![0.0, 0.5, 0.0, 0.5]],
    };
    let (gamma, alpha) = (2.0, 0.15);
    let build = |observer| {
        let mut exp = hh2(observer, 100.0, 100);
        exp.model = model.clone();
        exp.initial = initial.clone();
        exp.observer_init = init.clone();
        exp.integrator.record_gain_matrices = true;
        exp
    };
    let full = run(&build(ObserverSetup::Full(FullGains { gamma, alpha })))?;
    let dist = run(&build(ObserverSetup::Distributed(GainSchedule::uniform(
        &model, gamma, gamma, alpha,
    ))))?;
    if full.width() != dist.width() || full.len() != dist.len() {
        return Ok((false, "trace shapes differ".into()));
    }
    let mut worst: f64 = 0.0;
    for s in 0..full.len() {
        for (a, b) in full.row(s).iter().zip(dist.row(s)) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        }
    }
    Ok((
        worst <= 1e-9,
        format!(
            "max relative deviation {worst:.2e} over {} samples x {} columns (limit 1e-9)",
            full.len(),
            full.width()
        ),
    ))
}

/// Exact zeros off the diagonal of every `Psi_j`, `P_j` at every sample.
fn diagonality() -> Check {
    let mut exp = hh2(ObserverSetup::Distributed(gains("A")), 1300.0, 1000);
    exp.integrator.record_gain_matrices = true;
    let trace = run(&exp)?;
    let mut nonzero = 0usize;
    let mut checked = 0usize;
    for s in 0..trace.len() {
        for j in 0..3 {
            let psi = trace.psi_block(s, j).map_err(|e| e.to_string())?;
            let p = trace.gain_matrix(s, j).map_err(|e| e.to_string())?;
            for m in [psi, p] {
                for (r, c) in [(0, 1), (1, 0)] {
                    checked += 1;
                    if m[(r, c)] != 0.0 {
                        nonzero += 1;
                    }
                }
            }
        }
    }
    Ok((
        nonzero == 0,
        format!(
            "{nonzero} nonzero of {checked} off-diagonal entries over {} samples to t = 1300 ms",
            trace.len()
        ),
    ))
}

/// Constant parameters, noiseless, gain set A.
fn convergence() -> Check {
    let mut exp = hh2(ObserverSetup::DistributedScalar(gains("A")), 800.0, 100);
    exp.model = exp.model.frozen_at(0.0);
    let trace = run(&exp)?;
    let opts = ErrorOptions {
        fit_window: Some((100.0, 600.0)),
        ..ErrorOptions::default()
    };
    let metrics = error_metrics(&trace, &opts).map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut parts = Vec::new();
    for p in &metrics.params {
        let ok = p.final_error < 0.01 && p.rate.is_some_and(|r| r < 0.0);
        pass &= ok;
        let rate = p.rate.map_or("none".into(), |r| format!("{r:.2e}"));
        parts.push(format!(
            "{}: err {:.2e} slope {rate}/ms",
            p.label, p.final_error
        ));
    }
    Ok((
        pass,
        format!("at 800 ms (limit 1e-2, slope < 0): {}", parts.join("; ")),
    ))
}

/// Index range of the synaptic estimates in `theta_hat`.
fn synaptic_indices(model: &NetworkModel) -> std::ops::Range<usize> {
    let j = model
        .currents
        .iter()
        .position(|c| c.is_synaptic())
        .expect("synaptic current");
    let off = model.theta_offset(j);
    off..off + model.n_theta_block(j)
}

/// Noisy run with the time-varying synaptic schedules.
fn tracking() -> Check {
    let noisy = |set: &str| {
        let mut exp = hh2(ObserverSetup::DistributedScalar(gains(set)), 1300.0, 100);
        exp.noise = NoiseConfig::default();
        exp
    };
    let a = run(&noisy("A"))?;
    let b = run(&noisy("B"))?;
    let g = synaptic_indices(&presets::hh_two_neuron());
    let times = b.times();

    let mut max_err: f64 = 0.0;
    for s in (0..b.len()).filter(|&s| times[s] >= 300.0) {
        let (hat, truth) = (
            b.theta_hat(s).map_err(|e| e.to_string())?,
            b.theta_true(s).map_err(|e| e.to_string())?,
        );
        for k in g.clone() {
            max_err = max_err.max((hat[k] - truth[k]).abs());
        }
    }

    let opts = CompareOptions::default();
    let mut ordered = true;
    let mut scores = Vec::new();
    for k in g {
        let score = |t: &Trace| {
            let est: Vec<f64> = (0..t.len()).map(|s| t.theta_hat(s).unwrap()[k]).collect();
            let truth: Vec<f64> = (0..t.len()).map(|s| t.theta_true(s).unwrap()[k]).collect();
            run_metrics(&t.times(), &est, &truth, &opts).oscillation_score
        };
        let (sa, sb) = (score(&a), score(&b));
        ordered &= sa > sb;
        scores.push(format!("G.{} A {sa} vs B {sb}", k - 3));
    }
    Ok((
        max_err < 0.1 && ordered,
        format!(
            "set B max |G error| after 300 ms {max_err:.3} (limit 0.1); oscillation scores {}",
            scores.join(", ")
        ),
    ))
}

fn state_counts() -> Check {
    let model = presets::hh_two_neuron();
    let counts = gain_state_counts(&model);
    let init = ObserverInit::preset("hh2").map_err(|e| e.to_string())?;
    let p0 = InitialGain::default();
    let mut integrated = Vec::new();
    for mode in [
        ObserverMode::Full,
        ObserverMode::Distributed,
        ObserverMode::DistributedScalar,
    ] {
        let n = match init_observer(&model, mode, &init, &p0).map_err(|e| e.to_string())? {
            ObserverState::Full(s) => s.gain_state_count(),
            ObserverState::Distributed(s) => s.gain_state_count(),
            ObserverState::Scalar(s) => s.gain_state_count(),
        };
        integrated.push(n);
    }
    let pass = counts.full == 36
        && counts.block == 12
        && counts.diagonal == Some(6)
        && integrated == [36, 12, 6];
    Ok((
        pass,
        format!(
            "full {} / block {} / diagonal {}; integrated by the observers {integrated:?}",
            counts.full,
            counts.block,
            counts.diagonal.map_or("n/a".to_string(), |d| d.to_string())
        ),
    ))
}

fn invariants() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, check) in [
        ("ranges+PD", bounds_and_definiteness as fn() -> Check),
        ("psi-bound", psi_bound),
        ("dt-order", dt_halving),
        ("determinism", determinism),
        ("noise-separation", noise_separation),
        ("gating-contraction", gating_contraction),
    ] {
        let (ok, detail) = check()?;
        pass &= ok;
        notes.push(format!(
            "{name} {} ({detail})",
            if ok { "ok" } else { "FAILED" }
        ));
    }
    Ok((pass, notes.join("; ")))
}

/// Gating in `[0, 1]` and positive-definite gains on randomized short runs.
fn bounds_and_definiteness() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 6,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (
        0u64..1000,
        0usize..3,
        proptest::bool::ANY,
        0.0f64..1.0,
        -80.0f64..20.0,
    );
    let samples = std::cell::Cell::new(0usize);
    let result = runner.run(&strategy, |(seed, mode, noisy, w0, v0)| {
        let setup = match mode {
            0 => ObserverSetup::Full(FullGains::HH2),
            1 => ObserverSetup::Distributed(gains("B")),
            _ => ObserverSetup::DistributedScalar(gains("A")),
        };
        let mut exp = hh2(setup, 20.0, 10);
        exp.integrator.rng_seed = seed;
        exp.noise.enabled = noisy;
        exp.initial.v[0] = v0;
        for w in exp.initial.w.iter_mut().flatten() {
            *w = w0;
        }
        let trace = run_experiment(&exp).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for s in 0..trace.len() {
            samples.set(samples.get() + 1);
            for (c, name) in trace.columns().iter().enumerate() {
                let x = trace.row(s)[c];
                if (name.starts_with("w.") || name.starts_with("w_hat."))
                    && !(0.0..=1.0).contains(&x)
                {
                    return Err(TestCaseError::fail(format!(
                        "{name} = {x} at t = {}",
                        trace.time(s)
                    )));
                }
                if name.starts_with("p_min_eig.") && !(x > 0.0) {
                    return Err(TestCaseError::fail(format!(
                        "{name} = {x} at t = {}",
                        trace.time(s)
                    )));
                }
            }
        }
        Ok(())
    });
    Ok(match result {
        Ok(()) => (true, format!("6 random runs, {} samples", samples.get())),
        Err(e) => (false, e.to_string()),
    })
}

/// `|Psi_j(t)| <= max(|Psi_j(0)|, sup |Phi_j| / gamma_j)` checked at every step.
fn psi_bound() -> Check {
    let schedule = gains("B");
    let mut exp = hh2(ObserverSetup::DistributedScalar(schedule.clone()), 10.0, 1);
    exp.noise.enabled = true;
    let trace = run(&exp)?;
    let model = &exp.model;
    let mut worst: f64 = 0.0;
    let mut sup_phi = vec![0.0f64; model.n_types()];
    for s in 0..trace.len() {
        let v: Vec<f64> = (1..=2)
            .map(|i| trace.value(s, &format!("vmeas.{i}")).unwrap())
            .collect();
        for j in 0..model.n_types() {
            let id = &model.currents[j].id;
            let w: Vec<f64> = (1..=model.n_w_block(j))
                .map(|k| trace.value(s, &format!("w_hat.{id}.{k}")).unwrap())
                .collect();
            let psi = trace.psi_block(s, j).map_err(|e| e.to_string())?;
            let bound = sup_phi[j] / schedule.blocks[j].gamma;
            if psi.norm() > 0.0 {
                worst = worst.max(psi.norm() / bound);
            }
            let phi = model.assemble_phi(j, &v, &w).map_err(|e| e.to_string())?;
            sup_phi[j] = sup_phi[j].max(phi.norm());
        }
    }
    Ok((
        worst <= 1.0 + 1e-12,
        format!("max |Psi|/bound {worst:.6} over {} steps", trace.len()),
    ))
}

/// Final estimates after 50 ms at dt = 2e-4, 1e-4, 5e-5: successive
/// differences shrink by a factor near 2.
fn dt_halving() -> Check {
    let finals = [2e-4, 1e-4, 5e-5]
        .iter()
        .map(|&dt| {
            let mut exp = hh2(ObserverSetup::DistributedScalar(gains("A")), 50.0, 1);
            exp.integrator.dt = dt;
            exp.integrator.record_stride = (50.0 / dt).round() as usize;
            let trace = run(&exp)?;
            Ok(trace
                .theta_hat(trace.len() - 1)
                .map_err(|e| e.to_string())?
                .to_vec())
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let ratios: Vec<f64> = (0..finals[0].len())
        .map(|k| (finals[0][k] - finals[1][k]).abs() / (finals[1][k] - finals[2][k]).abs())
        .collect();
    let pass = ratios.iter().all(|r| (1.8..=2.2).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok((
        pass,
        format!("ratios [{}] (limit 1.8..2.2)", shown.join(", ")),
    ))
}

fn csv_bytes(trace: &Trace) -> Vec<u8> {
    let mut out = Vec::new();
    trace.write_csv(&mut out).expect("in-memory write");
    out
}

fn determinism() -> Check {
    let noisy = |seed| {
        let mut exp = hh2(ObserverSetup::DistributedScalar(gains("B")), 10.0, 10);
        exp.noise.enabled = true;
        exp.integrator.rng_seed = seed;
        exp
    };
    let a = csv_bytes(&run(&noisy(7))?);
    let b = csv_bytes(&run(&noisy(7))?);
    let c = csv_bytes(&run(&noisy(8))?);
    Ok((
        a == b && a != c,
        format!(
            "same seed identical: {}, other seed differs: {}",
            a == b,
            a != c
        ),
    ))
}

/// Noise enters only the observer: true-system columns are bit-identical.
fn noise_separation() -> Check {
    let mut exp = hh2(ObserverSetup::Distributed(gains("A")), 20.0, 10);
    let clean = run(&exp)?;
    exp.noise.enabled = true;
    let noisy = run(&exp)?;
    let mut differing_truth = 0;
    let mut differing_meas = 0;
    for (c, name) in clean.columns().iter().enumerate() {
        let same = (0..clean.len()).all(|s| clean.row(s)[c].to_bits() == noisy.row(s)[c].to_bits());
        let is_truth = name == "t"
            || name.starts_with("v.")
            || name.starts_with("w.")
            || name.starts_with("theta_true.");
        if is_truth && !same {
            differing_truth += 1;
        }
        if name.starts_with("vmeas.") && !same {
            differing_meas += 1;
        }
    }
    Ok((
        differing_truth == 0 && differing_meas == 2,
        format!("true-system columns differing {differing_truth}, measurement columns differing {differing_meas}/2"),
    ))
}

/// Noiseless: `|w_hat - w|` has a nonincreasing 10 ms envelope and has
/// shrunk by two orders of magnitude after 100 ms.
fn gating_contraction() -> Check {
    let exp = hh2(ObserverSetup::DistributedScalar(gains("A")), 100.0, 10);
    let trace = run(&exp)?;
    let layout_cols = trace.columns().to_vec();
    let w_cols: Vec<usize> = layout_cols
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("w."))
        .map(|(i, _)| i)
        .collect();
    let hat_cols: Vec<usize> = layout_cols
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("w_hat."))
        .map(|(i, _)| i)
        .collect();
    let dist: Vec<f64> = (0..trace.len())
        .map(|s| {
            let row = trace.row(s);
            w_cols
                .iter()
                .zip(&hat_cols)
                .map(|(&a, &b)| (row[a] - row[b]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let times = trace.times();
    let envelope: Vec<f64> = (0..10)
        .map(|b| {
            let (lo, hi) = (10.0 * b as f64, 10.0 * (b + 1) as f64);
            (0..dist.len())
                .filter(|&s| times[s] >= lo && times[s] < hi)
                .map(|s| dist[s])
                .fold(0.0, f64::max)
        })
        .collect();
    let monotone = envelope.windows(2).all(|w| w[1] <= w[0]);
    let ratio = envelope[9] / dist[0];
    Ok((
        monotone && ratio < 1e-2,
        format!("envelope nonincreasing: {monotone}, last/initial {ratio:.2e} (limit 1e-2)"),
    ))
}

fn pe_diagnostics() -> Check {
    let schedule = gains("A");
    let exp = hh2(
        ObserverSetup::DistributedScalar(schedule.clone()),
        1300.0,
        1000,
    );
    let trace = run(&exp)?;
    let psi = PsiSeries::from_trace(&trace).map_err(|e| e.to_string())?;
    let window = 50.0;
    let pe = pe_check(&psi, window, 1e-9).map_err(|e| e.to_string())?;
    // Set A is the uniform-gain case Gamma = gamma0 I with gamma0 = 2 >> alpha = 0.15.
    let beta = 0.5 * schedule.min_alpha();
    let a2 =
        coupling_check(&psi, &schedule, window, beta, &pe.deltas()).map_err(|e| e.to_string())?;
    let deltas: Vec<String> = pe
        .blocks
        .iter()
        .map(|b| format!("{} {:.3e}", b.id, b.delta_min))
        .collect();
    Ok((
        pe.pass && a2.lhs <= 0.0,
        format!(
            "T = {window} ms: delta [{}] pass {}; uniform-gain windowed lambda_max average {:.4e} (required <= 0), rhs {:.3e}",
            deltas.join(", "),
            pe.pass,
            a2.lhs,
            a2.rhs
        ),
    ))
}
