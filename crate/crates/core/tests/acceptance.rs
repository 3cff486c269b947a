//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any criterion fails.

use jqf_sim::dde::{markov_error_report, plateau_and_rate};
use jqf_sim::liouvillian::trace;
use jqf_sim::model::Subsystem;
use jqf_sim::optimize::lbfgs::LbfgsOptions;
use jqf_sim::optimize::{
    control_truncation, gradcheck, optimize_pi_pulse, paper_shape, ControlProblem, Initialization, PiPulseOptions,
};
use jqf_sim::propagate::{
    decay_experiment, jqf_frequency_sweep, reflection_experiment, rk4_step, DecayOptions, DecayRun, InitialState,
    Pulsed, ReflectionOptions, Rk4Workspace,
};
use jqf_sim::pulse::Coefficients;
use jqf_sim::units::{hz, to_hz};
use jqf_sim::{Model, SystemConfig};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

type Outcome = Result<(bool, String), String>;

/// Stored optimized coefficients for the full-size pulse.
const PI_PULSE_COEFFS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/pi_pulse_nc100.json");

fn purcell_rate(config: &SystemConfig) -> Result<f64, String> {
    let model = Model::new(config.with_excitation_cap(1)).map_err(|e| e.to_string())?;
    let b = &model.bases[0];
    let s = &config.subsystems[0];
    Ok(b.c(0, 1).norm_sqr() * s.gamma * b.transition(0, 1) / s.omega_r)
}

fn dark_fidelity(config: &SystemConfig) -> Result<f64, String> {
    let g2 = config.subsystems[1].gamma;
    Ok((g2 / (purcell_rate(config)? + g2)).powi(2))
}

fn decay(config: &SystemConfig, t_final: Option<f64>) -> Result<DecayRun, String> {
    decay_experiment(config, &DecayOptions { t_final, ..Default::default() }).map_err(|e| e.to_string())
}

/// Least-squares slope of `-ln F` against time.
fn fitted_rate(run: &DecayRun) -> f64 {
    let n = run.records.len() as f64;
    let tm = run.records.iter().map(|r| r.time).sum::<f64>() / n;
    let ym = run.records.iter().map(|r| r.fidelity.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &run.records {
        sxy += (r.time - tm) * (r.fidelity.ln() - ym);
        sxx += (r.time - tm).powi(2);
    }
    -sxy / sxx
}

fn purcell() -> Outcome {
    let c = SystemConfig::paper();
    let kappa = purcell_rate(&c)?;
    let run = decay(&c.without_bare_transmons(), None)?;
    let fit = fitted_rate(&run);
    let rel = (fit / kappa - 1.0).abs();
    let khz = to_hz(kappa) * 1e-3;
    Ok((
        rel <= 0.01 && (khz - 4.754).abs() < 5e-4,
        format!("fitted {:.4} kHz vs analytic {khz:.4} kHz (rel {rel:.2e}, tol 1e-2)", to_hz(fit) * 1e-3),
    ))
}

fn dark_plateau() -> Outcome {
    let c = SystemConfig::paper();
    let dark = dark_fidelity(&c)?;
    let run = decay(&c, Some(100.0 / c.subsystems[1].gamma))?;
    let t: Vec<f64> = run.records.iter().map(|r| r.time).collect();
    let f: Vec<f64> = run.records.iter().map(|r| r.fidelity).collect();
    let (plateau, _) = plateau_and_rate(&t, &f);
    let dev = (plateau - dark).abs();
    Ok((
        dev <= 2e-5 && (dark - 0.9999049).abs() < 5e-8,
        format!("plateau {plateau:.8} vs F_dark {dark:.8} (|diff| {dev:.2e}, tol 2e-5)"),
    ))
}

fn filter_tuning() -> Outcome {
    let step = 1e6;
    let freqs: Vec<f64> = (0..=90).map(|i| 7.95e9 + step * i as f64).collect();
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz(f)).collect();
    let pts = jqf_frequency_sweep(&SystemConfig::paper(), &omegas, &DecayOptions { samples: 1, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let (i, best) = pts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.fidelity.total_cmp(&b.1.fidelity))
        .ok_or("empty sweep")?;
    let peak = freqs[i];
    Ok((
        (peak - 7.994e9).abs() <= step * (1.0 + 1e-9),
        format!("peak F = {:.8} at {:.3} GHz (grid step 1 MHz, expected 7.994 GHz)", best.fidelity, peak * 1e-9),
    ))
}

/// Truncation for the 1 MHz readout spectra: all transmon and resonator
/// levels of the readout subsystem up to the excitation cap, two-level filter.
fn readout_config(cap: usize) -> SystemConfig {
    let mut c = SystemConfig::paper();
    c.set_truncation(0, 5, 6, Some(cap));
    c.set_truncation(1, 2, 1, None);
    c
}

fn readout() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    // Lone cavity driven on resonance: 4Ω²/κ² photons.
    let cav = Subsystem::composite(hz(8e9), hz(-400e6), hz(10e9), 0.0, hz(2e6), 0.0, 1, 16);
    let lone = SystemConfig { subsystems: vec![cav], reference_index: 0, omega_drive: None };
    let p = reflection_experiment(&lone, &[hz(10e9)], hz(1e6), InitialState::Ground, &ReflectionOptions::default())
        .map_err(|e| e.to_string())?;
    let n = p[0].n_res;
    ok &= (n - 1.0).abs() <= 0.01;
    notes.push(format!("empty cavity n = {n:.4}"));

    // Phase change caused by the filter at 1 MHz, both qubit states.
    let c = readout_config(READOUT_CAP);
    // Both dressed resonances (10.004 and 10.006 GHz) lie on this grid.
    let centre = 10.005e9;
    let freqs: Vec<f64> = (0..=8).map(|i| centre - 4e6 + 1e6 * i as f64).collect();
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz(f)).collect();
    let opts = ReflectionOptions { steps_per_period: 4.0, ..Default::default() };
    let (mut worst, mut at) = (0.0, String::new());
    for state in [InitialState::Ground, InitialState::Excited] {
        let with = reflection_experiment(&c, &omegas, hz(1e6), state, &opts).map_err(|e| e.to_string())?;
        let without = reflection_experiment(&c.without_bare_transmons(), &omegas, hz(1e6), state, &opts)
            .map_err(|e| e.to_string())?;
        for ((a, b), f) in with.iter().zip(&without).zip(&freqs) {
            let d = (a.r / b.r).arg().abs();
            eprintln!("  {state:?} {:.3} GHz: arg r {:+.5} / {:+.5} without filter", f / 1e9, a.r.arg(), b.r.arg());
            if d > worst {
                worst = d;
                at = format!("{state:?} at {:.3} GHz", f / 1e9);
            }
        }
    }
    ok &= worst <= 0.02;
    notes.push(format!("max |Δarg r| = {worst:.4} rad, {at} (tol 0.02)"));

    // Strong probe (about 16 photons) at enlarged truncation, on the
    // ground-state resonance where the photon number peaks.
    let mut big = SystemConfig::paper();
    big.set_truncation(0, 3, 40, None);
    big.set_truncation(1, 2, 1, None);
    let pts = reflection_experiment(&big, &[hz(10.006e9)], hz(4e6), InitialState::Ground, &opts)
        .map_err(|e| e.to_string())?;
    let dev = (pts[0].r.norm() - 1.0).abs();
    ok &= dev <= 1e-3;
    notes.push(format!("4 MHz ||r|-1| = {dev:.2e} with n = {:.2} (tol 1e-3)", pts[0].n_res));
    Ok((ok, notes.join("; ")))
}

const READOUT_CAP: usize = 4;

fn random_density(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let a: Vec<C64> = (0..dim * dim).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut rho = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            rho[i * dim + j] = (0..dim).map(|k| a[i * dim + k] * a[j * dim + k].conj()).sum();
        }
    }
    let tr = trace(&rho, dim);
    rho.iter_mut().for_each(|v| *v /= tr);
    rho
}

fn adjoint() -> Outcome {
    let cfg = control_truncation(&SystemConfig::paper(), 3, 3, None, 3);
    let problem = ControlProblem::new(&cfg, paper_shape(&cfg, 4, 10e-9, 200)).map_err(|e| e.to_string())?;
    let (a, b) = Initialization::Random { seed: 1 }.coefficients(&problem).map_err(|e| e.to_string())?;
    let report = gradcheck(&problem, &a, &b, 1e-6).map_err(|e| e.to_string())?;

    let pulse = problem.pulse(&a, &b).map_err(|e| e.to_string())?;
    let (re, im) = pulse.drive();
    let gen = Pulsed { liouvillian: &problem.liouvillian, re: &re, im: &im };
    let mut ws = Rk4Workspace::new(problem.vec_len());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut k_err: f64 = 0.0;
    for n in [0, 57, 123, 199] {
        let rho = random_density(problem.model.dim, &mut rng);
        let k = problem.apply_k(&pulse, n, &rho);
        let mut step = rho.clone();
        rk4_step(&gen, n, problem.shape.dt(), &mut step, &mut ws);
        k_err = k.iter().zip(&step).fold(k_err, |m, (x, y)| m.max((x - y).norm()));
    }
    Ok((
        report.max_rel_error <= 1e-6 && k_err <= 1e-12,
        format!("gradcheck rel. err {:.2e} (tol 1e-6); K_n vs RK4 {k_err:.2e} (tol 1e-12)", report.max_rel_error),
    ))
}

fn pi_pulse() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let paper = SystemConfig::paper();

    match std::fs::read_to_string(PI_PULSE_COEFFS) {
        Ok(text) => {
            let c: Coefficients = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            for (label, cfg) in [
                ("4,5,cap 3,5", control_truncation(&paper, 4, 5, Some(3), 5)),
                ("5,6,6", control_truncation(&paper, 5, 6, None, 6)),
            ] {
                let shape = paper_shape(&cfg, 100, 50e-9, 5000);
                let f = ControlProblem::new(&cfg, shape)
                    .and_then(|p| p.fidelity(&c.a, &c.b))
                    .map_err(|e| e.to_string())?;
                ok &= f >= 0.999;
                notes.push(format!("N_c=100 F~ = {f:.5} at ({label})"));
            }
        }
        Err(e) => {
            ok = false;
            notes.push(format!("no stored coefficients: {e}"));
        }
    }

    let cfg = control_truncation(&paper, 3, 3, Some(2), 4);
    let problem = ControlProblem::new(&cfg, paper_shape(&cfg, 20, 50e-9, 2500)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let limit = Duration::from_secs(30 * 60);
    let res = optimize_pi_pulse(
        &problem,
        &PiPulseOptions {
            lbfgs: LbfgsOptions { max_iterations: 200, ..Default::default() },
            init: Initialization::Random { seed: 0 },
            target: Some(0.99),
            time_limit: Some(limit),
        },
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let iters = res.history.len().saturating_sub(1);
    ok &= res.fidelity >= 0.99 && elapsed < limit && iters <= 200;
    notes.push(format!("N_c=20 smoke F~ = {:.5} after {iters} iterations in {:.0} s", res.fidelity, elapsed.as_secs_f64()));
    Ok((ok, notes.join("; ")))
}

fn markov_error() -> Outcome {
    let c = SystemConfig::paper();
    let t_final = 100.0 / c.subsystems[1].gamma;
    let report =
        markov_error_report(&c, &[100_000_000, 300_000_000, 1_000_000_000], Some(t_final)).map_err(|e| e.to_string())?;
    let me = decay(&c, Some(t_final))?;
    let t: Vec<f64> = me.records.iter().map(|r| r.time).collect();
    let f: Vec<f64> = me.records.iter().map(|r| r.fidelity).collect();
    let (me_plateau, _) = plateau_and_rate(&t, &f);
    let offset = me_plateau - report.extrapolated;
    Ok((
        (1e-6..=4e-6).contains(&offset) && report.rate > 0.0,
        format!(
            "offset {offset:.3e} (ME {me_plateau:.9}, DDE extrapolated {:.9}, order {:.2}); long-time rate {:.3e} 1/s",
            report.extrapolated, report.order, report.rate
        ),
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_jqf-sim")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("jqf-sim {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn structure() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let paper = SystemConfig::paper();

    let mut trace_err: f64 = 0.0;
    let mut violation: f64 = 0.0;
    for (cfg, full) in [(paper.clone(), false), (paper.without_bare_transmons(), false), (paper.clone(), true)] {
        let opts = DecayOptions {
            t_final: full.then_some(20e-9),
            full_truncation: full,
            ..Default::default()
        };
        let run = decay_experiment(&cfg, &opts).map_err(|e| e.to_string())?;
        trace_err = trace_err.max(run.trace_error);
        violation = run.records.iter().fold(violation, |m, r| m.max(r.fidelity_strict - r.fidelity));
    }
    let cfg = control_truncation(&paper, 3, 3, Some(2), 4);
    let problem = ControlProblem::new(&cfg, paper_shape(&cfg, 20, 50e-9, 2500)).map_err(|e| e.to_string())?;
    let (a, b) = Initialization::WarmStart.coefficients(&problem).map_err(|e| e.to_string())?;
    let pulse = problem.pulse(&a, &b).map_err(|e| e.to_string())?;
    for r in problem.trajectory(&pulse, 1).map_err(|e| e.to_string())? {
        trace_err = trace_err.max((r.trace - 1.0).abs());
        violation = violation.max(r.fidelity_tilde - r.fidelity);
    }
    ok &= trace_err <= 1e-10 && violation <= 0.0;
    notes.push(format!("max trace error {trace_err:.1e}; max (F~ - F) {violation:.1e}"));

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).display().to_string();
    let mut identical = true;
    for (name, args) in [
        ("decay", vec!["decay", "--samples", "200"]),
        ("sweep", vec!["sweep-jqf", "--points", "7"]),
        ("opt", vec!["optimize", "--nc", "4", "--tf-ns", "10", "--steps", "200", "--truncation", "3,3,0,3", "--max-iter", "3", "--verify", "none", "--samples", "50", "--seed", "3"]),
    ] {
        let runs: Vec<String> = (0..2).map(|i| path(&format!("{name}{i}"))).collect();
        for out in &runs {
            let target = if name == "opt" { out.clone() } else { format!("{out}.csv") };
            let mut full = args.clone();
            full.extend(["--out", &target]);
            run_cli(&full)?;
        }
        let files: Vec<(String, String)> = if name == "opt" {
            ["pulse.csv", "coeffs.json", "history.csv", "populations.csv"]
                .iter()
                .map(|f| (format!("{}/{f}", runs[0]), format!("{}/{f}", runs[1])))
                .collect()
        } else {
            vec![(format!("{}.csv", runs[0]), format!("{}.csv", runs[1]))]
        };
        for (x, y) in files {
            let (bx, by) = (std::fs::read(&x).map_err(|e| e.to_string())?, std::fs::read(&y).map_err(|e| e.to_string())?);
            if bx != by || bx.is_empty() {
                identical = false;
                notes.push(format!("{} differs", Path::new(&x).file_name().unwrap().to_string_lossy()));
            }
        }
    }
    ok &= identical;
    notes.push(format!("reruns byte-identical: {identical}"));
    Ok((ok, notes.join("; ")))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 Purcell rate", purcell),
        ("2 dark plateau", dark_plateau),
        ("3 filter tuning", filter_tuning),
        ("4 readout transparency", readout),
        ("5 adjoint gradient", adjoint),
        ("6 pi-pulse", pi_pulse),
        ("7 Markov error", markov_error),
        ("8 structural properties", structure),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("{} [{name}] {detail} ({secs:.1} s)", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
