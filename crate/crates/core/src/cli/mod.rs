//! Command-line front end.

use crate::dde::{dde_decay, markov_error_report, plateau_and_rate, DdeCoefficients, DdeGrid};
use crate::io::{config_hash, write_json, RunRecord, Table};
use crate::model::{apply_overrides, PAPER_CONFIG_JSON};
use crate::optimize::lbfgs::LbfgsOptions;
use crate::optimize::{
    control_truncation, gradcheck, optimize_pi_pulse_with, paper_shape, ControlProblem, Initialization, PiPulseOptions,
};
use crate::propagate::{
    decay_experiment, jqf_frequency_sweep, reflection_experiment, DecayOptions, InitialState, ReflectionOptions,
    SteadyStateMethod,
};
use crate::pulse::{Coefficients, Pulse};
use crate::units::{hz, to_hz};
use crate::SystemConfig;
use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "jqf-sim", version, about = "Transmon qubit with a Josephson quantum filter on a waveguide")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file, or `paper` for the bundled parameter set.
    #[arg(long, global = true, default_value = "paper")]
    pub config: String,
    /// Output file (curves) or directory (optimize, gradcheck, evaluate).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a configuration entry, e.g. `subsystems.1.f_a_Hz=7.99e9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Free decay of the qubit state: `t_s,F,F_tilde,n_res,n_jqf`.
    Decay(DecayArgs),
    /// Final fidelity against the filter frequency.
    SweepJqf(SweepArgs),
    /// Reflection coefficient spectra for both qubit states.
    Reflect(ReflectArgs),
    /// Delay-differential decay and the Markov-error ladder.
    Dde(DdeArgs),
    /// Optimize a π-pulse.
    Optimize(OptimizeArgs),
    /// Compare the adjoint gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Propagate a stored pulse and report `F̃` and populations.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct DecayArgs {
    /// Drop the filter transmon.
    #[arg(long)]
    pub no_jqf: bool,
    /// Final time in ns; defaults to `10/κ_1`.
    #[arg(long)]
    pub tf_ns: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Use the configured truncation instead of the single-excitation subspace.
    #[arg(long)]
    pub full_truncation: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 7.95e9)]
    pub f_min_hz: f64,
    #[arg(long, default_value_t = 8.04e9)]
    pub f_max_hz: f64,
    #[arg(long, default_value_t = 91)]
    pub points: usize,
    #[arg(long)]
    pub tf_ns: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SteadyArg {
    Evolve,
    NullSpace,
}

#[derive(Args, Debug)]
pub struct ReflectArgs {
    #[arg(long)]
    pub no_jqf: bool,
    /// Probe Rabi frequency `Ω_1/2π` in MHz.
    #[arg(long, default_value_t = 1.0)]
    pub rabi_mhz: f64,
    /// Sweep bounds; default is the dressed resonator frequency ± 8 MHz.
    #[arg(long)]
    pub f_min_hz: Option<f64>,
    #[arg(long)]
    pub f_max_hz: Option<f64>,
    #[arg(long, default_value_t = 81)]
    pub points: usize,
    /// Resonator levels; the excitation cap follows as levels − 1.
    #[arg(long)]
    pub resonator_levels: Option<usize>,
    #[arg(long)]
    pub transmon_levels: Option<usize>,
    #[arg(long)]
    pub jqf_levels: Option<usize>,
    #[arg(long)]
    pub tf_ns: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = SteadyArg::Evolve)]
    pub steady: SteadyArg,
}

#[derive(Args, Debug)]
pub struct DdeArgs {
    /// Steps of the recorded run.
    #[arg(long, default_value_t = 1_000_000_000)]
    pub steps: u64,
    /// Run the full-scale `10¹²`-step reference (hours).
    #[arg(long)]
    pub full: bool,
    /// Step counts of the convergence ladder.
    #[arg(long, value_delimiter = ',', default_values_t = [100_000_000u64, 300_000_000, 1_000_000_000])]
    pub ladder: Vec<u64>,
    /// Skip the ladder and its report.
    #[arg(long)]
    pub no_report: bool,
    #[arg(long)]
    pub tf_ns: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

/// Truncation of a control run: transmon, resonator, excitation cap (0 = none), filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Truncation {
    pub transmon: usize,
    pub resonator: usize,
    pub cap: Option<usize>,
    pub jqf: usize,
}

impl std::str::FromStr for Truncation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match v[..] {
            [transmon, resonator, cap, jqf] => {
                Ok(Self { transmon, resonator, cap: (cap > 0).then_some(cap), jqf })
            }
            _ => Err("expected transmon,resonator,cap,jqf".into()),
        }
    }
}

impl Truncation {
    pub fn apply(&self, config: &SystemConfig) -> SystemConfig {
        control_truncation(config, self.transmon, self.resonator, self.cap, self.jqf)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InitArg {
    Random,
    Warm,
}

#[derive(Args, Debug)]
pub struct PulseArgs {
    #[arg(long, default_value_t = 100)]
    pub nc: usize,
    #[arg(long, default_value_t = 50.0)]
    pub tf_ns: f64,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    /// `Ω_max/2π` in MHz.
    #[arg(long, default_value_t = 200.0)]
    pub omega_max_mhz: f64,
    #[arg(long, default_value = "4,5,3,5")]
    pub truncation: Truncation,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub pulse: PulseArgs,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Start from stored coefficients instead.
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Stop once `F̃` reaches this value.
    #[arg(long)]
    pub target: Option<f64>,
    /// Re-evaluate the result at this truncation (`none` to skip).
    #[arg(long, default_value = "5,6,0,6")]
    pub verify: String,
    /// Samples in populations.csv.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub nc: usize,
    #[arg(long, default_value_t = 10.0)]
    pub tf_ns: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value = "3,3,0,3")]
    pub truncation: Truncation,
    #[arg(long, default_value_t = 1e-6)]
    pub h: f64,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub pulse: PulseArgs,
    /// Coefficient file `{a: [...], b: [...]}`.
    #[arg(long)]
    pub coeffs: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

/// Parse arguments, run, and map errors to a nonzero exit status.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

/// Load the configuration named by `--config` with the `--set` overrides applied.
pub fn load_config(common: &Common) -> anyhow::Result<SystemConfig> {
    let text = if common.config == "paper" {
        PAPER_CONFIG_JSON.to_string()
    } else {
        std::fs::read_to_string(&common.config).with_context(|| format!("reading {}", common.config))?
    };
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", common.config))?;
    let overrides = common
        .overrides
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| anyhow!("override '{kv}' is not KEY=VALUE"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    apply_overrides(&mut value, &overrides)?;
    Ok(SystemConfig::from_json_value(value).with_context(|| format!("configuration {}", common.config))?)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(j) = cli.common.jobs {
        // Ignore the error from a second initialization within one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let config = load_config(&cli.common)?;
    let start = Instant::now();
    let (name, outputs) = match &cli.command {
        Command::Decay(a) => ("decay", decay(&config, a, &cli.common).context("decay")?),
        Command::SweepJqf(a) => ("sweep-jqf", sweep(&config, a, &cli.common).context("sweep-jqf")?),
        Command::Reflect(a) => ("reflect", reflect(&config, a, &cli.common).context("reflect")?),
        Command::Dde(a) => ("dde", dde(&config, a, &cli.common).context("dde")?),
        Command::Optimize(a) => ("optimize", optimize(&config, a, &cli.common).context("optimize")?),
        Command::Gradcheck(a) => ("gradcheck", grad_check(&config, a, &cli.common).context("gradcheck")?),
        Command::Evaluate(a) => ("evaluate", evaluate(&config, a, &cli.common).context("evaluate")?),
    };
    if let Some(path) = run_record_path(&cli.command, cli.common.out.as_deref()) {
        let record = RunRecord {
            command: name.to_string(),
            arguments: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_hash(&config)?,
            seed: Some(cli.common.seed),
            jobs: rayon::current_num_threads(),
            wall_time_s: start.elapsed().as_secs_f64(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        write_json(&path, &record)?;
    }
    Ok(())
}

fn is_dir_command(c: &Command) -> bool {
    matches!(c, Command::Optimize(_) | Command::Gradcheck(_) | Command::Evaluate(_))
}

/// `<dir>/run.json` for directory outputs, `<stem>.run.json` next to files.
fn run_record_path(c: &Command, out: Option<&Path>) -> Option<PathBuf> {
    let out = out?;
    Some(if is_dir_command(c) { out.join("run.json") } else { sibling(out, "run.json") })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Write a table to `--out`, or to stdout without one.
fn emit(table: Table, out: Option<&Path>) -> anyhow::Result<Vec<PathBuf>> {
    match out {
        Some(p) => {
            table.write(p)?;
            Ok(vec![p.to_path_buf()])
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&table.into_bytes()?)?;
            Ok(vec![])
        }
    }
}

fn decay(config: &SystemConfig, a: &DecayArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let cfg = if a.no_jqf { config.without_bare_transmons() } else { config.clone() };
    let opts = DecayOptions {
        t_final: a.tf_ns.map(|t| t * 1e-9),
        n_steps: a.steps,
        samples: a.samples,
        full_truncation: a.full_truncation,
        ..Default::default()
    };
    let run = decay_experiment(&cfg, &opts)?;
    log::info!(
        "{} steps, final F = {:.12}, max trace error {:.1e}",
        run.grid.n_steps,
        run.final_record().fidelity,
        run.trace_error
    );
    let mut t = Table::new(&["t_s", "F", "F_tilde", "n_res", "n_jqf"])?;
    for r in &run.records {
        t.row(&[r.time, r.fidelity, r.fidelity_strict, r.n_res, r.n_jqf])?;
    }
    emit(t, common.out.as_deref())
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn sweep(config: &SystemConfig, a: &SweepArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let freqs = grid(a.f_min_hz, a.f_max_hz, a.points);
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz(f)).collect();
    let opts = DecayOptions { t_final: a.tf_ns.map(|t| t * 1e-9), n_steps: a.steps, samples: 1, ..Default::default() };
    let points = jqf_frequency_sweep(config, &omegas, &opts)?;
    let best = points.iter().max_by(|x, y| x.fidelity.total_cmp(&y.fidelity)).ok_or_else(|| anyhow!("empty sweep"))?;
    log::info!("maximum F = {:.10} at {:.6} GHz", best.fidelity, to_hz(best.omega) * 1e-9);
    let mut t = Table::new(&["f_jqf_Hz", "F", "F_tilde"])?;
    for (f, p) in freqs.iter().zip(&points) {
        t.row(&[*f, p.fidelity, p.fidelity_strict])?;
    }
    emit(t, common.out.as_deref())
}

/// Dressed resonator frequency of subsystem 0: the single-excitation level
/// with the larger photon number.
fn dressed_resonator(config: &SystemConfig) -> anyhow::Result<f64> {
    let model = crate::Model::new(config.with_excitation_cap(1))?;
    let b = &model.bases[0];
    let j = (1..b.dim)
        .filter(|&j| b.excitations[j] == 1)
        .max_by(|&x, &y| b.bare_states[x].0.cmp(&b.bare_states[y].0))
        .ok_or_else(|| anyhow!("subsystem 0 has no single-excitation level"))?;
    Ok(b.transition(0, j))
}

fn reflect(config: &SystemConfig, a: &ReflectArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let mut cfg = if a.no_jqf { config.without_bare_transmons() } else { config.clone() };
    if a.resonator_levels.is_some() || a.transmon_levels.is_some() {
        let s = &cfg.subsystems[0];
        let nr = a.resonator_levels.unwrap_or(s.n_resonator);
        let nt = a.transmon_levels.unwrap_or(s.n_transmon);
        cfg.set_truncation(0, nt, nr, Some(nr.saturating_sub(1)));
    }
    if let (Some(n), Some(j)) = (a.jqf_levels, cfg.jqf_index()) {
        cfg.set_truncation(j, n, 1, None);
    }
    let centre = to_hz(dressed_resonator(&cfg)?);
    let freqs = grid(a.f_min_hz.unwrap_or(centre - 8e6), a.f_max_hz.unwrap_or(centre + 8e6), a.points);
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz(f)).collect();
    let opts = ReflectionOptions {
        t_final: a.tf_ns.map(|t| t * 1e-9),
        n_steps: a.steps,
        method: match a.steady {
            SteadyArg::Evolve => SteadyStateMethod::Evolve,
            SteadyArg::NullSpace => SteadyStateMethod::NullSpace,
        },
        ..Default::default()
    };
    let omega_1 = TAU * a.rabi_mhz * 1e6;
    let g = reflection_experiment(&cfg, &omegas, omega_1, InitialState::Ground, &opts)?;
    let e = reflection_experiment(&cfg, &omegas, omega_1, InitialState::Excited, &opts)?;
    let mut t = Table::new(&["f_drive_Hz", "arg_r_state0", "arg_r_state1", "abs_r_state0", "abs_r_state1"])?;
    for ((f, p0), p1) in freqs.iter().zip(&g).zip(&e) {
        t.row(&[*f, p0.r.arg(), p1.r.arg(), p0.r.norm(), p1.r.norm()])?;
    }
    emit(t, common.out.as_deref())
}

#[derive(Serialize)]
struct DdeReportFile {
    plateau: f64,
    rate: f64,
    extrapolated: f64,
    order: f64,
    rate_finest: f64,
    error_estimate: f64,
    non_monotone: bool,
    ladder: Vec<crate::dde::LadderEntry>,
}

fn dde(config: &SystemConfig, a: &DdeArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let coeffs = DdeCoefficients::new(config)?;
    let t_final = a.tf_ns.map_or(100.0 / config.subsystems[1].gamma, |t| t * 1e-9);
    let steps = if a.full {
        log::warn!("the 10^12-step reference run takes hours");
        1_000_000_000_000
    } else {
        a.steps
    };
    let grid = DdeGrid::aligned(t_final, steps, coeffs.tau)?;
    let run = dde_decay(&coeffs, grid, a.samples);
    let (plateau, rate) = plateau_and_rate(&run.times, &run.fidelity);
    log::info!("{} steps: plateau {plateau:.12}, rate {rate:.4e} 1/s", grid.n_steps);
    let mut t = Table::new(&["t_s", "F"])?;
    for (time, f) in run.times.iter().zip(&run.fidelity) {
        t.row(&[*time, *f])?;
    }
    let mut outputs = emit(t, common.out.as_deref())?;
    if !a.no_report {
        let r = markov_error_report(config, &a.ladder, Some(t_final))?;
        log::info!("extrapolated plateau {:.12} (order {:.3}), rate {:.4e} 1/s", r.extrapolated, r.order, r.rate);
        let report = DdeReportFile {
            plateau: r.plateau,
            rate: r.rate,
            extrapolated: r.extrapolated,
            order: r.order,
            rate_finest: r.rate_finest,
            error_estimate: r.error_estimate,
            non_monotone: r.non_monotone,
            ladder: r.ladder,
        };
        match common.out.as_deref() {
            Some(p) => {
                let path = sibling(p, "report.json");
                write_json(&path, &report)?;
                outputs.push(path);
            }
            None => println!("{}", serde_json::to_string_pretty(&report)?),
        }
    }
    Ok(outputs)
}

fn problem_for(config: &SystemConfig, p: &PulseArgs) -> anyhow::Result<ControlProblem> {
    let cfg = p.truncation.apply(config);
    let mut shape = paper_shape(&cfg, p.nc, p.tf_ns * 1e-9, p.steps);
    shape.omega_max = TAU * p.omega_max_mhz * 1e6;
    Ok(ControlProblem::new(&cfg, shape)?)
}

fn out_dir(common: &Common) -> anyhow::Result<&Path> {
    common.out.as_deref().ok_or_else(|| anyhow!("--out <dir> is required"))
}

fn read_coeffs(path: &Path, nc: usize) -> anyhow::Result<Coefficients> {
    let c: Coefficients = serde_json::from_str(&std::fs::read_to_string(path)?)
        .with_context(|| format!("reading coefficients {}", path.display()))?;
    if c.a.len() != nc || c.b.len() != nc {
        bail!("{} holds {} and {} coefficients, expected {nc}", path.display(), c.a.len(), c.b.len());
    }
    Ok(c)
}

/// `pulse.csv` and `populations.csv` for a pulse.
fn write_pulse_files(problem: &ControlProblem, pulse: &Pulse, dir: &Path, samples: usize) -> anyhow::Result<Vec<PathBuf>> {
    let (re, im) = pulse.drive();
    let h = 0.5 * problem.shape.dt();
    let mut t = Table::new(&["t_s", "ReOmega_Hz", "ImOmega_Hz"])?;
    for k in (0..re.len()).step_by(2) {
        t.row(&[k as f64 * h, re[k] / TAU, im[k] / TAU])?;
    }
    let pulse_path = dir.join("pulse.csv");
    t.write(&pulse_path)?;
    let stride = (problem.shape.n_steps / samples.max(1)).max(1);
    let traj = problem.trajectory(pulse, stride)?;
    let mut t = Table::new(&["t_s", "F_tilde", "F", "n_res", "n_jqf"])?;
    for r in &traj {
        t.row(&[r.time, r.fidelity_tilde, r.fidelity, r.n_res, r.n_jqf])?;
    }
    let pop_path = dir.join("populations.csv");
    t.write(&pop_path)?;
    Ok(vec![pulse_path, pop_path])
}

#[derive(Serialize)]
struct OptimizeReport {
    fidelity_tilde: f64,
    iterations: usize,
    evaluations: usize,
    termination: String,
    verification: Option<Verification>,
    max_n_jqf: f64,
}

#[derive(Serialize)]
struct Verification {
    truncation: String,
    fidelity_tilde: f64,
    shift: f64,
}

fn optimize(config: &SystemConfig, a: &OptimizeArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let dir = out_dir(common)?;
    std::fs::create_dir_all(dir)?;
    let problem = problem_for(config, &a.pulse)?;
    log::info!(
        "{} coefficients, {} steps, Liouvillian dimension {}",
        problem.shape.n_coeffs,
        problem.shape.n_steps,
        problem.vec_len()
    );
    let init = match a.init {
        InitArg::Random => Initialization::Random { seed: common.seed },
        InitArg::Warm => Initialization::WarmStart,
    };
    let mut opts = PiPulseOptions {
        lbfgs: LbfgsOptions { max_iterations: a.max_iter, ..Default::default() },
        init,
        target: a.target,
        time_limit: None,
    };
    if let Some(path) = &a.coeffs {
        let c = read_coeffs(path, a.pulse.nc)?;
        opts.init = Initialization::Given { a: c.a, b: c.b };
    }
    // Latest iterate, so an interrupted run can resume with --coeffs.
    let checkpoint = dir.join("checkpoint.json");
    let result = optimize_pi_pulse_with(&problem, &opts, |_, a, b| {
        let c = Coefficients { a: a.to_vec(), b: b.to_vec() };
        if let Err(e) = write_json(&checkpoint, &c) {
            log::warn!("could not write {}: {e}", checkpoint.display());
        }
    })?;
    std::fs::remove_file(&checkpoint).ok();
    log::info!("F~ = {:.6} after {} iterations", result.fidelity, result.history.len().saturating_sub(1));
    let pulse = problem.pulse(&result.a, &result.b)?;
    let mut outputs = write_pulse_files(&problem, &pulse, dir, a.samples)?;
    let coeff_path = dir.join("coeffs.json");
    write_json(&coeff_path, &pulse.coefficients())?;
    let mut hist = Table::new(&["iteration", "F_tilde", "grad_norm"])?;
    for h in &result.history {
        hist.row(&[h.iteration as f64, h.fidelity, h.grad_norm])?;
    }
    let hist_path = dir.join("history.csv");
    hist.write(&hist_path)?;
    let traj = problem.trajectory(&pulse, 1)?;
    let max_n_jqf = traj.iter().map(|r| r.n_jqf).fold(0.0, f64::max);
    let verification = if a.verify == "none" {
        None
    } else {
        let tr: Truncation = a.verify.parse().map_err(|e| anyhow!("--verify: {e}"))?;
        let check = ControlProblem::new(&tr.apply(config), problem.shape.clone())?;
        let f = check.fidelity(&result.a, &result.b)?;
        log::info!("re-evaluated at {}: F~ = {f:.6} (shift {:.2e})", a.verify, f - result.fidelity);
        Some(Verification { truncation: a.verify.clone(), fidelity_tilde: f, shift: f - result.fidelity })
    };
    let report = OptimizeReport {
        fidelity_tilde: result.fidelity,
        iterations: result.history.len().saturating_sub(1),
        evaluations: result.evaluations,
        termination: format!("{:?}", result.termination),
        verification,
        max_n_jqf,
    };
    let report_path = dir.join("report.json");
    write_json(&report_path, &report)?;
    outputs.extend([coeff_path, hist_path, report_path]);
    Ok(outputs)
}

fn grad_check(config: &SystemConfig, a: &GradcheckArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let cfg = a.truncation.apply(config);
    let problem = ControlProblem::new(&cfg, paper_shape(&cfg, a.nc, a.tf_ns * 1e-9, a.steps))?;
    let (ca, cb) = Initialization::Random { seed: common.seed }.coefficients(&problem)?;
    let report = gradcheck(&problem, &ca, &cb, a.h)?;
    println!("max rel. err {:.3e}", report.max_rel_error);
    match common.out.as_deref() {
        Some(dir) => {
            let p = dir.join("gradcheck.json");
            write_json(&p, &report)?;
            Ok(vec![p])
        }
        None => Ok(vec![]),
    }
}

fn evaluate(config: &SystemConfig, a: &EvaluateArgs, common: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let problem = problem_for(config, &a.pulse)?;
    let c = read_coeffs(&a.coeffs, a.pulse.nc)?;
    let pulse = problem.pulse(&c.a, &c.b)?;
    let f = problem.target.fidelity_tilde(&problem.final_state(&pulse)?)?;
    println!("F~ = {f:.8}");
    match common.out.as_deref() {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_pulse_files(&problem, &pulse, dir, a.samples)
        }
        None => Ok(vec![]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_parses() {
        let t: Truncation = "4,5,3,5".parse().unwrap();
        assert_eq!(t, Truncation { transmon: 4, resonator: 5, cap: Some(3), jqf: 5 });
        assert_eq!("5,6,0,6".parse::<Truncation>().unwrap().cap, None);
        assert!("4,5".parse::<Truncation>().is_err());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let common = |sets: &[&str]| Common {
            config: "paper".into(),
            out: None,
            overrides: sets.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            jobs: None,
            verbose: 0,
        };
        let c = load_config(&common(&["subsystems.1.f_a_Hz=7.99e9"])).unwrap();
        assert!((to_hz(c.subsystems[1].omega_a) - 7.99e9).abs() < 1e-3);
        let err = load_config(&common(&["subsystems.1.f_q_Hz=7.99e9"])).unwrap_err();
        assert!(format!("{err:#}").contains("subsystems.1.f_q_Hz"));
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/decay.csv"), "run.json"), PathBuf::from("out/decay.run.json"));
        assert_eq!(
            run_record_path(&Command::Gradcheck(GradcheckArgs { nc: 4, tf_ns: 10.0, steps: 200, truncation: "3,3,0,3".parse().unwrap(), h: 1e-6 }), Some(Path::new("d"))),
            Some(PathBuf::from("d/run.json"))
        );
    }
}
