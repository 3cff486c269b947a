use super::adjoint::ControlProblem;
use super::lbfgs::{minimize, LbfgsOptions, Termination};
use crate::error::{domain_err, Result};
use crate::liouvillian::rabi_ratios;
use crate::model::SystemConfig;
use crate::pulse::PulseShape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

/// Pulse family with `Ω_max/2π = 200 MHz`, `σ_f = 0.1/κ_1`, `σ_w = 0.1 t_f`.
pub fn paper_shape(config: &SystemConfig, n_coeffs: usize, t_final: f64, n_steps: usize) -> PulseShape {
    PulseShape {
        n_coeffs,
        omega_max: 2.0 * PI * 200e6,
        sigma_f: 0.1 / config.subsystems[0].gamma,
        sigma_w: 0.1,
        t_final,
        n_steps,
    }
}

/// Copy of `config` with the control-run truncation applied to subsystem 0 and
/// the filter transmon.
pub fn control_truncation(
    config: &SystemConfig,
    n_transmon: usize,
    n_resonator: usize,
    cap: Option<usize>,
    n_jqf: usize,
) -> SystemConfig {
    let mut c = config.clone();
    c.set_truncation(0, n_transmon, n_resonator, cap);
    if let Some(j) = c.jqf_index() {
        c.set_truncation(j, n_jqf, 1, None);
    }
    c
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initialization {
    /// `a_p, b_p` uniform in `[-0.1, 0.1]`.
    Random { seed: u64 },
    /// Only `a_1`, chosen for a π rotation of the first transition.
    WarmStart,
    Given { a: Vec<f64>, b: Vec<f64> },
}

impl Initialization {
    pub fn coefficients(&self, problem: &ControlProblem) -> Result<(Vec<f64>, Vec<f64>)> {
        let nc = problem.shape.n_coeffs;
        match self {
            Initialization::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let a = (0..nc).map(|_| rng.gen_range(-0.1..=0.1)).collect();
                let b = (0..nc).map(|_| rng.gen_range(-0.1..=0.1)).collect();
                Ok((a, b))
            }
            Initialization::WarmStart => warm_start(problem),
            Initialization::Given { a, b } => {
                if a.len() != nc || b.len() != nc {
                    return Err(domain_err(format!("expected {nc} coefficients per quadrature")));
                }
                Ok((a.clone(), b.clone()))
            }
        }
    }
}

/// Deterministic start: a single sine term whose pulse area rotates the
/// first transition of subsystem 0 by π, `∫ |Ω̃_0 C_{0,01}| dt = π/2`.
pub fn warm_start(problem: &ControlProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    let nc = problem.shape.n_coeffs;
    let pulse = problem.pulse(&vec![0.0; nc], &vec![0.0; nc])?;
    let t = &pulse.tables;
    let h = 0.5 * problem.shape.dt();
    let ratio = rabi_ratios(&problem.model, problem.omega_drive())?[0];
    let coupling = (ratio * problem.model.bases[0].c(0, 1)).norm();
    let omega_max = problem.shape.omega_max;
    // Simpson over the half-step nodes.
    let area = |a1: f64| -> f64 {
        (0..t.n_nodes)
            .map(|k| {
                let w = if k == 0 || k + 1 == t.n_nodes { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * omega_max * (a1 * t.window[k] * t.basis(1, k)).tanh()
            })
            .sum::<f64>()
            * h
            / 3.0
            * coupling
    };
    let goal = PI / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    while area(hi) < goal && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    if area(hi) < goal {
        log::warn!("warm start cannot reach a π rotation below the amplitude clamp");
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if area(mid) < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut a = vec![0.0; nc];
    a[0] = 0.5 * (lo + hi);
    Ok((a, vec![0.0; nc]))
}

#[derive(Clone, Debug)]
pub struct PiPulseOptions {
    pub lbfgs: LbfgsOptions,
    pub init: Initialization,
    /// Stop once `F̃` reaches this value.
    pub target: Option<f64>,
    pub time_limit: Option<Duration>,
}

impl Default for PiPulseOptions {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsOptions { max_iterations: 200, ..Default::default() },
            init: Initialization::Random { seed: 0 },
            target: None,
            time_limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub fidelity: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct PiPulseResult {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub fidelity: f64,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Maximize `F̃` over the pulse coefficients.
pub fn optimize_pi_pulse(problem: &ControlProblem, opts: &PiPulseOptions) -> Result<PiPulseResult> {
    optimize_pi_pulse_with(problem, opts, |_, _, _| {})
}

/// As [`optimize_pi_pulse`], calling `observe(entry, a, b)` after every accepted iterate.
pub fn optimize_pi_pulse_with<O>(problem: &ControlProblem, opts: &PiPulseOptions, mut observe: O) -> Result<PiPulseResult>
where
    O: FnMut(&HistoryEntry, &[f64], &[f64]),
{
    let nc = problem.shape.n_coeffs;
    let (a0, b0) = opts.init.coefficients(problem)?;
    let x0: Vec<f64> = a0.into_iter().chain(b0).collect();
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let e = problem.gradient(&x[..nc], &x[nc..])?;
        let g = e.grad_a.iter().chain(&e.grad_b).map(|v| -v).collect();
        Ok((-e.fidelity, g))
    };
    let start = Instant::now();
    let mut history = Vec::new();
    let res = minimize(objective, &x0, &opts.lbfgs, |p| {
        let grad_norm = p.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        let entry = HistoryEntry { iteration: p.iteration, fidelity: -p.value, grad_norm };
        observe(&entry, &p.x[..nc], &p.x[nc..]);
        history.push(entry);
        log::info!("iteration {:4}  F~ = {:.10}  |g| = {:.3e}", p.iteration, -p.value, grad_norm);
        let reached = opts.target.is_some_and(|t| -p.value >= t);
        let expired = opts.time_limit.is_some_and(|l| start.elapsed() >= l);
        !(reached || expired)
    })?;
    Ok(PiPulseResult {
        a: res.x[..nc].to_vec(),
        b: res.x[nc..].to_vec(),
        fidelity: -res.value,
        history,
        evaluations: res.evaluations,
        termination: res.termination,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub fidelity: f64,
    /// `max |g_adj - g_fd| / max |g_fd|`.
    pub max_rel_error: f64,
    pub adjoint: Vec<f64>,
    pub finite_difference: Vec<f64>,
}

/// Compare the adjoint gradient with central finite differences of step `h`.
pub fn gradcheck(problem: &ControlProblem, a: &[f64], b: &[f64], h: f64) -> Result<GradcheckReport> {
    let nc = a.len();
    let e = problem.gradient(a, b)?;
    let fd: Vec<f64> = (0..2 * nc)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let shifted = |s: f64| {
                let mut x: Vec<f64> = a.iter().chain(b).cloned().collect();
                x[i] += s;
                problem.fidelity(&x[..nc], &x[nc..])
            };
            Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let adjoint: Vec<f64> = e.grad_a.iter().chain(&e.grad_b).cloned().collect();
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = adjoint.iter().zip(&fd).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(GradcheckReport { fidelity: e.fidelity, max_rel_error: err / scale, adjoint, finite_difference: fd })
}
