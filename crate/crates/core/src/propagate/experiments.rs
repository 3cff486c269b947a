use super::observables::{expectation, ObservableRecord, Probe};
use super::{propagate, Constant, TimeGrid};
use crate::error::{config_err, domain_err, Error, Result};
use crate::liouvillian::{basis_density, rabi_ratios, Liouvillian};
use crate::model::{Model, SystemConfig};
use crate::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Default step count: `Δt ≤ (1/steps_per_period)·2π/ω_max` in the rotating frame.
pub fn default_steps(l: &Liouvillian, t_final: f64, steps_per_period: f64) -> usize {
    let w = l.max_frequency().max(1.0);
    ((t_final * w * steps_per_period / TAU).ceil() as usize).max(1)
}

#[derive(Clone, Debug)]
pub struct DecayOptions {
    /// Final time; defaults to `10/κ_1`.
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub steps_per_period: f64,
    /// Number of output samples.
    pub samples: usize,
    /// Use the configured truncation instead of the exact single-excitation subspace.
    pub full_truncation: bool,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self { t_final: None, n_steps: None, steps_per_period: 40.0, samples: 1000, full_truncation: false }
    }
}

#[derive(Clone, Debug)]
pub struct DecayRun {
    pub grid: TimeGrid,
    pub records: Vec<ObservableRecord>,
    /// Largest `|tr ρ - 1|` over the samples.
    pub trace_error: f64,
}

impl DecayRun {
    pub fn final_record(&self) -> &ObservableRecord {
        self.records.last().expect("a run has at least one sample")
    }
}

/// Free decay of the first excited eigenstate of subsystem 0, everything else
/// starting in the ground state.
///
/// Without a drive the excitation number is conserved, so by default the
/// model is restricted to the single-excitation subspace, which is exact.
pub fn decay_experiment(config: &SystemConfig, opts: &DecayOptions) -> Result<DecayRun> {
    let cfg = if opts.full_truncation { config.clone() } else { config.with_excitation_cap(1) };
    let model = Model::new(cfg)?;
    if model.dims[0] < 2 {
        return Err(config_err("subsystem 0 needs an excited state"));
    }
    let l = Liouvillian::undriven(&model)?;
    let t_final = opts.t_final.unwrap_or(10.0 / model.config.subsystems[0].gamma);
    let n_steps = opts.n_steps.unwrap_or_else(|| default_steps(&l, t_final, opts.steps_per_period));
    let grid = TimeGrid::new(t_final, n_steps)?;
    let probe = Probe::new(&model);
    let mut start = vec![0; model.n_subsystems()];
    start[0] = 1;
    let mut rho = basis_density(model.dim, model.index(&start));
    let stride = (n_steps / opts.samples.max(1)).max(1);
    let mut records = Vec::with_capacity(opts.samples + 2);
    propagate(&Constant(&l.drift), &mut rho, grid, stride, |n, r| records.push(probe.record(grid.time(n), r)))?;
    let trace_error = records.iter().map(|r| (r.trace - 1.0).abs()).fold(0.0, f64::max);
    Ok(DecayRun { grid, records, trace_error })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub omega: f64,
    pub fidelity: f64,
    pub fidelity_strict: f64,
}

/// Final-time fidelity of the free decay as a function of the filter frequency.
pub fn jqf_frequency_sweep(config: &SystemConfig, omegas: &[f64], opts: &DecayOptions) -> Result<Vec<SweepPoint>> {
    let m = config.jqf_index().ok_or_else(|| config_err("the sweep needs a bare-transmon filter"))?;
    omegas
        .par_iter()
        .map(|&w| {
            let mut c = config.clone();
            c.subsystems[m].omega_a = w;
            let run = decay_experiment(&c, opts)?;
            let last = run.final_record();
            Ok(SweepPoint { omega: w, fidelity: last.fidelity, fidelity_strict: last.fidelity_strict })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialState {
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteadyStateMethod {
    /// Evolve for a finite time, the protocol used for the readout spectra.
    Evolve,
    /// Solve `L ρ = 0` directly (dense; small problems only).
    NullSpace,
}

#[derive(Clone, Debug)]
pub struct ReflectionOptions {
    /// Final time; defaults to `20/κ_1`.
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub steps_per_period: f64,
    pub method: SteadyStateMethod,
}

impl Default for ReflectionOptions {
    fn default() -> Self {
        Self { t_final: None, n_steps: None, steps_per_period: 40.0, method: SteadyStateMethod::Evolve }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectionPoint {
    pub omega_d: f64,
    pub r: C64,
    pub n_res: f64,
    pub n_jqf: f64,
}

/// Operator `Q` with `r = 1 - i tr(Q ρ) / Ω_1`.
fn reflection_operator(model: &Model, omega_d: f64) -> CsrMatrix {
    let subs = &model.config.subsystems;
    let w_ref = model.config.reference_frequency();
    let (w1, g1) = (subs[0].line_frequency(), subs[0].gamma);
    let mut q = CsrMatrix::zeros(model.dim, model.dim);
    for (m, s) in subs.iter().enumerate() {
        let b = &model.bases[m];
        let weight = (g1 * s.gamma).sqrt() / (w1 * s.line_frequency()).sqrt() * (omega_d / w_ref * s.phase).cos();
        // tr(σ_{jj'} ρ) = ρ_{j'j} = tr(|j'⟩⟨j| ... ); the operator whose trace
        // with ρ gives Σ w C_{jj'} ρ_{j'j} is Σ w C_{jj'} |j⟩⟨j'|.
        let trip: Vec<_> = b
            .lowering_triplets()
            .into_iter()
            .map(|(j, jp, c)| (j, jp, c * (weight * b.transition(j, jp))))
            .collect();
        q = q.add_scaled(&model.embed(m, &trip), C64::new(1.0, 0.0));
    }
    q
}

/// Reflection coefficient of a probe at `omega_d` given the state `ρ` and the
/// Rabi frequency `omega_1` of subsystem 0.
pub fn reflection_coefficient(model: &Model, rho: &[C64], omega_d: f64, omega_1: f64) -> C64 {
    let q = reflection_operator(model, omega_d);
    C64::new(1.0, 0.0) - C64::new(0.0, 1.0) * expectation(&q, rho, model.dim) / omega_1
}

/// Stationary state of a constant generator by a dense solve with the trace
/// condition replacing one equation.
pub fn steady_state(l: &CsrMatrix, dim: usize) -> Result<Vec<C64>> {
    let n = l.nrows;
    if n > 4096 {
        return Err(domain_err(format!("dense steady-state solve limited to 4096 unknowns, got {n}")));
    }
    let mut a = DMatrix::<C64>::zeros(n, n);
    for (r, c, v) in l.triplets() {
        a[(r, c)] += v;
    }
    let mut b = DVector::<C64>::zeros(n);
    for c in 0..n {
        a[(0, c)] = C64::new(0.0, 0.0);
    }
    for i in 0..dim {
        a[(0, i * dim + i)] = C64::new(1.0, 0.0);
    }
    b[0] = C64::new(1.0, 0.0);
    let x = a.lu().solve(&b).ok_or_else(|| Error::Numeric("singular steady-state system".into()))?;
    Ok(x.iter().cloned().collect())
}

/// Reflection coefficient after driving at each `omega_d` with Rabi frequency
/// `omega_1` on subsystem 0, starting from `initial` (filter in its ground state).
pub fn reflection_experiment(
    config: &SystemConfig,
    drive: &[f64],
    omega_1: f64,
    initial: InitialState,
    opts: &ReflectionOptions,
) -> Result<Vec<ReflectionPoint>> {
    if omega_1 == 0.0 || !omega_1.is_finite() {
        return Err(domain_err("the reflection coefficient is undefined for a zero probe amplitude"));
    }
    let model = Model::new(config.clone())?;
    let mut start = vec![0; model.n_subsystems()];
    if initial == InitialState::Excited {
        if model.dims[0] < 2 {
            return Err(config_err("subsystem 0 needs an excited state"));
        }
        start[0] = 1;
    }
    let l0 = model.index(&start);
    let probe = Probe::new(&model);
    let t_final = opts.t_final.unwrap_or(20.0 / model.config.subsystems[0].gamma);
    drive
        .par_iter()
        .map(|&wd| {
            let l = Liouvillian::driven(&model, wd)?;
            let omega = omega_1 / rabi_ratios(&model, wd)?[0];
            let gen = l.at(C64::new(omega, 0.0));
            let rho = match opts.method {
                SteadyStateMethod::Evolve => {
                    // The drive and damping can outpace the detunings (a resonant cavity has none).
                    let n_steps = opts.n_steps.unwrap_or_else(|| {
                        let bound = (t_final * gen.max_row_sum() / 1.5).ceil() as usize;
                        default_steps(&l, t_final, opts.steps_per_period).max(bound)
                    });
                    let grid = TimeGrid::new(t_final, n_steps)?;
                    let mut rho = basis_density(model.dim, l0);
                    propagate(&Constant(&gen), &mut rho, grid, usize::MAX, |_, _| {})?;
                    rho
                }
                SteadyStateMethod::NullSpace => steady_state(&gen, model.dim)?,
            };
            let rec = probe.record(t_final, &rho);
            Ok(ReflectionPoint {
                omega_d: wd,
                r: reflection_coefficient(&model, &rho, wd, omega_1),
                n_res: rec.n_res,
                n_jqf: rec.n_jqf,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Subsystem;
    use crate::units::hz;

    #[test]
    fn purcell_decay_without_filter() {
        let c = SystemConfig::paper().without_bare_transmons();
        let run = decay_experiment(&c, &DecayOptions { samples: 50, ..Default::default() }).unwrap();
        assert_eq!(run.records[0].fidelity, 1.0);
        let f = run.final_record().fidelity;
        assert!((f - 0.976_511_891_407_219).abs() < 1e-7, "F = {f}");
        assert!(run.trace_error < 1e-10);
    }

    #[test]
    fn capped_matches_full_truncation() {
        let c = SystemConfig::paper();
        let t = 5e-9;
        let a = decay_experiment(&c, &DecayOptions { t_final: Some(t), n_steps: Some(2000), samples: 4, ..Default::default() }).unwrap();
        let mut small = c.clone();
        small.set_truncation(0, 3, 3, None);
        small.set_truncation(1, 3, 1, None);
        let b = decay_experiment(
            &small,
            &DecayOptions { t_final: Some(t), n_steps: Some(2000), samples: 4, full_truncation: true, ..Default::default() },
        )
        .unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.fidelity - y.fidelity).abs() < 1e-12);
            assert!((x.n_jqf - y.n_jqf).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_resonator_photon_number_and_unit_reflection() {
        // A lone resonator: a transmon with one level is just the cavity.
        let cav = Subsystem::composite(hz(8e9), hz(-400e6), hz(10e9), 0.0, hz(2e6), 0.0, 1, 16);
        let c = SystemConfig { subsystems: vec![cav], reference_index: 0, omega_drive: None };
        // Evolving for 20/κ leaves a transient of order e^{-10}.
        for (method, tol) in [(SteadyStateMethod::NullSpace, 1e-6), (SteadyStateMethod::Evolve, 5e-4)] {
            let opts = ReflectionOptions { method, ..Default::default() };
            let pts = reflection_experiment(&c, &[hz(10e9), hz(10.001e9)], hz(1e6), InitialState::Ground, &opts).unwrap();
            assert!((pts[0].n_res - 1.0).abs() < 1e-4, "{method:?}: n = {}", pts[0].n_res);
            for p in &pts {
                assert!((p.r.norm() - 1.0).abs() < tol, "{method:?}: |r| = {}", p.r.norm());
            }
            assert!((pts[0].r - C64::new(-1.0, 0.0)).norm() < tol.max(1e-4));
        }
    }

    #[test]
    fn zero_probe_is_an_error() {
        let c = SystemConfig::paper().with_excitation_cap(1);
        assert!(reflection_experiment(&c, &[hz(10e9)], 0.0, InitialState::Ground, &Default::default()).is_err());
    }
}
