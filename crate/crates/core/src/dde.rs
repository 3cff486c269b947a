//! Delay-differential model of the single-excitation decay, integrated with
//! the Euler method on a grid aligned to the propagation delay.
//!
//! Used as an independent check of the Markov approximation in the master
//! equation: the time-local phases are replaced by true retarded amplitudes.

use crate::error::{config_err, domain_err, Result};
use crate::model::{Model, SubsystemKind, SystemConfig};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Euler grid with step `Δt = τ/K` for integer `K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdeGrid {
    pub dt: f64,
    pub n_steps: u64,
    /// Steps per delay `τ`; zero when the filter sits at the origin.
    pub delay_steps: u64,
}

impl DdeGrid {
    /// Exact grid; `n_steps·τ/t_final` must be an integer.
    pub fn new(t_final: f64, n_steps: u64, tau: f64) -> Result<Self> {
        if n_steps == 0 || !(t_final > 0.0) {
            return Err(domain_err("the delay grid needs positive time and steps"));
        }
        let dt = t_final / n_steps as f64;
        let k = tau / dt;
        let kr = k.round();
        if tau > 0.0 && (kr < 1.0 || (k - kr).abs() > 1e-6 * kr.max(1.0)) {
            return Err(config_err(format!(
                "{n_steps} steps over {t_final:e} s do not place the delay {tau:e} s on the grid ({k} steps per delay)"
            )));
        }
        Ok(Self { dt, n_steps, delay_steps: kr as u64 })
    }

    /// Grid with roughly `approx_steps` steps whose step divides `τ` exactly;
    /// the final time is rounded to a whole number of steps.
    pub fn aligned(t_final: f64, approx_steps: u64, tau: f64) -> Result<Self> {
        if approx_steps == 0 || !(t_final > 0.0) {
            return Err(domain_err("the delay grid needs positive time and steps"));
        }
        if tau == 0.0 {
            return Ok(Self { dt: t_final / approx_steps as f64, n_steps: approx_steps, delay_steps: 0 });
        }
        let k = ((approx_steps as f64 * tau / t_final).round() as u64).max(1);
        let dt = tau / k as f64;
        let n_steps = (t_final / dt).round() as u64;
        Ok(Self { dt, n_steps, delay_steps: k })
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Coefficients of the three amplitude equations.
#[derive(Clone, Debug)]
pub struct DdeCoefficients {
    /// Diagonal rates `-i(ω - ω_{a,1}) - damping` of `α̃_{1,1}`, `α̃_{1,2}`, `α̃_{2,1}`.
    pub diag: [C64; 3],
    /// Instantaneous coupling of the two composite amplitudes.
    pub c11_12: C64,
    pub c12_11: C64,
    /// Delayed couplings from the filter into the composite amplitudes.
    pub d11_21: C64,
    pub d12_21: C64,
    /// Delayed couplings from the composite amplitudes into the filter.
    pub d21_11: C64,
    pub d21_12: C64,
    /// Filter self-coupling through its mirror image, delayed by `2τ`.
    pub self_21: C64,
    /// Propagation delay `τ` between the two subsystems.
    pub tau: f64,
}

impl DdeCoefficients {
    /// Coefficients for the two-element chain: a transmon-resonator pair at the
    /// origin and a bare-transmon filter further along the line.
    pub fn new(config: &SystemConfig) -> Result<Self> {
        let s = &config.subsystems;
        if s.len() != 2
            || s[0].kind != SubsystemKind::TransmonWithResonator
            || s[1].kind != SubsystemKind::BareTransmon
        {
            return Err(config_err(
                "the delay model needs exactly a transmon-resonator pair followed by one bare-transmon filter",
            ));
        }
        let model = Model::new(config.with_excitation_cap(1))?;
        let (b1, b2) = (&model.bases[0], &model.bases[1]);
        if b1.dim != 3 || b2.dim != 2 {
            return Err(config_err("the delay model needs two single-excitation states in subsystem 0"));
        }
        let wa1 = config.reference_frequency();
        let (w10, w20, w2) = (b1.frequencies[1], b1.frequencies[2], b2.frequencies[1]);
        let (c01, c02, c2) = (b1.c(0, 1), b1.c(0, 2), b2.c(0, 1));
        let (kappa, gamma) = (s[0].gamma, s[1].gamma);
        let (wr, wa2) = (s[0].line_frequency(), s[1].line_frequency());
        let phi = s[1].phase;
        let tau = phi / wa1;
        let i = C64::new(0.0, 1.0);
        let e1 = C64::from_polar(1.0, phi);
        let cross = (kappa * gamma).sqrt() / 2.0 / (wr * wa2).sqrt();
        let diag = [
            -i * (w10 - wa1) - c01.norm_sqr() * kappa / 2.0 * w10 / wr,
            -i * (w20 - wa1) - c02.norm_sqr() * kappa / 2.0 * w20 / wr,
            -i * (w2 - wa1) - c2.norm_sqr() * gamma / 4.0 * w2 / wa2,
        ];
        Ok(Self {
            diag,
            c11_12: -c01.conj() * c02 * kappa / 2.0 * w20 / wr,
            c12_11: -c02.conj() * c01 * kappa / 2.0 * w10 / wr,
            d11_21: -c01.conj() * c2 * cross * w2 * e1,
            d12_21: -c02.conj() * c2 * cross * w2 * e1,
            d21_11: -c2.conj() * c01 * cross * w10 * e1,
            // Source-transition frequency, as in every other cross term.
            d21_12: -c2.conj() * c02 * cross * w20 * e1,
            self_21: -c2.norm_sqr() * gamma / 4.0 * w2 / wa2 * C64::from_polar(1.0, 2.0 * phi),
            tau,
        })
    }
}

/// Sampled output of one delay-equation run.
#[derive(Clone, Debug)]
pub struct DdeRun {
    pub grid: DdeGrid,
    pub times: Vec<f64>,
    /// `F = |α̃_{1,1}|²`.
    pub fidelity: Vec<f64>,
    /// Total excitation `|α̃_{1,1}|² + |α̃_{1,2}|² + |α̃_{2,1}|²`.
    pub norm: Vec<f64>,
}

/// Integrate from `α̃_{1,1}(0) = 1` with vacuum input, recording about `samples` points.
pub fn dde_decay(coeffs: &DdeCoefficients, grid: DdeGrid, samples: usize) -> DdeRun {
    let k = grid.delay_steps as usize;
    let dt = grid.dt;
    let stride = (grid.n_steps / samples.max(1) as u64).max(1);
    let cap = (grid.n_steps / stride) as usize + 2;
    let mut times = Vec::with_capacity(cap);
    let mut fidelity = Vec::with_capacity(cap);
    let mut norm = Vec::with_capacity(cap);

    let (mut a11, mut a12, mut a21) = (C64::new(1.0, 0.0), ZERO, ZERO);
    let mut record = |n: u64, a11: C64, a12: C64, a21: C64| {
        times.push(n as f64 * dt);
        fidelity.push(a11.norm_sqr());
        norm.push(a11.norm_sqr() + a12.norm_sqr() + a21.norm_sqr());
    };
    record(0, a11, a12, a21);

    let c = coeffs;
    if k == 0 {
        for n in 1..=grid.n_steps {
            let d11 = c.diag[0] * a11 + c.c11_12 * a12 + c.d11_21 * a21;
            let d12 = c.diag[1] * a12 + c.c12_11 * a11 + c.d12_21 * a21;
            let d21 = c.diag[2] * a21 + c.self_21 * a21 + c.d21_11 * a11 + c.d21_12 * a12;
            a11 += d11 * dt;
            a12 += d12 * dt;
            a21 += d21 * dt;
            if n % stride == 0 || n == grid.n_steps {
                record(n, a11, a12, a21);
            }
        }
    } else {
        // Zero history implements the Heaviside gating of the delayed terms.
        let mut h11 = vec![ZERO; k];
        let mut h12 = vec![ZERO; k];
        let mut h21 = vec![ZERO; 2 * k];
        let (mut i1, mut i2) = (0usize, 0usize);
        for n in 1..=grid.n_steps {
            // Slot i1 holds the value from K steps ago; i2 from 2K, i2 ± K from K.
            let i2k = if i2 >= k { i2 - k } else { i2 + k };
            let (p11, p12) = (h11[i1], h12[i1]);
            let (p21, q21) = (h21[i2k], h21[i2]);
            h11[i1] = a11;
            h12[i1] = a12;
            h21[i2] = a21;
            let d11 = c.diag[0] * a11 + c.c11_12 * a12 + c.d11_21 * p21;
            let d12 = c.diag[1] * a12 + c.c12_11 * a11 + c.d12_21 * p21;
            let d21 = c.diag[2] * a21 + c.self_21 * q21 + c.d21_11 * p11 + c.d21_12 * p12;
            a11 += d11 * dt;
            a12 += d12 * dt;
            a21 += d21 * dt;
            i1 += 1;
            if i1 == k {
                i1 = 0;
            }
            i2 += 1;
            if i2 == 2 * k {
                i2 = 0;
            }
            if n % stride == 0 || n == grid.n_steps {
                record(n, a11, a12, a21);
            }
        }
    }
    DdeRun { grid, times, fidelity, norm }
}

/// Mean of `F` over the last fifth of the run and the decay rate `-d ln F/dt`
/// from a least-squares line through the same window.
pub fn plateau_and_rate(times: &[f64], fidelity: &[f64]) -> (f64, f64) {
    let start = fidelity.len() * 4 / 5;
    let (t, f) = (&times[start..], &fidelity[start..]);
    let n = t.len() as f64;
    let plateau = f.iter().sum::<f64>() / n;
    let tm = t.iter().sum::<f64>() / n;
    let ym = f.iter().map(|v| v.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, fi) in t.iter().zip(f) {
        sxy += (ti - tm) * (fi.ln() - ym);
        sxx += (ti - tm) * (ti - tm);
    }
    (plateau, -sxy / sxx)
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderEntry {
    pub n_steps: u64,
    pub plateau: f64,
    pub rate: f64,
}

/// Plateau and long-time rate against step count, with the extrapolated plateau.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub ladder: Vec<LadderEntry>,
    /// Plateau of the finest run.
    pub plateau: f64,
    /// Long-time decay rate extrapolated to `Δt → 0` with the fitted order (1/s).
    pub rate: f64,
    /// Long-time decay rate of the finest run.
    pub rate_finest: f64,
    /// Plateau extrapolated to `Δt → 0`.
    pub extrapolated: f64,
    /// Fitted convergence order `p` in `P(N) = P∞ + c N^{-p}`.
    pub order: f64,
    /// Difference between the two finest estimates of `P∞`.
    pub error_estimate: f64,
    /// Set when successive differences change sign or the order fit fails.
    pub non_monotone: bool,
}

/// Limit of `v(N) = v∞ + c N^{-p}` from the two finest points at a known order.
pub fn richardson(ns: &[u64], values: &[f64], order: f64) -> f64 {
    let m = ns.len();
    let (a, b) = ((ns[m - 2] as f64).powf(-order), (ns[m - 1] as f64).powf(-order));
    values[m - 1] - (values[m - 2] - values[m - 1]) * b / (a - b)
}

/// Fit `P(N) = P∞ + c N^{-p}` through the three finest ladder points.
pub fn extrapolate(ns: &[u64], plateaus: &[f64]) -> (f64, f64, f64, bool) {
    let m = ns.len();
    let n = |i: usize| ns[m - 3 + i] as f64;
    let p = |i: usize| plateaus[m - 3 + i];
    let (d1, d2) = (p(0) - p(1), p(1) - p(2));
    let limit = |order: f64| {
        let (a, b) = (n(1).powf(-order), n(2).powf(-order));
        p(2) - d2 * b / (a - b)
    };
    let ratio = |order: f64| {
        let e = |i: usize| n(i).powf(-order);
        (e(0) - e(1)) / (e(1) - e(2))
    };
    let target = d1 / d2;
    let mut non_monotone = !(d1 * d2 > 0.0);
    let mut order = 1.0;
    if !non_monotone {
        let (mut lo, mut hi) = (0.05f64, 6.0f64);
        let f = |q: f64| ratio(q) - target;
        if f(lo) * f(hi) < 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            order = 0.5 * (lo + hi);
        } else {
            non_monotone = true;
        }
    }
    let extrapolated = limit(order);
    // Compare with the estimate from the two finest points at first order.
    let first = p(2) - d2 * n(2).recip() / (n(1).recip() - n(2).recip());
    (extrapolated, order, (extrapolated - first).abs(), non_monotone)
}

/// Run the ladder of step counts (in parallel) and extrapolate the plateau.
pub fn markov_error_report(config: &SystemConfig, ladder: &[u64], t_final: Option<f64>) -> Result<ConvergenceReport> {
    if ladder.len() < 3 {
        return Err(domain_err("the convergence ladder needs at least three step counts"));
    }
    let coeffs = DdeCoefficients::new(config)?;
    let t_final = t_final.unwrap_or(10.0 / config.subsystems[0].gamma);
    let mut entries: Vec<LadderEntry> = ladder
        .par_iter()
        .map(|&n| -> Result<LadderEntry> {
            let grid = DdeGrid::aligned(t_final, n, coeffs.tau)?;
            let run = dde_decay(&coeffs, grid, 2000);
            let (plateau, rate) = plateau_and_rate(&run.times, &run.fidelity);
            Ok(LadderEntry { n_steps: grid.n_steps, plateau, rate })
        })
        .collect::<Result<_>>()?;
    entries.sort_by_key(|e| e.n_steps);
    let ns: Vec<u64> = entries.iter().map(|e| e.n_steps).collect();
    let ps: Vec<f64> = entries.iter().map(|e| e.plateau).collect();
    let (extrapolated, order, error_estimate, non_monotone) = extrapolate(&ns, &ps);
    let rates: Vec<f64> = entries.iter().map(|e| e.rate).collect();
    let rate = richardson(&ns, &rates, order);
    if non_monotone {
        log::warn!("plateau convergence is not monotone over the ladder {ns:?}");
    }
    let last = entries.last().unwrap();
    Ok(ConvergenceReport {
        plateau: last.plateau,
        rate,
        rate_finest: last.rate,
        extrapolated,
        order,
        error_estimate,
        non_monotone,
        ladder: entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::{decay_experiment, DecayOptions};

    #[test]
    fn grid_alignment() {
        let tau = 62.5e-12;
        let g = DdeGrid::aligned(795.77e-9, 1_000_000, tau).unwrap();
        assert_eq!(g.delay_steps, 79);
        assert!((g.dt * 79.0 - tau).abs() < 1e-24);
        assert!(DdeGrid::new(1e-9, 1000, 0.3e-12).is_err());
        let ok = DdeGrid::new(1e-9, 1000, 0.5e-9).unwrap();
        assert_eq!(ok.delay_steps, 500);
    }

    #[test]
    fn without_filter_matches_purcell_exponential() {
        let mut c = SystemConfig::paper();
        c.subsystems[1].gamma = 0.0;
        let coeffs = DdeCoefficients::new(&c).unwrap();
        let t = 10.0 / c.subsystems[0].gamma;
        // Explicit Euler needs dt below 2·damping/ω² for the far-detuned resonator amplitude.
        let grid = DdeGrid::aligned(t, 100_000_000, coeffs.tau).unwrap();
        let run = dde_decay(&coeffs, grid, 10);
        let me = decay_experiment(&c.without_bare_transmons(), &DecayOptions { t_final: Some(grid.t_final()), samples: 10, ..Default::default() }).unwrap();
        let f = *run.fidelity.last().unwrap();
        assert!((f - me.final_record().fidelity).abs() < 2e-5, "{f} vs {}", me.final_record().fidelity);
    }

    #[test]
    fn heaviside_gating_before_first_delay() {
        let c = SystemConfig::paper();
        let coeffs = DdeCoefficients::new(&c).unwrap();
        let grid = DdeGrid::aligned(200e-12, 2000, coeffs.tau).unwrap();
        let with = dde_decay(&coeffs, grid, 2000);
        let mut cut = coeffs.clone();
        cut.d11_21 = ZERO;
        cut.d12_21 = ZERO;
        cut.d21_11 = ZERO;
        cut.d21_12 = ZERO;
        cut.self_21 = ZERO;
        let without = dde_decay(&cut, grid, 2000);
        let k = grid.delay_steps as usize;
        // Nothing reaches the filter before τ, so α̃_{1,1} is unaffected up to 2τ.
        for n in 0..=2 * k {
            assert_eq!(with.fidelity[n].to_bits(), without.fidelity[n].to_bits(), "step {n}");
        }
        assert_ne!(with.fidelity[2 * k + 2], without.fidelity[2 * k + 2]);
    }

    #[test]
    fn norm_bounded() {
        let c = SystemConfig::paper();
        let coeffs = DdeCoefficients::new(&c).unwrap();
        let grid = DdeGrid::aligned(50e-9, 2_000_000, coeffs.tau).unwrap();
        let run = dde_decay(&coeffs, grid, 500);
        assert!(run.norm.iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn extrapolation_recovers_synthetic_limit() {
        let ns = [100u64, 300, 1000];
        let ps: Vec<f64> = ns.iter().map(|&n| 0.5 + 3.0 / n as f64).collect();
        let (p, order, _, flag) = extrapolate(&ns, &ps);
        assert!(!flag);
        assert!((order - 1.0).abs() < 1e-8);
        assert!((p - 0.5).abs() < 1e-12);
        let (_, _, _, flag) = extrapolate(&ns, &[0.5, 0.6, 0.55]);
        assert!(flag);
    }

    #[test]
    fn rejects_other_topologies() {
        let c = SystemConfig::paper().without_bare_transmons();
        assert!(DdeCoefficients::new(&c).is_err());
    }
}
