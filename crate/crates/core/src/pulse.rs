//! Bandwidth-limited pulse parametrization: Gaussian-filtered sine series,
//! confined Gaussian window and a tanh amplitude clamp.
//!
//! The basis functions are made dimensionless by measuring times in
//! nanoseconds ([`TIME_UNIT`]).

use crate::error::{domain_err, Result};
use crate::quadrature::{integrate, integrate_vec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Time unit of the basis functions (s).
pub const TIME_UNIT: f64 = 1e-9;

/// Kernel support in units of `σ_f`.
const KERNEL_SPAN: f64 = 8.0;

fn quad_tol(t_final: f64) -> f64 {
    1e-12 * (2.0 / t_final).sqrt()
}

/// Filtered basis function
/// `f_p(t) = (σ_f √(π t_f))⁻¹ ∫₀^{t_f} exp(-(t-t')²/(2σ_f²)) sin(pπt'/t_f) dt'`
/// with all times given in seconds.
pub fn basis_function(p: usize, t: f64, sigma_f: f64, t_final: f64) -> Result<f64> {
    if p == 0 {
        return Err(domain_err("basis index starts at 1"));
    }
    if !(0.0..=t_final).contains(&t) {
        return Err(domain_err(format!("t = {t:e} s lies outside [0, {t_final:e}]")));
    }
    let (t, s, tf) = (t / TIME_UNIT, sigma_f / TIME_UNIT, t_final / TIME_UNIT);
    let w = p as f64 * PI / tf;
    let lo = (t - KERNEL_SPAN * s).max(0.0);
    let hi = (t + KERNEL_SPAN * s).min(tf);
    let panels = ((hi - lo) * w / PI).ceil() as usize + 1;
    let v = integrate(|x: f64| (-(t - x).powi(2) / (2.0 * s * s)).exp() * (w * x).sin(), lo, hi, panels, quad_tol(tf))
        .map_err(|e| domain_err(format!("basis p = {p} at t = {t} ns: {e}")))?;
    Ok(v / (s * (PI * tf).sqrt()))
}

/// Confined Gaussian window at (possibly half-integer) step index `n`.
pub fn window(n: f64, n_steps: usize, sigma_w: f64) -> f64 {
    let nt = n_steps as f64;
    let l = nt + 1.0;
    let g = |x: f64| (-((x - 0.5 * nt) / (2.0 * l * sigma_w)).powi(2)).exp();
    g(n) - g(-0.5) * (g(n + l) + g(n - l)) / (g(-0.5 + l) + g(-0.5 - l))
}

/// Hyperparameters of the pulse family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub n_coeffs: usize,
    /// Amplitude clamp `Ω_max` (rad/s).
    pub omega_max: f64,
    /// Filter width `σ_f` (s).
    pub sigma_f: f64,
    /// Window width as a fraction of `t_f`.
    pub sigma_w: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if self.n_coeffs == 0 || self.n_steps == 0 {
            return Err(domain_err("a pulse needs at least one coefficient and one step"));
        }
        for (name, v) in [("omega_max", self.omega_max), ("sigma_f", self.sigma_f), ("sigma_w", self.sigma_w), ("t_final", self.t_final)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain_err(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n_steps + 1
    }
}

/// Basis and window sampled at every half-step node `t = k Δt/2`.
#[derive(Debug)]
pub struct PulseTables {
    pub n_coeffs: usize,
    pub n_nodes: usize,
    basis: Vec<f64>,
    pub window: Vec<f64>,
    pub checksum: String,
}

type CacheKey = (usize, usize, u64, u64, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<PulseTables>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<PulseTables>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl PulseTables {
    pub fn build(shape: &PulseShape) -> Result<Self> {
        shape.validate()?;
        let nc = shape.n_coeffs;
        let n_nodes = shape.n_nodes();
        let s = shape.sigma_f / TIME_UNIT;
        let tf = shape.t_final / TIME_UNIT;
        let dt = tf / shape.n_steps as f64;
        let theta = PI / tf;
        let w_max = nc as f64 * theta;
        let norm = 1.0 / (s * (PI * tf).sqrt());
        let tol = quad_tol(tf);
        let rows: Vec<Vec<f64>> = (0..n_nodes)
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let t = (k as f64 * 0.5 * dt).min(tf);
                let lo = (t - KERNEL_SPAN * s).max(0.0);
                let hi = (t + KERNEL_SPAN * s).min(tf);
                let panels = ((hi - lo) * w_max / PI).ceil() as usize + 1;
                let mut out = vec![0.0; nc];
                integrate_vec(
                    |x: f64, o: &mut [f64]| {
                        let g = (-(t - x).powi(2) / (2.0 * s * s)).exp();
                        let (sn, cs) = (theta * x).sin_cos();
                        // sin(pθ) by the three-term recurrence.
                        let (mut prev, mut cur) = (0.0, sn);
                        for v in o.iter_mut() {
                            *v = g * cur;
                            let next = 2.0 * cs * cur - prev;
                            prev = cur;
                            cur = next;
                        }
                    },
                    lo,
                    hi,
                    panels,
                    tol,
                    &mut out,
                )
                .map_err(|e| domain_err(format!("basis table at t = {t} ns: {e}")))?;
                out.iter_mut().for_each(|v| *v *= norm);
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut basis = vec![0.0; nc * n_nodes];
        for (k, row) in rows.iter().enumerate() {
            for p in 0..nc {
                basis[p * n_nodes + k] = row[p];
            }
        }
        let window: Vec<f64> = (0..n_nodes).map(|k| window(k as f64 * 0.5, shape.n_steps, shape.sigma_w)).collect();
        let mut hasher = Sha256::new();
        for v in basis.iter().chain(&window) {
            hasher.update(v.to_le_bytes());
        }
        let checksum = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { n_coeffs: nc, n_nodes, basis, window, checksum })
    }

    /// Shared tables for `shape`, built once per process.
    pub fn cached(shape: &PulseShape) -> Result<Arc<Self>> {
        let key = (
            shape.n_coeffs,
            shape.n_steps,
            shape.sigma_f.to_bits(),
            shape.t_final.to_bits(),
            shape.sigma_w.to_bits(),
        );
        if let Some(t) = cache().lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(Self::build(shape)?);
        cache().lock().unwrap().insert(key, t.clone());
        Ok(t)
    }

    /// `f_p` at node `k` for `p = 1..=N_c`.
    pub fn basis(&self, p: usize, k: usize) -> f64 {
        self.basis[(p - 1) * self.n_nodes + k]
    }

    fn row(&self, p: usize) -> &[f64] {
        &self.basis[(p - 1) * self.n_nodes..p * self.n_nodes]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Re,
    Im,
}

/// Coefficient file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// A concrete pulse: shape, tables and coefficients.
#[derive(Clone, Debug)]
pub struct Pulse {
    pub shape: PulseShape,
    pub tables: Arc<PulseTables>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Pulse {
    pub fn new(shape: PulseShape, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != shape.n_coeffs || b.len() != shape.n_coeffs {
            return Err(domain_err(format!(
                "expected {} coefficients per quadrature, got {} and {}",
                shape.n_coeffs,
                a.len(),
                b.len()
            )));
        }
        let tables = PulseTables::cached(&shape)?;
        Ok(Self { shape, tables, a, b })
    }

    pub fn zero(shape: PulseShape) -> Result<Self> {
        let n = shape.n_coeffs;
        Self::new(shape, vec![0.0; n], vec![0.0; n])
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients { a: self.a.clone(), b: self.b.clone() }
    }

    /// Replace the coefficients, keeping the tables.
    pub fn with_coefficients(&self, a: &[f64], b: &[f64]) -> Self {
        Self { shape: self.shape.clone(), tables: self.tables.clone(), a: a.to_vec(), b: b.to_vec() }
    }

    /// Clamp arguments `w Σ a_p f_p` and `w Σ b_p f_p` at every node.
    pub fn arguments(&self) -> (Vec<f64>, Vec<f64>) {
        let t = &self.tables;
        let mut re = vec![0.0; t.n_nodes];
        let mut im = vec![0.0; t.n_nodes];
        for p in 1..=self.shape.n_coeffs {
            let row = t.row(p);
            let (ap, bp) = (self.a[p - 1], self.b[p - 1]);
            for k in 0..t.n_nodes {
                re[k] += ap * row[k];
                im[k] += bp * row[k];
            }
        }
        for k in 0..t.n_nodes {
            re[k] *= t.window[k];
            im[k] *= t.window[k];
        }
        (re, im)
    }

    /// `(Re Ω, Im Ω)` at every node (rad/s).
    pub fn drive(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut re, mut im) = self.arguments();
        let m = self.shape.omega_max;
        re.iter_mut().for_each(|v| *v = m * v.tanh());
        im.iter_mut().for_each(|v| *v = m * v.tanh());
        (re, im)
    }

    /// Node index of time `t`; times off the half-step grid are rejected.
    pub fn node(&self, t: f64) -> Result<usize> {
        let h = 0.5 * self.shape.dt();
        let k = (t / h).round();
        if k < 0.0 || k as usize >= self.tables.n_nodes || (t - k * h).abs() > 1e-9 * h {
            return Err(domain_err(format!("t = {t:e} s is not a grid point or midpoint")));
        }
        Ok(k as usize)
    }

    pub fn evaluate(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.node(t)?;
        let m = self.shape.omega_max;
        let (re, im) = self.argument_at(k);
        Ok((m * re.tanh(), m * im.tanh()))
    }

    fn argument_at(&self, k: usize) -> (f64, f64) {
        let t = &self.tables;
        let (mut re, mut im) = (0.0, 0.0);
        for p in 1..=self.shape.n_coeffs {
            re += self.a[p - 1] * t.basis(p, k);
            im += self.b[p - 1] * t.basis(p, k);
        }
        (t.window[k] * re, t.window[k] * im)
    }

    /// `∂ Re Ω / ∂ a_p` (or `∂ Im Ω / ∂ b_p`) at node `k`, given the clamp argument there.
    pub fn derivative_from_argument(&self, argument: f64, k: usize, p: usize) -> f64 {
        let sech = 1.0 / argument.cosh();
        self.shape.omega_max * sech * sech * self.tables.window[k] * self.tables.basis(p, k)
    }

    pub fn derivative(&self, k: usize, p: usize, q: Quadrature) -> f64 {
        let (re, im) = self.argument_at(k);
        let arg = match q {
            Quadrature::Re => re,
            Quadrature::Im => im,
        };
        self.derivative_from_argument(arg, k, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NS: f64 = 1e-9;
    const SIGMA: f64 = 7.957_747_154_594_767 * NS;

    #[test]
    fn basis_matches_closed_form_oracle() {
        // Closed-form erfi evaluation at 50-digit precision, t_f = 50 ns.
        let cases: [(usize, f64, f64); 16] = [
            (1, 0.0, 0.036_730_159_578_102_436_519),
            (1, 3.7, 0.060_290_815_094_129_954_138),
            (1, 25.0, 0.176_544_606_048_608_576_73),
            (1, 41.3, 0.098_408_952_805_390_879_991),
            (2, 0.0, 0.057_828_954_239_490_576_449),
            (2, 3.7, 0.087_204_985_205_404_017_357),
            (2, 41.3, -0.119_501_370_248_879_892_44),
            (2, 50.0, -0.057_828_954_239_490_576_449),
            (5, 0.0, 0.040_044_087_684_038_643_591),
            (5, 3.7, 0.038_812_700_186_010_705_357),
            (5, 25.0, 0.008_949_470_540_347_276_813_9),
            (5, 41.3, 0.018_037_174_188_708_421_168),
            (10, 0.0, 0.016_695_395_891_799_645_29),
            (10, 3.7, 0.014_818_297_831_537_425_449),
            (10, 41.3, -0.008_655_594_408_116_170_617_8),
            (10, 50.0, -0.016_695_395_891_799_645_29),
        ];
        for (p, t, expect) in cases {
            let v = basis_function(p, t * NS, SIGMA, 50.0 * NS).unwrap();
            assert!(((v - expect) / expect).abs() < 1e-8, "p={p} t={t}: {v} vs {expect}");
        }
        // Odd-symmetric point of an even mode vanishes.
        assert!(basis_function(2, 25.0 * NS, SIGMA, 50.0 * NS).unwrap().abs() < 1e-12);
    }

    #[test]
    fn narrow_filter_limit() {
        let tf = 50.0 * NS;
        for (p, t) in [(1, 13.0), (3, 20.0), (7, 31.0)] {
            let v = basis_function(p, t * NS, 1e-6 * tf, tf).unwrap();
            let unfiltered = (2.0 / 50.0f64).sqrt() * (p as f64 * PI * t / 50.0).sin();
            assert!(((v - unfiltered) / unfiltered).abs() < 1e-4);
        }
    }

    #[test]
    fn filter_attenuation_mid_band() {
        // ω_p σ_f = 2 away from the edges: amplitude ratio e^{-2}.
        let tf = 50.0 * NS;
        let p = 8;
        let sigma = 2.0 / (p as f64 * PI / 50.0) * NS;
        let t = 50.0 * (2.5 / 8.0);
        let v = basis_function(p, t * NS, sigma, tf).unwrap();
        let peak = (2.0 / 50.0f64).sqrt();
        assert!(((v / peak) / (-2.0f64).exp() - 1.0).abs() < 0.05);
    }

    #[test]
    fn unfiltered_orthonormality() {
        for (p, q) in [(1, 1), (1, 2), (3, 3), (2, 5)] {
            let v = integrate(
                |t: f64| 2.0 / 50.0 * (p as f64 * PI * t / 50.0).sin() * (q as f64 * PI * t / 50.0).sin(),
                0.0,
                50.0,
                4,
                1e-13,
            )
            .unwrap();
            let delta = if p == q { 1.0 } else { 0.0 };
            assert!((v - delta).abs() < 1e-8);
        }
    }

    #[test]
    fn window_values() {
        // Frozen high-precision values for σ_w = 0.1.
        assert!((window(0.0, 1000, 0.1) - 4.821_409_258_114_23e-5).abs() < 1e-15);
        assert!((window(0.0, 5000, 0.1) - 9.650_348_249_81e-6).abs() < 1e-15);
        assert!((window(0.0, 10000, 0.1) - 4.825_653_730_18e-6).abs() < 1e-15);
        assert!((window(500.0, 1000, 0.1) - 0.999_999_999_972_224).abs() < 1e-12);
        for n in [0usize, 17, 250, 499] {
            assert_eq!(window(n as f64, 1000, 0.1), window((1000 - n) as f64, 1000, 0.1));
        }
    }

    fn small_shape() -> PulseShape {
        PulseShape {
            n_coeffs: 4,
            omega_max: 2.0 * PI * 200e6,
            sigma_f: SIGMA,
            sigma_w: 0.1,
            t_final: 50.0 * NS,
            n_steps: 100,
        }
    }

    #[test]
    fn tables_agree_with_scalar_basis() {
        let shape = small_shape();
        let t = PulseTables::build(&shape).unwrap();
        for &(p, k) in &[(1usize, 0usize), (2, 37), (4, 100), (3, 200)] {
            let s = basis_function(p, k as f64 * 0.5 * shape.dt(), shape.sigma_f, shape.t_final).unwrap();
            assert!((t.basis(p, k) - s).abs() < 1e-12, "p={p} k={k}");
        }
        let again = PulseTables::build(&shape).unwrap();
        assert_eq!(t.checksum, again.checksum);
    }

    #[test]
    fn zero_and_linear_regime() {
        let shape = small_shape();
        let pulse = Pulse::zero(shape.clone()).unwrap();
        let (re, im) = pulse.drive();
        assert!(re.iter().chain(&im).all(|&v| v == 0.0));
        let eps = 1e-4;
        let p = Pulse::new(shape.clone(), vec![eps, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        let k = 77;
        let (re, _) = p.evaluate(k as f64 * 0.5 * shape.dt()).unwrap();
        let lin = shape.omega_max * eps * p.tables.window[k] * p.tables.basis(1, k);
        assert!(((re - lin) / lin).abs() < eps * eps);
        let plain = shape.omega_max * p.tables.window[k] * p.tables.basis(2, k);
        assert!((p.derivative(k, 2, Quadrature::Re) / plain - 1.0).abs() < eps * eps);
        assert_eq!(p.derivative(k, 2, Quadrature::Im), plain);
        assert!(p.evaluate(0.3 * shape.dt()).is_err());
    }

    #[test]
    fn saturation_and_deep_derivative() {
        let shape = small_shape();
        let p = Pulse::new(shape.clone(), vec![1e3, -1e3, 5e2, 0.0], vec![-1e3; 4]).unwrap();
        let (re, im) = p.drive();
        assert!(re.iter().chain(&im).all(|v| v.abs() <= shape.omega_max));
        let d = p.derivative_from_argument(10.0, 50, 1);
        let plain = shape.omega_max * p.tables.window[50] * p.tables.basis(1, 50);
        assert!((d / plain - 8.244_614_546_626_376e-9).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn derivative_matches_finite_difference(a in proptest::collection::vec(-1.0f64..1.0, 4), k in 0usize..201, p in 1usize..5) {
            let shape = small_shape();
            let pulse = Pulse::new(shape, a.clone(), vec![0.0; 4]).unwrap();
            let h = 1e-5;
            let mut up = a.clone();
            up[p - 1] += h;
            let mut dn = a.clone();
            dn[p - 1] -= h;
            let t = k as f64 * 0.5 * pulse.shape.dt();
            let fd = (pulse.with_coefficients(&up, &pulse.b).evaluate(t).unwrap().0
                - pulse.with_coefficients(&dn, &pulse.b).evaluate(t).unwrap().0) / (2.0 * h);
            let an = pulse.derivative(k, p, Quadrature::Re);
            prop_assert!((fd - an).abs() <= 1e-8 * an.abs().max(1e-3 * pulse.shape.omega_max * 1e-3));
        }
    }
}
