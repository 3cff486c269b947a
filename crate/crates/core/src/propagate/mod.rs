//! Fixed-step RK4 propagation of the vectorized master equation and the
//! experiments built on it.

mod experiments;
mod observables;

pub use experiments::{
    decay_experiment, default_steps, jqf_frequency_sweep, reflection_experiment, steady_state, DecayOptions,
    DecayRun, InitialState, ReflectionOptions, ReflectionPoint, SteadyStateMethod, SweepPoint,
};
pub use observables::{ObservableRecord, Probe};

use crate::error::{domain_err, Error, Result};
use crate::liouvillian::Liouvillian;
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;

/// Uniform time grid `t_n = n Δt`, `n = 0..=N_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(domain_err("the time grid needs at least one step"));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(domain_err(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Number of half-step nodes `2 N_t + 1` at which a pulse is tabulated.
    pub fn n_nodes(&self) -> usize {
        2 * self.n_steps + 1
    }
}

/// A generator `L(t)` evaluated at half-step nodes `t = k Δt / 2`.
pub trait Generator: Sync {
    fn len(&self) -> usize;
    /// `y = L(t_k) x`.
    fn apply(&self, node: usize, x: &[C64], y: &mut [C64]);
}

/// Time-independent generator.
pub struct Constant<'a>(pub &'a CsrMatrix);

impl Generator for Constant<'_> {
    fn len(&self) -> usize {
        self.0.nrows
    }
    fn apply(&self, _node: usize, x: &[C64], y: &mut [C64]) {
        self.0.matvec(x, y)
    }
}

/// `L0 + Re Ω(t) T_Re + Im Ω(t) T_Im` with the drive tabulated at every node.
pub struct Pulsed<'a> {
    pub liouvillian: &'a Liouvillian,
    pub re: &'a [f64],
    pub im: &'a [f64],
}

impl Generator for Pulsed<'_> {
    fn len(&self) -> usize {
        self.liouvillian.vec_len()
    }
    fn apply(&self, node: usize, x: &[C64], y: &mut [C64]) {
        self.liouvillian.apply(self.re[node], self.im[node], x, y)
    }
}

/// Generator given by a closure, for tests and small problems.
pub struct FnGenerator<F> {
    pub len: usize,
    pub f: F,
}

impl<F: Fn(usize, &[C64], &mut [C64]) + Sync> Generator for FnGenerator<F> {
    fn len(&self) -> usize {
        self.len
    }
    fn apply(&self, node: usize, x: &[C64], y: &mut [C64]) {
        (self.f)(node, x, y)
    }
}

/// Scratch vectors for one RK4 step.
pub struct Rk4Workspace {
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self { k: [z.clone(), z.clone(), z.clone(), z.clone()], tmp: z }
    }
}

fn stage(rho: &[C64], k: &[C64], h: f64, out: &mut [C64]) {
    for ((o, r), kk) in out.iter_mut().zip(rho).zip(k) {
        *o = r + kk * h;
    }
}

/// Advance `rho` from `t_n` to `t_{n+1}` with the classic RK4 scheme. The
/// generator is sampled at nodes `2n`, `2n+1`, `2n+2`.
pub fn rk4_step<G: Generator + ?Sized>(gen: &G, n: usize, dt: f64, rho: &mut [C64], ws: &mut Rk4Workspace) {
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    gen.apply(2 * n, rho, k1);
    stage(rho, k1, dt / 2.0, tmp);
    gen.apply(2 * n + 1, tmp, k2);
    stage(rho, k2, dt / 2.0, tmp);
    gen.apply(2 * n + 1, tmp, k3);
    stage(rho, k3, dt, tmp);
    gen.apply(2 * n + 2, tmp, k4);
    let w = dt / 6.0;
    for i in 0..rho.len() {
        rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
}

/// One RK4 step backwards in time, from `t_{n+1}` to `t_n`.
pub fn rk4_step_back<G: Generator + ?Sized>(gen: &G, n: usize, dt: f64, rho: &mut [C64], ws: &mut Rk4Workspace) {
    let [k1, k2, k3, k4] = &mut ws.k;
    let tmp = &mut ws.tmp;
    let h = -dt;
    gen.apply(2 * n + 2, rho, k1);
    stage(rho, k1, h / 2.0, tmp);
    gen.apply(2 * n + 1, tmp, k2);
    stage(rho, k2, h / 2.0, tmp);
    gen.apply(2 * n + 1, tmp, k3);
    stage(rho, k3, h, tmp);
    gen.apply(2 * n, tmp, k4);
    let w = h / 6.0;
    for i in 0..rho.len() {
        rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
    }
}

pub(crate) fn check_finite(rho: &[C64], step: usize) -> Result<()> {
    if rho.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

/// Propagate over the whole grid, calling `observe(n, ρ_n)` at `n = 0`, every
/// `stride` steps and at the final step.
pub fn propagate<G, F>(gen: &G, rho: &mut [C64], grid: TimeGrid, stride: usize, mut observe: F) -> Result<()>
where
    G: Generator + ?Sized,
    F: FnMut(usize, &[C64]),
{
    let stride = stride.max(1);
    let dt = grid.dt();
    let mut ws = Rk4Workspace::new(rho.len());
    observe(0, rho);
    for n in 0..grid.n_steps {
        rk4_step(gen, n, dt, rho, &mut ws);
        let done = n + 1;
        if done % 256 == 0 || done == grid.n_steps {
            check_finite(rho, done)?;
        }
        if done % stride == 0 || done == grid.n_steps {
            observe(done, rho);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn exponential_decay_one_step() {
        let gen = FnGenerator { len: 1, f: |_: usize, x: &[C64], y: &mut [C64]| y[0] = -x[0] };
        let mut rho = vec![C64::new(1.0, 0.0)];
        let mut ws = Rk4Workspace::new(1);
        rk4_step(&gen, 0, 0.1, &mut rho, &mut ws);
        assert!((rho[0].re - 0.904_837_5).abs() < 1e-7);
        // Exact RK4 polynomial 1 - h + h²/2 - h³/6 + h⁴/24.
        let h: f64 = 0.1;
        assert!((rho[0].re - (1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0)).abs() < 1e-15);
    }

    #[test]
    fn back_step_inverts_forward() {
        let gen = FnGenerator {
            len: 2,
            f: |k: usize, x: &[C64], y: &mut [C64]| {
                let w = 1.0 + 0.1 * k as f64;
                y[0] = C64::new(0.0, -w) * x[1] - x[0] * 0.1;
                y[1] = C64::new(0.0, -w) * x[0];
            },
        };
        let mut rho = vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5)];
        let orig = rho.clone();
        let mut ws = Rk4Workspace::new(2);
        rk4_step(&gen, 3, 1e-3, &mut rho, &mut ws);
        rk4_step_back(&gen, 3, 1e-3, &mut rho, &mut ws);
        for i in 0..2 {
            assert!((rho[i] - orig[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn matches_matrix_exponential() {
        // Three-level toy generator; compare against expm by scaling and squaring.
        let entries = [
            [C64::new(-0.3, 0.0), C64::new(0.0, 1.0), C64::new(0.1, 0.0)],
            [C64::new(0.0, 1.0), C64::new(-0.1, -0.5), C64::new(0.0, 0.2)],
            [C64::new(0.2, 0.0), C64::new(0.0, 0.2), C64::new(-0.2, 0.7)],
        ];
        let a = DMatrix::from_fn(3, 3, |r, c| entries[r][c]);
        let t = 3.0;
        let mut trip = Vec::new();
        for (r, row) in entries.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                trip.push((r, c, v));
            }
        }
        let l = CsrMatrix::from_triplets(3, 3, trip);
        let norm = a.iter().map(|v| v.norm()).fold(0.0, f64::max) * 3.0;
        let steps = (t * norm / 1e-2).ceil() as usize;
        let mut rho = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, -0.5)];
        let x0 = nalgebra::DVector::from_column_slice(&rho);
        propagate(&Constant(&l), &mut rho, TimeGrid::new(t, steps).unwrap(), usize::MAX, |_, _| {}).unwrap();
        // expm via Taylor series on a scaled matrix, then squaring.
        let s = 20;
        let m = &a * C64::new(t / f64::from(1 << s), 0.0);
        let mut e = DMatrix::<C64>::identity(3, 3);
        let mut term = DMatrix::<C64>::identity(3, 3);
        for k in 1..20 {
            term = &term * &m * C64::new(1.0 / k as f64, 0.0);
            e += &term;
        }
        for _ in 0..s {
            e = &e * &e;
        }
        let exact = e * x0;
        for i in 0..3 {
            assert!((rho[i] - exact[i]).norm() < 1e-8, "{} vs {}", rho[i], exact[i]);
        }
    }

    #[test]
    fn non_finite_is_reported_with_step() {
        let gen = FnGenerator { len: 1, f: |k: usize, x: &[C64], y: &mut [C64]| y[0] = if k > 1000 { x[0] * f64::NAN } else { x[0] } };
        let mut rho = vec![C64::new(1.0, 0.0)];
        let err = propagate(&gen, &mut rho, TimeGrid::new(1.0, 2000).unwrap(), 10, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 512 }), "{err}");
    }
}
