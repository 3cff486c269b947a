use crate::error::{domain_err, Error, Result};
use crate::liouvillian::{basis_density, Liouvillian};
use crate::model::{Model, SystemConfig};
use crate::propagate::{check_finite, rk4_step, rk4_step_back, Probe, Pulsed, Rk4Workspace};
use crate::pulse::{Pulse, PulseShape};
use crate::sparse::{dot, norm, CsrMatrix, MergedCsr};
use num_complex::Complex64 as C64;

/// Default memory for stored forward states (bytes).
pub const DEFAULT_CHECKPOINT_BUDGET: usize = 1 << 30;

/// Relative drift allowed between a recomputed and a stored state.
pub const DRIFT_GATE: f64 = 1e-9;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `M = σ_{0,11} ⊗ σ_{others,00}`, a single diagonal element of `ρ`.
#[derive(Clone, Debug)]
pub struct TargetFunctional {
    pub dim: usize,
    /// Product-basis index of the target state.
    pub state: usize,
}

impl TargetFunctional {
    pub fn new(model: &Model) -> Self {
        let mut local = vec![0; model.n_subsystems()];
        local[0] = 1;
        Self { dim: model.dim, state: model.index(&local) }
    }

    pub fn vector(&self) -> Vec<C64> {
        basis_density(self.dim, self.state)
    }

    /// `F̃ = M† ρ`, checked to be real.
    pub fn fidelity_tilde(&self, rho: &[C64]) -> Result<f64> {
        let v = rho[self.state * self.dim + self.state];
        if v.im.abs() > 1e-12 {
            return Err(Error::Numeric(format!("target overlap has imaginary part {:e}", v.im)));
        }
        Ok(v.re)
    }
}

/// `F̃` together with its gradient.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub fidelity: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

impl Evaluation {
    pub fn grad_norm(&self) -> f64 {
        self.grad_a.iter().chain(&self.grad_b).map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub fidelity_tilde: f64,
    pub fidelity: f64,
    pub n_res: f64,
    pub n_jqf: f64,
    pub trace: f64,
}

/// A driven system, a pulse family and the target.
pub struct ControlProblem {
    pub model: Model,
    pub liouvillian: Liouvillian,
    pub shape: PulseShape,
    pub target: TargetFunctional,
    pub initial: Vec<C64>,
    /// Memory for stored forward states (bytes).
    pub checkpoint_budget: usize,
    scaled: MergedCsr,
    scaled_adjoint: MergedCsr,
    t_re: CsrMatrix,
    t_im: CsrMatrix,
}

impl ControlProblem {
    /// Drive at `f_drive` if configured, else at the first transition of subsystem 0.
    pub fn new(config: &SystemConfig, shape: PulseShape) -> Result<Self> {
        shape.validate()?;
        let model = Model::new(config.clone())?;
        let omega_d = config.omega_drive.unwrap_or_else(|| model.bases[0].transition(0, 1));
        let liouvillian = Liouvillian::driven(&model, omega_d)?;
        let dt = C64::new(shape.dt(), 0.0);
        let t_re = liouvillian.drive_re.scale(dt);
        let t_im = liouvillian.drive_im.scale(dt);
        let scaled = MergedCsr::new(&liouvillian.drift.scale(dt), &t_re, &t_im);
        let scaled_adjoint =
            MergedCsr::new(&liouvillian.drift.adjoint().scale(dt), &t_re.adjoint(), &t_im.adjoint());
        let target = TargetFunctional::new(&model);
        let initial = basis_density(model.dim, 0);
        Ok(Self {
            model,
            liouvillian,
            shape,
            target,
            initial,
            checkpoint_budget: DEFAULT_CHECKPOINT_BUDGET,
            scaled,
            scaled_adjoint,
            t_re,
            t_im,
        })
    }

    pub fn omega_drive(&self) -> f64 {
        self.liouvillian.omega_drive.expect("control problems are driven")
    }

    pub fn vec_len(&self) -> usize {
        self.liouvillian.vec_len()
    }

    pub fn pulse(&self, a: &[f64], b: &[f64]) -> Result<Pulse> {
        Pulse::new(self.shape.clone(), a.to_vec(), b.to_vec())
    }

    fn forward_with<F: FnMut(usize, &[C64]) -> Result<()>>(&self, pulse: &Pulse, mut visit: F) -> Result<Vec<C64>> {
        let (re, im) = pulse.drive();
        let gen = Pulsed { liouvillian: &self.liouvillian, re: &re, im: &im };
        let dt = self.shape.dt();
        let mut rho = self.initial.clone();
        let mut ws = Rk4Workspace::new(rho.len());
        visit(0, &rho)?;
        for n in 0..self.shape.n_steps {
            rk4_step(&gen, n, dt, &mut rho, &mut ws);
            if (n + 1) % 256 == 0 || n + 1 == self.shape.n_steps {
                check_finite(&rho, n + 1)?;
            }
            visit(n + 1, &rho)?;
        }
        Ok(rho)
    }

    /// Final state for the given coefficients.
    pub fn final_state(&self, pulse: &Pulse) -> Result<Vec<C64>> {
        self.forward_with(pulse, |_, _| Ok(()))
    }

    pub fn fidelity(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let rho = self.final_state(&self.pulse(a, b)?)?;
        self.target.fidelity_tilde(&rho)
    }

    /// Observables along the pulse every `stride` steps.
    pub fn trajectory(&self, pulse: &Pulse, stride: usize) -> Result<Vec<TrajectoryRecord>> {
        let probe = Probe::new(&self.model);
        let stride = stride.max(1);
        let n_steps = self.shape.n_steps;
        let dt = self.shape.dt();
        let mut out = Vec::new();
        self.forward_with(pulse, |n, rho| {
            if n % stride == 0 || n == n_steps {
                let r = probe.record(n as f64 * dt, rho);
                out.push(TrajectoryRecord {
                    time: r.time,
                    fidelity_tilde: self.target.fidelity_tilde(rho)?,
                    fidelity: r.fidelity,
                    n_res: r.n_res,
                    n_jqf: r.n_jqf,
                    trace: r.trace,
                });
            }
            Ok(())
        })?;
        Ok(out)
    }

    /// `y = L(t_k) Δt x`.
    fn l(&self, re: &[f64], im: &[f64], k: usize, x: &[C64], y: &mut [C64]) {
        self.scaled.apply(re[k], im[k], x, y)
    }

    fn l_adj(&self, re: &[f64], im: &[f64], k: usize, x: &[C64], y: &mut [C64]) {
        self.scaled_adjoint.apply(re[k], im[k], x, y)
    }

    /// `K_n ρ` in the expanded product form of one RK4 step.
    pub fn apply_k(&self, pulse: &Pulse, n: usize, rho: &[C64]) -> Vec<C64> {
        let (re, im) = pulse.drive();
        let len = rho.len();
        let (k1, k2, k3) = (2 * n, 2 * n + 1, 2 * n + 2);
        let mut out = rho.to_vec();
        let mut a = vec![ZERO; len];
        let mut b = vec![ZERO; len];
        let mut c = vec![ZERO; len];
        let mut d = vec![ZERO; len];
        let acc = |out: &mut [C64], w: f64, v: &[C64]| out.iter_mut().zip(v).for_each(|(o, x)| *o += x * w);
        // L1 ρ
        self.l(&re, &im, k1, rho, &mut a);
        acc(&mut out, 1.0 / 6.0, &a);
        // L2 ρ, L2 L1 ρ
        self.l(&re, &im, k2, rho, &mut b);
        self.l(&re, &im, k2, &a, &mut c);
        acc(&mut out, 1.0 / 3.0, &b);
        acc(&mut out, 1.0 / 6.0, &c);
        acc(&mut out, 1.0 / 3.0, &b);
        // L2 L2 ρ, L2 L2 L1 ρ
        self.l(&re, &im, k2, &b, &mut d);
        acc(&mut out, 1.0 / 6.0, &d);
        let mut e = vec![ZERO; len];
        self.l(&re, &im, k2, &c, &mut e);
        acc(&mut out, 1.0 / 12.0, &e);
        // L3 (ρ + L2 ρ + ½ L2 L2 ρ + ¼ L2 L2 L1 ρ)
        let s: Vec<C64> = (0..len).map(|i| rho[i] + b[i] + d[i] * 0.5 + e[i] * 0.25).collect();
        self.l(&re, &im, k3, &s, &mut a);
        acc(&mut out, 1.0 / 6.0, &a);
        out
    }

    fn checkpoint_stride(&self) -> Result<usize> {
        let state = self.vec_len() * std::mem::size_of::<C64>();
        let count = (self.checkpoint_budget / state).min(self.shape.n_steps + 1);
        if count < 2 {
            return Err(domain_err(format!(
                "checkpoint budget of {} bytes holds fewer than two states of {state} bytes",
                self.checkpoint_budget
            )));
        }
        Ok(self.shape.n_steps.div_ceil(count - 1))
    }

    /// `F̃` and its gradient with respect to all `a_p`, `b_p` by the discrete
    /// adjoint of the RK4 scheme.
    pub fn gradient(&self, a: &[f64], b: &[f64]) -> Result<Evaluation> {
        let pulse = self.pulse(a, b)?;
        let n_steps = self.shape.n_steps;
        let len = self.vec_len();
        let stride = self.checkpoint_stride()?;
        let stored_at = |n: usize| n % stride == 0 || n == n_steps;
        let mut stored: Vec<Option<Vec<C64>>> = vec![None; n_steps + 1];
        let final_state = self.forward_with(&pulse, |n, rho| {
            if stored_at(n) {
                stored[n] = Some(rho.to_vec());
            }
            Ok(())
        })?;
        let fidelity = self.target.fidelity_tilde(&final_state)?;

        let (args_re, args_im) = pulse.arguments();
        let (re, im) = pulse.drive();
        let gen = Pulsed { liouvillian: &self.liouvillian, re: &re, im: &im };
        let (rs, is) = (re.as_slice(), im.as_slice());
        let dt = self.shape.dt();
        let mut ws = Rk4Workspace::new(len);

        let n_nodes = self.shape.n_nodes();
        let mut s_re = vec![0.0; n_nodes];
        let mut s_im = vec![0.0; n_nodes];

        let mut chi = self.target.vector();
        let mut rho_n = final_state;
        let mut rho = vec![ZERO; len];
        let mut l: Vec<Vec<C64>> = (0..10).map(|_| vec![ZERO; len]).collect();
        let mut m: Vec<Vec<C64>> = (0..10).map(|_| vec![ZERO; len]).collect();
        let mut mu: Vec<Vec<C64>> = (0..6).map(|_| vec![ZERO; len]).collect();
        let mut t1 = vec![ZERO; len];
        let mut t2 = vec![ZERO; len];
        let mut t3 = vec![ZERO; len];

        for n in (1..=n_steps).rev() {
            // ρ_{n-1}: stored, or recomputed backwards from ρ_n.
            match &stored[n - 1] {
                Some(s) => {
                    if !stored_at(n) {
                        rho.copy_from_slice(&rho_n);
                        rk4_step_back(&gen, n - 1, dt, &mut rho, &mut ws);
                        let diff: f64 = rho.iter().zip(s).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
                        let drift = diff / norm(s);
                        if drift > DRIFT_GATE {
                            return Err(Error::CheckpointDrift { step: n - 1, drift, gate: DRIFT_GATE });
                        }
                    }
                    rho.copy_from_slice(s);
                }
                None => {
                    rho.copy_from_slice(&rho_n);
                    rk4_step_back(&gen, n - 1, dt, &mut rho, &mut ws);
                }
            }

            let (k1, k2, k3) = (2 * (n - 1), 2 * (n - 1) + 1, 2 * n);
            let sixth = 1.0 / 6.0;
            let twelfth = 1.0 / 12.0;
            let c = |x: &[C64]| dot(&chi, x);

            // Temporaries for Re Ω.
            let lk = |k: usize| move |x: &[C64], y: &mut [C64]| self.l(rs, is, k, x, y);
            let tre = |x: &[C64], y: &mut [C64]| self.t_re.matvec(x, y);
            let tim = |x: &[C64], y: &mut [C64]| self.t_im.matvec(x, y);
            tre(&rho, &mut l[0]);
            lk(k1)(&rho, &mut l[1]);
            lk(k2)(&rho, &mut l[2]);
            op(&mut l, 1, 3, tre);
            op(&mut l, 2, 4, tre);
            op(&mut l, 0, 5, lk(k2));
            op(&mut l, 1, 6, lk(k2));
            op(&mut l, 3, 7, lk(k2));
            op(&mut l, 5, 8, lk(k2));
            op(&mut l, 6, 9, tre);
            // Same for Im Ω; m1 = l1, m2 = l2, m6 = l6 are not duplicated.
            tim(&rho, &mut m[0]);
            tim(&l[1], &mut m[3]);
            tim(&l[2], &mut m[4]);
            op(&mut m, 0, 5, lk(k2));
            op(&mut m, 3, 7, lk(k2));
            op(&mut m, 5, 8, lk(k2));
            tim(&l[6], &mut m[9]);

            let scalars = |x: &[Vec<C64>], t: &CsrMatrix, t1: &mut [C64], t2: &mut [C64], t3: &mut [C64]| {
                // S1
                self.l(&re, &im, k3, &x[8], t1);
                let s1 = sixth * c(&x[0]) + sixth * c(&x[5]) + twelfth * c(&x[8]) + c(t1) / 24.0;
                // S2
                for i in 0..len {
                    t2[i] = x[0][i] + x[4][i] * 0.5 + x[5][i] * 0.5 + x[9][i] * 0.25 + x[7][i] * 0.25;
                }
                self.l(&re, &im, k3, t2, t1);
                let s2 = 2.0 / 3.0 * c(&x[0])
                    + sixth * c(&x[3])
                    + sixth * c(&x[4])
                    + sixth * c(&x[5])
                    + twelfth * c(&x[9])
                    + twelfth * c(&x[7])
                    + sixth * c(t1);
                // S3
                for i in 0..len {
                    t2[i] = l[2][i] + l[6][i] * 0.5;
                }
                self.l(&re, &im, k2, t2, t3);
                t.matvec(t3, t1);
                let s3 = sixth * c(&x[0]) + sixth * c(&x[4]) + twelfth * c(t1);
                [s1, s2, s3]
            };
            let sr = scalars(&l, &self.t_re, &mut t1, &mut t2, &mut t3);
            let si = scalars(&m, &self.t_im, &mut t1, &mut t2, &mut t3);
            for (k, (a, b)) in [k1, k2, k3].into_iter().zip(sr.iter().zip(&si)) {
                s_re[k] += a.re;
                s_im[k] += b.re;
            }

            // χ_{n-1} = K_{n-1}† χ_n.
            let la = |k: usize| move |x: &[C64], y: &mut [C64]| self.l_adj(rs, is, k, x, y);
            la(k2)(&chi, &mut mu[1]);
            la(k3)(&chi, &mut mu[2]);
            op(&mut mu, 1, 3, la(k2));
            op(&mut mu, 2, 4, la(k2));
            op(&mut mu, 4, 5, la(k2));
            for i in 0..len {
                t2[i] = chi[i] * sixth + mu[1][i] * sixth + mu[3][i] * twelfth + mu[5][i] / 24.0;
            }
            self.l_adj(&re, &im, k1, &t2, &mut t1);
            for i in 0..len {
                chi[i] += t1[i]
                    + mu[1][i] * (2.0 / 3.0)
                    + mu[2][i] * sixth
                    + mu[3][i] * sixth
                    + mu[4][i] * sixth
                    + mu[5][i] * twelfth;
            }
            if n % 256 == 0 {
                check_finite(&chi, n)?;
            }
            std::mem::swap(&mut rho_n, &mut rho);
        }
        check_finite(&chi, 0)?;

        let nc = self.shape.n_coeffs;
        let mut grad_a = vec![0.0; nc];
        let mut grad_b = vec![0.0; nc];
        for k in 0..n_nodes {
            for p in 1..=nc {
                grad_a[p - 1] += pulse.derivative_from_argument(args_re[k], k, p) * s_re[k];
                grad_b[p - 1] += pulse.derivative_from_argument(args_im[k], k, p) * s_im[k];
            }
        }
        Ok(Evaluation { fidelity, grad_a, grad_b })
    }
}

/// `v[dst] = f(v[src])` without aliasing.
fn op<F: Fn(&[C64], &mut [C64])>(v: &mut [Vec<C64>], src: usize, dst: usize, f: F) {
    let mut out = std::mem::take(&mut v[dst]);
    f(&v[src], &mut out);
    v[dst] = out;
}
