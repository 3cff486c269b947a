//! Cascaded master equation of the waveguide chain as a sparse superoperator.
//!
//! Density matrices are vectorized row-major, `vec(ρ)[i·N + j] = ρ_ij`, so
//! that `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.

use crate::error::{config_err, domain_err, Result};
use crate::model::Model;
use crate::sparse::{CsrMatrix, MergedCsr};
use crate::units::{dbm_to_watts, photon_flux, watts_to_dbm};
use num_complex::Complex64 as C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Which frequency sets the propagation phases in the couplings `ξ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseMode {
    /// Each transition propagates at its own frequency.
    Free,
    /// Every transition follows the drive at this angular frequency.
    Driven(f64),
}

/// Couplings `ξ_{mn,j'j}` between subsystem `m` and transition `j' → j` of subsystem `n`.
#[derive(Clone, Debug)]
pub struct Xi {
    dims: Vec<usize>,
    tables: Vec<Vec<C64>>,
}

impl Xi {
    pub fn new(model: &Model, mode: PhaseMode) -> Self {
        let subs = &model.config.subsystems;
        let w_ref = model.config.reference_frequency();
        let n_sub = subs.len();
        let mut tables = Vec::with_capacity(n_sub * n_sub);
        for m in 0..n_sub {
            for n in 0..n_sub {
                let b = &model.bases[n];
                let d = b.dim;
                let mut t = vec![C64::new(0.0, 0.0); d * d];
                let (sm, sn) = (&subs[m], &subs[n]);
                let pre = (sm.gamma * sn.gamma).sqrt() / 2.0 / (sm.line_frequency() * sn.line_frequency()).sqrt();
                for j in 0..d {
                    for jp in 0..d {
                        if b.c(j, jp) == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let w = b.transition(j, jp);
                        let k_over = match mode {
                            PhaseMode::Free => w / w_ref,
                            PhaseMode::Driven(wd) => wd / w_ref,
                        };
                        let phase = |x: f64| C64::from_polar(1.0, k_over * x);
                        let v = pre * w * (phase((sm.phase - sn.phase).abs()) + phase((sm.phase + sn.phase).abs()));
                        t[j * d + jp] = v;
                    }
                }
                tables.push(t);
            }
        }
        Self { dims: model.dims.clone(), tables }
    }

    pub fn get(&self, m: usize, n: usize, j: usize, jp: usize) -> C64 {
        let d = self.dims[n];
        self.tables[m * self.dims.len() + n][j * d + jp]
    }
}

/// Ratios `Ω̃_m = Re Ω_m / Re Ω` of the line-induced Rabi frequencies.
pub fn rabi_ratios(model: &Model, omega_d: f64) -> Result<Vec<f64>> {
    let cfg = &model.config;
    let w_ref = cfg.reference_frequency();
    let r = cfg.reference();
    let cos_ref = (omega_d / w_ref * r.phase).cos();
    if cos_ref.abs() < 1e-12 {
        return Err(config_err(
            "the reference subsystem sits at a node of the drive (cos(k_d x) = 0); choose another reference_index",
        ));
    }
    if r.gamma <= 0.0 {
        return Err(config_err("the reference subsystem must couple to the line (Gamma_Hz > 0)"));
    }
    Ok(cfg
        .subsystems
        .iter()
        .map(|s| {
            ((r.line_frequency() / s.line_frequency()) * (s.gamma / r.gamma)).sqrt()
                * (omega_d / w_ref * s.phase).cos()
                / cos_ref
        })
        .collect())
}

/// Rabi frequency `Ω` of the reference subsystem for input power `dbm` at drive `omega_d`.
pub fn rabi_from_power(model: &Model, dbm: f64, omega_d: f64) -> f64 {
    let cfg = &model.config;
    let r = cfg.reference();
    let flux = photon_flux(dbm_to_watts(dbm), omega_d);
    (omega_d / r.line_frequency() * r.gamma * flux).sqrt() * (omega_d / cfg.reference_frequency() * r.phase).cos()
}

/// Input power in dBm that gives the reference Rabi frequency `|omega|`.
pub fn power_from_rabi(model: &Model, omega: f64, omega_d: f64) -> Result<f64> {
    let cfg = &model.config;
    let r = cfg.reference();
    let c = (omega_d / cfg.reference_frequency() * r.phase).cos();
    if c.abs() < 1e-12 || r.gamma <= 0.0 {
        return Err(domain_err("the reference subsystem does not couple to the drive"));
    }
    let flux = (omega / c).powi(2) * r.line_frequency() / (omega_d * r.gamma);
    Ok(watts_to_dbm(flux * crate::units::HBAR * omega_d))
}

fn lr_triplets(a: &CsrMatrix, b: &CsrMatrix, s: C64, out: &mut Vec<(usize, usize, C64)>) {
    // vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)
    let n = b.nrows;
    for (ra, ca, va) in a.triplets() {
        for (rb, cb, vb) in b.triplets() {
            out.push((ra * n + cb, ca * n + rb, s * va * vb));
        }
    }
}

fn left_triplets(a: &CsrMatrix, s: C64, out: &mut Vec<(usize, usize, C64)>) {
    let n = a.nrows;
    for (r, c, v) in a.triplets() {
        for k in 0..n {
            out.push((r * n + k, c * n + k, s * v));
        }
    }
}

fn right_triplets(b: &CsrMatrix, s: C64, out: &mut Vec<(usize, usize, C64)>) {
    let n = b.nrows;
    for (r, c, v) in b.triplets() {
        for k in 0..n {
            out.push((k * n + c, k * n + r, s * v));
        }
    }
}

/// `-i[H, ·]` as a superoperator.
pub fn commutator(h: &CsrMatrix) -> CsrMatrix {
    let n = h.nrows;
    let mut t = Vec::new();
    left_triplets(h, -I, &mut t);
    right_triplets(h, I, &mut t);
    CsrMatrix::from_triplets(n * n, n * n, t)
}

/// `L(t) = L0 + Re Ω(t)·T_Re + Im Ω(t)·T_Im` in the rotating frame.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    /// Hilbert-space dimension `N_b`.
    pub dim: usize,
    pub drift: CsrMatrix,
    pub drive_re: CsrMatrix,
    pub drive_im: CsrMatrix,
    pub generator: MergedCsr,
    /// Frame reference frequency.
    pub omega_frame: f64,
    pub omega_drive: Option<f64>,
    /// Rotating-frame energies `Σ_m (ω_{m,j} - N_{m,j} ω_ref)` of each product state.
    pub detunings: Vec<f64>,
}

impl Liouvillian {
    /// Free decay in the frame of the reference transmon.
    pub fn undriven(model: &Model) -> Result<Self> {
        let w = model.config.reference().omega_a;
        Self::build(model, w, None)
    }

    /// Drive at `omega_d`, with the frame and propagation phases following the drive.
    pub fn driven(model: &Model, omega_d: f64) -> Result<Self> {
        if !(omega_d.is_finite() && omega_d > 0.0) {
            return Err(domain_err(format!("drive frequency must be positive, got {omega_d}")));
        }
        Self::build(model, omega_d, Some(omega_d))
    }

    fn build(model: &Model, omega_frame: f64, omega_drive: Option<f64>) -> Result<Self> {
        let n = model.dim;
        let nn = n * n;
        let n_sub = model.n_subsystems();
        let mode = omega_drive.map_or(PhaseMode::Free, PhaseMode::Driven);
        let xi = Xi::new(model, mode);

        let detunings: Vec<f64> = (0..n)
            .map(|l| {
                (0..n_sub)
                    .map(|m| {
                        let j = model.local(l, m);
                        let b = &model.bases[m];
                        b.frequencies[j] - b.excitations[j] as f64 * omega_frame
                    })
                    .sum()
            })
            .collect();

        let mut t: Vec<(usize, usize, C64)> = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let v = -I * (detunings[a] - detunings[b]);
                if v != C64::new(0.0, 0.0) {
                    t.push((a * n + b, a * n + b, v));
                }
            }
        }

        let lowering: Vec<CsrMatrix> = (0..n_sub).map(|m| model.lowering(m)).collect();
        for m in 0..n_sub {
            let mut p_local = Vec::new();
            for nsub in 0..n_sub {
                let b = &model.bases[nsub];
                let trip: Vec<_> = b
                    .lowering_triplets()
                    .into_iter()
                    .map(|(j, jp, c)| (j, jp, xi.get(m, nsub, j, jp) * c))
                    .collect();
                p_local.push(model.embed(nsub, &trip));
            }
            let mut p = CsrMatrix::zeros(n, n);
            for q in &p_local {
                p = p.add_scaled(q, ONE);
            }
            let o = &lowering[m];
            let o_dag = o.adjoint();
            let p_dag = p.adjoint();
            let half = C64::new(0.5, 0.0);
            lr_triplets(&p, &o_dag, half, &mut t);
            lr_triplets(o, &p_dag, half, &mut t);
            left_triplets(&o_dag.matmul(&p), -half, &mut t);
            right_triplets(&p_dag.matmul(o), -half, &mut t);
        }
        let drift = CsrMatrix::from_triplets(nn, nn, t);

        let (drive_re, drive_im) = match omega_drive {
            None => (CsrMatrix::zeros(nn, nn), CsrMatrix::zeros(nn, nn)),
            Some(wd) => {
                let ratios = rabi_ratios(model, wd)?;
                let mut h_re = CsrMatrix::zeros(n, n);
                let mut h_im = CsrMatrix::zeros(n, n);
                for (m, o) in lowering.iter().enumerate() {
                    let od = o.adjoint();
                    let r = C64::new(ratios[m], 0.0);
                    h_re = h_re.add_scaled(&od.add_scaled(o, ONE), r);
                    h_im = h_im.add_scaled(&od.add_scaled(o, -ONE), I * r);
                }
                (commutator(&h_re), commutator(&h_im))
            }
        };
        let generator = MergedCsr::new(&drift, &drive_re, &drive_im);
        Ok(Self { dim: n, drift, drive_re, drive_im, generator, omega_frame, omega_drive, detunings })
    }

    pub fn vec_len(&self) -> usize {
        self.dim * self.dim
    }

    /// `y = L(re, im) x`.
    pub fn apply(&self, re: f64, im: f64, x: &[C64], y: &mut [C64]) {
        self.generator.apply(re, im, x, y);
    }

    /// Generator with a fixed complex Rabi frequency.
    pub fn at(&self, omega: C64) -> CsrMatrix {
        self.generator.combine(omega.re, omega.im)
    }

    /// Adjoint generator `L0† + a T_Re† + b T_Im†` on the same merged layout.
    pub fn adjoint(&self) -> MergedCsr {
        MergedCsr::new(&self.drift.adjoint(), &self.drive_re.adjoint(), &self.drive_im.adjoint())
    }

    /// Fastest rotating-frame frequency among populated coherences.
    pub fn max_frequency(&self) -> f64 {
        let lo = self.detunings.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.detunings.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).abs()
    }
}

/// Row-major vectorization of a pure state `|l⟩⟨l|`.
pub fn basis_density(dim: usize, l: usize) -> Vec<C64> {
    let mut rho = vec![C64::new(0.0, 0.0); dim * dim];
    rho[l * dim + l] = ONE;
    rho
}

pub fn trace(rho: &[C64], dim: usize) -> C64 {
    (0..dim).map(|i| rho[i * dim + i]).sum()
}
