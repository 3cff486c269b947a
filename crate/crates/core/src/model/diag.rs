use super::{Subsystem, SubsystemKind};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

/// Eigenbasis of one subsystem, ordered by excitation manifold and then by energy.
#[derive(Clone, Debug)]
pub struct Eigenbasis {
    pub dim: usize,
    /// Eigenfrequencies `ω_{m,j}` (rad/s).
    pub frequencies: Vec<f64>,
    /// Total excitation number `N_{m,j}`.
    pub excitations: Vec<usize>,
    /// Bare product states `(n_transmon, n_resonator)` spanning the kept manifolds.
    pub bare_states: Vec<(usize, usize)>,
    /// Eigenvectors in the bare basis, one column per eigenstate.
    pub vectors: DMatrix<f64>,
    /// `C_{jj'} = ⟨j|c|j'⟩` of the line-coupled lowering operator, row-major.
    pub lowering: Vec<C64>,
}

impl Eigenbasis {
    pub fn c(&self, j: usize, jp: usize) -> C64 {
        self.lowering[j * self.dim + jp]
    }

    /// Transition frequency `ω_{j'j} = ω_{j'} - ω_j`.
    pub fn transition(&self, j: usize, jp: usize) -> f64 {
        self.frequencies[jp] - self.frequencies[j]
    }

    pub fn lowering_triplets(&self) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        for j in 0..self.dim {
            for jp in 0..self.dim {
                let v = self.c(j, jp);
                if v != C64::new(0.0, 0.0) {
                    out.push((j, jp, v));
                }
            }
        }
        out
    }

    /// `c† c` in the eigenbasis.
    pub fn number_triplets(&self) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::new();
        for j in 0..self.dim {
            for jp in 0..self.dim {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..self.dim {
                    s += self.c(k, j).conj() * self.c(k, jp);
                }
                if s.norm() > 0.0 {
                    out.push((j, jp, s));
                }
            }
        }
        out
    }

    /// Expectation of the bare resonator (or transmon) number in eigenstate `j`.
    pub fn number(&self, j: usize) -> f64 {
        (0..self.dim).map(|k| self.c(k, j).norm_sqr()).sum()
    }
}

fn bare_energy(s: &Subsystem, nb: usize, na: usize, shift: f64) -> f64 {
    let nb_f = nb as f64;
    let anh = if nb >= 2 { s.alpha / 2.0 * nb_f * (nb_f - 1.0) } else { 0.0 };
    (s.omega_a - shift) * nb_f + anh + (s.omega_r - shift) * na as f64
}

/// Block-diagonalize the subsystem Hamiltonian by total excitation number.
///
/// Within a manifold the eigenvalues ascend; exact ties are broken by
/// descending resonator occupation. Each eigenvector is signed so that its
/// component with the most resonator quanta is positive.
pub fn diagonalize(s: &Subsystem) -> Result<Eigenbasis> {
    let n_t = s.n_transmon;
    let n_r = s.n_resonator;
    let top = s.max_representable_excitations();
    let cap = s.max_excitations.unwrap_or(top).min(top);

    let mut bare_states = Vec::new();
    let mut frequencies = Vec::new();
    let mut excitations = Vec::new();
    let mut blocks: Vec<(usize, DMatrix<f64>)> = Vec::new();

    for n in 0..=cap {
        // States with n_b + n_a = n ordered by ascending transmon number.
        let states: Vec<(usize, usize)> = (0..n_t)
            .filter(|&nb| nb <= n && n - nb < n_r)
            .map(|nb| (nb, n - nb))
            .collect();
        if states.is_empty() {
            continue;
        }
        let d = states.len();
        // Subtracting n·ω_a keeps the block entries at the GHz scale.
        let shift = s.omega_a;
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (i, &(nb, na)) in states.iter().enumerate() {
            h[(i, i)] = bare_energy(s, nb, na, shift);
            if i + 1 < d && s.kind == SubsystemKind::TransmonWithResonator {
                // a† b couples (nb+1, na-1) with (nb, na).
                let v = s.g * ((nb + 1) as f64).sqrt() * (na as f64).sqrt();
                h[(i, i + 1)] = v;
                h[(i + 1, i)] = v;
            }
        }
        let eig = SymmetricEigen::try_new(h, 1e-15, 10_000)
            .ok_or_else(|| Error::Numeric(format!("eigensolver did not converge in manifold {n}")))?;
        let occupation = |col: usize| -> f64 {
            states
                .iter()
                .enumerate()
                .map(|(i, &(_, na))| eig.eigenvectors[(i, col)].powi(2) * na as f64)
                .sum()
        };
        let mut order: Vec<usize> = (0..d).collect();
        let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        order.sort_by(|&a, &b| {
            let (ea, eb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
            if (ea - eb).abs() <= 1e-12 * scale {
                occupation(b).total_cmp(&occupation(a))
            } else {
                ea.total_cmp(&eb)
            }
        });
        let mut vecs = DMatrix::<f64>::zeros(d, d);
        for (c, &k) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(k).into_owned();
            let pivot = col.iter().position(|v| v.abs() > 1e-12).unwrap_or(0);
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            vecs.set_column(c, &col);
            frequencies.push(eig.eigenvalues[k] + n as f64 * shift);
            excitations.push(n);
        }
        bare_states.extend(states);
        blocks.push((n, vecs));
    }

    let dim = frequencies.len();
    let mut vectors = DMatrix::<f64>::zeros(dim, dim);
    let mut offset = 0;
    for (_, v) in &blocks {
        let d = v.nrows();
        vectors.view_mut((offset, offset), (d, d)).copy_from(v);
        offset += d;
    }

    // Lowering operator of the line-coupled mode in the bare basis.
    let position = |st: (usize, usize)| bare_states.iter().position(|&b| b == st);
    let mut bare_c = DMatrix::<f64>::zeros(dim, dim);
    for (col, &(nb, na)) in bare_states.iter().enumerate() {
        let (target, amp) = match s.kind {
            SubsystemKind::TransmonWithResonator if na > 0 => ((nb, na - 1), (na as f64).sqrt()),
            SubsystemKind::BareTransmon if nb > 0 => ((nb - 1, na), (nb as f64).sqrt()),
            _ => continue,
        };
        if let Some(row) = position(target) {
            bare_c[(row, col)] = amp;
        }
    }
    let c = vectors.transpose() * bare_c * &vectors;
    let mut lowering = vec![C64::new(0.0, 0.0); dim * dim];
    for j in 0..dim {
        for jp in 0..dim {
            // Only manifold-lowering elements survive; clear round-off elsewhere.
            if excitations[jp] == excitations[j] + 1 {
                lowering[j * dim + jp] = C64::new(c[(j, jp)], 0.0);
            }
        }
    }

    Ok(Eigenbasis { dim, frequencies, excitations, bare_states, vectors, lowering })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemConfig;
    use crate::units::{hz, to_hz};

    fn paper_qubit() -> Subsystem {
        SystemConfig::paper().subsystems[0].clone()
    }

    #[test]
    fn single_excitation_frequencies_match_oracle() {
        let b = diagonalize(&paper_qubit()).unwrap();
        assert!((to_hz(b.frequencies[1]) - 7_994.017_892_803_3e6).abs() < 1.0);
        assert!((to_hz(b.frequencies[2]) - 10_005.982_107_196_7e6).abs() < 1.0);
        assert_eq!(b.excitations[..3], [0, 1, 1]);
        assert_eq!(b.frequencies[0], 0.0);
    }

    #[test]
    fn mixing_element_is_sin_theta() {
        let b = diagonalize(&paper_qubit()).unwrap();
        let sin_theta = 0.002_973_267_195_284_91f64.sqrt();
        assert!((b.c(0, 1).re - sin_theta).abs() < 1e-10, "{}", b.c(0, 1));
        assert!(b.c(0, 1).im == 0.0);
        // The resonator-like state carries cos θ.
        assert!((b.c(0, 2).re - (1.0 - sin_theta * sin_theta).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn dispersive_shift_from_spectrum() {
        // Resonator frequency with the transmon in its ground and excited states.
        let b = diagonalize(&paper_qubit()).unwrap();
        let w_r0 = b.frequencies[2];
        let idx_11 = (0..b.dim)
            .find(|&j| b.excitations[j] == 2 && b.number(j) > 0.5 && b.number(j) < 1.5)
            .unwrap();
        let w_r1 = b.frequencies[idx_11] - b.frequencies[1];
        let chi = (w_r0 - w_r1) / 2.0;
        assert!((to_hz(chi) - 1e6).abs() < 0.05e6, "chi = {}", to_hz(chi));
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let b = diagonalize(&paper_qubit()).unwrap();
        let e = b.vectors.transpose() * &b.vectors - DMatrix::identity(b.dim, b.dim);
        assert!(e.amax() < 1e-13);
    }

    #[test]
    fn bare_transmon_levels() {
        let s = SystemConfig::paper().subsystems[1].clone();
        let b = diagonalize(&s).unwrap();
        assert_eq!(b.dim, 5);
        assert!((b.frequencies[2] - (2.0 * hz(7.994e9) + hz(-400e6))).abs() < 1e-3);
        assert!((b.c(1, 2).re - 2f64.sqrt()).abs() < 1e-14);
        assert!((b.number(3) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn cap_keeps_low_manifolds() {
        let mut s = paper_qubit();
        let full = diagonalize(&s).unwrap();
        s.max_excitations = Some(2);
        let capped = diagonalize(&s).unwrap();
        assert_eq!(capped.dim, 1 + 2 + 3);
        for j in 0..capped.dim {
            assert_eq!(capped.frequencies[j], full.frequencies[j]);
        }
    }

    #[test]
    fn degenerate_manifold_tie_break() {
        // Resonant transmon and resonator with zero coupling: exact ties.
        let s = Subsystem::composite(hz(5e9), hz(-200e6), hz(5e9), 0.0, 0.0, 0.0, 3, 3);
        let b = diagonalize(&s).unwrap();
        assert!(b.number(1) > b.number(2));
        assert!((b.number(1) - 1.0).abs() < 1e-12);
    }
}
