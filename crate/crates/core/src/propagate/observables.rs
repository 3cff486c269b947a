use crate::model::Model;
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;

/// Observables at one sample time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableRecord {
    pub time: f64,
    /// Population of the first excited eigenstate of subsystem 0, others traced out.
    pub fidelity: f64,
    /// Same population with every other subsystem in its ground state.
    pub fidelity_strict: f64,
    /// `⟨c†c⟩` of the line-coupled mode of subsystem 0.
    pub n_res: f64,
    /// `⟨b†b⟩` of the filter transmon, zero without one.
    pub n_jqf: f64,
    pub trace: f64,
}

/// `tr(A ρ)` for row-major vectorized `ρ`.
pub fn expectation(a: &CsrMatrix, rho: &[C64], dim: usize) -> C64 {
    a.triplets().map(|(i, j, v)| v * rho[j * dim + i]).sum()
}

/// Precomputed observable operators for one model.
#[derive(Clone, Debug)]
pub struct Probe {
    dim: usize,
    excited: Vec<usize>,
    strict: usize,
    n_res: CsrMatrix,
    n_jqf: Option<CsrMatrix>,
}

impl Probe {
    pub fn new(model: &Model) -> Self {
        let excited = (0..model.dim).filter(|&l| model.local(l, 0) == 1).collect();
        let mut local = vec![0; model.n_subsystems()];
        local[0] = 1;
        let strict = model.index(&local);
        Self {
            dim: model.dim,
            excited,
            strict,
            n_res: model.number(0),
            n_jqf: model.config.jqf_index().map(|m| model.number(m)),
        }
    }

    pub fn fidelity(&self, rho: &[C64]) -> f64 {
        self.excited.iter().map(|&l| rho[l * self.dim + l].re).sum()
    }

    pub fn fidelity_strict(&self, rho: &[C64]) -> f64 {
        rho[self.strict * self.dim + self.strict].re
    }

    pub fn record(&self, time: f64, rho: &[C64]) -> ObservableRecord {
        let d = self.dim;
        ObservableRecord {
            time,
            fidelity: self.fidelity(rho),
            fidelity_strict: self.fidelity_strict(rho),
            n_res: expectation(&self.n_res, rho, d).re,
            n_jqf: self.n_jqf.as_ref().map_or(0.0, |n| expectation(n, rho, d).re),
            trace: (0..d).map(|i| rho[i * d + i].re).sum(),
        }
    }
}
