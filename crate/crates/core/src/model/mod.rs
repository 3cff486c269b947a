//! Circuit model: subsystem parameters, block diagonalization and the
//! composite Hilbert space of the waveguide chain.

mod config;
mod diag;

pub use config::{apply_overrides, ConfigFile, SubsystemFile, PAPER_CONFIG_JSON};
pub use diag::{diagonalize, Eigenbasis};

use crate::error::{config_err, domain_err, Result};
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsystemKind {
    /// Transmon dispersively coupled to a resonator; the resonator couples to the line.
    TransmonWithResonator,
    /// Transmon coupled directly to the line.
    BareTransmon,
}

/// One element attached to the waveguide. Frequencies are angular (rad/s),
/// the phase is `k x` at the reference frequency `ω_{a,1}` (radians).
#[derive(Clone, Debug, PartialEq)]
pub struct Subsystem {
    pub kind: SubsystemKind,
    pub omega_a: f64,
    pub alpha: f64,
    /// Resonator frequency; unused for a bare transmon.
    pub omega_r: f64,
    /// Transmon-resonator coupling; unused for a bare transmon.
    pub g: f64,
    /// Coupling rate to the waveguide.
    pub gamma: f64,
    pub phase: f64,
    pub n_transmon: usize,
    /// Resonator levels; 1 for a bare transmon.
    pub n_resonator: usize,
    /// Keep only eigenstates with at most this many excitations.
    pub max_excitations: Option<usize>,
}

impl Subsystem {
    #[allow(clippy::too_many_arguments)]
    pub fn composite(
        omega_a: f64,
        alpha: f64,
        omega_r: f64,
        g: f64,
        gamma: f64,
        phase: f64,
        n_transmon: usize,
        n_resonator: usize,
    ) -> Self {
        Self {
            kind: SubsystemKind::TransmonWithResonator,
            omega_a,
            alpha,
            omega_r,
            g,
            gamma,
            phase,
            n_transmon,
            n_resonator,
            max_excitations: None,
        }
    }

    pub fn bare(omega_a: f64, alpha: f64, gamma: f64, phase: f64, n_transmon: usize) -> Self {
        Self {
            kind: SubsystemKind::BareTransmon,
            omega_a,
            alpha,
            omega_r: 0.0,
            g: 0.0,
            gamma,
            phase,
            n_transmon,
            n_resonator: 1,
            max_excitations: None,
        }
    }

    /// Frequency of the mode that talks to the line (`ω_m`).
    pub fn line_frequency(&self) -> f64 {
        match self.kind {
            SubsystemKind::TransmonWithResonator => self.omega_r,
            SubsystemKind::BareTransmon => self.omega_a,
        }
    }

    /// Largest excitation number representable with the given truncation.
    pub fn max_representable_excitations(&self) -> usize {
        self.n_transmon + self.n_resonator - 2
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let name = |field: &str| format!("subsystem {index}: {field}");
        let positive = |v: f64, field: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("{} must be positive and finite, got {v}", name(field))))
            }
        };
        positive(self.omega_a, "f_a_Hz")?;
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(config_err(format!("{} must be non-negative, got {}", name("Gamma_Hz"), self.gamma)));
        }
        if self.alpha.is_nan() {
            return Err(config_err(name("alpha_Hz is NaN")));
        }
        if self.alpha.is_infinite() && self.n_transmon > 2 {
            return Err(config_err(format!(
                "{}: infinite anharmonicity requires n_transmon <= 2",
                name("alpha_Hz")
            )));
        }
        if self.n_transmon == 0 {
            return Err(config_err(name("n_transmon must be at least 1")));
        }
        if !(self.phase.is_finite() && self.phase >= 0.0) {
            return Err(config_err(format!("{} must be non-negative, got {}", name("phase_over_pi"), self.phase)));
        }
        match self.kind {
            SubsystemKind::TransmonWithResonator => {
                positive(self.omega_r, "f_r_Hz")?;
                if !self.g.is_finite() {
                    return Err(config_err(name("coupling is not finite")));
                }
                if self.n_resonator == 0 {
                    return Err(config_err(name("n_resonator must be at least 1")));
                }
            }
            SubsystemKind::BareTransmon => {
                if self.n_resonator != 1 {
                    return Err(config_err(name("a bare transmon has no resonator levels")));
                }
            }
        }
        if let Some(cap) = self.max_excitations {
            if cap > self.max_representable_excitations() {
                return Err(config_err(format!(
                    "{}: max_excitations {cap} exceeds n_transmon + n_resonator - 2 = {}",
                    name("max_excitations"),
                    self.max_representable_excitations()
                )));
            }
        }
        Ok(())
    }
}

/// The whole chain, ordered by position along the line.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    pub subsystems: Vec<Subsystem>,
    /// Subsystem whose Rabi frequency defines the drive amplitude (0-based).
    pub reference_index: usize,
    pub omega_drive: Option<f64>,
}

impl SystemConfig {
    /// Parameters of the bundled default configuration.
    pub fn paper() -> Self {
        Self::from_json_str(PAPER_CONFIG_JSON).expect("bundled configuration is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)?;
        file.resolve()
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: ConfigFile = serde_json::from_value(value)?;
        file.resolve()
    }

    /// Reference frequency `ω_{a,1}` used to convert positions to phases.
    pub fn reference_frequency(&self) -> f64 {
        self.subsystems[0].omega_a
    }

    pub fn reference(&self) -> &Subsystem {
        &self.subsystems[self.reference_index]
    }

    pub fn validate(&self) -> Result<()> {
        if self.subsystems.is_empty() {
            return Err(config_err("at least one subsystem is required"));
        }
        for (i, s) in self.subsystems.iter().enumerate() {
            s.validate(i)?;
        }
        if self.subsystems[0].phase != 0.0 {
            return Err(config_err("subsystem 0 must sit at phase 0"));
        }
        for (i, w) in self.subsystems.windows(2).enumerate() {
            if w[1].phase < w[0].phase {
                return Err(config_err(format!(
                    "subsystem {}: phases must be non-decreasing along the line",
                    i + 1
                )));
            }
        }
        if self.reference_index >= self.subsystems.len() {
            return Err(config_err(format!(
                "reference_index {} out of range for {} subsystems",
                self.reference_index,
                self.subsystems.len()
            )));
        }
        if let Some(w) = self.omega_drive {
            if !(w.is_finite() && w > 0.0) {
                return Err(config_err(format!("f_drive_Hz must be positive, got {w}")));
            }
        }
        Ok(())
    }

    /// Copy with every bare transmon removed.
    pub fn without_bare_transmons(&self) -> Self {
        let mut out = self.clone();
        out.subsystems.retain(|s| s.kind != SubsystemKind::BareTransmon);
        out.reference_index = out.reference_index.min(out.subsystems.len().saturating_sub(1));
        out
    }

    /// Index of the first bare transmon, the filter.
    pub fn jqf_index(&self) -> Option<usize> {
        self.subsystems.iter().position(|s| s.kind == SubsystemKind::BareTransmon)
    }

    /// Copy restricted to at most `cap` excitations in every subsystem. Levels
    /// that cannot be reached are dropped from the truncation.
    pub fn with_excitation_cap(&self, cap: usize) -> Self {
        let mut out = self.clone();
        for s in &mut out.subsystems {
            let c = s.max_excitations.unwrap_or(usize::MAX).min(cap);
            s.n_transmon = s.n_transmon.min(c + 1);
            if s.kind == SubsystemKind::TransmonWithResonator {
                s.n_resonator = s.n_resonator.min(c + 1);
            }
            let c = c.min(s.max_representable_excitations());
            s.max_excitations = if c >= s.max_representable_excitations() { None } else { Some(c) };
        }
        out
    }

    /// Overwrite the truncation of subsystem `index`.
    pub fn set_truncation(&mut self, index: usize, n_transmon: usize, n_resonator: usize, cap: Option<usize>) {
        let s = &mut self.subsystems[index];
        s.n_transmon = n_transmon;
        if s.kind == SubsystemKind::TransmonWithResonator {
            s.n_resonator = n_resonator;
        }
        s.max_excitations = cap;
    }

    pub fn to_file(&self) -> ConfigFile {
        ConfigFile::from_config(self)
    }
}

/// Dispersive shift `χ` of a resonator coupled with strength `g` to a transmon.
/// Arguments are angular frequencies; an infinite `alpha` gives the two-level limit `g²/Δ`.
pub fn dispersive_shift(g: f64, omega_r: f64, omega_a: f64, alpha: f64) -> Result<f64> {
    let delta = omega_r - omega_a;
    if delta == 0.0 {
        return Err(domain_err("dispersive shift is singular: omega_r - omega_a = 0"));
    }
    if alpha.is_infinite() {
        return Ok(g * g / delta);
    }
    if delta - alpha == 0.0 {
        return Err(domain_err("dispersive shift is singular: omega_r - omega_a - alpha = 0"));
    }
    Ok(g * g / (2.0 * delta) * (1.0 - (delta + alpha) / (delta - alpha)))
}

/// Coupling `g >= 0` that produces the dispersive shift `chi`.
pub fn coupling_from_shift(chi: f64, omega_r: f64, omega_a: f64, alpha: f64) -> Result<f64> {
    let delta = omega_r - omega_a;
    if delta == 0.0 {
        return Err(domain_err("dispersive shift is singular: omega_r - omega_a = 0"));
    }
    if chi == 0.0 {
        return Ok(0.0);
    }
    let g2 = if alpha.is_infinite() {
        chi * delta
    } else {
        if alpha == 0.0 {
            return Err(domain_err("a harmonic transmon (alpha = 0) has no dispersive shift"));
        }
        if delta - alpha == 0.0 {
            return Err(domain_err("dispersive shift is singular: omega_r - omega_a - alpha = 0"));
        }
        -chi * delta * (delta - alpha) / alpha
    };
    if !(g2 >= 0.0) {
        return Err(domain_err(format!(
            "no real coupling gives chi = {chi} for detuning {delta} and anharmonicity {alpha}"
        )));
    }
    Ok(g2.sqrt())
}

/// Diagonalized chain and the tensor-product layout of its Hilbert space.
/// Subsystem 0 is the most significant index.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: SystemConfig,
    pub bases: Vec<Eigenbasis>,
    pub dims: Vec<usize>,
    pub dim: usize,
    strides: Vec<usize>,
}

impl Model {
    pub fn new(config: SystemConfig) -> Result<Self> {
        config.validate()?;
        let bases = config
            .subsystems
            .iter()
            .map(diagonalize)
            .collect::<Result<Vec<_>>>()?;
        let dims: Vec<usize> = bases.iter().map(|b| b.dim).collect();
        let mut strides = vec![1; dims.len()];
        for m in (0..dims.len().saturating_sub(1)).rev() {
            strides[m] = strides[m + 1] * dims[m + 1];
        }
        let dim = dims.iter().product();
        Ok(Self { config, bases, dims, dim, strides })
    }

    pub fn n_subsystems(&self) -> usize {
        self.dims.len()
    }

    /// Composite index of the product state `|j_1, j_2, ...⟩`.
    pub fn index(&self, local: &[usize]) -> usize {
        assert_eq!(local.len(), self.dims.len());
        local.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    /// Local state of subsystem `m` within composite index `l`.
    pub fn local(&self, l: usize, m: usize) -> usize {
        (l / self.strides[m]) % self.dims[m]
    }

    /// Embed a local operator, given as triplets on subsystem `m`, into the full space.
    pub fn embed(&self, m: usize, local: &[(usize, usize, C64)]) -> CsrMatrix {
        let after = self.strides[m];
        let before = self.dim / (after * self.dims[m]);
        let block = self.dims[m] * after;
        let mut triplets = Vec::with_capacity(local.len() * before * after);
        for b in 0..before {
            for &(j, k, v) in local {
                for a in 0..after {
                    triplets.push((b * block + j * after + a, b * block + k * after + a, v));
                }
            }
        }
        CsrMatrix::from_triplets(self.dim, self.dim, triplets)
    }

    /// Line-coupled lowering operator `C_m` (resonator `a` or transmon `b`) on the full space.
    pub fn lowering(&self, m: usize) -> CsrMatrix {
        self.embed(m, &self.bases[m].lowering_triplets())
    }

    /// `C_m† C_m` on the full space.
    pub fn number(&self, m: usize) -> CsrMatrix {
        self.embed(m, &self.bases[m].number_triplets())
    }

    /// Sum of the excitation numbers of the local states of composite state `l`.
    pub fn excitations(&self, l: usize) -> usize {
        (0..self.dims.len()).map(|m| self.bases[m].excitations[self.local(l, m)]).sum()
    }
}
