//! JSON configuration files.

use super::{coupling_from_shift, Subsystem, SubsystemKind, SystemConfig};
use crate::error::{config_err, Result};
use crate::units::{hz, to_hz};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::f64::consts::PI;

/// The bundled default configuration.
pub const PAPER_CONFIG_JSON: &str = include_str!("../../configs/paper.json");

/// An anharmonicity given either as a number or as `"inf"`/`"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Anharmonicity {
    Finite(f64),
    Text(InfiniteTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InfiniteTag {
    #[serde(rename = "inf")]
    Positive,
    #[serde(rename = "-inf")]
    Negative,
}

impl Anharmonicity {
    fn value(self) -> f64 {
        match self {
            Anharmonicity::Finite(v) => v,
            Anharmonicity::Text(InfiniteTag::Positive) => f64::INFINITY,
            Anharmonicity::Text(InfiniteTag::Negative) => f64::NEG_INFINITY,
        }
    }

    fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            Anharmonicity::Text(InfiniteTag::Positive)
        } else if v == f64::NEG_INFINITY {
            Anharmonicity::Text(InfiniteTag::Negative)
        } else {
            Anharmonicity::Finite(v)
        }
    }
}

/// One subsystem as written in a configuration file. Frequencies in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemFile {
    pub kind: SubsystemKind,
    #[serde(rename = "f_a_Hz")]
    pub f_a_hz: f64,
    #[serde(rename = "alpha_Hz")]
    pub alpha_hz: Anharmonicity,
    #[serde(rename = "f_r_Hz", default, skip_serializing_if = "Option::is_none")]
    pub f_r_hz: Option<f64>,
    #[serde(rename = "g_r_Hz", default, skip_serializing_if = "Option::is_none")]
    pub g_r_hz: Option<f64>,
    #[serde(rename = "chi_Hz", default, skip_serializing_if = "Option::is_none")]
    pub chi_hz: Option<f64>,
    #[serde(rename = "Gamma_Hz")]
    pub gamma_hz: f64,
    pub phase_over_pi: f64,
    pub n_transmon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_resonator: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_excitations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub subsystems: Vec<SubsystemFile>,
    #[serde(default)]
    pub reference_index: usize,
    #[serde(rename = "f_drive_Hz", default)]
    pub f_drive_hz: Option<f64>,
}

impl SubsystemFile {
    fn resolve(&self, index: usize) -> Result<Subsystem> {
        let alpha = hz(self.alpha_hz.value());
        let phase = PI * self.phase_over_pi;
        let omega_a = hz(self.f_a_hz);
        let gamma = hz(self.gamma_hz);
        let s = match self.kind {
            SubsystemKind::TransmonWithResonator => {
                let f_r = self
                    .f_r_hz
                    .ok_or_else(|| config_err(format!("subsystem {index}: f_r_Hz is required")))?;
                let omega_r = hz(f_r);
                let g = match (self.g_r_hz, self.chi_hz) {
                    (Some(g), None) => hz(g),
                    (None, Some(chi)) => coupling_from_shift(hz(chi), omega_r, omega_a, alpha)
                        .map_err(|e| config_err(format!("subsystem {index}: {e}")))?,
                    _ => {
                        return Err(config_err(format!(
                            "subsystem {index}: give exactly one of g_r_Hz and chi_Hz"
                        )))
                    }
                };
                let n_r = self
                    .n_resonator
                    .ok_or_else(|| config_err(format!("subsystem {index}: n_resonator is required")))?;
                Subsystem::composite(omega_a, alpha, omega_r, g, gamma, phase, self.n_transmon, n_r)
            }
            SubsystemKind::BareTransmon => {
                for (key, present) in [
                    ("f_r_Hz", self.f_r_hz.is_some()),
                    ("g_r_Hz", self.g_r_hz.is_some()),
                    ("chi_Hz", self.chi_hz.is_some()),
                ] {
                    if present {
                        return Err(config_err(format!(
                            "subsystem {index}: {key} is not allowed for a bare transmon"
                        )));
                    }
                }
                if matches!(self.n_resonator, Some(n) if n != 1) {
                    return Err(config_err(format!(
                        "subsystem {index}: n_resonator is not allowed for a bare transmon"
                    )));
                }
                Subsystem::bare(omega_a, alpha, gamma, phase, self.n_transmon)
            }
        };
        Ok(Subsystem { max_excitations: self.max_excitations, ..s })
    }

    fn from_subsystem(s: &Subsystem) -> Self {
        let composite = s.kind == SubsystemKind::TransmonWithResonator;
        Self {
            kind: s.kind,
            f_a_hz: to_hz(s.omega_a),
            alpha_hz: Anharmonicity::from_value(to_hz(s.alpha)),
            f_r_hz: composite.then(|| to_hz(s.omega_r)),
            g_r_hz: composite.then(|| to_hz(s.g)),
            chi_hz: None,
            gamma_hz: to_hz(s.gamma),
            phase_over_pi: s.phase / PI,
            n_transmon: s.n_transmon,
            n_resonator: composite.then_some(s.n_resonator),
            max_excitations: s.max_excitations,
        }
    }
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<SystemConfig> {
        let subsystems = self
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, s)| s.resolve(i))
            .collect::<Result<Vec<_>>>()?;
        let config = SystemConfig {
            subsystems,
            reference_index: self.reference_index,
            omega_drive: self.f_drive_hz.map(hz),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_config(c: &SystemConfig) -> Self {
        Self {
            subsystems: c.subsystems.iter().map(SubsystemFile::from_subsystem).collect(),
            reference_index: c.reference_index,
            f_drive_hz: c.omega_drive.map(to_hz),
        }
    }
}

/// Apply `key=value` overrides to a raw configuration. Keys are dotted paths
/// into existing entries, e.g. `subsystems.1.f_a_Hz`. Values are parsed as
/// JSON, falling back to a plain string.
pub fn apply_overrides(root: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let mut node = &mut *root;
        for part in key.split('.') {
            node = match node {
                Value::Object(map) => map
                    .get_mut(part)
                    .ok_or_else(|| config_err(format!("override key '{key}' does not exist")))?,
                Value::Array(items) => {
                    let i: usize = part
                        .parse()
                        .map_err(|_| config_err(format!("override key '{key}': '{part}' is not an index")))?;
                    items
                        .get_mut(i)
                        .ok_or_else(|| config_err(format!("override key '{key}': index {i} out of range")))?
                }
                _ => return Err(config_err(format!("override key '{key}' does not exist"))),
            };
        }
        *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let text = PAPER_CONFIG_JSON.replace("\"n_transmon\": 5,\n      \"n_resonator\"", "\"n_transmons\": 5,\n      \"n_resonator\"");
        let err = SystemConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("n_transmons"), "{err}");
    }

    #[test]
    fn both_coupling_forms_rejected() {
        let mut v: Value = serde_json::from_str(PAPER_CONFIG_JSON).unwrap();
        v["subsystems"][0]["g_r_Hz"] = serde_json::json!(1e8);
        let err = SystemConfig::from_json_value(v).unwrap_err().to_string();
        assert!(err.contains("exactly one"), "{err}");
    }

    #[test]
    fn bare_transmon_rejects_resonator_fields() {
        let mut v: Value = serde_json::from_str(PAPER_CONFIG_JSON).unwrap();
        v["subsystems"][1]["chi_Hz"] = serde_json::json!(1e6);
        let err = SystemConfig::from_json_value(v).unwrap_err().to_string();
        assert!(err.contains("chi_Hz"), "{err}");
    }

    #[test]
    fn round_trip_through_file_form() {
        let c = SystemConfig::paper();
        let text = serde_json::to_string(&c.to_file()).unwrap();
        let back = SystemConfig::from_json_str(&text).unwrap();
        assert_eq!(back.subsystems.len(), 2);
        for (a, b) in c.subsystems.iter().zip(&back.subsystems) {
            assert!((a.g - b.g).abs() <= 1e-6 * a.g.max(1.0));
            assert!((a.omega_a - b.omega_a).abs() <= 1e-6);
        }
    }

    #[test]
    fn infinite_anharmonicity_string() {
        let mut v: Value = serde_json::from_str(PAPER_CONFIG_JSON).unwrap();
        v["subsystems"][1]["alpha_Hz"] = serde_json::json!("-inf");
        v["subsystems"][1]["n_transmon"] = serde_json::json!(2);
        let c = SystemConfig::from_json_value(v).unwrap();
        assert_eq!(c.subsystems[1].alpha, f64::NEG_INFINITY);
    }

    #[test]
    fn overrides_touch_existing_keys_only() {
        let mut v: Value = serde_json::from_str(PAPER_CONFIG_JSON).unwrap();
        apply_overrides(&mut v, &[("subsystems.1.f_a_Hz".into(), "7.99e9".into())]).unwrap();
        assert_eq!(v["subsystems"][1]["f_a_Hz"], serde_json::json!(7.99e9));
        let err = apply_overrides(&mut v, &[("subsystems.1.f_b_Hz".into(), "1".into())]).unwrap_err();
        assert!(err.to_string().contains("subsystems.1.f_b_Hz"));
        assert!(apply_overrides(&mut v, &[("subsystems.7.f_a_Hz".into(), "1".into())]).is_err());
    }
}
