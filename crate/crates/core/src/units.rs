//! Physical constants and unit conversions. Internally all frequencies are
//! angular (rad/s) and all times are in seconds.

use std::f64::consts::TAU;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
pub fn hz(f: f64) -> f64 {
    TAU * f
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Photon flux (photons per second) carried by power `watts` at angular frequency `omega`.
pub fn photon_flux(watts: f64, omega: f64) -> f64 {
    watts / (HBAR * omega)
}
