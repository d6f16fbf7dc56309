//! Unit conversions between laboratory units and the internal angular
//! frequencies (rad/s) and seconds.

use std::f64::consts::TAU;

/// Boltzmann constant, J/K (exact, SI 2019).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant, J·s (exact, SI 2019).
pub const HBAR: f64 = 1.054_571_817e-34;
/// k_B/ħ in rad/(s·K).
pub const KB_OVER_HBAR: f64 = BOLTZMANN / HBAR;

pub fn ghz_to_angular(f_ghz: f64) -> f64 {
    TAU * f_ghz * 1e9
}

pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e6
}

pub fn angular_to_ghz(omega: f64) -> f64 {
    omega / (TAU * 1e9)
}

pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

/// Thermal angular frequency k_B·T/ħ for a temperature in millikelvin.
pub fn millikelvin_to_thermal(t_mk: f64) -> f64 {
    KB_OVER_HBAR * t_mk * 1e-3
}

pub fn ns(t_ns: f64) -> f64 {
    t_ns * 1e-9
}

pub fn to_ns(t: f64) -> f64 {
    t * 1e9
}
