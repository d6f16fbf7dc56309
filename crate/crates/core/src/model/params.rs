use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ghz_to_angular, mhz_to_angular, millikelvin_to_thermal};

/// Static device constants. Frequencies and couplings are angular (rad/s),
/// `gamma0` is a rate in 1/s and `theta_env` is k_B·T_env/ħ in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub omega_l0: f64,
    pub omega_r0: f64,
    pub omega_q0: f64,
    pub g_lr0: f64,
    pub g_rq: f64,
    pub gamma0: f64,
    pub theta_env: f64,
}

impl CircuitParams {
    /// Validates positivity and the rotating-wave ordering
    /// g_Rq < g_LR0 ≪ ω_R0. A g_LR0 above ω_R0/10 is accepted with a warning.
    pub fn new(
        omega_l0: f64,
        omega_r0: f64,
        omega_q0: f64,
        g_lr0: f64,
        g_rq: f64,
        gamma0: f64,
        theta_env: f64,
    ) -> Result<Self> {
        let p = Self {
            omega_l0,
            omega_r0,
            omega_q0,
            g_lr0,
            g_rq,
            gamma0,
            theta_env,
        };
        p.validate()?;
        Ok(p)
    }

    /// Device constants of the two-resonator reset circuit: 11.5/10.0/9.5 GHz,
    /// couplings 74 and 68 MHz, Γ0 = 31 MHz and a 10 mK bath.
    pub fn reference_device() -> Self {
        Self {
            omega_l0: ghz_to_angular(11.5),
            omega_r0: ghz_to_angular(10.0),
            omega_q0: ghz_to_angular(9.5),
            g_lr0: mhz_to_angular(74.0),
            g_rq: mhz_to_angular(68.0),
            gamma0: 31e6,
            theta_env: millikelvin_to_thermal(10.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_L0", self.omega_l0),
            ("omega_R0", self.omega_r0),
            ("omega_q0", self.omega_q0),
            ("g_LR0", self.g_lr0),
            ("g_Rq", self.g_rq),
            ("gamma0", self.gamma0),
            ("theta_env", self.theta_env),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if self.g_rq >= self.g_lr0 {
            return Err(Error::InvalidInput(format!(
                "rotating-wave ordering requires g_Rq < g_LR0 (got {} ≥ {})",
                self.g_rq, self.g_lr0
            )));
        }
        if self.g_lr0 >= self.omega_r0 / 10.0 {
            warn!(
                "g_LR0 = {:.3e} rad/s is not small against omega_R0/10 = {:.3e}; the rotating-wave model may be inaccurate",
                self.g_lr0,
                self.omega_r0 / 10.0
            );
        }
        Ok(())
    }

    /// Copy with a different static decay rate. Zero is allowed here so the
    /// closed-system limit can be studied.
    pub fn with_gamma0(mut self, gamma0: f64) -> Self {
        self.gamma0 = gamma0;
        self
    }

    pub fn with_couplings(mut self, g_lr0: f64, g_rq: f64) -> Self {
        self.g_lr0 = g_lr0;
        self.g_rq = g_rq;
        self
    }

    pub fn bare_controls(&self) -> ControlPoint {
        ControlPoint {
            omega_l: self.omega_l0,
            omega_r: self.omega_r0,
            omega_q: self.omega_q0,
        }
    }
}

/// The three controllable splittings at one instant, in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub omega_l: f64,
    pub omega_r: f64,
    pub omega_q: f64,
}

impl ControlPoint {
    pub fn new(omega_l: f64, omega_r: f64, omega_q: f64) -> Self {
        Self {
            omega_l,
            omega_r,
            omega_q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_L", self.omega_l),
            ("omega_R", self.omega_r),
            ("omega_q", self.omega_q),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, c: Control) -> f64 {
        match c {
            Control::L => self.omega_l,
            Control::R => self.omega_r,
            Control::Q => self.omega_q,
        }
    }

    pub fn set(&mut self, c: Control, v: f64) {
        match c {
            Control::L => self.omega_l = v,
            Control::R => self.omega_r = v,
            Control::Q => self.omega_q = v,
        }
    }

    pub fn lerp(a: Self, b: Self, s: f64) -> Self {
        Self {
            omega_l: a.omega_l + (b.omega_l - a.omega_l) * s,
            omega_r: a.omega_r + (b.omega_r - a.omega_r) * s,
            omega_q: a.omega_q + (b.omega_q - a.omega_q) * s,
        }
    }
}

/// A controllable splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Control {
    L,
    R,
    Q,
}

impl Control {
    pub const ALL: [Control; 3] = [Control::L, Control::R, Control::Q];

    /// Index of the bare basis state whose energy this control sets, in the
    /// static basis (|0,0,g⟩, |0,0,e⟩, |0,1,g⟩, |1,0,g⟩).
    pub fn basis_index(self) -> usize {
        match self {
            Control::Q => 1,
            Control::R => 2,
            Control::L => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Control::L => "L",
            Control::R => "R",
            Control::Q => "q",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "L" | "l" => Some(Control::L),
            "R" | "r" => Some(Control::R),
            "q" | "Q" => Some(Control::Q),
            _ => None,
        }
    }
}
