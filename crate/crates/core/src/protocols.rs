//! Analytic guess protocols for ω_L(t): sequential resonances (SR) and the
//! constant protocol (CP), plus the operation-point solver.

use crate::controls::{ControlSet, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, decay_rates, eigensystem, CircuitParams, Control, ControlPoint, RateSet};
use crate::units::angular_to_ghz;

/// Number of scan points used to bracket rate crossings.
pub const SCAN_POINTS: usize = 2001;
/// Largest accepted |ΔΓ|/max Γ at a refined crossing.
pub const ROOT_RESIDUAL: f64 = 1e-10;
/// Grid points required per ramp.
pub const POINTS_PER_RAMP: f64 = 20.0;

/// f(x) = 6x⁵ − 15x⁴ + 10x³, clamped to [0, 1].
pub fn smoothstep(x: f64) -> f64 {
    let x = if (0.0..=1.0).contains(&x) {
        x
    } else {
        log::warn!("smoothstep argument {x} outside [0, 1], clamped");
        x.clamp(0.0, 1.0)
    };
    (x * x * x * (x * (6.0 * x - 15.0) + 10.0)).clamp(0.0, 1.0)
}

/// Maximum slope of the smoothstep, f′(1/2) = 15/8.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 15.0 / 8.0;

/// ω_0 + (ω_1 − ω_0)·f((t − t_0)/(t_1 − t_0)).
pub fn ramp(t: f64, t0: f64, t1: f64, w0: f64, w1: f64) -> f64 {
    let x = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    w0 + (w1 - w0) * smoothstep(x)
}

/// Rates along ω_L with ω_R and ω_q held at their bare values.
pub fn rates_along_omega_l(omega_l: f64, params: &CircuitParams) -> Result<RateSet> {
    let c = ControlPoint::new(omega_l, params.omega_r0, params.omega_q0);
    let es = eigensystem(&build_hamiltonian(c, params)?, None)?;
    decay_rates(&es, c, params)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OperationPoints {
    /// Γ_20 = Γ_30.
    pub omega_plus: f64,
    /// Γ_10 = Γ_20.
    pub omega_minus: f64,
    pub rates_plus: RateSet,
    pub rates_minus: RateSet,
}

/// Solves Γ_20(ω_L) = Γ_30(ω_L) for ω_+ and Γ_10(ω_L) = Γ_20(ω_L) for ω_−.
///
/// Sign changes are located on a dense scan of [ω_q0/2, 2ω_L0] and refined
/// by bisection. Where a crossing condition has several roots, the one with
/// the largest common rate is taken.
pub fn solve_operation_points(params: &CircuitParams) -> Result<OperationPoints> {
    let lo = params.omega_q0 / 2.0;
    let hi = 2.0 * params.omega_l0;
    let xs: Vec<f64> = (0..SCAN_POINTS).map(|k| lo + (hi - lo) * k as f64 / (SCAN_POINTS - 1) as f64).collect();
    let rates = xs.iter().map(|&x| rates_along_omega_l(x, params)).collect::<Result<Vec<_>>>()?;
    let (omega_plus, rates_plus) = crossing(&xs, &rates, 1, 2, params, "Gamma20 - Gamma30")?;
    let (omega_minus, rates_minus) = crossing(&xs, &rates, 0, 1, params, "Gamma10 - Gamma20")?;
    if !(omega_plus > omega_minus) {
        return Err(Error::ModelValidity(format!(
            "operation points out of order: omega_plus {:.6} GHz <= omega_minus {:.6} GHz",
            angular_to_ghz(omega_plus),
            angular_to_ghz(omega_minus)
        )));
    }
    Ok(OperationPoints { omega_plus, omega_minus, rates_plus, rates_minus })
}

fn crossing(
    xs: &[f64],
    rates: &[RateSet],
    a: usize,
    b: usize,
    params: &CircuitParams,
    what: &str,
) -> Result<(f64, RateSet)> {
    let diff = |r: &RateSet| r.gamma[a] - r.gamma[b];
    let mut best: Option<(f64, RateSet)> = None;
    for k in 0..xs.len() - 1 {
        let (d0, d1) = (diff(&rates[k]), diff(&rates[k + 1]));
        let root = if d0 == 0.0 {
            Some((xs[k], rates[k]))
        } else if d0.signum() != d1.signum() && d1 != 0.0 {
            Some(bisect(xs[k], xs[k + 1], d0, params, &diff)?)
        } else {
            None
        };
        if let Some((x, r)) = root {
            // A sign change without a root is a jump at a level crossing.
            if (diff(&r)).abs() > ROOT_RESIDUAL * r.max() {
                continue;
            }
            let keep = best.as_ref().map_or(true, |(_, rb)| r.gamma[a] > rb.gamma[a]);
            if keep {
                best = Some((x, r));
            }
        }
    }
    best.ok_or_else(|| Error::Bracket {
        what: what.into(),
        lo_ghz: angular_to_ghz(xs[0]),
        hi_ghz: angular_to_ghz(xs[xs.len() - 1]),
    })
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    mut d_lo: f64,
    params: &CircuitParams,
    diff: &impl Fn(&RateSet) -> f64,
) -> Result<(f64, RateSet)> {
    let mut r_mid = rates_along_omega_l(0.5 * (lo + hi), params)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        r_mid = rates_along_omega_l(mid, params)?;
        let d = diff(&r_mid);
        if d == 0.0 || mid <= lo || mid >= hi {
            return Ok((mid, r_mid));
        }
        if d.signum() == d_lo.signum() {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), r_mid))
}

/// Sequential-resonance protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SRSpec {
    pub tau: f64,
    pub t_ramp: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub omega_l0: f64,
}

impl SRSpec {
    pub fn new(tau: f64, t_ramp: f64, ops: &OperationPoints, params: &CircuitParams) -> Result<Self> {
        let s = Self { tau, t_ramp, omega_plus: ops.omega_plus, omega_minus: ops.omega_minus, omega_l0: params.omega_l0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.t_ramp > 0.0) {
            return Err(Error::InvalidInput("tau and t_ramp must be positive".into()));
        }
        if self.t_ramp > self.tau / 10.0 {
            return Err(Error::InvalidInput(format!(
                "t_ramp {:.3e} s exceeds tau/10 = {:.3e} s",
                self.t_ramp,
                self.tau / 10.0
            )));
        }
        if !(self.omega_plus > self.omega_minus) {
            return Err(Error::InvalidInput("omega_plus must exceed omega_minus".into()));
        }
        Ok(())
    }

    /// ω_L(t) through the five stages.
    pub fn omega_l(&self, t: f64) -> f64 {
        let (tau, tr) = (self.tau, self.t_ramp);
        let half = tau / 2.0;
        if t < tr {
            ramp(t, 0.0, tr, self.omega_l0, self.omega_plus)
        } else if t < half {
            self.omega_plus
        } else if t < half + tr {
            ramp(t, half, half + tr, self.omega_plus, self.omega_minus)
        } else if t < tau - tr {
            self.omega_minus
        } else {
            ramp(t, tau - tr, tau, self.omega_minus, self.omega_l0)
        }
    }
}

fn check_resolution(grid: &TimeGrid, t_ramp: f64) -> Result<()> {
    if grid.dt() > t_ramp / POINTS_PER_RAMP * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!(
            "dt = {:.3e} s is coarser than t_ramp/{POINTS_PER_RAMP} = {:.3e} s",
            grid.dt(),
            t_ramp / POINTS_PER_RAMP
        )));
    }
    Ok(())
}

fn with_omega_l(grid: TimeGrid, params: &CircuitParams, omega_l: impl Fn(f64) -> f64) -> Result<ControlSet> {
    let n = grid.len();
    let wl: Vec<f64> = grid.times().map(omega_l).collect();
    ControlSet::new(grid, wl, vec![params.omega_r0; n], vec![params.omega_q0; n], &[Control::L])
}

pub fn sr_protocol(spec: &SRSpec, grid: TimeGrid, params: &CircuitParams) -> Result<ControlSet> {
    spec.validate()?;
    if (grid.tau() - spec.tau).abs() > 1e-12 * spec.tau {
        return Err(Error::InvalidInput("grid duration differs from protocol duration".into()));
    }
    check_resolution(&grid, spec.t_ramp)?;
    with_omega_l(grid, params, |t| spec.omega_l(t))
}

/// ω_L ramps from ω_L0 to (ω_+ + ω_−)/2, holds, and ramps back.
pub fn cp_protocol(
    params: &CircuitParams,
    ops: &OperationPoints,
    tau: f64,
    t_ramp: f64,
    grid: TimeGrid,
) -> Result<ControlSet> {
    if !(t_ramp > 0.0 && t_ramp <= tau / 10.0) {
        return Err(Error::InvalidInput(format!("t_ramp {t_ramp:.3e} s must lie in (0, tau/10]")));
    }
    check_resolution(&grid, t_ramp)?;
    let hold = cp_hold_value(ops);
    let w0 = params.omega_l0;
    with_omega_l(grid, params, |t| {
        if t < t_ramp {
            ramp(t, 0.0, t_ramp, w0, hold)
        } else if t < tau - t_ramp {
            hold
        } else {
            ramp(t, tau - t_ramp, tau, hold, w0)
        }
    })
}

pub fn cp_hold_value(ops: &OperationPoints) -> f64 {
    (ops.omega_plus + ops.omega_minus) / 2.0
}

/// Default ramp duration of the analytic guesses.
pub const DEFAULT_T_RAMP: f64 = 1e-9;

/// Analytic guess families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guess {
    Sr,
    Cp,
}

impl Guess {
    pub fn label(self) -> &'static str {
        match self {
            Guess::Sr => "SR",
            Guess::Cp => "CP",
        }
    }

    /// Samples the guess on a grid of step at most `dt_max`.
    pub fn build(
        self,
        tau: f64,
        t_ramp: f64,
        dt_max: f64,
        ops: &OperationPoints,
        params: &CircuitParams,
    ) -> Result<ControlSet> {
        let grid = TimeGrid::new(tau, dt_max)?;
        match self {
            Guess::Sr => sr_protocol(&SRSpec::new(tau, t_ramp, ops, params)?, grid, params),
            Guess::Cp => cp_protocol(params, ops, tau, t_ramp, grid),
        }
    }

    /// Constant-ω_L segments of the protocol, `[t_a, t_b]` in seconds.
    pub fn hold_windows(self, tau: f64, t_ramp: f64) -> Vec<(f64, f64)> {
        match self {
            Guess::Sr => vec![(t_ramp, tau / 2.0), (tau / 2.0 + t_ramp, tau - t_ramp)],
            Guess::Cp => vec![(t_ramp, tau - t_ramp)],
        }
    }
}
