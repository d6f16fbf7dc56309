//! Uniform time grids and sampled control series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Control, ControlPoint};

/// Default propagation step (s).
pub const DEFAULT_DT: f64 = 5e-12;

/// Uniform grid t_k = k·dt, k = 0..=n_steps, with t_N = τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid of duration `tau` whose step is the largest τ/N not exceeding
    /// `dt_max`.
    pub fn new(tau: f64, dt_max: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0 && dt_max.is_finite() && dt_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid needs positive tau and dt, got tau={tau}, dt={dt_max}"
            )));
        }
        let n_steps = ((tau / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self { tau, n_steps })
    }

    pub fn with_steps(tau: f64, n_steps: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) || n_steps == 0 {
            return Err(Error::InvalidInput(format!(
                "grid needs positive tau and at least one step, got tau={tau}, n={n_steps}"
            )));
        }
        Ok(Self { tau, n_steps })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.n_steps as f64
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.tau
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    /// Trapezoid weights (in seconds) for quadrature over the grid.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    /// Index of the grid point nearest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.n_steps)
    }
}

/// Sampled control series ω_L(t), ω_R(t), ω_q(t) on a shared grid, plus the
/// subset the optimizer may change.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    grid: TimeGrid,
    omega_l: Vec<f64>,
    omega_r: Vec<f64>,
    omega_q: Vec<f64>,
    active: Vec<Control>,
}

impl ControlSet {
    pub fn new(
        grid: TimeGrid,
        omega_l: Vec<f64>,
        omega_r: Vec<f64>,
        omega_q: Vec<f64>,
        active: &[Control],
    ) -> Result<Self> {
        let mut active = active.to_vec();
        active.sort();
        active.dedup();
        let set = Self {
            grid,
            omega_l,
            omega_r,
            omega_q,
            active,
        };
        set.validate()?;
        Ok(set)
    }

    /// Constant controls on every series.
    pub fn constant(grid: TimeGrid, point: ControlPoint, active: &[Control]) -> Result<Self> {
        let n = grid.len();
        Self::new(
            grid,
            vec![point.omega_l; n],
            vec![point.omega_r; n],
            vec![point.omega_q; n],
            active,
        )
    }

    /// Samples `f(t_k)` on every grid point.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> ControlPoint, active: &[Control]) -> Result<Self> {
        let points: Vec<ControlPoint> = grid.times().map(f).collect();
        Self::new(
            grid,
            points.iter().map(|p| p.omega_l).collect(),
            points.iter().map(|p| p.omega_r).collect(),
            points.iter().map(|p| p.omega_q).collect(),
            active,
        )
    }

    /// The same piecewise-linear control path on a grid `factor` times finer.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidInput("refinement factor must be positive".into()));
        }
        let grid = TimeGrid::with_steps(self.grid.tau(), self.grid.n_steps() * factor)?;
        let n = self.grid.n_steps();
        let sample = |j: usize| {
            let (k, r) = (j / factor, j % factor);
            if k == n {
                self.at(n)
            } else {
                self.interpolate(k, r as f64 / factor as f64)
            }
        };
        let points: Vec<ControlPoint> = (0..grid.len()).map(sample).collect();
        Self::new(
            grid,
            points.iter().map(|p| p.omega_l).collect(),
            points.iter().map(|p| p.omega_r).collect(),
            points.iter().map(|p| p.omega_q).collect(),
            &self.active,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        for c in Control::ALL {
            let s = self.series(c);
            if s.len() != n {
                return Err(Error::InvalidInput(format!(
                    "omega_{} has {} samples, grid has {}",
                    c.label(),
                    s.len(),
                    n
                )));
            }
            if let Some(bad) = s.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "omega_{} contains non-positive sample {bad}",
                    c.label()
                )));
            }
            if !self.is_active(c) && s.iter().any(|v| *v != s[0]) {
                return Err(Error::InvalidInput(format!(
                    "inactive control omega_{} must be constant",
                    c.label()
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn active(&self) -> &[Control] {
        &self.active
    }

    pub fn is_active(&self, c: Control) -> bool {
        self.active.contains(&c)
    }

    /// Replaces the active set. Newly inactive series must already be constant.
    pub fn with_active(mut self, active: &[Control]) -> Result<Self> {
        let mut active = active.to_vec();
        active.sort();
        active.dedup();
        self.active = active;
        self.validate()?;
        Ok(self)
    }

    pub fn series(&self, c: Control) -> &[f64] {
        match c {
            Control::L => &self.omega_l,
            Control::R => &self.omega_r,
            Control::Q => &self.omega_q,
        }
    }

    /// Mutable access for optimizers; callers must keep samples positive.
    pub(crate) fn series_mut(&mut self, c: Control) -> &mut [f64] {
        match c {
            Control::L => &mut self.omega_l,
            Control::R => &mut self.omega_r,
            Control::Q => &mut self.omega_q,
        }
    }

    pub fn at(&self, k: usize) -> ControlPoint {
        ControlPoint {
            omega_l: self.omega_l[k],
            omega_r: self.omega_r[k],
            omega_q: self.omega_q[k],
        }
    }

    /// Linear interpolation at t_k + s·dt, s ∈ [0, 1].
    pub fn interpolate(&self, k: usize, s: f64) -> ControlPoint {
        if s == 0.0 || k == self.grid.n_steps() {
            return self.at(k);
        }
        ControlPoint::lerp(self.at(k), self.at(k + 1), s)
    }

    /// Restriction to grid indices `[start, end]` on a fresh grid starting at 0.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if end <= start || end > self.grid.n_steps() {
            return Err(Error::InvalidInput(format!(
                "window [{start}, {end}] outside grid of {} steps",
                self.grid.n_steps()
            )));
        }
        let grid = TimeGrid::with_steps((end - start) as f64 * self.grid.dt(), end - start)?;
        Self::new(
            grid,
            self.omega_l[start..=end].to_vec(),
            self.omega_r[start..=end].to_vec(),
            self.omega_q[start..=end].to_vec(),
            &self.active,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CircuitParams;

    #[test]
    fn refinement_keeps_the_path() {
        let p = CircuitParams::reference_device();
        let grid = TimeGrid::with_steps(10e-9, 10).unwrap();
        let c = ControlSet::from_fn(
            grid,
            |t| ControlPoint::new(p.omega_l0 + 1e18 * t * t, p.omega_r0, p.omega_q0),
            &[Control::L],
        )
        .unwrap();
        let f = c.refine(4).unwrap();
        assert_eq!(f.grid().n_steps(), 40);
        assert_eq!(f.at(40), c.at(10));
        assert_eq!(f.at(12), c.at(3));
        let mid = f.at(14).omega_l;
        assert!((mid - 0.5 * (c.at(3).omega_l + c.at(4).omega_l)).abs() < 1e-3);
    }

    #[test]
    fn grid_step_never_exceeds_request() {
        let g = TimeGrid::new(1500e-9, 5e-12).unwrap();
        assert_eq!(g.n_steps(), 300_000);
        assert!(g.dt() <= 5e-12 * (1.0 + 1e-12));
        assert_eq!(g.time(g.n_steps()), 1500e-9);
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps(), 4);
    }

    #[test]
    fn rejects_mismatched_lengths_and_varying_inactive() {
        let g = TimeGrid::with_steps(1e-9, 4).unwrap();
        let p = CircuitParams::reference_device();
        let ok = ControlSet::constant(g, p.bare_controls(), &[Control::L]).unwrap();
        assert!(ok.is_active(Control::L));
        let r = ControlSet::new(g, vec![1.0; 4], vec![1.0; 5], vec![1.0; 5], &[]);
        assert!(r.is_err());
        let r = ControlSet::new(g, vec![1.0, 2.0, 1.0, 1.0, 1.0], vec![1.0; 5], vec![1.0; 5], &[]);
        assert!(r.is_err());
        let r = ControlSet::new(g, vec![1.0, 2.0, 1.0, 1.0, 1.0], vec![1.0; 5], vec![1.0; 5], &[Control::L]);
        assert!(r.is_ok());
        let r = ControlSet::new(g, vec![1.0, 0.0, 1.0, 1.0, 1.0], vec![1.0; 5], vec![1.0; 5], &[Control::L]);
        assert!(r.is_err());
    }
}
