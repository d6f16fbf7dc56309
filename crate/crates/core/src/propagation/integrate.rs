use num_complex::Complex64;

use super::density::{hermiticity_error, min_eigenvalue, trace};
use super::{CoState, DensityMatrix, Frame, Generator};
use crate::controls::ControlSet;
use crate::error::{Error, Result};
use crate::model::{CircuitParams, ControlPoint, Mat4, RateSet, GROUND};

/// Largest admissible stiffness·dt for the fixed-step integrator.
pub const STIFFNESS_LIMIT: f64 = 0.05;
pub const TRACE_TOL: f64 = 1e-10;
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOptions {
    pub frame: Frame,
    pub stiffness_limit: f64,
    /// Store every `state_stride`-th state; the final state is always kept.
    pub state_stride: usize,
    /// Check trace, Hermiticity and positivity after every step.
    pub check_invariants: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { frame: Frame::MeanExcitation, stiffness_limit: STIFFNESS_LIMIT, state_stride: 100, check_invariants: true }
    }
}

/// Worst deviations seen by the invariant monitor.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct InvariantReport {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub checks: usize,
}

impl InvariantReport {
    pub fn merge(&mut self, other: &InvariantReport) {
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.max_hermiticity_error = self.max_hermiticity_error.max(other.max_hermiticity_error);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.checks += other.checks;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct InvariantMonitor {
    report: InvariantReport,
    expected_traces: Vec<f64>,
    enabled: bool,
}

impl InvariantMonitor {
    pub(crate) fn new(states: &[Mat4], enabled: bool) -> Self {
        Self {
            report: InvariantReport { min_eigenvalue: f64::INFINITY, ..Default::default() },
            expected_traces: states.iter().map(|s| trace(s).re).collect(),
            enabled,
        }
    }

    pub(crate) fn check(&mut self, states: &[Mat4], force: bool) -> Result<()> {
        if !self.enabled && !force {
            return Ok(());
        }
        for (s, t0) in states.iter().zip(&self.expected_traces) {
            let scale = t0.abs().max(f64::MIN_POSITIVE);
            let tr = (trace(s) - Complex64::new(*t0, 0.0)).norm() / scale;
            let herm = hermiticity_error(s) / scale;
            let min = min_eigenvalue(s) / scale;
            let r = &mut self.report;
            r.max_trace_error = r.max_trace_error.max(tr);
            r.max_hermiticity_error = r.max_hermiticity_error.max(herm);
            r.min_eigenvalue = r.min_eigenvalue.min(min);
            r.checks += 1;
            if tr > TRACE_TOL {
                return Err(Error::Invariant { what: "trace error".into(), value: tr, limit: TRACE_TOL });
            }
            if herm > HERMITICITY_TOL {
                return Err(Error::Invariant { what: "Hermiticity error".into(), value: herm, limit: HERMITICITY_TOL });
            }
            if min < -POSITIVITY_TOL {
                return Err(Error::Invariant { what: "negative eigenvalue".into(), value: -min, limit: POSITIVITY_TOL });
            }
        }
        Ok(())
    }

    pub(crate) fn report(&self) -> InvariantReport {
        self.report
    }
}

/// Builds generators along a control set and enforces the step condition.
pub(crate) struct GeneratorSource<'a> {
    pub controls: &'a ControlSet,
    pub params: &'a CircuitParams,
    pub frame: Frame,
    pub limit: f64,
    pub dt: f64,
}

impl<'a> GeneratorSource<'a> {
    pub(crate) fn new(controls: &'a ControlSet, params: &'a CircuitParams, opts: &PropagationOptions) -> Self {
        Self { controls, params, frame: opts.frame, limit: opts.stiffness_limit, dt: controls.grid().dt() }
    }

    pub(crate) fn build(&self, c: ControlPoint) -> Result<Generator> {
        let g = Generator::new(c, self.params, self.frame)?;
        let product = g.stiffness() * self.dt;
        if product > self.limit {
            return Err(Error::StepSize {
                dt: self.dt,
                product,
                limit: self.limit,
                required_dt: required_dt(self.controls, self.params, self.frame, self.limit)
                    .min(self.limit / g.stiffness()),
            });
        }
        Ok(g)
    }

    /// Generator without the step check, for predictor steps that are
    /// discarded.
    pub(crate) fn build_unchecked(&self, c: ControlPoint) -> Result<Generator> {
        Generator::new(c, self.params, self.frame)
    }

    pub(crate) fn at(&self, k: usize) -> Result<Generator> {
        self.build(self.controls.at(k))
    }

    pub(crate) fn midpoint(&self, k: usize) -> Result<Generator> {
        self.build(self.controls.interpolate(k, 0.5))
    }
}

/// Largest dt satisfying the step condition everywhere on the control set.
pub fn required_dt(controls: &ControlSet, params: &CircuitParams, frame: Frame, limit: f64) -> f64 {
    let mut stiff = 0.0f64;
    for k in 0..controls.grid().len() {
        if let Ok(g) = Generator::new(controls.at(k), params, frame) {
            stiff = stiff.max(g.stiffness());
        }
    }
    if stiff > 0.0 {
        limit / stiff
    } else {
        f64::INFINITY
    }
}

/// One-step map of the Lindblad dynamics over [t_k, t_k + dt].
///
/// RK4 integrates the no-jump propagator dV/dt = −iA(t)V from V = 1; the
/// state then advances as ρ ↦ VρV† + (Tr ρ − Tr VρV†)|0⟩⟨0|. The ground row
/// and column of A vanish, so V = 1 ⊕ M. The map is fourth-order accurate,
/// trace preserving and completely positive up to the sign of the recycled
/// trace, and its Hilbert–Schmidt adjoint is exact.
///
/// Without dissipation the RK4 polynomial is only unitary to O(dt⁶); such
/// steps are projected back onto the unitaries and recycle nothing, so the
/// excitation number is conserved exactly.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepMap {
    v: Mat4,
    v_adj: Mat4,
    closed: bool,
}

impl StepMap {
    pub(crate) fn new(g0: &Generator, gm: &Generator, g1: &Generator, dt: f64) -> Self {
        let mi = Complex64::new(0.0, -1.0);
        let h = Complex64::new(dt, 0.0);
        let half = Complex64::new(0.5 * dt, 0.0);
        let id = Mat4::identity();
        let k1 = g0.no_jump() * mi;
        let k2 = gm.no_jump() * (id + k1 * half) * mi;
        let k3 = gm.no_jump() * (id + k2 * half) * mi;
        let k4 = g1.no_jump() * (id + k3 * h) * mi;
        let mut v = id + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * (h / 6.0);
        let closed = [g0, gm, g1].iter().all(|g| g.rates.max() == 0.0);
        if closed {
            // First-order polar correction; the residual is O(dt¹²).
            let defect = id - v.adjoint() * v;
            v *= id + defect * Complex64::new(0.5, 0.0);
        }
        Self { v, v_adj: v.adjoint(), closed }
    }

    #[inline]
    pub(crate) fn forward(&self, rho: &mut Mat4) {
        let before = trace(rho);
        let mut out = self.v * *rho * self.v_adj;
        if !self.closed {
            let lost = before - trace(&out);
            out[(GROUND, GROUND)] += lost;
        }
        *rho = out;
    }

    /// Adjoint map χ ↦ V†χV + χ_00(1 − V†V).
    #[inline]
    pub(crate) fn backward(&self, chi: &mut Mat4) {
        let mut out = self.v_adj * *chi * self.v;
        if !self.closed {
            let c00 = chi[(GROUND, GROUND)];
            out += (Mat4::identity() - self.v_adj * self.v) * c00;
        }
        *chi = out;
    }
}

/// Forward propagation of several states under shared generators. The
/// observer sees every grid point with the generator built there.
pub(crate) fn evolve_forward<F>(
    states: &mut [Mat4],
    controls: &ControlSet,
    params: &CircuitParams,
    opts: &PropagationOptions,
    mut observe: F,
) -> Result<InvariantReport>
where
    F: FnMut(usize, &Generator, &[Mat4]),
{
    let src = GeneratorSource::new(controls, params, opts);
    let n = controls.grid().n_steps();
    let dt = src.dt;
    let mut monitor = InvariantMonitor::new(states, opts.check_invariants);
    monitor.check(states, true)?;
    let mut g0 = src.at(0)?;
    observe(0, &g0, states);
    for k in 0..n {
        let gm = src.midpoint(k)?;
        let g1 = src.at(k + 1)?;
        let map = StepMap::new(&g0, &gm, &g1, dt);
        for s in states.iter_mut() {
            map.forward(s);
        }
        monitor.check(states, k + 1 == n)?;
        observe(k + 1, &g1, states);
        g0 = g1;
    }
    Ok(monitor.report())
}

/// Eigenstate-resolved record of a forward propagation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: crate::controls::TimeGrid,
    /// Grid indices of the entries of `states`.
    pub state_indices: Vec<usize>,
    pub states: Vec<DensityMatrix>,
    /// (p_0, p_1, p_2, p_3): ground and instantaneous eigenstate populations at every grid point.
    pub populations: Vec<[f64; 4]>,
    pub rates: Vec<RateSet>,
    pub invariants: InvariantReport,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory always stores its final state")
    }

    /// Population left outside the ground state at the final time.
    pub fn excited_fraction(&self) -> f64 {
        1.0 - self.final_state().ground_population()
    }
}

/// Co-states on every grid point, index-aligned with the time grid.
#[derive(Debug, Clone)]
pub struct CoStateTrajectory {
    pub grid: crate::controls::TimeGrid,
    pub states: Vec<CoState>,
}

pub fn propagate_forward(rho0: &DensityMatrix, controls: &ControlSet, params: &CircuitParams) -> Result<Trajectory> {
    propagate_forward_with(rho0, controls, params, &PropagationOptions::default())
}

pub fn propagate_forward_with(
    rho0: &DensityMatrix,
    controls: &ControlSet,
    params: &CircuitParams,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    let grid = *controls.grid();
    let n = grid.n_steps();
    let stride = opts.state_stride.max(1);
    let mut state_indices = Vec::new();
    let mut states = Vec::new();
    let mut populations = Vec::with_capacity(n + 1);
    let mut rates = Vec::with_capacity(n + 1);
    let mut buf = [*rho0.matrix()];
    let invariants = evolve_forward(&mut buf, controls, params, opts, |k, g, s| {
        let rho = &s[0];
        populations.push([
            rho[(GROUND, GROUND)].re,
            g.eigen.population(0, rho),
            g.eigen.population(1, rho),
            g.eigen.population(2, rho),
        ]);
        rates.push(g.rates);
        if k % stride == 0 || k == n {
            state_indices.push(k);
            states.push(DensityMatrix::from_raw(*rho));
        }
    })?;
    Ok(Trajectory { grid, state_indices, states, populations, rates, invariants })
}

pub fn propagate_adjoint(chi_tau: &CoState, controls: &ControlSet, params: &CircuitParams) -> Result<CoStateTrajectory> {
    propagate_adjoint_with(chi_tau, controls, params, &PropagationOptions::default())
}

pub fn propagate_adjoint_with(
    chi_tau: &CoState,
    controls: &ControlSet,
    params: &CircuitParams,
    opts: &PropagationOptions,
) -> Result<CoStateTrajectory> {
    let grid = *controls.grid();
    let n = grid.n_steps();
    let src = GeneratorSource::new(controls, params, opts);
    let mut states = vec![*chi_tau; n + 1];
    let mut chi = *chi_tau.matrix();
    let mut g1 = src.at(n)?;
    for k in (0..n).rev() {
        let gm = src.midpoint(k)?;
        let g0 = src.at(k)?;
        StepMap::new(&g0, &gm, &g1, src.dt).backward(&mut chi);
        states[k] = CoState::new(chi);
        g1 = g0;
    }
    Ok(CoStateTrajectory { grid, states })
}

/// Outcome of a reset-error evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetReport {
    /// α_τ, the mean population left in the excited manifold.
    pub alpha: f64,
    /// 1 − ⟨ρ_trg, ρ_l(τ)⟩ for each initial basis state of the excited manifold.
    pub remaining: [f64; 3],
    pub invariants: InvariantReport,
}

/// α_τ = 1 − (1/3) Σ_l ⟨ρ_trg, D(τ,0)ρ_l⟩ over the three excited basis states.
pub fn reset_error(controls: &ControlSet, params: &CircuitParams) -> Result<f64> {
    reset_error_with(controls, params, &PropagationOptions::default()).map(|r| r.alpha)
}

pub fn reset_error_with(controls: &ControlSet, params: &CircuitParams, opts: &PropagationOptions) -> Result<ResetReport> {
    let mut states = [super::basis_projector(1), super::basis_projector(2), super::basis_projector(3)];
    let invariants = evolve_forward(&mut states, controls, params, opts, |_, _, _| {})?;
    let mut remaining = [0.0; 3];
    for (r, s) in remaining.iter_mut().zip(&states) {
        *r = 1.0 - s[(GROUND, GROUND)].re;
    }
    let alpha = remaining.iter().sum::<f64>() / 3.0;
    Ok(ResetReport { alpha, remaining, invariants })
}

/// α_τ from the single mixed state P_1/3, which equals the basis average by
/// linearity of the dynamics.
pub fn reset_error_mixed(controls: &ControlSet, params: &CircuitParams, opts: &PropagationOptions) -> Result<ResetReport> {
    let mut states = [mixed_excited_state()];
    let invariants = evolve_forward(&mut states, controls, params, opts, |_, _, _| {})?;
    let alpha = 1.0 - states[0][(GROUND, GROUND)].re;
    Ok(ResetReport { alpha, remaining: [alpha; 3], invariants })
}

/// P_1/3, the uniform mixture of the excited basis states.
pub fn mixed_excited_state() -> Mat4 {
    let mut m = Mat4::zeros();
    for d in 1..4 {
        m[(d, d)] = Complex64::new(1.0 / 3.0, 0.0);
    }
    m
}
