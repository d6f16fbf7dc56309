//! Krotov optimization of the reset error with sequential field updates.
//!
//! The functional is J = α_τ + Σ_k ∫ (λ_k/S_k)(ε_k − ε_k^ref)² dt with the
//! previous iterate as reference. All initial states share the co-state
//! boundary ρ_trg/3, so one co-state χ(τ) = ρ_trg paired with the mixed state
//! P_1/3 carries the whole update:
//!
//! Δε_k(t) = S_k(t)/(2λ_k) · Re⟨χ^old(t), ∂_k G ρ^new(t)⟩.

use serde::{Deserialize, Serialize};

use crate::controls::{ControlSet, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{CircuitParams, Control, ControlPoint, Mat4, GROUND};
use crate::propagation::{
    mixed_excited_state, propagate_adjoint_with, CoState, Generator, GeneratorSource, InvariantMonitor,
    InvariantReport, PropagationOptions, StepMap,
};
use crate::protocols::smoothstep;
use crate::units::mhz_to_angular;

/// Floor applied to S_k(t) inside the running cost.
pub const SHAPE_FLOOR: f64 = 1e-6;

/// Update shape S(t) ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Flat,
    /// Smoothstep switch-on over `[0, t_ramp]` and switch-off over `[τ − t_ramp, τ]`.
    SmoothRamps { t_ramp: f64 },
}

impl Default for Shape {
    fn default() -> Self {
        Shape::SmoothRamps { t_ramp: 5e-9 }
    }
}

impl Shape {
    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        let tau = grid.tau();
        grid.times()
            .map(|t| match *self {
                Shape::Flat => 1.0,
                Shape::SmoothRamps { t_ramp } => {
                    let up = smoothstep((t / t_ramp).clamp(0.0, 1.0));
                    let down = smoothstep(((tau - t) / t_ramp).clamp(0.0, 1.0));
                    up * down
                }
            })
            .collect()
    }
}

/// How the step weights λ_k are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaChoice {
    /// λ_k such that the largest first-iteration update of control k is
    /// `target_update` (rad/s).
    Auto { target_update: f64 },
    /// Explicit λ_k per control, indexed as `Control::ALL`.
    Fixed([f64; 3]),
}

/// Default linearized first-iteration update. The fixed-point refinement
/// damps the realized updates to about 2π·1 MHz.
pub const DEFAULT_TARGET_UPDATE_MHZ: f64 = 300.0;

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto { target_update: mhz_to_angular(DEFAULT_TARGET_UPDATE_MHZ) }
    }
}

/// Step control for λ: a sweep that raises J or leaves the valid parameter
/// range is discarded and retried with λ multiplied by `grow`; every accepted
/// sweep divides λ by `shrink`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaAdapt {
    pub grow: f64,
    pub shrink: f64,
    pub max_retries: usize,
}

impl Default for LambdaAdapt {
    fn default() -> Self {
        Self { grow: 4.0, shrink: 1.25, max_retries: 12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrotovConfig {
    pub lambda: LambdaChoice,
    /// `None` turns a rejected sweep into a monotonicity error.
    pub adapt: Option<LambdaAdapt>,
    pub shape: Shape,
    pub max_iter: usize,
    pub stop_delta_j: f64,
    pub stop_alpha: f64,
    /// Allowed increase of J between iterations before failing.
    pub monotonic_slack: f64,
    pub propagation: PropagationOptions,
}

impl Default for KrotovConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaChoice::default(),
            adapt: Some(LambdaAdapt::default()),
            shape: Shape::default(),
            max_iter: 500,
            stop_delta_j: 1e-12,
            stop_alpha: 1e-8,
            monotonic_slack: 1e-12,
            propagation: PropagationOptions { check_invariants: true, state_stride: usize::MAX, ..Default::default() },
        }
    }
}

/// λ_k and the sampled shape, resolved for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub lambda: [f64; 3],
    pub shape: Vec<f64>,
}

impl Weights {
    pub fn new(lambda: [f64; 3], shape: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput(format!("lambda must be positive and finite, got {lambda:?}")));
        }
        if shape.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput("shape values must lie in [0, 1]".into()));
        }
        Ok(Self { lambda, shape })
    }

    pub fn lambda_of(&self, c: Control) -> f64 {
        self.lambda[index(c)]
    }
}

fn index(c: Control) -> usize {
    match c {
        Control::L => 0,
        Control::R => 1,
        Control::Q => 2,
    }
}

/// Σ_k ∫ (λ_k/S_k)(ε_k − ε_k^ref)² dt over the active controls, trapezoidal.
pub fn running_cost(controls: &ControlSet, reference: &ControlSet, weights: &Weights) -> Result<f64> {
    let grid = controls.grid();
    if grid != reference.grid() || weights.shape.len() != grid.len() {
        return Err(Error::InvalidInput("running cost needs a shared grid".into()));
    }
    let mut total = 0.0;
    for &c in controls.active() {
        let (a, b) = (controls.series(c), reference.series(c));
        let lambda = weights.lambda_of(c);
        for k in 0..grid.len() {
            let d = a[k] - b[k];
            if d != 0.0 {
                total += grid.trapezoid_weight(k) * lambda / weights.shape[k].max(SHAPE_FLOOR) * d * d;
            }
        }
    }
    Ok(total)
}

/// J = α_τ + running cost.
pub fn total_functional(
    controls: &ControlSet,
    reference: &ControlSet,
    weights: &Weights,
    params: &CircuitParams,
    opts: &PropagationOptions,
) -> Result<f64> {
    let alpha = crate::propagation::reset_error_mixed(controls, params, opts)?.alpha;
    Ok(alpha + running_cost(controls, reference, weights)?)
}

/// Re⟨χ(t_k), ∂_c G ρ(t_k)⟩ on every grid point for each active control:
/// the negative functional derivative −δα_τ/δε_c(t).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub alpha: f64,
    pub controls: Vec<Control>,
    pub values: Vec<Vec<f64>>,
}

pub fn field_gradient(fields: &ControlSet, params: &CircuitParams, opts: &PropagationOptions) -> Result<FieldGradient> {
    let chi = propagate_adjoint_with(&CoState::target(1.0), fields, params, opts)?;
    let src = GeneratorSource::new(fields, params, opts);
    let n = fields.grid().n_steps();
    let active = fields.active().to_vec();
    let mut values = vec![vec![0.0; n + 1]; active.len()];
    let mut rho = mixed_excited_state();
    let mut g0 = src.at(0)?;
    for k in 0..=n {
        for (j, &c) in active.iter().enumerate() {
            values[j][k] = g0.derivative(params, c)?.pairing(chi.states[k].matrix(), &rho);
        }
        if k < n {
            let gm = src.midpoint(k)?;
            let g1 = src.at(k + 1)?;
            StepMap::new(&g0, &gm, &g1, src.dt).forward(&mut rho);
            g0 = g1;
        }
    }
    Ok(FieldGradient { alpha: 1.0 - rho[(GROUND, GROUND)].re, controls: active, values })
}

/// λ_k from a dry run so that max_t S(t)|gradient|/(2λ_k) = target.
pub fn calibrate_lambda(
    fields: &ControlSet,
    shape: &[f64],
    target_update: f64,
    params: &CircuitParams,
    opts: &PropagationOptions,
) -> Result<[f64; 3]> {
    if !(target_update > 0.0) {
        return Err(Error::InvalidInput("target update must be positive".into()));
    }
    let grad = field_gradient(fields, params, opts)?;
    let mut lambda = [1.0; 3];
    for (j, &c) in grad.controls.iter().enumerate() {
        let peak = grad.values[j].iter().zip(shape).map(|(g, s)| (g * s).abs()).fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gradient of omega_{} vanishes; lambda cannot be calibrated",
                c.label()
            )));
        }
        lambda[index(c)] = peak / (2.0 * target_update);
    }
    Ok(lambda)
}

pub fn resolve_weights(
    fields: &ControlSet,
    cfg: &KrotovConfig,
    params: &CircuitParams,
) -> Result<Weights> {
    let shape = cfg.shape.sample(fields.grid());
    let lambda = match &cfg.lambda {
        LambdaChoice::Fixed(l) => *l,
        LambdaChoice::Auto { target_update } => {
            calibrate_lambda(fields, &shape, *target_update, params, &cfg.propagation)?
        }
    };
    Weights::new(lambda, shape)
}

/// Outcome of one sequential sweep.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub fields: ControlSet,
    pub alpha: f64,
    pub running_cost: f64,
    /// Largest |Δε| per control, indexed as `Control::ALL`.
    pub max_update: [f64; 3],
    pub invariants: InvariantReport,
}

impl StepOutcome {
    pub fn functional(&self) -> f64 {
        self.alpha + self.running_cost
    }
}

/// One Krotov iteration: backward co-state under the old fields, then a
/// forward sweep updating every active field sample in time order.
pub fn krotov_step(
    fields: &ControlSet,
    weights: &Weights,
    params: &CircuitParams,
    opts: &PropagationOptions,
) -> Result<StepOutcome> {
    let grid = *fields.grid();
    if weights.shape.len() != grid.len() {
        return Err(Error::InvalidInput("shape is sampled on a different grid".into()));
    }
    let chi = propagate_adjoint_with(&CoState::target(1.0), fields, params, opts)?;
    let chi: Vec<Mat4> = chi.states.into_iter().map(CoState::into_matrix).collect();
    let active = fields.active().to_vec();
    let n = grid.n_steps();
    let dt = grid.dt();
    let src = GeneratorSource::new(fields, params, opts);
    let mut new = fields.clone();
    let mut rho = mixed_excited_state();
    let mut monitor = InvariantMonitor::new(std::slice::from_ref(&rho), opts.check_invariants);
    let mut max_update = [0.0f64; 3];

    let update = |point: &mut ControlPoint, k: usize, g: &Generator, rho: &Mat4| -> Result<()> {
        let s = weights.shape[k];
        let mut grads = [0.0; 3];
        for &c in &active {
            grads[index(c)] = g.derivative(params, c)?.pairing(&chi[k], rho);
        }
        for &c in &active {
            point.set(c, fields.series(c)[k] + s / (2.0 * weights.lambda_of(c)) * grads[index(c)]);
        }
        Ok(())
    };
    let gated = |k: usize| active.is_empty() || weights.shape[k] == 0.0;

    // t = 0: ρ is fixed, only the generator depends on the new value.
    let mut point = fields.at(0);
    let mut g0 = src.build(point)?;
    if !gated(0) {
        for pass in 0..2 {
            update(&mut point, 0, &g0, &rho)?;
            g0 = if pass == 0 { src.build_unchecked(point)? } else { src.build(point)? };
        }
        store(&mut new, 0, point, fields, &mut max_update);
    }

    for k in 0..n {
        let start = new.at(k);
        let mut next = fields.at(k + 1);
        if !gated(k + 1) {
            for _ in 0..2 {
                let gm = src.build_unchecked(ControlPoint::lerp(start, next, 0.5))?;
                let g1 = src.build_unchecked(next)?;
                let mut trial = rho;
                StepMap::new(&g0, &gm, &g1, dt).forward(&mut trial);
                update(&mut next, k + 1, &g1, &trial)?;
            }
            store(&mut new, k + 1, next, fields, &mut max_update);
        }
        let gm = src.build(ControlPoint::lerp(start, next, 0.5))?;
        let g1 = src.build(next)?;
        StepMap::new(&g0, &gm, &g1, dt).forward(&mut rho);
        monitor.check(std::slice::from_ref(&rho), k + 1 == n)?;
        g0 = g1;
    }
    new.validate()?;
    let running_cost = running_cost(&new, fields, weights)?;
    Ok(StepOutcome {
        alpha: 1.0 - rho[(GROUND, GROUND)].re,
        fields: new,
        running_cost,
        max_update,
        invariants: monitor.report(),
    })
}

fn store(new: &mut ControlSet, k: usize, point: ControlPoint, old: &ControlSet, max_update: &mut [f64; 3]) {
    for &c in old.active() {
        let v = point.get(c);
        new.series_mut(c)[k] = v;
        let i = index(c);
        max_update[i] = max_update[i].max((v - old.series(c)[k]).abs());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    DeltaJ,
    TargetAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub functional: f64,
    pub alpha: f64,
    pub running_cost: f64,
    /// Largest field change per control (rad/s), ordered L, R, q.
    pub max_update: [f64; 3],
    /// λ used for this sweep, ordered L, R, q.
    pub lambda: [f64; 3],
    /// Sweeps discarded before this one was accepted.
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizationRecord {
    pub iterations: Vec<IterationRecord>,
    pub lambda: [f64; 3],
    pub stop_reason: StopReason,
    pub invariants: InvariantReport,
    pub final_controls: ControlSet,
}

impl OptimizationRecord {
    pub fn initial_alpha(&self) -> f64 {
        self.iterations[0].alpha
    }

    pub fn final_alpha(&self) -> f64 {
        self.iterations.last().map(|r| r.alpha).unwrap_or(f64::NAN)
    }

    /// True when J never rose by more than `slack` between iterations.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.iterations.windows(2).all(|w| w[1].functional <= w[0].functional + slack)
    }
}

/// Iterates [`krotov_step`] until a stopping criterion is met.
pub fn optimize(guess: &ControlSet, cfg: &KrotovConfig, params: &CircuitParams) -> Result<OptimizationRecord> {
    optimize_with_progress(guess, cfg, params, |_| {})
}

pub fn optimize_with_progress(
    guess: &ControlSet,
    cfg: &KrotovConfig,
    params: &CircuitParams,
    mut progress: impl FnMut(&IterationRecord),
) -> Result<OptimizationRecord> {
    let opts = &cfg.propagation;
    let mut weights = resolve_weights(guess, cfg, params)?;
    let start = crate::propagation::reset_error_mixed(guess, params, opts)?;
    let mut invariants = start.invariants;
    let first = IterationRecord {
        iteration: 0,
        functional: start.alpha,
        alpha: start.alpha,
        running_cost: 0.0,
        max_update: [0.0; 3],
        lambda: weights.lambda,
        rejected: 0,
    };
    progress(&first);
    let mut iterations = vec![first];
    let mut fields = guess.clone();
    let mut stop_reason = StopReason::MaxIterations;
    if start.alpha <= cfg.stop_alpha {
        stop_reason = StopReason::TargetAlpha;
    } else {
        for i in 1..=cfg.max_iter {
            let prev = iterations.last().expect("non-empty").clone();
            let mut rejected = 0;
            let out = loop {
                let attempt = krotov_step(&fields, &weights, params, opts);
                let failure = match attempt {
                    Ok(out) if out.functional() <= prev.functional + cfg.monotonic_slack => break out,
                    Ok(out) => Error::Monotonicity { iteration: i, previous: prev.functional, current: out.functional() },
                    Err(e) if recoverable(&e) => e,
                    Err(e) => return Err(e),
                };
                match cfg.adapt {
                    Some(a) if rejected < a.max_retries => {
                        log::debug!("iteration {i}: sweep rejected ({failure}); raising lambda by {}", a.grow);
                        rejected += 1;
                        weights.lambda.iter_mut().for_each(|l| *l *= a.grow);
                    }
                    _ => return Err(failure),
                }
            };
            invariants.merge(&out.invariants);
            let j = out.functional();
            let rec = IterationRecord {
                iteration: i,
                functional: j,
                alpha: out.alpha,
                running_cost: out.running_cost,
                max_update: out.max_update,
                lambda: weights.lambda,
                rejected,
            };
            log::debug!("iteration {i}: J = {j:.6e}, alpha = {:.6e}", out.alpha);
            progress(&rec);
            iterations.push(rec);
            fields = out.fields;
            if let Some(a) = cfg.adapt {
                weights.lambda.iter_mut().for_each(|l| *l /= a.shrink);
            }
            if out.alpha <= cfg.stop_alpha {
                stop_reason = StopReason::TargetAlpha;
                break;
            }
            if (prev.functional - j).abs() < cfg.stop_delta_j {
                stop_reason = StopReason::DeltaJ;
                break;
            }
        }
    }
    let lambda = iterations.last().map(|r| r.lambda).unwrap_or(weights.lambda);
    Ok(OptimizationRecord { iterations, lambda, stop_reason, invariants, final_controls: fields })
}

/// Failures caused by the trial fields rather than by the inputs.
fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidInput(_) | Error::ModelValidity(_) | Error::NearDegeneracy { .. } | Error::StepSize { .. }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::reset_error_mixed;
    use crate::protocols::{ramp, solve_operation_points};
    use crate::units::ns;

    fn short_protocol(p: &CircuitParams, active: &[Control]) -> ControlSet {
        let ops = solve_operation_points(p).unwrap();
        let tau = ns(30.0);
        ControlSet::from_fn(
            TimeGrid::new(tau, ns(0.005)).unwrap(),
            |t| {
                let w = if t < tau / 2.0 {
                    ramp(t, 0.0, ns(1.0), p.omega_l0, ops.omega_plus)
                } else if t < tau - ns(1.0) {
                    ramp(t, tau / 2.0, tau / 2.0 + ns(1.0), ops.omega_plus, ops.omega_minus)
                } else {
                    ramp(t, tau - ns(1.0), tau, ops.omega_minus, p.omega_l0)
                };
                ControlPoint::new(w, p.omega_r0, p.omega_q0)
            },
            active,
        )
        .unwrap()
    }

    fn quick_cfg() -> KrotovConfig {
        KrotovConfig { shape: Shape::SmoothRamps { t_ramp: ns(2.0) }, ..Default::default() }
    }

    #[test]
    fn running_cost_closed_forms() {
        let p = CircuitParams::reference_device();
        let grid = TimeGrid::new(ns(10.0), ns(0.01)).unwrap();
        let base = ControlSet::constant(grid, p.bare_controls(), &[Control::L]).unwrap();
        let flat = Weights::new([2.0, 1.0, 1.0], Shape::Flat.sample(&grid)).unwrap();
        assert_eq!(running_cost(&base, &base, &flat).unwrap(), 0.0);
        let delta = 1e6;
        let shifted = ControlSet::constant(
            grid,
            ControlPoint::new(p.omega_l0 + delta, p.omega_r0, p.omega_q0),
            &[Control::L],
        )
        .unwrap();
        let cost = running_cost(&shifted, &base, &flat).unwrap();
        assert!((cost - 2.0 * delta * delta * ns(10.0)).abs() <= 1e-12 * cost);
        let double = Weights::new([4.0, 1.0, 1.0], flat.shape.clone()).unwrap();
        assert!((running_cost(&shifted, &base, &double).unwrap() - 2.0 * cost).abs() <= 1e-12 * cost);
        assert!(Weights::new([0.0, 1.0, 1.0], flat.shape.clone()).is_err());
    }

    #[test]
    fn shape_vanishes_at_ends() {
        let grid = TimeGrid::new(ns(30.0), ns(0.005)).unwrap();
        let s = Shape::default().sample(&grid);
        assert_eq!(s[0], 0.0);
        assert_eq!(*s.last().unwrap(), 0.0);
        assert_eq!(s[grid.len() / 2], 1.0);
        assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = CircuitParams::reference_device();
        let fields = short_protocol(&p, &Control::ALL);
        let opts = PropagationOptions { state_stride: usize::MAX, ..Default::default() };
        let grad = field_gradient(&fields, &p, &opts).unwrap();
        let dt = fields.grid().dt();
        let alpha = |f: &ControlSet| reset_error_mixed(f, &p, &opts).unwrap().alpha;
        assert!((alpha(&fields) - grad.alpha).abs() < 1e-15);
        for (j, &c) in grad.controls.iter().enumerate() {
            for k in [1500, 3000, 4500] {
                let an = -grad.values[j][k] * dt;
                let mut best = f64::INFINITY;
                for delta in [1e7, 3e6, 1e6] {
                    let mut plus = fields.clone();
                    plus.series_mut(c)[k] += delta;
                    let mut minus = fields.clone();
                    minus.series_mut(c)[k] -= delta;
                    let fd = (alpha(&plus) - alpha(&minus)) / (2.0 * delta);
                    best = best.min(((fd - an) / an).abs());
                }
                assert!(best <= 1e-4, "{c:?} at {k}: relative error {best:e}");
            }
        }
    }

    #[test]
    fn frozen_update_for_huge_lambda() {
        let p = CircuitParams::reference_device();
        let fields = short_protocol(&p, &[Control::L]);
        let w = Weights::new([1e300; 3], Shape::default().sample(fields.grid())).unwrap();
        let out = krotov_step(&fields, &w, &p, &PropagationOptions::default()).unwrap();
        assert_eq!(out.fields, fields);
        assert_eq!(out.running_cost, 0.0);
        let alpha = reset_error_mixed(&fields, &p, &PropagationOptions::default()).unwrap().alpha;
        assert!((out.alpha - alpha).abs() < 1e-15);
    }

    #[test]
    fn one_step_decreases_j_and_pins_endpoints() {
        let p = CircuitParams::reference_device();
        let fields = short_protocol(&p, &Control::ALL);
        let cfg = KrotovConfig { max_iter: 1, adapt: None, ..quick_cfg() };
        let rec = optimize(&fields, &cfg, &p).unwrap();
        assert_eq!(rec.iterations.len(), 2);
        assert!(rec.iterations[1].functional < rec.iterations[0].functional);
        let new = &rec.final_controls;
        for c in Control::ALL {
            let (a, b) = (new.series(c), fields.series(c));
            assert_eq!(a[0], b[0]);
            assert_eq!(a[a.len() - 1], b[b.len() - 1]);
            assert!(a.iter().zip(b).any(|(x, y)| x != y), "{c:?} never updated");
        }
    }

    #[test]
    fn inactive_controls_are_untouched() {
        let p = CircuitParams::reference_device();
        let fields = short_protocol(&p, &[Control::L]);
        let rec = optimize(&fields, &KrotovConfig { max_iter: 2, ..quick_cfg() }, &p).unwrap();
        assert_eq!(rec.final_controls.series(Control::R), fields.series(Control::R));
        assert_eq!(rec.final_controls.series(Control::Q), fields.series(Control::Q));
        assert!(rec.is_monotone(1e-12));
    }

    #[test]
    fn stopping_rules() {
        let p = CircuitParams::reference_device();
        let fields = short_protocol(&p, &[Control::L]);
        let none = optimize(&fields, &KrotovConfig { max_iter: 0, ..quick_cfg() }, &p).unwrap();
        assert_eq!(none.iterations.len(), 1);
        assert_eq!(none.final_controls, fields);
        let early = optimize(&fields, &KrotovConfig { stop_alpha: 0.99, ..quick_cfg() }, &p).unwrap();
        assert_eq!(early.stop_reason, StopReason::TargetAlpha);
        assert_eq!(early.iterations.len(), 1);
        let flat = optimize(&fields, &KrotovConfig { stop_delta_j: 1.0, ..quick_cfg() }, &p).unwrap();
        assert_eq!(flat.stop_reason, StopReason::DeltaJ);
        assert_eq!(flat.iterations.len(), 2);
    }

    #[test]
    fn rejected_sweeps_raise_lambda_or_fail() {
        let p = CircuitParams::reference_device();
        let fields = short_protocol(&p, &[Control::L]);
        let aggressive = LambdaChoice::Auto { target_update: mhz_to_angular(1e5) };
        let strict = KrotovConfig { max_iter: 1, lambda: aggressive.clone(), adapt: None, ..quick_cfg() };
        assert!(optimize(&fields, &strict, &p).is_err());
        let adaptive = KrotovConfig { max_iter: 1, lambda: aggressive, ..quick_cfg() };
        let rec = optimize(&fields, &adaptive, &p).unwrap();
        assert!(rec.iterations[1].rejected > 0);
        assert!(rec.iterations[1].lambda[0] > rec.iterations[0].lambda[0]);
        assert!(rec.is_monotone(1e-12));
    }

    #[test]
    fn vanishing_dissipation_gives_unit_functional() {
        let p = CircuitParams::reference_device().with_gamma0(0.0);
        let fields = short_protocol(&CircuitParams::reference_device(), &[Control::L]);
        let w = Weights::new([1.0; 3], Shape::default().sample(fields.grid())).unwrap();
        let j = total_functional(&fields, &fields, &w, &p, &PropagationOptions::default()).unwrap();
        assert_eq!(j, 1.0);
    }
}
