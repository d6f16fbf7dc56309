//! Lindblad dynamics of the four-level reset model.
//!
//! States are propagated in the static basis with a fixed-step fourth-order
//! Runge–Kutta scheme applied to the no-jump propagator. The instantaneous eigensystem only enters through the
//! jump operators |Ψ_0⟩⟨Ψ_i| and their rates. Co-states obey the
//! Hilbert–Schmidt adjoint equation, which keeps ⟨χ(t), ρ(t)⟩ constant.

mod density;
mod generator;
mod integrate;

pub use density::{basis_projector, hermiticity_error, hs_inner, min_eigenvalue, trace, CoState, DensityMatrix};
pub use generator::{Frame, Generator, GeneratorDerivative};
pub use integrate::{
    mixed_excited_state, propagate_adjoint, propagate_adjoint_with, propagate_forward, propagate_forward_with,
    required_dt, reset_error, reset_error_mixed, reset_error_with, CoStateTrajectory, InvariantReport,
    PropagationOptions, ResetReport, Trajectory, HERMITICITY_TOL, POSITIVITY_TOL, STIFFNESS_LIMIT, TRACE_TOL,
};
#[allow(unused_imports)]
pub(crate) use integrate::{GeneratorSource, InvariantMonitor, StepMap};

use crate::controls::ControlSet;
use crate::error::Result;
use crate::model::{CircuitParams, Control, ControlPoint, Mat4};

/// dρ/dt in the laboratory frame.
pub fn lindbladian_apply(rho: &DensityMatrix, controls: ControlPoint, params: &CircuitParams) -> Result<Mat4> {
    Ok(Generator::new(controls, params, Frame::Lab)?.apply(rho.matrix()))
}

/// ∂(dρ/dt)/∂ω_c at fixed ρ.
pub fn liouvillian_gradient(
    rho: &DensityMatrix,
    controls: ControlPoint,
    params: &CircuitParams,
    which: Control,
) -> Result<Mat4> {
    let g = Generator::new(controls, params, Frame::Lab)?;
    Ok(g.derivative(params, which)?.apply(rho.matrix()))
}

/// Checks the step condition for a whole control set without propagating.
pub fn check_step(controls: &ControlSet, params: &CircuitParams, opts: &PropagationOptions) -> Result<()> {
    let src = GeneratorSource::new(controls, params, opts);
    for k in 0..controls.grid().len() {
        src.at(k)?;
    }
    Ok(())
}
