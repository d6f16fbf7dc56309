use nalgebra::Matrix3;
use num_complex::Complex64;

use super::{CircuitParams, ControlPoint, Mat3, Mat4};
use crate::error::Result;

/// Rotating-wave Hamiltonian on span{|0,0,g⟩, |0,0,e⟩, |0,1,g⟩, |1,0,g⟩}.
/// Couplings are held at the device constants g_Rq and g_LR0.
pub fn build_hamiltonian(controls: ControlPoint, params: &CircuitParams) -> Result<Mat4> {
    controls.validate()?;
    let b = excited_block(controls, params);
    let mut h = Mat4::zeros();
    h.fixed_view_mut::<3, 3>(1, 1).copy_from(&b);
    Ok(h)
}

/// The 3×3 single-excitation block in the basis (|0,0,e⟩, |0,1,g⟩, |1,0,g⟩).
pub fn excited_block(controls: ControlPoint, params: &CircuitParams) -> Mat3 {
    let z = Complex64::new(0.0, 0.0);
    let re = |x: f64| Complex64::new(x, 0.0);
    let g = params.g_rq;
    let gl = params.g_lr0;
    Matrix3::new(
        re(controls.omega_q),
        Complex64::new(0.0, -g),
        z,
        Complex64::new(0.0, g),
        re(controls.omega_r),
        re(gl),
        z,
        re(gl),
        re(controls.omega_l),
    )
}
