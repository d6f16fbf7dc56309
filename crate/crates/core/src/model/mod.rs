//! Restricted four-level model: Hamiltonian on H_0 ⊕ H_1, its instantaneous
//! eigensystem, and the engineered decay rates.

mod eigen;
mod hamiltonian;
mod params;
mod rates;

pub use eigen::{
    eigen_derivatives, eigen_derivatives_along, eigensystem, hermitian_eigen3, EigenDerivatives,
    EigenSystem, Gauge, DEGENERACY_WARN_REL, PERTURBATION_GAP_REL,
};
pub(crate) use eigen::block_eigensystem;
pub use hamiltonian::{build_hamiltonian, excited_block};
pub use params::{CircuitParams, Control, ControlPoint};
pub use rates::{
    coupling_elements, decay_rates, decay_rates_unchecked, detailed_balance_ratio,
    rate_derivatives, thermal_factor, RateSet,
};

use nalgebra::{Matrix3, Matrix4, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
pub type Mat3 = Matrix3<C64>;
pub type Vec3 = Vector3<C64>;

/// Index of the ground state |0,0,g⟩ in the static basis.
pub const GROUND: usize = 0;

/// Static-basis labels, in storage order.
pub const BASIS_LABELS: [&str; 4] = ["|0,0,g>", "|0,0,e>", "|0,1,g>", "|1,0,g>"];
