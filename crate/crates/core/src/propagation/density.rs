use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Mat4, GROUND};

/// Hilbert–Schmidt inner product ⟨A, B⟩ = Tr(A†B).
pub fn hs_inner(a: &Mat4, b: &Mat4) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += a[(i, j)].conj() * b[(i, j)];
        }
    }
    acc
}

pub fn trace(m: &Mat4) -> Complex64 {
    m[(0, 0)] + m[(1, 1)] + m[(2, 2)] + m[(3, 3)]
}

/// Frobenius norm of ρ − ρ†.
pub fn hermiticity_error(m: &Mat4) -> f64 {
    (m - m.adjoint()).norm()
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &Mat4) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let decoupled = (1..4).all(|k| h[(GROUND, k)].norm() == 0.0);
    if decoupled {
        let block = h.fixed_view::<3, 3>(1, 1).into_owned();
        let (ev, _) = crate::model::hermitian_eigen3(&block);
        ev[0].min(h[(0, 0)].re)
    } else {
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Projector |b_k⟩⟨b_k| onto a static basis state.
pub fn basis_projector(k: usize) -> Mat4 {
    let mut m = Matrix4::zeros();
    m[(k, k)] = Complex64::new(1.0, 0.0);
    m
}

/// 4×4 density matrix in the static basis (|0,0,g⟩, |0,0,e⟩, |0,1,g⟩, |1,0,g⟩).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    pub const HERMITICITY_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const POSITIVITY_TOL: f64 = 1e-10;

    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: Mat4) -> Result<Self> {
        let herm = hermiticity_error(&m);
        if herm > Self::HERMITICITY_TOL {
            return Err(Error::InvalidInput(format!("density matrix not Hermitian (‖ρ−ρ†‖ = {herm:.3e})")));
        }
        let tr = trace(&m);
        if (tr - Complex64::new(1.0, 0.0)).norm() > Self::TRACE_TOL {
            return Err(Error::InvalidInput(format!("density matrix trace {tr} ≠ 1")));
        }
        let min = min_eigenvalue(&m);
        if min < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidInput(format!("density matrix not positive (min eigenvalue {min:.3e})")));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_raw(m: Mat4) -> Self {
        Self(m)
    }

    pub fn basis_state(k: usize) -> Self {
        Self(basis_projector(k))
    }

    pub fn ground() -> Self {
        Self::basis_state(GROUND)
    }

    /// Pure state |ψ⟩⟨ψ| for a normalized four-component amplitude vector.
    pub fn pure(psi: &nalgebra::Vector4<Complex64>) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let v = psi.unscale(n);
        Ok(Self(v * v.adjoint()))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace(&self.0).re
    }

    pub fn purity(&self) -> f64 {
        hs_inner(&self.0, &self.0).re
    }

    /// Static-basis populations (p_g, p_e, p_R, p_L).
    pub fn diagonal(&self) -> [f64; 4] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re, self.0[(3, 3)].re]
    }

    pub fn ground_population(&self) -> f64 {
        self.0[(GROUND, GROUND)].re
    }
}

/// Adjoint variable of the forward state; not trace normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoState(Mat4);

impl CoState {
    pub fn new(m: Mat4) -> Self {
        Self(m)
    }

    /// The reset target ρ_trg = |Ψ_0⟩⟨Ψ_0|, scaled.
    pub fn target(scale: f64) -> Self {
        Self(basis_projector(GROUND) * Complex64::new(scale, 0.0))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn pairing(&self, rho: &DensityMatrix) -> Complex64 {
        hs_inner(&self.0, rho.matrix())
    }
}
