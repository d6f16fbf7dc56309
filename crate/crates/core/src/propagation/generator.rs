use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::error::Result;
use crate::model::{
    block_eigensystem, decay_rates, eigen_derivatives_along, excited_block, rate_derivatives,
    CircuitParams, Control, ControlPoint, EigenSystem, Mat4, RateSet, GROUND,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Reference frame in which states are propagated.
///
/// `MeanExcitation` co-rotates the single-excitation block at the mean bare
/// frequency (ω_L + ω_R + ω_q)/3. The transformation only rephases
/// ground–excited coherences, so populations, overlaps with the ground state
/// and all spectral invariants are frame independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    Lab,
    #[default]
    MeanExcitation,
}

impl Frame {
    pub fn shift(self, c: ControlPoint) -> f64 {
        match self {
            Frame::Lab => 0.0,
            Frame::MeanExcitation => (c.omega_l + c.omega_r + c.omega_q) / 3.0,
        }
    }
}

/// Lindblad generator at one control point:
/// G(ρ) = −i(Aρ − ρA†) + Tr(Kρ)|0⟩⟨0|, with A = H − iK/2 and
/// K = Σ_i Γ_i |Ψ_i⟩⟨Ψ_i|.
#[derive(Debug, Clone)]
pub struct Generator {
    pub controls: ControlPoint,
    pub eigen: EigenSystem,
    pub rates: RateSet,
    frame_shift: f64,
    k: Mat4,
    a: Mat4,
    a_adj: Mat4,
}

impl Generator {
    pub fn new(controls: ControlPoint, params: &CircuitParams, frame: Frame) -> Result<Self> {
        controls.validate()?;
        let block = excited_block(controls, params);
        let eigen = block_eigensystem(&block, None);
        Self::assemble(controls, params, frame, &block, eigen)
    }

    /// Builds the generator from an eigensystem of the block at `controls`,
    /// in whatever gauge it carries.
    pub fn from_eigen(controls: ControlPoint, params: &CircuitParams, frame: Frame, eigen: EigenSystem) -> Result<Self> {
        controls.validate()?;
        Self::assemble(controls, params, frame, &excited_block(controls, params), eigen)
    }

    fn assemble(
        controls: ControlPoint,
        params: &CircuitParams,
        frame: Frame,
        block: &crate::model::Mat3,
        eigen: EigenSystem,
    ) -> Result<Self> {
        let rates = decay_rates(&eigen, controls, params)?;
        let frame_shift = frame.shift(controls);
        let mut k = Matrix4::zeros();
        for i in 0..3 {
            let v = &eigen.states[i];
            let g = rates.gamma[i];
            for a in 0..3 {
                for b in 0..3 {
                    k[(a + 1, b + 1)] += v[a] * v[b].conj() * g;
                }
            }
        }
        let mut h = Matrix4::zeros();
        h.fixed_view_mut::<3, 3>(1, 1).copy_from(block);
        for d in 1..4 {
            h[(d, d)] -= Complex64::new(frame_shift, 0.0);
        }
        let a = h - k * (I * 0.5);
        Ok(Self { controls, eigen, rates, frame_shift, k, a, a_adj: a.adjoint() })
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    /// A = H − iK/2 in the propagation frame.
    pub fn no_jump(&self) -> &Mat4 {
        &self.a
    }

    pub fn dissipator_matrix(&self) -> &Mat4 {
        &self.k
    }

    /// Largest rate scale of the generator in its frame, max(‖H‖, max Γ_i).
    pub fn stiffness(&self) -> f64 {
        let h = self.eigen.omegas.iter().map(|w| (w - self.frame_shift).abs()).fold(0.0, f64::max);
        h.max(self.rates.max())
    }

    /// dρ/dt = G(ρ).
    #[inline]
    pub fn apply(&self, rho: &Mat4) -> Mat4 {
        let mut out = (self.a * rho - rho * self.a_adj) * (-I);
        out[(GROUND, GROUND)] += trace_product(&self.k, rho);
        out
    }

    /// Adjoint generator G†(χ) = i(A†χ − χA) + χ_00 K, so that
    /// ⟨χ, G(ρ)⟩ = ⟨G†(χ), ρ⟩.
    #[inline]
    pub fn apply_adjoint(&self, chi: &Mat4) -> Mat4 {
        (self.a_adj * chi - chi * self.a) * I + self.k * chi[(GROUND, GROUND)]
    }

    /// ∂G/∂ω_c at this point.
    pub fn derivative(&self, params: &CircuitParams, which: Control) -> Result<GeneratorDerivative> {
        let ed = eigen_derivatives_along(&self.eigen, which.basis_index())?;
        let dg = rate_derivatives(&self.eigen, &ed, self.controls, params, which);
        let mut dk = Matrix4::zeros();
        for i in 0..3 {
            let v = &self.eigen.states[i];
            let dv = &ed.d_states[i];
            let g = self.rates.gamma[i];
            for a in 0..3 {
                for b in 0..3 {
                    dk[(a + 1, b + 1)] +=
                        v[a] * v[b].conj() * dg[i] + (dv[a] * v[b].conj() + v[a] * dv[b].conj()) * g;
                }
            }
        }
        Ok(GeneratorDerivative { index: which.basis_index(), dk })
    }
}

/// Tr(Kρ) for a Hermitian K.
#[inline]
fn trace_product(k: &Mat4, rho: &Mat4) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 1..4 {
        for j in 1..4 {
            acc += k[(i, j)] * rho[(j, i)];
        }
    }
    acc
}

/// Derivative of the generator along one control frequency.
#[derive(Debug, Clone)]
pub struct GeneratorDerivative {
    index: usize,
    dk: Mat4,
}

impl GeneratorDerivative {
    /// ∂G(ρ) = −i[∂H, ρ] − ½{∂K, ρ} + Tr(∂K ρ)|0⟩⟨0|, with ∂H the unit
    /// projector on the controlled basis state.
    pub fn apply(&self, rho: &Mat4) -> Mat4 {
        let d = self.index;
        let mut out = (self.dk * rho + rho * self.dk) * Complex64::new(-0.5, 0.0);
        for j in 0..4 {
            out[(d, j)] -= I * rho[(d, j)];
            out[(j, d)] += I * rho[(j, d)];
        }
        out[(GROUND, GROUND)] += trace_product(&self.dk, rho);
        out
    }

    /// Re⟨χ, ∂G(ρ)⟩.
    pub fn pairing(&self, chi: &Mat4, rho: &Mat4) -> f64 {
        super::hs_inner(chi, &self.apply(rho)).re
    }

    pub fn dissipator_derivative(&self) -> &Mat4 {
        &self.dk
    }
}
