//! Test-only oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use qreset::model::{build_hamiltonian, decay_rates, eigensystem, CircuitParams, ControlPoint, Mat4};
use qreset::propagation::Frame;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// exp(X) by scaling and squaring of a truncated Taylor series.
pub fn expm(x: &CMat) -> CMat {
    let n = x.nrows();
    let norm1 = (0..n).map(|j| x.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.25 { (norm1 / 0.25).log2().ceil() as u32 } else { 0 };
    let scaled = x * c(0.5f64.powi(squarings as i32));
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled * c(1.0 / k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn to_dmatrix(m: &Mat4) -> CMat {
    CMat::from_fn(4, 4, |i, j| m[(i, j)])
}

pub fn vec_of(m: &Mat4) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_fn(16, |k, _| m[(k % 4, k / 4)])
}

pub fn unvec(v: &nalgebra::DVector<Complex64>) -> Mat4 {
    Mat4::from_fn(|i, j| v[i + 4 * j])
}

/// 16×16 Lindblad superoperator for column-stacked vec(ρ), assembled from
/// the jump operators L_i = |0⟩⟨Ψ_i| with vec(AXB) = (Bᵀ ⊗ A) vec(X).
pub fn superoperator(point: ControlPoint, params: &CircuitParams, frame: Frame) -> CMat {
    let mut h = build_hamiltonian(point, params).unwrap();
    let es = eigensystem(&h, None).unwrap();
    let rates = decay_rates(&es, point, params).unwrap();
    let shift = frame.shift(point);
    for d in 1..4 {
        h[(d, d)] -= c(shift);
    }
    let h = to_dmatrix(&h);
    let id = CMat::identity(4, 4);
    let i = Complex64::new(0.0, 1.0);
    let mut s = (id.kronecker(&h) - h.transpose().kronecker(&id)) * (-i);
    for k in 0..3 {
        let psi = es.state4(k);
        let mut l = CMat::zeros(4, 4);
        for j in 0..4 {
            l[(0, j)] = psi[j].conj();
        }
        let ldl = l.adjoint() * &l;
        let g = c(rates.gamma[k]);
        s += (l.conjugate().kronecker(&l) - (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)) * c(0.5)) * g;
    }
    s
}

/// Exact propagation through constant segments (duration, controls).
pub fn piecewise_exact(rho0: &Mat4, segments: &[(f64, ControlPoint)], params: &CircuitParams, frame: Frame) -> Mat4 {
    let mut v = vec_of(rho0);
    for (dur, point) in segments {
        let s = superoperator(*point, params, frame) * c(*dur);
        v = expm(&s) * v;
    }
    unvec(&v)
}

pub fn random_pure_state(seed: u64) -> Mat4 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let psi = nalgebra::Vector4::from_fn(|_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let psi = psi.normalize();
    psi * psi.adjoint()
}

pub fn random_hermitian(seed: u64) -> Mat4 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = Mat4::from_fn(|_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (m + m.adjoint()) * c(0.5)
}
