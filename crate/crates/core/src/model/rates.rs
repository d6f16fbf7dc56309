use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CircuitParams, Control, ControlPoint, EigenDerivatives, EigenSystem};
use crate::error::{Error, Result};

/// Decay rates Γ_10, Γ_20, Γ_30 (1/s) from the excited eigenstates into the
/// ground state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSet {
    pub gamma: [f64; 3],
}

impl RateSet {
    pub fn max(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

/// v_i0 = ⟨Ψ_0|(a_L† + a_L)|Ψ_i⟩, which in the restricted space is the
/// |1,0,g⟩ amplitude of |Ψ_i⟩.
pub fn coupling_elements(es: &EigenSystem) -> [Complex64; 3] {
    [es.states[0][2], es.states[1][2], es.states[2][2]]
}

/// Johnson–Nyquist occupation factor 1/(1 − e^{−ω/θ}).
pub fn thermal_factor(omega: f64, theta_env: f64) -> f64 {
    -1.0 / (-omega / theta_env).exp_m1()
}

fn thermal_factor_derivative(omega: f64, theta_env: f64) -> f64 {
    let x = omega / theta_env;
    let em = (-x).exp();
    let n = thermal_factor(omega, theta_env);
    -em / theta_env * n * n
}

/// Ratio of upward to downward rate, e^{−ω_mn/θ_env}.
pub fn detailed_balance_ratio(omega_mn: f64, params: &CircuitParams) -> f64 {
    (-omega_mn / params.theta_env).exp()
}

/// Γ_i0 = Γ0·|v_i0|²·(ω_L ω_i/ω_R²)·1/(1 − e^{−ω_i/θ_env}).
pub fn decay_rates(es: &EigenSystem, controls: ControlPoint, params: &CircuitParams) -> Result<RateSet> {
    if !(controls.omega_r > 0.0) {
        return Err(Error::InvalidInput(format!("omega_R must be positive, got {}", controls.omega_r)));
    }
    if let Some(w) = es.omegas.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::ModelValidity(format!(
            "excitation energy {w} rad/s is not positive"
        )));
    }
    Ok(decay_rates_unchecked(es, controls, params))
}

/// [`decay_rates`] without validation, for inner loops whose inputs are
/// already known to be valid.
#[inline]
pub fn decay_rates_unchecked(es: &EigenSystem, controls: ControlPoint, params: &CircuitParams) -> RateSet {
    let v = coupling_elements(es);
    let pref = params.gamma0 * controls.omega_l / (controls.omega_r * controls.omega_r);
    let mut gamma = [0.0; 3];
    for i in 0..3 {
        let w = es.omegas[i];
        gamma[i] = pref * v[i].norm_sqr() * w * thermal_factor(w, params.theta_env);
    }
    RateSet { gamma }
}

/// ∂Γ_i0/∂ω_k given the eigen-derivatives along the same control.
pub fn rate_derivatives(
    es: &EigenSystem,
    ed: &EigenDerivatives,
    controls: ControlPoint,
    params: &CircuitParams,
    which: Control,
) -> [f64; 3] {
    let v = coupling_elements(es);
    let (wl, wr) = (controls.omega_l, controls.omega_r);
    let pref = params.gamma0 * wl / (wr * wr);
    let d_pref = match which {
        Control::L => params.gamma0 / (wr * wr),
        Control::R => -2.0 * pref / wr,
        Control::Q => 0.0,
    };
    let mut out = [0.0; 3];
    for i in 0..3 {
        let w = es.omegas[i];
        let dw = ed.d_omegas[i];
        let v2 = v[i].norm_sqr();
        let dv2 = 2.0 * (v[i].conj() * ed.d_states[i][2]).re;
        let n = thermal_factor(w, params.theta_env);
        let dn = thermal_factor_derivative(w, params.theta_env) * dw;
        out[i] = d_pref * v2 * w * n + pref * (dv2 * w * n + v2 * dw * n + v2 * w * dn);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, eigen_derivatives_along, eigensystem};
    use crate::units::{ghz_to_angular, millikelvin_to_thermal};
    use std::f64::consts::TAU;

    fn es_at(ctl: ControlPoint, p: &CircuitParams) -> EigenSystem {
        eigensystem(&build_hamiltonian(ctl, p).unwrap(), None).unwrap()
    }

    #[test]
    fn completeness_of_couplings() {
        let p = CircuitParams::reference_device();
        for wl in [9.0, 9.5, 10.0, 10.5, 11.5, 14.0] {
            let es = es_at(ControlPoint::new(ghz_to_angular(wl), p.omega_r0, p.omega_q0), &p);
            let s: f64 = coupling_elements(&es).iter().map(|v| v.norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bare_state_coupling() {
        let p = CircuitParams::reference_device().with_couplings(0.0, 0.0);
        let es = es_at(p.bare_controls(), &p);
        let v: Vec<f64> = coupling_elements(&es).iter().map(|v| v.norm_sqr()).collect();
        assert_eq!(v, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn central_resonant_coupling_weight() {
        let p = CircuitParams::reference_device();
        let w0 = TAU * 10e9;
        let es = es_at(ControlPoint::new(w0, w0, w0), &p);
        let v2 = coupling_elements(&es)[1].norm_sqr();
        let expected = p.g_rq.powi(2) / (p.g_rq.powi(2) + p.g_lr0.powi(2));
        assert!((v2 - expected).abs() < 1e-12);
        assert!((v2 - 0.458).abs() < 1e-3);
    }

    #[test]
    fn zero_temperature_limit_and_device_thermal_factor() {
        let w = TAU * 10e9;
        assert_eq!(thermal_factor(w, 1e-3), 1.0);
        let theta = millikelvin_to_thermal(10.0);
        // ω/θ ≈ 48 at 10 GHz and 10 mK.
        assert!((w / theta - 47.99).abs() < 0.05);
        assert!((thermal_factor(w, theta) - 1.0).abs() < 1e-20);
        let p = CircuitParams::reference_device();
        let es = es_at(p.bare_controls(), &p);
        let cold = CircuitParams { theta_env: 1e-6, ..p };
        let r = decay_rates(&es, p.bare_controls(), &cold).unwrap();
        let v = coupling_elements(&es);
        for i in 0..3 {
            let expect = p.gamma0 * v[i].norm_sqr() * p.omega_l0 * es.omegas[i] / p.omega_r0.powi(2);
            assert!((r.gamma[i] - expect).abs() <= 1e-15 * expect.max(1.0));
        }
    }

    #[test]
    fn vanishing_gamma0_and_nonpositive_energies() {
        let p = CircuitParams::reference_device().with_gamma0(0.0);
        let es = es_at(p.bare_controls(), &p);
        assert_eq!(decay_rates(&es, p.bare_controls(), &p).unwrap().gamma, [0.0; 3]);
        let mut bad = es;
        bad.omegas[0] = -1.0;
        assert!(matches!(decay_rates(&bad, p.bare_controls(), &p), Err(Error::ModelValidity(_))));
    }

    #[test]
    fn detailed_balance_values() {
        let p = CircuitParams::reference_device();
        assert_eq!(detailed_balance_ratio(0.0, &p), 1.0);
        let r = detailed_balance_ratio(TAU * 10e9, &p);
        // exp(−47.99)
        assert!((r / 1.44e-21 - 1.0).abs() < 0.05, "{r}");
        let up = detailed_balance_ratio(-TAU * 1e9, &p);
        let down = detailed_balance_ratio(TAU * 1e9, &p);
        assert!(up > 1.0);
        assert!((up * down - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_derivatives_match_finite_differences() {
        // Warm bath so the thermal factor derivative is exercised.
        let p = CircuitParams { theta_env: TAU * 3e9, ..CircuitParams::reference_device() };
        let base = ControlPoint::new(TAU * 10.2e9, TAU * 10.05e9, TAU * 9.7e9);
        let es = es_at(base, &p);
        let r0 = decay_rates(&es, base, &p).unwrap();
        for c in Control::ALL {
            let ed = eigen_derivatives_along(&es, c.basis_index()).unwrap();
            let an = rate_derivatives(&es, &ed, base, &p, c);
            let h = TAU * 1e3;
            let mut plus = base;
            plus.set(c, base.get(c) + h);
            let mut minus = base;
            minus.set(c, base.get(c) - h);
            let rp = decay_rates(&es_at(plus, &p), plus, &p).unwrap();
            let rm = decay_rates(&es_at(minus, &p), minus, &p).unwrap();
            for i in 0..3 {
                let fd = (rp.gamma[i] - rm.gamma[i]) / (2.0 * h);
                let scale = r0.gamma.iter().fold(0.0f64, |a, b| a.max(*b)) / (TAU * 1e8);
                assert!((fd - an[i]).abs() <= 1e-6 * scale, "{c:?} {i}: fd {fd} an {}", an[i]);
            }
        }
    }
}
