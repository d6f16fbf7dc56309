//! Studies built on the simulator: duration sweeps, threshold crossings,
//! integrated rates, the equal-rates baseline, rate maps and field spectra.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::controls::{ControlSet, TimeGrid};
use crate::error::{Error, Result};
use crate::exec::{self, ExecPolicy};
use crate::model::{
    block_eigensystem, decay_rates, excited_block, CircuitParams, Control, ControlPoint, EigenSystem, RateSet,
};

/// Eigensystem and rates at a single operating point.
pub fn rates_at(point: ControlPoint, params: &CircuitParams) -> Result<(EigenSystem, RateSet)> {
    point.validate()?;
    let es = block_eigensystem(&excited_block(point, params), None);
    let r = decay_rates(&es, point, params)?;
    Ok((es, r))
}

/// α_τ per protocol label over a common list of durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Durations in seconds.
    pub taus: Vec<f64>,
    pub labels: Vec<String>,
    /// `alpha[j][k]` is the error of protocol `labels[j]` at `taus[k]`.
    pub alpha: Vec<Vec<f64>>,
}

impl SweepResult {
    pub fn series(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|j| self.alpha[j].as_slice())
    }

    /// τ* for every label at the given level.
    pub fn thresholds(&self, level: f64) -> Vec<Option<f64>> {
        self.alpha.iter().map(|a| threshold_crossing(&self.taus, a, level)).collect()
    }
}

/// Evaluates α_τ for a protocol of duration τ (s).
pub type Evaluator<'a> = dyn Fn(f64) -> Result<f64> + Sync + 'a;

/// Runs every evaluator at every duration. Points are independent and are
/// distributed according to `policy`.
pub fn sweep_tau(taus: &[f64], protocols: &[(&str, &Evaluator)], policy: ExecPolicy) -> Result<SweepResult> {
    if taus.is_empty() || protocols.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one duration and one protocol".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidInput(format!("durations must be positive, got {t}")));
    }
    let jobs: Vec<(usize, f64)> = (0..protocols.len()).flat_map(|j| taus.iter().map(move |&t| (j, t))).collect();
    let values = exec::try_map(policy, &jobs, |&(j, tau)| (protocols[j].1)(tau))?;
    Ok(SweepResult {
        taus: taus.to_vec(),
        labels: protocols.iter().map(|(l, _)| l.to_string()).collect(),
        alpha: values.chunks(taus.len()).map(|c| c.to_vec()).collect(),
    })
}

/// Smallest τ with α_τ ≤ `level`, interpolating log α linearly in τ between
/// the bracketing sweep points. `None` if the sweep never reaches the level.
pub fn threshold_crossing(taus: &[f64], alpha: &[f64], level: f64) -> Option<f64> {
    let k = alpha.iter().position(|a| *a <= level)?;
    if k == 0 {
        return Some(taus[0]);
    }
    let (t0, t1) = (taus[k - 1], taus[k]);
    let (a0, a1) = (alpha[k - 1], alpha[k]);
    if !(a0 > 0.0 && a1 > 0.0) {
        return Some(t1);
    }
    let s = (level.ln() - a0.ln()) / (a1.ln() - a0.ln());
    Some(t0 + s.clamp(0.0, 1.0) * (t1 - t0))
}

/// Rates at every grid point of a control set.
pub fn rates_along(controls: &ControlSet, params: &CircuitParams) -> Result<Vec<RateSet>> {
    (0..controls.grid().len()).map(|k| rates_at(controls.at(k), params).map(|(_, r)| r)).collect()
}

/// R_i = ∫_0^τ Γ_i0(t) dt by the trapezoid rule on the control grid.
pub fn integrated_rates(controls: &ControlSet, params: &CircuitParams) -> Result<[f64; 3]> {
    let grid = controls.grid();
    let mut r = [0.0; 3];
    for (k, rates) in rates_along(controls, params)?.iter().enumerate() {
        let w = grid.trapezoid_weight(k);
        for i in 0..3 {
            r[i] += w * rates.gamma[i];
        }
    }
    Ok(r)
}

/// min R_i − κ·var(R), with κ = `kappa_scale`/mean(R)².
pub fn er_objective(r: &[f64; 3], kappa_scale: f64) -> f64 {
    let mean = r.iter().sum::<f64>() / 3.0;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    if mean > 0.0 {
        min - kappa_scale * var / (mean * mean)
    } else {
        min
    }
}

/// Settings of the equal-rates direct search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErConfig {
    /// Knots of the piecewise-linear ω_L, including the pinned endpoints.
    pub knots: usize,
    /// Quadrature intervals per knot interval.
    pub samples_per_knot: usize,
    /// First pattern step (rad/s).
    pub initial_step: f64,
    /// The search ends once the step falls below this (rad/s).
    pub min_step: f64,
    pub max_evaluations: usize,
    pub kappa_scale: f64,
}

impl Default for ErConfig {
    fn default() -> Self {
        Self {
            knots: 50,
            samples_per_knot: 40,
            initial_step: crate::units::mhz_to_angular(200.0),
            min_step: crate::units::mhz_to_angular(0.05),
            max_evaluations: 50_000,
            kappa_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ErResult {
    pub controls: ControlSet,
    /// Knot values of ω_L (rad/s).
    pub knots: Vec<f64>,
    /// Integrated rates of `controls` on its own grid.
    pub rates: [f64; 3],
    pub initial_objective: f64,
    pub objective: f64,
    pub evaluations: usize,
    /// False when no candidate beat the guess; `controls` is then the guess.
    pub improved: bool,
}

/// Piecewise-linear ω_L through knots with quadrature-point rate caching.
struct KnotModel<'a> {
    params: &'a CircuitParams,
    base: ControlPoint,
    tau: f64,
    knots: Vec<f64>,
    spk: usize,
    gamma: Vec<[f64; 3]>,
}

impl<'a> KnotModel<'a> {
    fn n_points(&self) -> usize {
        (self.knots.len() - 1) * self.spk + 1
    }

    fn omega_at(&self, q: usize) -> f64 {
        let (j, r) = (q / self.spk, q % self.spk);
        if r == 0 {
            return self.knots[j];
        }
        let s = r as f64 / self.spk as f64;
        self.knots[j] + s * (self.knots[j + 1] - self.knots[j])
    }

    fn gamma_at(&self, omega: f64) -> Result<[f64; 3]> {
        let mut p = self.base;
        p.omega_l = omega;
        Ok(rates_at(p, self.params)?.1.gamma)
    }

    fn fill(&mut self) -> Result<()> {
        self.gamma = (0..self.n_points()).map(|q| self.gamma_at(self.omega_at(q))).collect::<Result<_>>()?;
        Ok(())
    }

    fn affected(&self, j: usize) -> std::ops::Range<usize> {
        let lo = j.saturating_sub(1) * self.spk;
        let hi = ((j + 1) * self.spk).min(self.n_points() - 1);
        lo..hi + 1
    }

    fn weight(&self, q: usize) -> f64 {
        let h = self.tau / (self.n_points() - 1) as f64;
        if q == 0 || q == self.n_points() - 1 {
            0.5 * h
        } else {
            h
        }
    }

    fn integrate(&self) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (q, g) in self.gamma.iter().enumerate() {
            let w = self.weight(q);
            for i in 0..3 {
                r[i] += w * g[i];
            }
        }
        r
    }

    /// Integrated rates with knot `j` moved to `value`, plus the rates on
    /// the affected quadrature points.
    fn trial(&mut self, j: usize, value: f64, current: &[f64; 3]) -> Result<([f64; 3], Vec<[f64; 3]>)> {
        let old = std::mem::replace(&mut self.knots[j], value);
        let range = self.affected(j);
        let fresh: Result<Vec<[f64; 3]>> = range.clone().map(|q| self.gamma_at(self.omega_at(q))).collect();
        self.knots[j] = old;
        let fresh = fresh?;
        let mut r = *current;
        for (q, g) in range.zip(&fresh) {
            let w = self.weight(q);
            for i in 0..3 {
                r[i] += w * (g[i] - self.gamma[q][i]);
            }
        }
        Ok((r, fresh))
    }

    fn commit(&mut self, j: usize, value: f64, fresh: Vec<[f64; 3]>) {
        self.knots[j] = value;
        let range = self.affected(j);
        for (q, g) in range.zip(fresh) {
            self.gamma[q] = g;
        }
    }
}

/// Equal-rates baseline: maximizes [`er_objective`] of the integrated rates
/// over a piecewise-linear ω_L by coordinate pattern search. The endpoint
/// knots stay at the guess values; ω_L is confined to [ω_q0/2, 2ω_L0].
pub fn er_optimize(guess: &ControlSet, params: &CircuitParams, cfg: &ErConfig) -> Result<ErResult> {
    if guess.active() != [Control::L] {
        return Err(Error::InvalidInput("equal-rates search requires omega_L as the only active control".into()));
    }
    if cfg.knots < 3 || cfg.samples_per_knot == 0 || !(cfg.initial_step > 0.0) || !(cfg.min_step > 0.0) {
        return Err(Error::InvalidInput("equal-rates search needs ≥ 3 knots and positive steps".into()));
    }
    let grid = *guess.grid();
    let tau = grid.tau();
    let (lo, hi) = (params.omega_q0 / 2.0, 2.0 * params.omega_l0);
    let knot_time = |j: usize| tau * j as f64 / (cfg.knots - 1) as f64;
    let sample = |t: f64| {
        let x = t / grid.dt();
        let k = (x.floor() as usize).min(grid.n_steps());
        guess.interpolate(k, (x - k as f64).clamp(0.0, 1.0)).omega_l
    };
    let knots: Vec<f64> = (0..cfg.knots).map(|j| sample(knot_time(j)).clamp(lo, hi)).collect();
    let mut model = KnotModel { params, base: guess.at(0), tau, knots, spk: cfg.samples_per_knot, gamma: vec![] };
    model.fill()?;
    let mut rates = model.integrate();
    let initial_objective = er_objective(&rates, cfg.kappa_scale);
    let mut objective = initial_objective;
    let mut step = cfg.initial_step;
    let mut evaluations = 1;
    let mut improved = false;
    'search: while step >= cfg.min_step {
        let mut moved = false;
        for j in 1..cfg.knots - 1 {
            for dir in [1.0, -1.0] {
                if evaluations >= cfg.max_evaluations {
                    break 'search;
                }
                let value = (model.knots[j] + dir * step).clamp(lo, hi);
                if value == model.knots[j] {
                    continue;
                }
                let (r, fresh) = model.trial(j, value, &rates)?;
                evaluations += 1;
                let f = er_objective(&r, cfg.kappa_scale);
                if f > objective {
                    model.commit(j, value, fresh);
                    rates = r;
                    objective = f;
                    moved = true;
                    improved = true;
                    break;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    if !improved {
        log::warn!("equal-rates search found no improvement over the guess");
        let rates = integrated_rates(guess, params)?;
        return Ok(ErResult {
            controls: guess.clone(),
            knots: model.knots,
            rates,
            initial_objective,
            objective,
            evaluations,
            improved,
        });
    }
    let knots = model.knots;
    let spacing = tau / (cfg.knots - 1) as f64;
    let controls = ControlSet::from_fn(
        grid,
        |t| {
            let x = (t / spacing).max(0.0);
            let j = (x.floor() as usize).min(cfg.knots - 2);
            let s = (x - j as f64).clamp(0.0, 1.0);
            let mut p = guess.at(0);
            p.omega_l = knots[j] + s * (knots[j + 1] - knots[j]);
            p
        },
        &[Control::L],
    )?;
    let rates = integrated_rates(&controls, params)?;
    Ok(ErResult { controls, knots, rates, initial_objective, objective, evaluations, improved })
}

/// Rates over a Cartesian grid of (ω_q, ω_R, ω_L).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMap {
    pub omega_l: Vec<f64>,
    pub omega_r: Vec<f64>,
    pub omega_q: Vec<f64>,
    /// Row-major with ω_L fastest, then ω_R, then ω_q.
    pub rates: Vec<RateSet>,
}

impl RateMap {
    pub fn index(&self, q: usize, r: usize, l: usize) -> usize {
        (q * self.omega_r.len() + r) * self.omega_l.len() + l
    }

    pub fn get(&self, q: usize, r: usize, l: usize) -> &RateSet {
        &self.rates[self.index(q, r, l)]
    }

    fn panel(&self, q: usize) -> &[RateSet] {
        let n = self.omega_r.len() * self.omega_l.len();
        &self.rates[q * n..(q + 1) * n]
    }

    /// Largest value of each rate within each ω_q panel.
    pub fn panel_maxima(&self) -> Vec<[f64; 3]> {
        (0..self.omega_q.len())
            .map(|q| {
                let mut m = [0.0f64; 3];
                for r in self.panel(q) {
                    for i in 0..3 {
                        m[i] = m[i].max(r.gamma[i]);
                    }
                }
                m
            })
            .collect()
    }

    /// Grid points where two distinct rates reach `fraction` of their own
    /// panel maximum at once.
    pub fn exclusivity_violations(&self, fraction: f64) -> usize {
        let maxima = self.panel_maxima();
        (0..self.omega_q.len())
            .map(|q| {
                let m = maxima[q];
                self.panel(q)
                    .iter()
                    .filter(|r| (0..3).filter(|&i| m[i] > 0.0 && r.gamma[i] >= fraction * m[i]).count() >= 2)
                    .count()
            })
            .sum()
    }

    /// max/min − 1 of each rate's panel maximum across the ω_q panels.
    pub fn maximum_spread(&self) -> [f64; 3] {
        let maxima = self.panel_maxima();
        let mut out = [0.0; 3];
        for i in 0..3 {
            let hi = maxima.iter().map(|m| m[i]).fold(0.0, f64::max);
            let lo = maxima.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
            out[i] = if lo > 0.0 { hi / lo - 1.0 } else { f64::INFINITY };
        }
        out
    }
}

/// `n` evenly spaced values over `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn rates_map(
    omega_l: &[f64],
    omega_r: &[f64],
    omega_q: &[f64],
    params: &CircuitParams,
    policy: ExecPolicy,
) -> Result<RateMap> {
    for (name, g) in [("omega_L", omega_l), ("omega_R", omega_r), ("omega_q", omega_q)] {
        if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!("{name} grid must be non-empty and positive")));
        }
    }
    let rows: Vec<(f64, f64)> = omega_q.iter().flat_map(|&q| omega_r.iter().map(move |&r| (q, r))).collect();
    let blocks = exec::try_map(policy, &rows, |&(q, r)| {
        omega_l
            .iter()
            .map(|&l| rates_at(ControlPoint::new(l, r, q), params).map(|(_, g)| g))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(RateMap {
        omega_l: omega_l.to_vec(),
        omega_r: omega_r.to_vec(),
        omega_q: omega_q.to_vec(),
        rates: blocks.into_iter().flatten().collect(),
    })
}

/// Minimum segment length accepted by [`field_spectrum`].
pub const MIN_SPECTRUM_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub control: Control,
    /// Bin frequencies (Hz), 0 through Nyquist.
    pub freqs: Vec<f64>,
    /// One-sided magnitude with Σ amplitude² = Σ (w_n x_n)² over the
    /// windowed, mean-subtracted segment (rad/s).
    pub amplitude: Vec<f64>,
    /// Eigen-gap frequencies |ω_i − ω_j|/2π (Hz) at the segment's mean
    /// controls, including the ground level.
    pub markers: Vec<f64>,
    pub window: (f64, f64),
    pub bin_width: f64,
}

impl SpectrumResult {
    /// Bin of the largest non-DC amplitude.
    pub fn dominant_bin(&self) -> usize {
        (1..self.amplitude.len())
            .max_by(|&a, &b| self.amplitude[a].total_cmp(&self.amplitude[b]))
            .unwrap_or(0)
    }

    /// Distance, in bins, from `bin` to the nearest marker.
    pub fn marker_distance(&self, bin: usize) -> f64 {
        let f = self.freqs[bin];
        self.markers.iter().map(|m| (m - f).abs() / self.bin_width).fold(f64::INFINITY, f64::min)
    }

    pub fn power(&self) -> f64 {
        self.amplitude.iter().map(|a| a * a).sum()
    }
}

/// Hann window w_n = sin²(πn/N).
fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|k| (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2)).collect()
}

/// Magnitude spectrum of one control over `[t_a, t_b]`.
pub fn field_spectrum(
    controls: &ControlSet,
    control: Control,
    t_a: f64,
    t_b: f64,
    params: &CircuitParams,
) -> Result<SpectrumResult> {
    let grid = controls.grid();
    if !(t_a >= 0.0 && t_b <= grid.tau() * (1.0 + 1e-12) && t_b > t_a) {
        return Err(Error::InvalidInput(format!(
            "spectral window [{t_a:.3e}, {t_b:.3e}] s outside grid [0, {:.3e}] s",
            grid.tau()
        )));
    }
    let (ka, kb) = (grid.index_of(t_a), grid.index_of(t_b));
    let n = kb.saturating_sub(ka);
    if n < MIN_SPECTRUM_SAMPLES {
        return Err(Error::Resolution(format!(
            "spectral window holds {n} samples, need at least {MIN_SPECTRUM_SAMPLES}"
        )));
    }
    let series = &controls.series(control)[ka..kb];
    let mean = series.iter().sum::<f64>() / n as f64;
    let w = hann(n);
    let mut buf: Vec<Complex64> = series.iter().zip(&w).map(|(x, w)| Complex64::new((x - mean) * w, 0.0)).collect();
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    let bins = n / 2 + 1;
    let amplitude: Vec<f64> = (0..bins)
        .map(|k| {
            let fold = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            buf[k].norm() * (fold / n as f64).sqrt()
        })
        .collect();
    let bin_width = 1.0 / (n as f64 * grid.dt());
    let freqs = (0..bins).map(|k| k as f64 * bin_width).collect();

    let mut base = [0.0; 3];
    for k in ka..kb {
        let p = controls.at(k);
        base[0] += p.omega_l;
        base[1] += p.omega_r;
        base[2] += p.omega_q;
    }
    let base = ControlPoint::new(base[0] / n as f64, base[1] / n as f64, base[2] / n as f64);
    let (es, _) = rates_at(base, params)?;
    let levels = [0.0, es.omegas[0], es.omegas[1], es.omegas[2]];
    let mut markers = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            markers.push((levels[j] - levels[i]).abs() / std::f64::consts::TAU);
        }
    }
    markers.sort_by(f64::total_cmp);
    Ok(SpectrumResult { control, freqs, amplitude, markers, window: (grid.time(ka), grid.time(kb)), bin_width })
}

/// A grid and constant controls with ω_L replaced by `f(t)`, for tests and
/// spectral probes.
pub fn with_omega_l(grid: TimeGrid, base: ControlPoint, f: impl Fn(f64) -> f64) -> Result<ControlSet> {
    ControlSet::from_fn(
        grid,
        |t| {
            let mut p = base;
            p.omega_l = f(t);
            p
        },
        &[Control::L],
    )
}
