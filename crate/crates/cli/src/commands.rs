use serde_json::{json, Value};

use qreset::analysis::{er_optimize, field_spectrum, rates_map, sweep_tau, Evaluator};
use qreset::controls::ControlSet;
use qreset::exec::ExecPolicy;
use qreset::krotov::{optimize_with_progress, KrotovConfig, OptimizationRecord};
use qreset::model::{CircuitParams, Control};
use qreset::propagation::{
    mixed_excited_state, propagate_forward_with, reset_error_mixed, reset_error_with, DensityMatrix,
    PropagationOptions,
};
use qreset::protocols::{solve_operation_points, Guess, OperationPoints};
use qreset::units::{angular_to_ghz, ns, to_ns};

use crate::config::{LoadedConfig, SpectrumSource, SweepProtocol};
use crate::error::Result;
use crate::output::{controls_csv, csv_bytes, Artifacts};

/// Shared state of one invocation.
pub struct Context {
    pub cfg: LoadedConfig,
    pub params: CircuitParams,
    pub policy: ExecPolicy,
}

impl Context {
    pub fn new(cfg: LoadedConfig, policy: ExecPolicy) -> Result<Self> {
        let params = cfg.config.circuit_params()?;
        Ok(Self { cfg, params, policy })
    }

    fn tau(&self) -> f64 {
        ns(self.cfg.config.grid.tau_ns)
    }

    fn ops(&self) -> Result<OperationPoints> {
        Ok(solve_operation_points(&self.params)?)
    }

    fn header(&self, command: &str) -> Value {
        let c = &self.cfg.config;
        json!({
            "command": command,
            "config": self.cfg.path.display().to_string(),
            "seed": c.seed,
            "tau_ns": c.grid.tau_ns,
            "dt_ns": c.grid.dt_ns,
        })
    }

    fn optimize(&self, guess: &ControlSet, cfg: &KrotovConfig) -> Result<OptimizationRecord> {
        Ok(optimize_with_progress(guess, cfg, &self.params, |r| {
            log::info!("iteration {}: J = {:.6e}, alpha = {:.6e}", r.iteration, r.functional, r.alpha);
        })?)
    }
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn record_json(rec: &OptimizationRecord) -> Value {
    json!({
        "iterations": rec.iterations,
        "lambda": rec.lambda,
        "stop_reason": rec.stop_reason,
        "invariants": rec.invariants,
        "initial_alpha": rec.initial_alpha(),
        "final_alpha": rec.final_alpha(),
        "monotone": rec.is_monotone(1e-12),
    })
}

pub fn simulate(ctx: &Context) -> Result<Artifacts> {
    let ops = ctx.ops()?;
    let controls = ctx.cfg.guess(ctx.tau(), &ops, &ctx.params)?;
    let stride = ctx.cfg.config.output.stride;
    let opts = PropagationOptions { state_stride: usize::MAX, ..Default::default() };
    let report = reset_error_with(&controls, &ctx.params, &opts)?;
    let rho0 = DensityMatrix::new(mixed_excited_state())?;
    let traj = propagate_forward_with(&rho0, &controls, &ctx.params, &opts)?;
    let grid = controls.grid();
    let n = grid.n_steps();
    let rows = (0..=n).filter(|k| k % stride == 0 || *k == n).map(|k| {
        let p = traj.populations[k];
        let g = traj.rates[k].gamma;
        let c = controls.at(k);
        vec![
            to_ns(grid.time(k)),
            p[0],
            p[1],
            p[2],
            p[3],
            g[0],
            g[1],
            g[2],
            angular_to_ghz(c.omega_l),
            angular_to_ghz(c.omega_r),
            angular_to_ghz(c.omega_q),
        ]
    });
    let header = [
        "t_ns", "p0", "p1", "p2", "p3", "Gamma10_per_s", "Gamma20_per_s", "Gamma30_per_s", "omegaL_GHz", "omegaR_GHz",
        "omegaq_GHz",
    ];
    let mut out = Artifacts::default();
    out.add("trajectory.csv", csv_bytes(&header, rows));
    let mut invariants = report.invariants;
    invariants.merge(&traj.invariants);
    out.add_json(
        "summary.json",
        &merge(
            ctx.header("simulate"),
            json!({
                "alpha_tau": report.alpha,
                "remaining_per_initial_state": report.remaining,
                "invariants": invariants,
                "trajectory_initial_state": "uniform mixture of the three excited basis states",
            }),
        ),
    );
    Ok(out)
}

pub fn optimize(ctx: &Context) -> Result<Artifacts> {
    let ops = ctx.ops()?;
    let guess = ctx.cfg.guess(ctx.tau(), &ops, &ctx.params)?;
    let rec = ctx.optimize(&guess, &ctx.cfg.config.krotov())?;
    let mut out = Artifacts::default();
    out.add_json("record.json", &merge(ctx.header("optimize"), record_json(&rec)));
    out.add("final_fields.csv", controls_csv(&rec.final_controls, 1));
    Ok(out)
}

pub fn sweep(ctx: &Context) -> Result<Artifacts> {
    let ops = ctx.ops()?;
    let c = &ctx.cfg.config;
    let p = &ctx.params;
    let krotov = c.krotov();
    let opts = PropagationOptions { state_stride: usize::MAX, ..Default::default() };
    let build = |g: Guess, tau: f64| g.build(tau, c.t_ramp(), c.dt(), &ops, p);
    let alpha_of = |controls: &ControlSet| reset_error_mixed(controls, p, &opts).map(|r| r.alpha);
    let optimized = |g: Guess, active: &[Control], tau: f64| {
        let guess = build(g, tau)?.with_active(active)?;
        qreset::krotov::optimize(&guess, &krotov, p).map(|r| r.final_alpha())
    };
    let evaluators: Vec<(SweepProtocol, Box<Evaluator>)> = c
        .sweep
        .protocols
        .iter()
        .map(|&sp| {
            let f: Box<Evaluator> = match sp {
                SweepProtocol::Sr => Box::new(move |tau| alpha_of(&build(Guess::Sr, tau)?)),
                SweepProtocol::Cp => Box::new(move |tau| alpha_of(&build(Guess::Cp, tau)?)),
                SweepProtocol::Er => Box::new(move |tau| {
                    let er = er_optimize(&build(Guess::Sr, tau)?, p, &c.er())?;
                    alpha_of(&er.controls)
                }),
                SweepProtocol::Op1 => Box::new(move |tau| optimized(Guess::Sr, &[Control::L], tau)),
                SweepProtocol::Op2 => Box::new(move |tau| optimized(Guess::Sr, &Control::ALL, tau)),
                SweepProtocol::Op3 => Box::new(move |tau| optimized(Guess::Cp, &Control::ALL, tau)),
            };
            (sp, f)
        })
        .collect();
    let refs: Vec<(&str, &Evaluator)> = evaluators.iter().map(|(sp, f)| (sp.label(), f.as_ref())).collect();
    let taus: Vec<f64> = c.sweep.taus_ns.iter().map(|t| ns(*t)).collect();
    let result = sweep_tau(&taus, &refs, ctx.policy)?;
    let mut header = vec!["tau_ns".to_string()];
    header.extend(result.labels.iter().map(|l| format!("alpha_{l}")));
    let rows = (0..taus.len()).map(|k| {
        let mut row = vec![c.sweep.taus_ns[k]];
        row.extend(result.alpha.iter().map(|a| a[k]));
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = Artifacts::default();
    out.add("sweep.csv", csv_bytes(&header_refs, rows));
    let thresholds: serde_json::Map<String, Value> = result
        .labels
        .iter()
        .zip(result.thresholds(c.sweep.level))
        .map(|(l, t)| (l.clone(), json!(t.map(to_ns))))
        .collect();
    out.add_json(
        "sweep.json",
        &merge(ctx.header("sweep"), json!({ "level": c.sweep.level, "tau_star_ns": thresholds })),
    );
    Ok(out)
}

pub fn rates_map_cmd(ctx: &Context) -> Result<Artifacts> {
    let rm = &ctx.cfg.config.rates_map;
    let l = rm.omega_l.values();
    let r = rm.omega_r.values();
    let q: Vec<f64> = rm.omega_q_ghz.iter().map(|g| qreset::units::ghz_to_angular(*g)).collect();
    let map = rates_map(&l, &r, &q, &ctx.params, ctx.policy)?;
    let mut rows = Vec::with_capacity(map.rates.len());
    for (qi, wq) in q.iter().enumerate() {
        for (ri, wr) in r.iter().enumerate() {
            for (li, wl) in l.iter().enumerate() {
                let g = map.get(qi, ri, li).gamma;
                rows.push(vec![angular_to_ghz(*wl), angular_to_ghz(*wr), angular_to_ghz(*wq), g[0], g[1], g[2]]);
            }
        }
    }
    let header = ["omegaL_GHz", "omegaR_GHz", "omegaq_GHz", "Gamma10_per_s", "Gamma20_per_s", "Gamma30_per_s"];
    let mut out = Artifacts::default();
    out.add("rates_map.csv", csv_bytes(&header, rows));
    out.add_json(
        "rates_map.json",
        &merge(
            ctx.header("rates-map"),
            json!({
                "points": map.rates.len(),
                "exclusivity_violations_at_0.9": map.exclusivity_violations(0.9),
                "panel_maxima_per_s": map.panel_maxima(),
                "maximum_spread": map.maximum_spread(),
            }),
        ),
    );
    Ok(out)
}

pub fn spectrum(ctx: &Context) -> Result<Artifacts> {
    let ops = ctx.ops()?;
    let c = &ctx.cfg.config;
    let guess = ctx.cfg.guess(ctx.tau(), &ops, &ctx.params)?;
    let fields = match c.spectrum.source {
        SpectrumSource::Protocol => guess,
        SpectrumSource::Optimized => ctx.optimize(&guess, &c.krotov())?.final_controls,
    };
    let tau = fields.grid().tau();
    let windows: Vec<(f64, f64)> = if !c.spectrum.windows_ns.is_empty() {
        c.spectrum.windows_ns.iter().map(|w| (ns(w[0]), ns(w[1]))).collect()
    } else {
        match ctx.cfg.guess_kind() {
            Some(g) => g.hold_windows(tau, c.t_ramp()),
            None => vec![(0.0, tau)],
        }
    };
    let fmax = c.spectrum.max_freq_mhz * 1e6;
    let mut out = Artifacts::default();
    let mut meta = Vec::new();
    for control in c.spectrum_controls() {
        for (k, &(ta, tb)) in windows.iter().enumerate() {
            let s = field_spectrum(&fields, control, ta, tb, &ctx.params)?;
            let rows = s
                .freqs
                .iter()
                .zip(&s.amplitude)
                .take_while(|(f, _)| **f <= fmax)
                .map(|(f, a)| vec![f * 1e-6, *a]);
            let name = format!("spectrum_{}_{k}.csv", control.label());
            out.add(name.clone(), csv_bytes(&["freq_MHz", "amplitude_rad_per_s"], rows));
            let peak = s.dominant_bin();
            meta.push(json!({
                "file": name,
                "control": control.label(),
                "window_ns": [to_ns(s.window.0), to_ns(s.window.1)],
                "bin_width_MHz": s.bin_width * 1e-6,
                "markers_MHz": s.markers.iter().map(|m| m * 1e-6).collect::<Vec<_>>(),
                "dominant_MHz": s.freqs[peak] * 1e-6,
                "dominant_marker_distance_bins": s.marker_distance(peak),
            }));
        }
    }
    out.add_json("spectrum.json", &merge(ctx.header("spectrum"), json!({ "spectra": meta })));
    Ok(out)
}

pub fn operation_points(ctx: &Context) -> Result<Artifacts> {
    let ops = ctx.ops()?;
    let mut out = Artifacts::default();
    out.add_json(
        "operation_points.json",
        &merge(
            ctx.header("operation-points"),
            json!({
                "omega_plus_GHz": angular_to_ghz(ops.omega_plus),
                "omega_minus_GHz": angular_to_ghz(ops.omega_minus),
                "cp_hold_GHz": angular_to_ghz(qreset::protocols::cp_hold_value(&ops)),
                "rates_plus_per_s": ops.rates_plus.gamma,
                "rates_minus_per_s": ops.rates_minus.gamma,
            }),
        ),
    );
    Ok(out)
}
