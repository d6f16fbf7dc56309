//! Run configuration in laboratory units (GHz, MHz, ns, mK). Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use qreset::analysis::ErConfig;
use qreset::controls::ControlSet;
use qreset::krotov::{KrotovConfig, LambdaAdapt, LambdaChoice, Shape};
use qreset::model::{CircuitParams, Control};
use qreset::protocols::{Guess, OperationPoints};
use qreset::units::{ghz_to_angular, mhz_to_angular, millikelvin_to_thermal, ns};

use crate::output::read_controls_csv;

pub use crate::error::ConfigError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub rates_map: RatesMapSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Seed for stochastic searches; recorded in every summary.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub omega_l0_ghz: f64,
    pub omega_r0_ghz: f64,
    pub omega_q0_ghz: f64,
    pub g_lr0_mhz: f64,
    pub g_rq_mhz: f64,
    /// Γ0 in units of 10⁶ s⁻¹.
    pub gamma0_mhz: f64,
    pub t_env_mk: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            omega_l0_ghz: 11.5,
            omega_r0_ghz: 10.0,
            omega_q0_ghz: 9.5,
            g_lr0_mhz: 74.0,
            g_rq_mhz: 68.0,
            gamma0_mhz: 31.0,
            t_env_mk: 10.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub tau_ns: f64,
    pub dt_ns: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { tau_ns: 1500.0, dt_ns: qreset::controls::DEFAULT_DT * 1e9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Sr,
    Cp,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    pub t_ramp_ns: f64,
    /// Control CSV for `kind = "file"`, relative to the config file.
    pub file: Option<PathBuf>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self { kind: ProtocolKind::Sr, t_ramp_ns: qreset::protocols::DEFAULT_T_RAMP * 1e9, file: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub active_controls: Vec<String>,
    pub max_iter: usize,
    pub stop_delta_j: f64,
    pub stop_alpha: f64,
    /// Linearized first-iteration update used to calibrate λ (MHz).
    pub target_update_mhz: f64,
    /// Fixed λ per control (L, R, q); overrides the calibration.
    pub lambda: Option<[f64; 3]>,
    /// Raise λ and retry when a sweep would increase J.
    pub adaptive: bool,
    pub shape_ramp_ns: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let k = KrotovConfig::default();
        Self {
            active_controls: vec!["L".into()],
            max_iter: k.max_iter,
            stop_delta_j: k.stop_delta_j,
            stop_alpha: k.stop_alpha,
            target_update_mhz: qreset::krotov::DEFAULT_TARGET_UPDATE_MHZ,
            lambda: None,
            adaptive: true,
            shape_ramp_ns: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepProtocol {
    Sr,
    Cp,
    Er,
    /// Krotov from the SR guess, ω_L only.
    Op1,
    /// Krotov from the SR guess, all three controls.
    Op2,
    /// Krotov from the CP guess, all three controls.
    Op3,
}

impl SweepProtocol {
    pub fn label(self) -> &'static str {
        match self {
            SweepProtocol::Sr => "SR",
            SweepProtocol::Cp => "CP",
            SweepProtocol::Er => "ER",
            SweepProtocol::Op1 => "OP1",
            SweepProtocol::Op2 => "OP2",
            SweepProtocol::Op3 => "OP3",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub taus_ns: Vec<f64>,
    pub protocols: Vec<SweepProtocol>,
    pub level: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            taus_ns: vec![500.0, 1000.0, 1500.0, 2000.0],
            protocols: vec![SweepProtocol::Sr],
            level: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min_ghz: f64,
    pub max_ghz: f64,
    pub points: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        qreset::analysis::linspace(ghz_to_angular(self.min_ghz), ghz_to_angular(self.max_ghz), self.points)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesMapSection {
    pub omega_l: Axis,
    pub omega_r: Axis,
    pub omega_q_ghz: Vec<f64>,
}

impl Default for RatesMapSection {
    fn default() -> Self {
        Self {
            omega_l: Axis { min_ghz: 8.5, max_ghz: 12.5, points: 201 },
            omega_r: Axis { min_ghz: 8.5, max_ghz: 12.5, points: 201 },
            omega_q_ghz: vec![9.0, 9.5, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Protocol,
    Optimized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub source: SpectrumSource,
    pub controls: Vec<String>,
    /// Windows `[t_a, t_b]` in ns; empty selects the hold segments of the guess.
    pub windows_ns: Vec<[f64; 2]>,
    /// Highest frequency written to the spectrum CSVs.
    pub max_freq_mhz: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { source: SpectrumSource::Optimized, controls: vec!["L".into()], windows_ns: vec![], max_freq_mhz: 2000.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Every n-th grid point is written to trajectory and field CSVs.
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, stride: 100 }
    }
}

/// A parsed configuration together with the directory it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub path: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    let config = parse(&text).map_err(|message| ConfigError::Parse { path: path.into(), message })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir, path: path.into() })
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    let config: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    config.validate()?;
    Ok(config)
}

fn parse_controls(names: &[String]) -> Result<Vec<Control>, String> {
    names
        .iter()
        .map(|n| Control::parse(n).ok_or_else(|| format!("unknown control '{n}', expected L, R or q")))
        .collect()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        positive("grid.tau_ns", self.grid.tau_ns)?;
        positive("grid.dt_ns", self.grid.dt_ns)?;
        positive("protocol.t_ramp_ns", self.protocol.t_ramp_ns)?;
        if self.protocol.kind == ProtocolKind::File && self.protocol.file.is_none() {
            return Err("protocol.kind = \"file\" requires protocol.file".into());
        }
        if self.output.stride == 0 {
            return Err("output.stride must be at least 1".into());
        }
        let active = parse_controls(&self.optimize.active_controls)?;
        if active.is_empty() {
            return Err("optimize.active_controls must not be empty".into());
        }
        parse_controls(&self.spectrum.controls)?;
        positive("optimize.target_update_mhz", self.optimize.target_update_mhz)?;
        positive("optimize.shape_ramp_ns", self.optimize.shape_ramp_ns)?;
        if let Some(l) = self.optimize.lambda {
            for v in l {
                positive("optimize.lambda", v)?;
            }
        }
        if self.sweep.taus_ns.is_empty() || self.sweep.protocols.is_empty() {
            return Err("sweep needs at least one duration and one protocol".into());
        }
        for t in &self.sweep.taus_ns {
            positive("sweep.taus_ns", *t)?;
        }
        for ax in [&self.rates_map.omega_l, &self.rates_map.omega_r] {
            positive("rates_map axis min_ghz", ax.min_ghz)?;
            positive("rates_map axis max_ghz", ax.max_ghz)?;
            if ax.points == 0 {
                return Err("rates_map axes need at least one point".into());
            }
        }
        for q in &self.rates_map.omega_q_ghz {
            positive("rates_map.omega_q_ghz", *q)?;
        }
        positive("spectrum.max_freq_mhz", self.spectrum.max_freq_mhz)?;
        positive("sweep.level", self.sweep.level)?;
        for w in &self.spectrum.windows_ns {
            if !(w[0] >= 0.0 && w[1] > w[0]) {
                return Err(format!("spectrum window {w:?} must satisfy 0 ≤ t_a < t_b"));
            }
        }
        self.circuit_params().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn circuit_params(&self) -> qreset::error::Result<CircuitParams> {
        let p = &self.params;
        CircuitParams::new(
            ghz_to_angular(p.omega_l0_ghz),
            ghz_to_angular(p.omega_r0_ghz),
            ghz_to_angular(p.omega_q0_ghz),
            mhz_to_angular(p.g_lr0_mhz),
            mhz_to_angular(p.g_rq_mhz),
            p.gamma0_mhz * 1e6,
            millikelvin_to_thermal(p.t_env_mk),
        )
    }

    pub fn active_controls(&self) -> Vec<Control> {
        parse_controls(&self.optimize.active_controls).expect("validated")
    }

    pub fn spectrum_controls(&self) -> Vec<Control> {
        parse_controls(&self.spectrum.controls).expect("validated")
    }

    pub fn krotov(&self) -> KrotovConfig {
        let o = &self.optimize;
        KrotovConfig {
            lambda: match o.lambda {
                Some(l) => LambdaChoice::Fixed(l),
                None => LambdaChoice::Auto { target_update: mhz_to_angular(o.target_update_mhz) },
            },
            adapt: o.adaptive.then(LambdaAdapt::default),
            shape: Shape::SmoothRamps { t_ramp: ns(o.shape_ramp_ns) },
            max_iter: o.max_iter,
            stop_delta_j: o.stop_delta_j,
            stop_alpha: o.stop_alpha,
            ..Default::default()
        }
    }

    pub fn er(&self) -> ErConfig {
        ErConfig::default()
    }

    pub fn t_ramp(&self) -> f64 {
        ns(self.protocol.t_ramp_ns)
    }

    pub fn dt(&self) -> f64 {
        ns(self.grid.dt_ns)
    }
}

impl LoadedConfig {
    /// The configured guess at duration `tau` (s), with the configured
    /// active controls.
    pub fn guess(&self, tau: f64, ops: &OperationPoints, params: &CircuitParams) -> crate::error::Result<ControlSet> {
        let cfg = &self.config;
        let c = match cfg.protocol.kind {
            ProtocolKind::Sr => Guess::Sr.build(tau, cfg.t_ramp(), cfg.dt(), ops, params)?,
            ProtocolKind::Cp => Guess::Cp.build(tau, cfg.t_ramp(), cfg.dt(), ops, params)?,
            ProtocolKind::File => {
                let file = cfg.protocol.file.as_ref().expect("validated");
                let path = if file.is_absolute() { file.clone() } else { self.base_dir.join(file) };
                read_controls_csv(&path)?
            }
        };
        Ok(c.with_active(&cfg.active_controls())?)
    }

    pub fn guess_kind(&self) -> Option<Guess> {
        match self.config.protocol.kind {
            ProtocolKind::Sr => Some(Guess::Sr),
            ProtocolKind::Cp => Some(Guess::Cp),
            ProtocolKind::File => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_device_table() {
        let cfg = parse("").unwrap();
        let p = cfg.circuit_params().unwrap();
        let t = CircuitParams::reference_device();
        assert_eq!(p.omega_l0, t.omega_l0);
        assert_eq!(p.g_rq, t.g_rq);
        assert_eq!(p.gamma0, t.gamma0);
        assert!((p.theta_env / t.theta_env - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(parse("[params]\nomega_l0_ghx = 11.5\n").is_err());
        assert!(parse("[grid]\ntau_ns = -1.0\ndt_ns = 0.005\n").is_err());
        assert!(parse("[protocol]\nkind = \"file\"\nt_ramp_ns = 1.0\n").is_err());
        assert!(parse("[optimize]\nactive_controls = [\"X\"]\n").is_err());
        assert!(parse("[grid]\ntau_ns = 100.0\n").is_ok());
        assert!(parse("colour = 3\n").is_err());
    }

    #[test]
    fn shipped_examples_parse() {
        let cfg = parse(include_str!("../../../configs/device.toml")).unwrap();
        assert_eq!(cfg.grid.tau_ns, 1500.0);
        assert_eq!(cfg.active_controls(), vec![Control::L]);
        let cfg = parse(include_str!("../../../configs/op3.toml")).unwrap();
        assert_eq!(cfg.active_controls(), Control::ALL.to_vec());
        assert_eq!(cfg.spectrum.source, SpectrumSource::Optimized);
    }
}
