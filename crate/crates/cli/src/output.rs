//! Artifact emission and control-file ingestion.
//!
//! Numbers are written with Rust's shortest round-trip formatting (`{:?}`) so that
//! identical runs produce identical bytes.

use std::path::{Path, PathBuf};

use qreset::controls::{ControlSet, TimeGrid};
use qreset::model::Control;
use qreset::units::{angular_to_ghz, ghz_to_angular, ns, to_ns};

use crate::error::{CliError, Result};

/// Files produced by one command, written together at the end.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json(&mut self, name: &str, value: &serde_json::Value) {
        let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
        s.push('\n');
        self.add(name, s.into_bytes());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file under `dir` via a temporary name and a rename.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.into(), source })?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            std::fs::write(&tmp, &bytes).map_err(|source| CliError::Output { path: tmp.clone(), source })?;
            std::fs::rename(&tmp, &path).map_err(|source| CliError::Output { path: path.clone(), source })?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV with a header row.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub const CONTROL_HEADER: [&str; 4] = ["t_ns", "omegaL_GHz", "omegaR_GHz", "omegaq_GHz"];

/// Control fields as ω/2π in GHz against time in ns, every `stride`-th point
/// plus the last.
pub fn controls_csv(c: &ControlSet, stride: usize) -> Vec<u8> {
    let grid = c.grid();
    let n = grid.n_steps();
    let rows = (0..=n).filter(move |k| k % stride == 0 || *k == n).map(|k| {
        let p = c.at(k);
        vec![to_ns(grid.time(k)), angular_to_ghz(p.omega_l), angular_to_ghz(p.omega_r), angular_to_ghz(p.omega_q)]
    });
    csv_bytes(&CONTROL_HEADER, rows)
}

/// Reads a control CSV written by [`controls_csv`] with stride 1. The time
/// column must start at 0 and be uniform.
pub fn read_controls_csv(path: &Path) -> Result<ControlSet> {
    let bad = |message: String| CliError::Input { path: path.into(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    if header != CONTROL_HEADER {
        return Err(bad(format!("expected header {}, found {}", CONTROL_HEADER.join(","), header.join(","))));
    }
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| bad(format!("row {}: '{field}' is not a number", line + 2)))?;
            cols[j].push(v);
        }
    }
    let n = cols[0].len();
    if n < 2 {
        return Err(bad("need at least two time points".into()));
    }
    let t = &cols[0];
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if t[0].abs() > 1e-9 * t[n - 1].abs() || !(dt > 0.0) {
        return Err(bad("time column must start at 0 and increase".into()));
    }
    if let Some(k) = (0..n).find(|&k| (t[k] - k as f64 * dt).abs() > 1e-6 * dt) {
        return Err(bad(format!("time column is not uniform at row {}", k + 2)));
    }
    let grid = TimeGrid::with_steps(ns(t[n - 1]), n - 1)?;
    let to_omega = |c: &Vec<f64>| c.iter().map(|g| ghz_to_angular(*g)).collect::<Vec<_>>();
    let varying: Vec<Control> = [(Control::L, &cols[1]), (Control::R, &cols[2]), (Control::Q, &cols[3])]
        .into_iter()
        .filter(|(_, s)| s.iter().any(|v| *v != s[0]))
        .map(|(c, _)| c)
        .collect();
    Ok(ControlSet::new(grid, to_omega(&cols[1]), to_omega(&cols[2]), to_omega(&cols[3]), &varying)?)
}
