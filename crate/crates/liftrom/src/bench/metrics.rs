//! Error metrics, quantities of interest, and CSV emission.

use std::io::Write as IoWrite;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::reduction::PodBasis;
use crate::{Error, Result, Vector};

/// Relative tolerance for matching two time grids.
const GRID_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Error records

/// Algebraic-block reduction of one sweep point: absent (state-space
/// methods), a reduced dimension, or the unreduced identity basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum R2Spec {
    None,
    Dim(usize),
    Identity,
}

impl R2Spec {
    fn csv(&self) -> String {
        match self {
            R2Spec::None => String::new(),
            R2Spec::Dim(k) => k.to_string(),
            R2Spec::Identity => "identity".into(),
        }
    }
}

/// One sweep point: configuration key, its average relative state error,
/// and wall-clock timings. Timings are reported (logged, kept in memory)
/// but never written into the deterministic CSV artifacts and never gated
/// in tests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// Benchmark model ("fhn" | "tubular").
    pub model: String,
    /// Reduction method ("qb-pod" | "quartic" | "qbdae" | "pod" | "pod-deim").
    pub method: String,
    /// Total reduced dimension of the state (differential) block.
    pub r1: usize,
    /// Algebraic-block reduction (QB-DAE methods only).
    pub r2: R2Spec,
    /// Interpolation modes (POD-DEIM only).
    pub r_deim: Option<usize>,
    /// Average relative state error over the full-horizon grid.
    pub error: f64,
    /// Offline seconds: basis computation + operator projection.
    pub offline_secs: f64,
    /// Online seconds: reduced-model integration.
    pub online_secs: f64,
}

impl ErrorRecord {
    fn key(&self) -> (String, String, usize, R2Spec, Option<usize>) {
        (self.model.clone(), self.method.clone(), self.r1, self.r2, self.r_deim)
    }
}

/// Collection of sweep points; assembly is deterministic (sorted by
/// configuration key regardless of execution order).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub records: Vec<ErrorRecord>,
}

impl ErrorReport {
    pub fn sort(&mut self) {
        self.records.sort_by_key(ErrorRecord::key);
    }

    /// Looks up the error of one configuration.
    pub fn error_of(
        &self,
        method: &str,
        r1: usize,
        r2: R2Spec,
        r_deim: Option<usize>,
    ) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.method == method && r.r1 == r1 && r.r2 == r2 && r.r_deim == r_deim)
            .map(|r| r.error)
    }

    /// Writes `errors.csv` rows (sorted copy; header mandatory).
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        let mut sorted = self.clone();
        sorted.sort();
        writeln!(w, "model,method,r1,r2,r_deim,error")?;
        for r in &sorted.records {
            let rd = r.r_deim.map(|k| k.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", r.model, r.method, r.r1, r.r2.csv(), rd, r.error)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Quantities of interest

/// Boundary-node time series (`label` doubles as the CSV file suffix).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QoiSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl QoiSeries {
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }

    /// Oscillation amplitude relative to the mean magnitude over the final
    /// `window` time units: `(max − min) / |mean|`.
    pub fn relative_amplitude(&self, window: f64) -> Result<f64> {
        let t_end = *self
            .times
            .last()
            .ok_or_else(|| Error::EmptyWindow("amplitude of an empty series".into()))?;
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= t_end - window)
            .map(|(_, v)| *v)
            .collect();
        if vals.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "no samples in the final {window} time units"
            )));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean.abs() < 1e-300 {
            return Err(Error::Domain("relative amplitude of a zero-mean series".into()));
        }
        let max = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let min = vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        Ok((max - min) / mean.abs())
    }
}

/// Extracts a named boundary quantity of interest:
/// `"theta1"` (outflow temperature, last node of `theta`), `"v0"` and
/// `"w0"` (left-boundary activator/recovery, first node).
pub fn extract_qoi(traj: &Trajectory, which: &str) -> Result<QoiSeries> {
    let (var, last_node) = match which {
        "theta1" => ("theta", true),
        "v0" => ("v", false),
        "w0" => ("w", false),
        other => {
            return Err(Error::UnknownQoi(format!(
                "unknown quantity of interest '{other}' (expected theta1, v0, or w0)"
            )));
        }
    };
    let idx = traj
        .layout
        .index_of(var)
        .ok_or_else(|| Error::UnknownQoi(format!("trajectory has no variable '{var}'")))?;
    let node = if last_node { traj.layout.size(idx) - 1 } else { 0 };
    Ok(QoiSeries { label: which.into(), times: traj.times.clone(), values: traj.series(var, node)? })
}

// ---------------------------------------------------------------------------
// Singular-value series

/// Full singular-value spectrum of one variable's snapshot block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaSeries {
    pub var: String,
    pub sigma: Vec<f64>,
}

impl SigmaSeries {
    /// Writes `index,sigma,sigma_rel` rows (1-based index, `sigma_rel`
    /// normalized by the leading value).
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "index,sigma,sigma_rel")?;
        let lead = self.sigma.first().copied().unwrap_or(0.0);
        for (i, s) in self.sigma.iter().enumerate() {
            let rel = if lead > 0.0 { s / lead } else { 0.0 };
            writeln!(w, "{},{},{}", i + 1, s, rel)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Grid helpers

fn check_grids(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim("error metric: record count", a.len(), b.len()));
    }
    for (ta, tb) in a.times.iter().zip(&b.times) {
        if (ta - tb).abs() > GRID_TOL * ta.abs().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "error metric: grids differ (t = {ta} vs {tb})"
            )));
        }
    }
    Ok(())
}

pub(crate) fn var_slice<'a>(traj: &'a Trajectory, var: &str, k: usize) -> Result<&'a [f64]> {
    let idx = traj
        .layout
        .index_of(var)
        .ok_or_else(|| Error::Layout(format!("error metric: no variable '{var}'")))?;
    let off = traj.layout.offset(idx);
    let size = traj.layout.size(idx);
    Ok(&traj.states.as_slice()[k * traj.layout.total_dim() + off..][..size])
}

fn in_window(t: f64, window: (f64, f64)) -> bool {
    t >= window.0 && t <= window.1
}

// ---------------------------------------------------------------------------
// Error metrics

/// Average relative state error over all shared records:
/// `(1/n_t) Σᵢ ‖x(tᵢ) − x_rom(tᵢ)‖ / ‖x(tᵢ)‖`, restricted to the named
/// variables (original variables only — auxiliary lifted variables are
/// never measured). Both trajectories must carry the listed variables at
/// equal per-variable sizes, on identical grids.
pub fn avg_rel_state_error(fom: &Trajectory, rom: &Trajectory, vars: &[&str]) -> Result<f64> {
    avg_rel_state_error_over(fom, rom, vars, (f64::MIN, f64::MAX))
}

/// [`avg_rel_state_error`] restricted to records with `t` inside `window`
/// (pipelines use this to average over the snapshot grid, which excludes
/// the initial record).
pub fn avg_rel_state_error_over(
    fom: &Trajectory,
    rom: &Trajectory,
    vars: &[&str],
    window: (f64, f64),
) -> Result<f64> {
    check_grids(fom, rom)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..fom.len() {
        if !in_window(fom.times[k], window) {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for var in vars {
            let xf = var_slice(fom, var, k)?;
            let xr = var_slice(rom, var, k)?;
            if xf.len() != xr.len() {
                return Err(Error::dim(
                    format!("error metric: size of variable '{var}'"),
                    xf.len(),
                    xr.len(),
                ));
            }
            for (a, b) in xf.iter().zip(xr) {
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
        if den == 0.0 {
            return Err(Error::Domain(format!(
                "error metric: zero reference norm at t = {}",
                fom.times[k]
            )));
        }
        sum += (num / den).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyWindow("error metric: no records in window".into()));
    }
    Ok(sum / count as f64)
}

/// Average relative state error of a reduced trajectory against a
/// full-order reference: reduced coordinates are lifted per variable
/// through `basis` before comparison. Only the named (original) variables
/// enter the metric.
pub fn avg_rel_error_vs_reduced(
    reference: &Trajectory,
    rom: &Trajectory,
    basis: &PodBasis,
    vars: &[&str],
    window: (f64, f64),
) -> Result<f64> {
    check_grids(reference, rom)?;
    // Resolve the basis block of each compared variable once.
    let blocks: Vec<usize> = vars
        .iter()
        .map(|v| {
            basis
                .layout()
                .index_of(v)
                .ok_or_else(|| Error::Layout(format!("error metric: basis has no variable '{v}'")))
        })
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..reference.len() {
        if !in_window(reference.times[k], window) {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (var, &bv) in vars.iter().zip(&blocks) {
            let xf = var_slice(reference, var, k)?;
            let xh = var_slice(rom, var, k)?;
            let block = basis.block(bv);
            if xf.len() != block.nrows() || xh.len() != block.ncols() {
                return Err(Error::dim(
                    format!("error metric: lifted size of variable '{var}'"),
                    block.nrows(),
                    xf.len(),
                ));
            }
            let mut lifted = Vector::zeros(block.nrows());
            lifted.gemv(1.0, block, &Vector::from_column_slice(xh), 0.0);
            for (a, b) in xf.iter().zip(lifted.iter()) {
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
        if den == 0.0 {
            return Err(Error::Domain(format!(
                "error metric: zero reference norm at t = {}",
                reference.times[k]
            )));
        }
        sum += (num / den).sqrt();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyWindow("error metric: no records in window".into()));
    }
    Ok(sum / count as f64)
}

/// Worst-case relative error over a window, minimized over a time shift of
/// the second trajectory (uniform grids; shift in whole records up to
/// `max_shift` time units). Oscillatory regimes drift in phase, so two
/// accurate solutions of a limit cycle are compared most fairly after
/// aligning them in time. Returns `(error, shift_seconds)`.
pub fn shift_optimal_rel_error(
    a: &Trajectory,
    b: &Trajectory,
    vars: &[&str],
    window: (f64, f64),
    max_shift: f64,
) -> Result<(f64, f64)> {
    check_grids(a, b)?;
    if a.len() < 2 {
        return Err(Error::EmptyWindow("shift comparison needs at least two records".into()));
    }
    let dt = a.times[1] - a.times[0];
    for k in 1..a.len() {
        if ((a.times[k] - a.times[k - 1]) - dt).abs() > GRID_TOL * dt.abs().max(1.0) {
            return Err(Error::InvalidConfig(
                "shift comparison requires a uniform record grid".into(),
            ));
        }
    }
    let kmax = (max_shift / dt).round() as i64;
    let mut best = (f64::INFINITY, 0.0);
    for shift in -kmax..=kmax {
        let mut worst: f64 = 0.0;
        let mut any = false;
        for k in 0..a.len() {
            if !in_window(a.times[k], window) {
                continue;
            }
            let kb = k as i64 + shift;
            if kb < 0 || kb as usize >= b.len() {
                continue;
            }
            let kb = kb as usize;
            let mut num = 0.0;
            let mut den = 0.0;
            for var in vars {
                let xa = var_slice(a, var, k)?;
                let xb = var_slice(b, var, kb)?;
                if xa.len() != xb.len() {
                    return Err(Error::dim(
                        format!("shift comparison: size of variable '{var}'"),
                        xa.len(),
                        xb.len(),
                    ));
                }
                for (p, q) in xa.iter().zip(xb) {
                    num += (p - q) * (p - q);
                    den += p * p;
                }
            }
            if den == 0.0 {
                continue;
            }
            worst = worst.max((num / den).sqrt());
            any = true;
        }
        if any && worst < best.0 {
            best = (worst, shift as f64 * dt);
        }
    }
    if best.0.is_infinite() {
        return Err(Error::EmptyWindow("shift comparison: no records in window".into()));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// File helpers

pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
