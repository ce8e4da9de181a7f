//! Snapshot matrices sliced per variable from recorded trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, VarLayout};
use crate::{Error, Mat, Result};

/// Per-variable snapshot matrices on a shared equidistant time grid.
///
/// Block `v` has one column per retained record and `layout.size(v)` rows.
/// All blocks share the same column count and the same grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotSet {
    layout: VarLayout,
    times: Vec<f64>,
    blocks: Vec<Mat>,
}

impl SnapshotSet {
    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    /// Shared time grid (equidistant).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of snapshot columns.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Snapshot block of one variable (`layout.size(var) × len()`).
    pub fn block(&self, var: usize) -> &Mat {
        &self.blocks[var]
    }

    /// Snapshot block looked up by variable name.
    pub fn block_by_name(&self, name: &str) -> Result<&Mat> {
        let var = self
            .layout
            .index_of(name)
            .ok_or_else(|| Error::Layout(format!("snapshot set has no variable '{name}'")))?;
        Ok(&self.blocks[var])
    }

    /// All blocks stacked in layout order (`layout.total_dim() × len()`).
    pub fn stacked(&self) -> Mat {
        let mut m = Mat::zeros(self.layout.total_dim(), self.len());
        for (var, b) in self.blocks.iter().enumerate() {
            m.rows_mut(self.layout.offset(var), self.layout.size(var)).copy_from(b);
        }
        m
    }
}

/// Relative tolerance for grid-spacing uniformity and window-boundary
/// matching.
const GRID_TOL: f64 = 1e-8;

/// Slices the records of `traj` with `window.0 ≤ t ≤ window.1` into
/// per-variable snapshot blocks.
///
/// `layout` names the variables to keep; each must exist in the trajectory
/// layout with the same node count, so a subset of variables can be
/// collected. The selected grid must be equidistant. Fails if the window
/// selects no records.
pub fn collect_snapshots(
    traj: &Trajectory,
    layout: &VarLayout,
    window: (f64, f64),
) -> Result<SnapshotSet> {
    let (t_lo, t_hi) = window;
    if !(t_lo.is_finite() && t_hi.is_finite()) || t_lo > t_hi {
        return Err(Error::InvalidConfig(format!(
            "snapshot window [{t_lo}, {t_hi}] is not a valid interval"
        )));
    }
    let span = traj.times.last().copied().unwrap_or(0.0).abs().max(1.0);
    let tol = GRID_TOL * span;
    let selected: Vec<usize> = (0..traj.len())
        .filter(|&k| traj.times[k] >= t_lo - tol && traj.times[k] <= t_hi + tol)
        .collect();
    if selected.is_empty() {
        let (g0, g1) = match (traj.times.first(), traj.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (f64::NAN, f64::NAN),
        };
        return Err(Error::EmptyWindow(format!(
            "window [{t_lo}, {t_hi}] selects no records from grid [{g0}, {g1}] ({} records)",
            traj.len()
        )));
    }
    let times: Vec<f64> = selected.iter().map(|&k| traj.times[k]).collect();
    if times.len() >= 3 {
        let h = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - h).abs() > GRID_TOL * h.abs().max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "snapshot grid is not equidistant: spacing {} vs {}",
                    w[1] - w[0],
                    h
                )));
            }
        }
    }

    let mut blocks = Vec::with_capacity(layout.var_count());
    for var in 0..layout.var_count() {
        let name = layout.name(var);
        let src = traj
            .layout
            .index_of(name)
            .ok_or_else(|| Error::Layout(format!("trajectory has no variable '{name}'")))?;
        let n = traj.layout.size(src);
        if layout.size(var) != n {
            return Err(Error::dim(
                format!("snapshot block for variable '{name}'"),
                layout.size(var),
                n,
            ));
        }
        let off = traj.layout.offset(src);
        let mut b = Mat::zeros(n, selected.len());
        for (dst, &k) in selected.iter().enumerate() {
            b.column_mut(dst).copy_from(&traj.states.view((off, k), (n, 1)));
        }
        blocks.push(b);
    }
    Ok(SnapshotSet { layout: layout.clone(), times, blocks })
}
