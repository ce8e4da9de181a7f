//! Per-variable POD bases from snapshot sets.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, VarLayout};
use crate::reduction::SnapshotSet;
use crate::tensor::{numerical_rank, thin_svd};
use crate::{Error, Mat, Result, Vector};

/// Block-diagonal POD basis: one orthonormal block per variable, plus the
/// full singular-value spectrum of each snapshot block for decay reporting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PodBasis {
    layout: VarLayout,
    reduced_layout: VarLayout,
    blocks: Vec<Mat>,
    sigma: Vec<Vector>,
}

impl PodBasis {
    /// Full-order layout (one block of `n_var` rows per variable).
    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    /// Reduced layout (same variable names, `r_var` coordinates each).
    pub fn reduced_layout(&self) -> &VarLayout {
        &self.reduced_layout
    }

    pub fn full_dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced_layout.total_dim()
    }

    /// Orthonormal block of one variable (`n_var × r_var`).
    pub fn block(&self, var: usize) -> &Mat {
        &self.blocks[var]
    }

    /// Full singular-value spectrum of one variable's snapshot block
    /// (empty for identity bases, which have no snapshot provenance).
    pub fn sigma(&self, var: usize) -> &Vector {
        &self.sigma[var]
    }

    /// Identity basis on `layout`: every block is the identity, so
    /// projection is exact and "reduced" systems equal their full
    /// counterparts.
    pub fn identity(layout: &VarLayout) -> PodBasis {
        let blocks: Vec<Mat> =
            (0..layout.var_count()).map(|v| Mat::identity(layout.size(v), layout.size(v))).collect();
        let sigma = (0..layout.var_count()).map(|_| Vector::zeros(0)).collect();
        PodBasis { layout: layout.clone(), reduced_layout: layout.clone(), blocks, sigma }
    }

    /// Builds a basis from externally supplied orthonormal blocks (one per
    /// variable, in layout order). Rejects shape mismatches and blocks whose
    /// columns are not orthonormal to 1e-10. Singular values are empty:
    /// the blocks carry no snapshot provenance.
    pub fn from_blocks(layout: &VarLayout, blocks: Vec<Mat>) -> Result<PodBasis> {
        if blocks.len() != layout.var_count() {
            return Err(Error::dim("basis blocks", layout.var_count(), blocks.len()));
        }
        let mut reduced: Vec<(&str, usize)> = Vec::with_capacity(blocks.len());
        for (var, b) in blocks.iter().enumerate() {
            let name = layout.name(var);
            if b.nrows() != layout.size(var) {
                return Err(Error::dim(
                    format!("basis block rows for variable '{name}'"),
                    layout.size(var),
                    b.nrows(),
                ));
            }
            if b.ncols() == 0 || b.ncols() > b.nrows() {
                return Err(Error::InvalidConfig(format!(
                    "basis block for variable '{name}' has {} columns for {} rows",
                    b.ncols(),
                    b.nrows()
                )));
            }
            let g = b.transpose() * b;
            let defect = (&g - Mat::identity(g.nrows(), g.ncols())).amax();
            if defect > 1e-10 {
                return Err(Error::InvalidConfig(format!(
                    "basis block for variable '{name}' is not orthonormal \
                     (defect {defect:.3e})"
                )));
            }
            reduced.push((name, b.ncols()));
        }
        let sigma = (0..blocks.len()).map(|_| Vector::zeros(0)).collect();
        Ok(PodBasis {
            layout: layout.clone(),
            reduced_layout: VarLayout::new(&reduced),
            blocks,
            sigma,
        })
    }

    /// The assembled block-diagonal matrix `V` (`full_dim × reduced_dim`).
    /// Offline use only: reduced systems never store it.
    pub fn assemble(&self) -> Mat {
        let mut v = Mat::zeros(self.full_dim(), self.reduced_dim());
        for (var, b) in self.blocks.iter().enumerate() {
            v.view_mut(
                (self.layout.offset(var), self.reduced_layout.offset(var)),
                (self.layout.size(var), self.reduced_layout.size(var)),
            )
            .copy_from(b);
        }
        v
    }

    /// `V x̂`: reconstructs a full state from reduced coordinates.
    pub fn lift(&self, xhat: &Vector) -> Result<Vector> {
        if xhat.len() != self.reduced_dim() {
            return Err(Error::dim("basis lift", self.reduced_dim(), xhat.len()));
        }
        let mut x = Vector::zeros(self.full_dim());
        for (var, b) in self.blocks.iter().enumerate() {
            let xh = xhat.rows(self.reduced_layout.offset(var), self.reduced_layout.size(var));
            x.rows_mut(self.layout.offset(var), self.layout.size(var)).gemv(1.0, b, &xh, 0.0);
        }
        Ok(x)
    }

    /// Reconstructs a full-order trajectory from a reduced one (`V x̂` per
    /// record). Variables are matched by name; reduced variables the basis
    /// does not cover (e.g. algebraic blocks) are ignored.
    pub fn lift_trajectory(&self, rtraj: &Trajectory) -> Result<Trajectory> {
        let mut sources = Vec::with_capacity(self.reduced_layout.var_count());
        for var in 0..self.reduced_layout.var_count() {
            let (name, size) = (self.reduced_layout.name(var), self.reduced_layout.size(var));
            let src = rtraj.layout.index_of(name).ok_or_else(|| {
                Error::Layout(format!("trajectory lift: trajectory has no variable '{name}'"))
            })?;
            if rtraj.layout.size(src) != size {
                return Err(Error::dim(
                    format!("trajectory lift: reduced size of '{name}'"),
                    size,
                    rtraj.layout.size(src),
                ));
            }
            sources.push(src);
        }
        let mut states = Mat::zeros(self.full_dim(), rtraj.len());
        for k in 0..rtraj.len() {
            for (var, &src) in sources.iter().enumerate() {
                let xh = rtraj
                    .states
                    .view((rtraj.layout.offset(src), k), (rtraj.layout.size(src), 1));
                states
                    .view_mut(
                        (self.layout.offset(var), k),
                        (self.layout.size(var), 1),
                    )
                    .gemm(1.0, self.block(var), &xh, 0.0);
            }
        }
        Ok(Trajectory { layout: self.layout.clone(), times: rtraj.times.clone(), states })
    }

    /// `Vᵀ x`: projects a full state onto reduced coordinates.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.full_dim() {
            return Err(Error::dim("basis projection", self.full_dim(), x.len()));
        }
        let mut xhat = Vector::zeros(self.reduced_dim());
        for (var, b) in self.blocks.iter().enumerate() {
            let xs = x.rows(self.layout.offset(var), self.layout.size(var));
            xhat.rows_mut(self.reduced_layout.offset(var), self.reduced_layout.size(var))
                .gemv_tr(1.0, b, &xs, 0.0);
        }
        Ok(xhat)
    }

    /// Largest deviation of `VᵀV` from the identity over all blocks.
    pub fn orthonormality_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let g = b.transpose() * b;
                (&g - Mat::identity(g.nrows(), g.ncols())).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Computes the leading-`r` POD basis of each variable block.
///
/// `r` gives the number of retained modes per variable, in layout order.
/// Fails when a requested count exceeds the numerical rank of that
/// variable's snapshot block; the error names the variable and reports the
/// rank.
pub fn compute_pod_basis(snapshots: &SnapshotSet, r: &[usize]) -> Result<PodBasis> {
    let modes: Vec<Vec<usize>> = r.iter().map(|&rv| (0..rv).collect()).collect();
    compute_pod_basis_with_modes(snapshots, &modes)
}

/// Computes a POD basis with an explicit mode-index list per variable
/// (0-based positions into the singular-value-sorted mode sequence).
///
/// `compute_pod_basis` is the leading-modes special case; explicit lists
/// exist because hand-picked mode subsets occasionally outperform the
/// leading ones, and reproducibility demands that such choices be stated
/// in configuration rather than rederived.
pub fn compute_pod_basis_with_modes(
    snapshots: &SnapshotSet,
    modes: &[Vec<usize>],
) -> Result<PodBasis> {
    let layout = snapshots.layout().clone();
    if modes.len() != layout.var_count() {
        return Err(Error::dim("pod: mode lists", layout.var_count(), modes.len()));
    }
    let mut blocks = Vec::with_capacity(modes.len());
    let mut sigma = Vec::with_capacity(modes.len());
    let mut reduced: Vec<(&str, usize)> = Vec::with_capacity(modes.len());
    for var in 0..layout.var_count() {
        let name = layout.name(var);
        let list = &modes[var];
        if list.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "pod: variable '{name}' requests zero modes"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if !list.iter().all(|m| seen.insert(m)) {
            return Err(Error::InvalidConfig(format!(
                "pod: duplicate mode indices for variable '{name}'"
            )));
        }
        let x = snapshots.block(var);
        let svd = thin_svd(x)?;
        let rank = numerical_rank(&svd.sigma, x.nrows().max(x.ncols()));
        let max_mode = *list.iter().max().unwrap();
        if max_mode >= rank {
            return Err(Error::RankDeficient {
                context: format!("POD basis for variable '{name}'"),
                requested: max_mode + 1,
                numerical_rank: rank,
            });
        }
        let mut b = Mat::zeros(x.nrows(), list.len());
        for (dst, &src) in list.iter().enumerate() {
            b.set_column(dst, &svd.u.column(src));
        }
        blocks.push(b);
        sigma.push(svd.sigma);
        reduced.push((name, list.len()));
    }
    let reduced_layout = VarLayout::new(&reduced);
    drop(reduced);
    Ok(PodBasis { layout, reduced_layout, blocks, sigma })
}
