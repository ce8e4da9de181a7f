//! Structure-preserving Galerkin projection with fully precomputed reduced
//! operators.
//!
//! Projection walks the nonzeros of the sparse full-order operators: each
//! entry `(i, j₁..j_k, v)` contributes `v · Vᵀe_i · (row j₁ of V ⊗ … ⊗ row
//! j_k of V)` to the reduced operator, and the per-variable block structure
//! of `V` restricts every Kronecker row to a small sub-grid. No
//! full-dimension Kronecker factor is ever materialized.

use serde::{Deserialize, Serialize};

use crate::dynamics::{OdeSystem, QbDae, QbOde, QuarticOde, SubstitutedQbDae, VarLayout};
use crate::reduction::PodBasis;
use crate::tensor::{kron_vec, MatricizedTensor};
use crate::{Error, Mat, Result, Vector};

/// Reduced dimension above which [`project_quartic`] refuses to build the
/// dense degree-three/four operators without an explicit override
/// (`r × r⁴` grows past a gigabyte shortly above this).
pub const MAX_QUARTIC_REDUCED_DIM: usize = 40;

/// Default entry budget for [`precompute_substituted_ode`]
/// (2·10⁸ stored values ≈ 1.6 GB).
pub const DEFAULT_SUBSTITUTION_BUDGET: usize = 200_000_000;

// ---------------------------------------------------------------------------
// Dense reduced operators

/// Dense matricized operator of order `in_dims.len()`, stored transposed
/// (`flat × out_dim`, column-major) so that application reduces to one
/// contiguous `dataᵀ · (x₁ ⊗ … ⊗ x_k)` product.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseOp {
    out_dim: usize,
    in_dims: Vec<usize>,
    /// `flat_dim() × out_dim`.
    data: Mat,
}

impl DenseOp {
    pub fn zeros(out_dim: usize, in_dims: Vec<usize>) -> Self {
        assert!(!in_dims.is_empty(), "operator needs at least one factor");
        let flat: usize = in_dims.iter().product();
        DenseOp { out_dim, in_dims, data: Mat::zeros(flat, out_dim) }
    }

    /// Wraps an `out_dim × flat` row-major-conceptual matrix (as produced by
    /// textbook formulas) into the transposed storage.
    pub fn from_out_major(in_dims: Vec<usize>, m: &Mat) -> Self {
        let flat: usize = in_dims.iter().product();
        assert_eq!(m.ncols(), flat, "flattened column count mismatch");
        DenseOp { out_dim: m.nrows(), in_dims, data: m.transpose() }
    }

    pub fn order(&self) -> usize {
        self.in_dims.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn flat_dim(&self) -> usize {
        self.in_dims.iter().product()
    }

    /// Number of stored values (dense: `out_dim · flat_dim`).
    pub fn entry_count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn add_entry(&mut self, row: usize, flat: usize, v: f64) {
        self.data[(flat, row)] += v;
    }

    #[inline]
    pub fn value(&self, row: usize, flat: usize) -> f64 {
        self.data[(flat, row)]
    }

    /// The flattened operator as an `out_dim × flat` dense matrix
    /// (test oracles; allocates the transpose).
    pub fn to_dense(&self) -> Mat {
        self.data.transpose()
    }

    /// `out += scale · T(kron)` for a pre-built Kronecker vector.
    pub fn add_apply_kron(&self, kron: &Vector, scale: f64, out: &mut Vector) -> Result<()> {
        if kron.len() != self.flat_dim() {
            return Err(Error::dim("dense op: kron factor", self.flat_dim(), kron.len()));
        }
        if out.len() != self.out_dim {
            return Err(Error::dim("dense op: output", self.out_dim, out.len()));
        }
        out.gemv_tr(scale, &self.data, kron, 1.0);
        Ok(())
    }

    /// `T(x₁ ⊗ … ⊗ x_k)` for distinct factors.
    pub fn apply(&self, factors: &[&Vector]) -> Result<Vector> {
        if factors.len() != self.order() {
            return Err(Error::dim("dense op: factor count", self.order(), factors.len()));
        }
        for (p, f) in factors.iter().enumerate() {
            if f.len() != self.in_dims[p] {
                return Err(Error::dim(format!("dense op: factor {p}"), self.in_dims[p], f.len()));
            }
        }
        let mut kron = factors[0].clone();
        for f in &factors[1..] {
            kron = kron_vec(&kron, f);
        }
        let mut out = Vector::zeros(self.out_dim);
        self.add_apply_kron(&kron, 1.0, &mut out)?;
        Ok(out)
    }

    /// `T(x ⊗ … ⊗ x)`.
    pub fn apply_pow(&self, x: &Vector) -> Result<Vector> {
        let factors: Vec<&Vector> = (0..self.order()).map(|_| x).collect();
        self.apply(&factors)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Kronecker powers `x, x⊗x, …, x^{⊗max_k}` (index `k-1` holds order `k`).
fn kron_powers(x: &Vector, max_k: usize) -> Vec<Vector> {
    let mut powers = Vec::with_capacity(max_k);
    if max_k == 0 {
        return powers;
    }
    powers.push(x.clone());
    for _ in 2..=max_k {
        let next = kron_vec(powers.last().unwrap(), x);
        powers.push(next);
    }
    powers
}

// ---------------------------------------------------------------------------
// Projection sides

/// One side of a projection: per-variable basis blocks addressed by
/// full-order row index.
struct ProjSide<'a> {
    blocks: Vec<&'a Mat>,
    red_offsets: Vec<usize>,
    /// Full row -> (variable, node).
    var_of: Vec<(usize, usize)>,
    reduced_dim: usize,
    full_dim: usize,
}

impl<'a> ProjSide<'a> {
    fn from_basis(basis: &'a PodBasis) -> Self {
        let layout = basis.layout();
        let reduced = basis.reduced_layout();
        let mut var_of = Vec::with_capacity(layout.total_dim());
        for var in 0..layout.var_count() {
            for node in 0..layout.size(var) {
                var_of.push((var, node));
            }
        }
        ProjSide {
            blocks: (0..layout.var_count()).map(|v| basis.block(v)).collect(),
            red_offsets: (0..layout.var_count()).map(|v| reduced.offset(v)).collect(),
            var_of,
            reduced_dim: reduced.total_dim(),
            full_dim: layout.total_dim(),
        }
    }

    /// Concatenation over a stacked state `(x₁, x₂)` with independent bases.
    fn concat(b1: &'a PodBasis, b2: &'a PodBasis) -> Self {
        let s1 = Self::from_basis(b1);
        let s2 = Self::from_basis(b2);
        let shift = s1.blocks.len();
        let r1 = s1.reduced_dim;
        let mut blocks = s1.blocks;
        blocks.extend(s2.blocks);
        let mut red_offsets = s1.red_offsets;
        red_offsets.extend(s2.red_offsets.iter().map(|o| o + r1));
        let mut var_of = s1.var_of;
        var_of.extend(s2.var_of.iter().map(|&(v, n)| (v + shift, n)));
        ProjSide {
            blocks,
            red_offsets,
            var_of,
            reduced_dim: r1 + s2.reduced_dim,
            full_dim: s1.full_dim + s2.full_dim,
        }
    }

    /// `(block, node, reduced offset)` of one full-order row.
    #[inline]
    fn row(&self, i: usize) -> (&'a Mat, usize, usize) {
        let (var, node) = self.var_of[i];
        (self.blocks[var], node, self.red_offsets[var])
    }
}

/// Projects a sparse matricized tensor onto dense reduced form:
/// `T̂ = V_outᵀ T (V_in ⊗ … ⊗ V_in)`, walking full-order nonzeros.
fn project_tensor(
    t: &MatricizedTensor,
    out_side: &ProjSide,
    in_side: &ProjSide,
) -> Result<DenseOp> {
    let k = t.order();
    if t.out_dim() != out_side.full_dim {
        return Err(Error::dim("projection: tensor rows", out_side.full_dim, t.out_dim()));
    }
    for (p, &d) in t.in_dims().iter().enumerate() {
        if d != in_side.full_dim {
            return Err(Error::dim(format!("projection: tensor factor {p}"), in_side.full_dim, d));
        }
    }
    let rhat = in_side.reduced_dim;
    let mut result = DenseOp::zeros(out_side.reduced_dim, vec![rhat; k]);
    // Strides of the flattened reduced multi-index (first factor slowest).
    let mut stride = vec![1usize; k];
    for p in (0..k.saturating_sub(1)).rev() {
        stride[p] = stride[p + 1] * rhat;
    }
    let mut flats: Vec<usize> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let mut counters = vec![0usize; k];
    t.for_each_entry(|row, subs, v| {
        let parts: Vec<(&Mat, usize, usize)> = subs.iter().map(|&j| in_side.row(j)).collect();
        let widths: Vec<usize> = parts.iter().map(|p| p.0.ncols()).collect();
        let total: usize = widths.iter().product();
        flats.clear();
        vals.clear();
        counters.iter_mut().for_each(|c| *c = 0);
        for _ in 0..total {
            let mut val = 1.0;
            let mut flat = 0usize;
            for p in 0..k {
                let (block, node, off) = parts[p];
                val *= block[(node, counters[p])];
                flat += (off + counters[p]) * stride[p];
            }
            flats.push(flat);
            vals.push(val);
            for p in (0..k).rev() {
                counters[p] += 1;
                if counters[p] < widths[p] {
                    break;
                }
                counters[p] = 0;
            }
        }
        let (oblock, onode, ooff) = out_side.row(row);
        for al in 0..oblock.ncols() {
            let w = v * oblock[(onode, al)];
            if w == 0.0 {
                continue;
            }
            let mut col = result.data.column_mut(ooff + al);
            for (idx, &f) in flats.iter().enumerate() {
                col[f] += w * vals[idx];
            }
        }
    });
    Ok(result)
}

/// Projects an order-1 operator to a dense reduced matrix.
fn project_linear(t: &MatricizedTensor, out_side: &ProjSide, in_side: &ProjSide) -> Result<Mat> {
    if t.order() != 1 {
        return Err(Error::dim("projection: linear operator order", 1, t.order()));
    }
    let d = project_tensor(t, out_side, in_side)?;
    Ok(d.to_dense())
}

/// `V_outᵀ B` for a dense input matrix.
fn project_matrix_rows(b: &Mat, out_side: &ProjSide) -> Result<Mat> {
    if b.nrows() != out_side.full_dim {
        return Err(Error::dim("projection: matrix rows", out_side.full_dim, b.nrows()));
    }
    let mut r = Mat::zeros(out_side.reduced_dim, b.ncols());
    for i in 0..b.nrows() {
        let (block, node, off) = out_side.row(i);
        for al in 0..block.ncols() {
            let w = block[(node, al)];
            if w == 0.0 {
                continue;
            }
            for c in 0..b.ncols() {
                r[(off + al, c)] += w * b[(i, c)];
            }
        }
    }
    Ok(r)
}

/// Reduces a diagonal mass matrix that is constant within each variable
/// block (then `VᵀEV` stays diagonal with the same per-variable constants).
pub(crate) fn reduce_mass(mass: &Vector, layout: &VarLayout, reduced: &VarLayout) -> Result<Vector> {
    if mass.len() != layout.total_dim() {
        return Err(Error::dim("projection: mass diagonal", layout.total_dim(), mass.len()));
    }
    let mut out = Vector::zeros(reduced.total_dim());
    for var in 0..layout.var_count() {
        let off = layout.offset(var);
        let m0 = mass[off];
        for i in 0..layout.size(var) {
            if (mass[off + i] - m0).abs() > 1e-14 * m0.abs().max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "mass diagonal varies within variable '{}'; projection would \
                     densify the reduced mass matrix",
                    layout.name(var)
                )));
            }
        }
        for i in 0..reduced.size(var) {
            out[reduced.offset(var) + i] = m0;
        }
    }
    Ok(out)
}

/// `Vᵀ T` for an order-1 operator, with both sides projected by `basis`.
pub(crate) fn project_linear_with_basis(t: &MatricizedTensor, basis: &PodBasis) -> Result<Mat> {
    let side = ProjSide::from_basis(basis);
    project_linear(t, &side, &side)
}

/// `Vᵀ B` for a dense matrix.
pub(crate) fn project_rows_with_basis(b: &Mat, basis: &PodBasis) -> Result<Mat> {
    project_matrix_rows(b, &ProjSide::from_basis(basis))
}

fn check_layout(context: &str, expected: &VarLayout, got: &VarLayout) -> Result<()> {
    if expected != got {
        return Err(Error::Layout(format!(
            "{context}: basis layout {:?} does not match system layout {:?}",
            got.names().collect::<Vec<_>>(),
            expected.names().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reduced polynomial ODE

/// Galerkin-reduced polynomial ODE with dense precomputed operators:
///
/// `Ê x̂̇ = Â x̂ + Σ_k Ĝ_k x̂^{⊗k} + Σ_j u_j Σ_k N̂_{jk} x̂^{⊗k} + B̂ u`
///
/// Every operator has reduced dimensions only, so simulation never touches
/// an object of full order. The fully implicit scheme is not supported
/// (no Jacobian is assembled for the dense polynomial terms); use an IMEX
/// or explicit scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReducedQuartic {
    /// Reduced layout: same variable names, `r_var` coordinates each.
    pub layout: VarLayout,
    /// Diagonal of `Ê = VᵀEV` (per-variable constants).
    pub mass: Vector,
    /// `r × r`.
    pub a: Mat,
    /// Polynomial terms of order ≥ 2 (order read off each operator).
    pub g: Vec<DenseOp>,
    /// Per input channel: state-dependent input operators.
    pub n_ops: Vec<Vec<DenseOp>>,
    /// `r × m`.
    pub b: Mat,
}

impl ReducedQuartic {
    pub fn reduced_dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// Highest polynomial order appearing in the dynamics.
    pub fn max_order(&self) -> usize {
        let g = self.g.iter().map(DenseOp::order).max().unwrap_or(1);
        let n = self
            .n_ops
            .iter()
            .flat_map(|ch| ch.iter().map(DenseOp::order))
            .max()
            .unwrap_or(1);
        g.max(n).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.reduced_dim();
        if self.mass.len() != r {
            return Err(Error::dim("reduced quartic: mass", r, self.mass.len()));
        }
        if self.a.shape() != (r, r) {
            return Err(Error::dim("reduced quartic: A rows", r, self.a.nrows()));
        }
        for op in self.g.iter().chain(self.n_ops.iter().flatten()) {
            if op.out_dim() != r || op.in_dims().iter().any(|&d| d != r) {
                return Err(Error::dim("reduced quartic: operator dims", r, op.out_dim()));
            }
        }
        if self.n_ops.len() != self.b.ncols() {
            return Err(Error::dim(
                "reduced quartic: input channels",
                self.b.ncols(),
                self.n_ops.len(),
            ));
        }
        if self.b.nrows() != r {
            return Err(Error::dim("reduced quartic: B rows", r, self.b.nrows()));
        }
        Ok(())
    }

    /// Largest dimension of any stored operator object — the instrumented
    /// guard for the offline/online split.
    pub fn max_operand_dim(&self) -> usize {
        self.reduced_dim()
    }
}

impl OdeSystem for ReducedQuartic {
    fn layout(&self) -> &VarLayout {
        &self.layout
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn mass_diag(&self) -> &Vector {
        &self.mass
    }

    fn linear_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for j in 0..self.a.ncols() {
            for i in 0..self.a.nrows() {
                if self.a[(i, j)] != 0.0 {
                    t.push((i, j, self.a[(i, j)]));
                }
            }
        }
        t
    }

    fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
        out.gemv(1.0, &self.a, x, 1.0);
    }

    fn add_explicit_terms(&self, x: &Vector, u: &Vector, out: &mut Vector) -> Result<()> {
        if u.len() != self.b.ncols() {
            return Err(Error::dim("reduced quartic: input", self.b.ncols(), u.len()));
        }
        let powers = kron_powers(x, self.max_order());
        for op in &self.g {
            op.add_apply_kron(&powers[op.order() - 1], 1.0, out)?;
        }
        for (j, ch) in self.n_ops.iter().enumerate() {
            if u[j] == 0.0 {
                continue;
            }
            for op in ch {
                op.add_apply_kron(&powers[op.order() - 1], u[j], out)?;
            }
        }
        if self.b.ncols() > 0 {
            out.gemv(1.0, &self.b, u, 1.0);
        }
        Ok(())
    }
}

/// Galerkin projection of a polynomial ODE onto a per-variable POD basis.
///
/// All reduced operators are dense and precomputed; assembly cost is
/// proportional to the full operators' nonzero counts times the reduced
/// sub-block sizes. Refuses reduced dimensions above
/// [`MAX_QUARTIC_REDUCED_DIM`] unless `allow_large` is set, because the
/// dense degree-four operator scales as `r⁵` values.
pub fn project_quartic(
    sys: &QuarticOde,
    basis: &PodBasis,
    allow_large: bool,
) -> Result<ReducedQuartic> {
    check_layout("project_quartic", &sys.layout, basis.layout())?;
    let r = basis.reduced_dim();
    if r > MAX_QUARTIC_REDUCED_DIM && !allow_large {
        return Err(Error::InvalidConfig(format!(
            "reduced dimension {r} exceeds {MAX_QUARTIC_REDUCED_DIM}; the dense degree-four \
             operator would hold {} values — pass allow_large to override",
            r * r * r * r * r
        )));
    }
    let side = ProjSide::from_basis(basis);
    let reduced = ReducedQuartic {
        layout: basis.reduced_layout().clone(),
        mass: reduce_mass(&sys.mass, &sys.layout, basis.reduced_layout())?,
        a: project_linear(&sys.a, &side, &side)?,
        g: sys.g.iter().map(|t| project_tensor(t, &side, &side)).collect::<Result<_>>()?,
        n_ops: sys
            .n_ops
            .iter()
            .map(|ch| ch.iter().map(|t| project_tensor(t, &side, &side)).collect())
            .collect::<Result<_>>()?,
        b: project_matrix_rows(&sys.b, &side)?,
    };
    reduced.validate()?;
    Ok(reduced)
}

/// Galerkin projection of a quadratic-bilinear ODE; returns the same
/// reduced container with a single quadratic term per the QB structure.
/// No size gate applies: the dense reduced operators scale as `r³`.
pub fn project_qb_ode(sys: &QbOde, basis: &PodBasis) -> Result<ReducedQuartic> {
    check_layout("project_qb_ode", &sys.layout, basis.layout())?;
    let side = ProjSide::from_basis(basis);
    let reduced = ReducedQuartic {
        layout: basis.reduced_layout().clone(),
        mass: reduce_mass(&sys.mass, &sys.layout, basis.reduced_layout())?,
        a: project_linear(&sys.a, &side, &side)?,
        g: vec![project_tensor(&sys.h, &side, &side)?],
        n_ops: sys
            .n_ops
            .iter()
            .map(|t| Ok(vec![project_tensor(t, &side, &side)?]))
            .collect::<Result<_>>()?,
        b: project_matrix_rows(&sys.b, &side)?,
    };
    reduced.validate()?;
    Ok(reduced)
}

// ---------------------------------------------------------------------------
// Reduced QB-DAE

/// Galerkin-reduced quadratic-bilinear DAE.
///
/// The differential and algebraic blocks are projected with independent
/// bases `V₁`, `V₂`; the algebraic equation keeps its structure
/// `0 = -x̂₂ + Ĥ₂(x̂₁ ⊗ x̂₁)` with `Ĥ₂ = V₂ᵀ H̃₂ (V₁ ⊗ V₁)`, so the reduced
/// system is again an index-1 [`QbDae`] and all DAE machinery applies
/// unchanged. `substituted` optionally carries the equivalent explicit
/// quartic ODE in `x̂₁` (see [`precompute_substituted_ode`]).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReducedQbdae {
    pub dae: QbDae,
    pub substituted: Option<SubstitutedOde>,
}

impl ReducedQbdae {
    pub fn r1(&self) -> usize {
        self.dae.dim1()
    }

    pub fn r2(&self) -> usize {
        self.dae.dim2()
    }
}

/// Converts a dense reduced operator into sparse storage (entry-exact).
fn dense_to_tensor(out_dim: usize, in_dims: Vec<usize>, out_major: &Mat) -> MatricizedTensor {
    let mut t = MatricizedTensor::new(out_dim, in_dims);
    for col in 0..out_major.ncols() {
        for row in 0..out_major.nrows() {
            let v = out_major[(row, col)];
            if v != 0.0 {
                t.push_flat(row, col as u64, v);
            }
        }
    }
    t.assemble();
    t
}

/// Galerkin projection of a QB-DAE onto per-variable bases for the
/// differential (`v1`) and algebraic (`v2`) blocks.
///
/// Passing [`PodBasis::identity`] for `v2` keeps the algebraic variables
/// unreduced; eliminating them then reproduces the quartic ROM obtained by
/// projecting the equivalent quartic ODE with `v1`.
pub fn project_qbdae(sys: &QbDae, v1: &PodBasis, v2: &PodBasis) -> Result<ReducedQbdae> {
    check_layout("project_qbdae: differential block", &sys.layout1, v1.layout())?;
    check_layout("project_qbdae: algebraic block", &sys.layout2, v2.layout())?;
    let s1 = ProjSide::from_basis(v1);
    let s2 = ProjSide::from_basis(v2);
    let sc = ProjSide::concat(v1, v2);
    let (r1, r2) = (v1.reduced_dim(), v2.reduced_dim());
    let r = r1 + r2;

    let a11 = project_linear(&sys.a11, &s1, &s1)?;
    let a12 = project_linear(&sys.a12, &s1, &s2)?;
    let h1 = project_tensor(&sys.h1, &s1, &sc)?;
    let h2t = project_tensor(&sys.h2t, &s2, &s1)?;
    let n1: Vec<Mat> =
        sys.n1_ops.iter().map(|t| project_linear(t, &s1, &sc)).collect::<Result<_>>()?;

    let dae = QbDae {
        layout1: v1.reduced_layout().clone(),
        layout2: v2.reduced_layout().clone(),
        mass1: reduce_mass(&sys.mass1, &sys.layout1, v1.reduced_layout())?,
        a11: dense_to_tensor(r1, vec![r1], &a11),
        a12: dense_to_tensor(r1, vec![r2], &a12),
        h1: dense_to_tensor(r1, vec![r, r], &h1.to_dense()),
        n1_ops: n1.iter().map(|m| dense_to_tensor(r1, vec![r], m)).collect(),
        b1: project_matrix_rows(&sys.b1, &s1)?,
        h2t: dense_to_tensor(r2, vec![r1, r1], &h2t.to_dense()),
    };
    dae.validate()?;
    Ok(ReducedQbdae { dae, substituted: None })
}

// ---------------------------------------------------------------------------
// Substituted reduced ODE

/// Explicit quartic ODE in `x̂₁` obtained by substituting
/// `x̂₂ = Ĥ₂(x̂₁ ⊗ x̂₁)` into the reduced differential equations:
///
/// `Ê₁₁ x̂̇₁ = Â₁₁ x̂₁ + (Â₁₂Ĥ₂)(x̂₁⊗x̂₁) + H̃₁ [x̂₁⊗x̂₁; x̂₁^{⊗3}; x̂₁^{⊗4}]
///  + Σ_j u_j (N̂_{j,1} x̂₁ + (N̂_{j,2}Ĥ₂)(x̂₁⊗x̂₁)) + B̂₁ u`
///
/// All matrix products are precomputed; `h1_tilde` holds the three degree
/// blocks of `H̃₁` (dense, `r₁ × (r₁² + r₁³ + r₁⁴)` in total).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubstitutedOde {
    pub layout: VarLayout,
    pub mass: Vector,
    /// `Â₁₁`, `r₁ × r₁`.
    pub a: Mat,
    /// Degree-2/3/4 blocks of `H̃₁`.
    pub h1_tilde: Vec<DenseOp>,
    /// Precomputed `Â₁₂Ĥ₂`, `r₁ × r₁²`.
    pub a12_h2: Mat,
    /// Per channel: `N̂_{j,1}` (`r₁ × r₁`).
    pub n11: Vec<Mat>,
    /// Per channel: precomputed `N̂_{j,2}Ĥ₂` (`r₁ × r₁²`).
    pub n12_h2: Vec<Mat>,
    /// `r₁ × m`.
    pub b1: Mat,
}

impl SubstitutedOde {
    /// Total flattened column count of `H̃₁` (= `r₁² + r₁³ + r₁⁴`).
    pub fn h1_tilde_cols(&self) -> usize {
        self.h1_tilde.iter().map(DenseOp::flat_dim).sum()
    }
}

impl OdeSystem for SubstitutedOde {
    fn layout(&self) -> &VarLayout {
        &self.layout
    }

    fn input_dim(&self) -> usize {
        self.b1.ncols()
    }

    fn mass_diag(&self) -> &Vector {
        &self.mass
    }

    fn linear_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for j in 0..self.a.ncols() {
            for i in 0..self.a.nrows() {
                if self.a[(i, j)] != 0.0 {
                    t.push((i, j, self.a[(i, j)]));
                }
            }
        }
        t
    }

    fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
        out.gemv(1.0, &self.a, x, 1.0);
    }

    fn add_explicit_terms(&self, x: &Vector, u: &Vector, out: &mut Vector) -> Result<()> {
        if u.len() != self.b1.ncols() {
            return Err(Error::dim("substituted ode: input", self.b1.ncols(), u.len()));
        }
        let powers = kron_powers(x, 4);
        for op in &self.h1_tilde {
            op.add_apply_kron(&powers[op.order() - 1], 1.0, out)?;
        }
        out.gemv(1.0, &self.a12_h2, &powers[1], 1.0);
        for j in 0..u.len() {
            if u[j] == 0.0 {
                continue;
            }
            out.gemv(u[j], &self.n11[j], x, 1.0);
            out.gemv(u[j], &self.n12_h2[j], &powers[1], 1.0);
        }
        if self.b1.ncols() > 0 {
            out.gemv(1.0, &self.b1, u, 1.0);
        }
        Ok(())
    }
}

/// Densifies a sparse operator into `out_dim × flat` form.
fn tensor_to_dense(t: &MatricizedTensor) -> Mat {
    let mut m = Mat::zeros(t.out_dim(), t.flat_dim() as usize);
    for (r, f, v) in t.iter() {
        m[(r, f as usize)] += v;
    }
    m
}

/// Builds the substituted explicit ODE of a reduced QB-DAE, precomputing
/// `H̃₁` (via the Kronecker mixed-product identity) and the folded products
/// `Â₁₂Ĥ₂` and `N̂_{j,2}Ĥ₂`.
///
/// Fails with a budget error when the stored value count (dominated by the
/// `r₁ × r₁⁴` block) would exceed `budget`
/// (default [`DEFAULT_SUBSTITUTION_BUDGET`]).
pub fn precompute_substituted_ode(
    rom: ReducedQbdae,
    budget: Option<usize>,
) -> Result<ReducedQbdae> {
    let dae = &rom.dae;
    let (r1, r2) = (dae.dim1(), dae.dim2());
    let r = r1 + r2;
    let m = dae.b1.ncols();
    let budget = budget.unwrap_or(DEFAULT_SUBSTITUTION_BUDGET);
    let r1u = r1 as u128;
    let required_u = r1u * (r1u * r1u + r1u * r1u * r1u + r1u * r1u * r1u * r1u)
        + (1 + m as u128) * r1u * r1u * r1u;
    if required_u > budget as u128 {
        return Err(Error::BudgetExceeded {
            context: "substituted reduced DAE".into(),
            required: required_u.min(usize::MAX as u128) as usize,
            budget,
        });
    }

    let hd = tensor_to_dense(&dae.h1); // r1 × r²
    let h2 = tensor_to_dense(&dae.h2t); // r2 × r1²

    // Quadrant gathers of Ĥ₁ columns over the (x̂₁, x̂₂) split.
    let c11 = Mat::from_fn(r1, r1 * r1, |a, c| hd[(a, (c / r1) * r + (c % r1))]);
    let c12 = Mat::from_fn(r1, r1 * r2, |a, c| hd[(a, (c / r2) * r + r1 + (c % r2))]);
    let c21 = Mat::from_fn(r1, r2 * r1, |a, c| hd[(a, (r1 + c / r1) * r + (c % r1))]);
    let c22 = Mat::from_fn(r1, r2 * r2, |a, c| hd[(a, (r1 + c / r2) * r + r1 + (c % r2))]);

    // Degree 2: Ĥ₁ restricted to (x̂₁ ⊗ x̂₁) columns.
    let g2 = c11;

    // Degree 3: x̂₁ ⊗ Q contributes Ĥ₁(P₁⊗P₂)(I ⊗ Ĥ₂); Q ⊗ x̂₁ contributes
    // Ĥ₁(P₂⊗P₁)(Ĥ₂ ⊗ I), with Q = Ĥ₂(x̂₁ ⊗ x̂₁).
    let mut g3 = Mat::zeros(r1, r1 * r1 * r1);
    for i in 0..r1 {
        let block = c12.view((0, i * r2), (r1, r2)) * &h2;
        let mut dst = g3.view_mut((0, i * r1 * r1), (r1, r1 * r1));
        dst.zip_apply(&block, |d, s| *d += s);
    }
    for a in 0..r2 {
        for f2 in 0..r1 * r1 {
            let w = h2[(a, f2)];
            if w == 0.0 {
                continue;
            }
            for mcol in 0..r1 {
                let src = c21.column(a * r1 + mcol);
                let mut dst = g3.column_mut(f2 * r1 + mcol);
                dst.axpy(w, &src, 1.0);
            }
        }
    }

    // Degree 4: Q ⊗ Q contributes Ĥ₁(P₂⊗P₂)(Ĥ₂ ⊗ Ĥ₂).
    let mut g4 = Mat::zeros(r1, r1 * r1 * r1 * r1);
    let mut m1 = Mat::zeros(r1, r2 * r1 * r1);
    for a in 0..r2 {
        let block = c22.view((0, a * r2), (r1, r2)) * &h2;
        m1.view_mut((0, a * r1 * r1), (r1, r1 * r1)).copy_from(&block);
    }
    for a in 0..r2 {
        for f in 0..r1 * r1 {
            let w = h2[(a, f)];
            if w == 0.0 {
                continue;
            }
            let src = m1.view((0, a * r1 * r1), (r1, r1 * r1));
            let mut dst = g4.view_mut((0, f * r1 * r1), (r1, r1 * r1));
            dst.zip_apply(&src, |d, s| *d += w * s);
        }
    }

    let a12d = tensor_to_dense(&dae.a12);
    let a12_h2 = &a12d * &h2;
    let mut n11 = Vec::with_capacity(m);
    let mut n12_h2 = Vec::with_capacity(m);
    for t in &dae.n1_ops {
        let nd = tensor_to_dense(t); // r1 × r
        n11.push(nd.view((0, 0), (r1, r1)).into_owned());
        n12_h2.push(nd.view((0, r1), (r1, r2)).into_owned() * &h2);
    }

    let substituted = SubstitutedOde {
        layout: dae.layout1.clone(),
        mass: dae.mass1.clone(),
        a: tensor_to_dense(&dae.a11),
        h1_tilde: vec![
            DenseOp::from_out_major(vec![r1, r1], &g2),
            DenseOp::from_out_major(vec![r1, r1, r1], &g3),
            DenseOp::from_out_major(vec![r1, r1, r1, r1], &g4),
        ],
        a12_h2,
        n11,
        n12_h2,
        b1: dae.b1.clone(),
    };
    Ok(ReducedQbdae { dae: rom.dae, substituted: Some(substituted) })
}

/// Right-hand side of a (reduced or full) QB-DAE via two-step evaluation:
/// complete `x₂` from the constraint, then apply the structured operators.
/// Serves as the oracle for the precomputed substituted form.
pub fn two_step_rhs(dae: &QbDae, x1: &Vector, u: &Vector) -> Result<Vector> {
    SubstitutedQbDae { dae }.eval_rhs(x1, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_ode, solve_qbdae, InputSignal, IntegrateOptions, Scheme};
    use crate::models::scalar::{scalar_qb_dae, scalar_quartic};
    use crate::models::{build_tubular_qbdae, build_tubular_quartic, TubularConfig};
    use crate::tensor::thin_svd;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Mat {
        let x = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        thin_svd(&x).unwrap().u.columns(0, r).into_owned()
    }

    fn random_basis(rng: &mut ChaCha8Rng, layout: &VarLayout, r: &[usize]) -> PodBasis {
        let blocks: Vec<Mat> = (0..layout.var_count())
            .map(|v| random_orthonormal(rng, layout.size(v), r[v]))
            .collect();
        PodBasis::from_blocks(layout, blocks).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dense_op_apply_matches_kron_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut op = DenseOp::zeros(3, vec![2, 4, 3]);
        for row in 0..3 {
            for flat in 0..24 {
                op.add_entry(row, flat, rng.gen_range(-1.0..1.0));
            }
        }
        let x1 = random_vec(&mut rng, 2);
        let x2 = random_vec(&mut rng, 4);
        let x3 = random_vec(&mut rng, 3);
        let fast = op.apply(&[&x1, &x2, &x3]).unwrap();
        let kron = kron_vec(&kron_vec(&x1, &x2), &x3);
        let oracle = op.to_dense() * &kron;
        assert_relative_eq!(fast, oracle, epsilon = 1e-13);
        // Powers path.
        let mut sq = DenseOp::zeros(2, vec![2, 2]);
        sq.add_entry(0, 3, 2.0);
        sq.add_entry(1, 0, -1.0);
        let y = Vector::from_vec(vec![3.0, 5.0]);
        let out = sq.apply_pow(&y).unwrap();
        assert_relative_eq!(out[0], 50.0, epsilon = 1e-14);
        assert_relative_eq!(out[1], -9.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_projection_reproduces_scalar_quartic() {
        let sys = scalar_quartic();
        let basis = PodBasis::identity(&sys.layout);
        let rom = project_quartic(&sys, &basis, false).unwrap();
        assert_relative_eq!(rom.a, tensor_to_dense(&sys.a), epsilon = 1e-15);
        assert_relative_eq!(rom.b, sys.b, epsilon = 1e-15);
        for (red, full) in rom.g.iter().zip(&sys.g) {
            assert_relative_eq!(red.to_dense(), tensor_to_dense(full), epsilon = 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = sys.layout.total_dim();
        let x = random_vec(&mut rng, d);
        let u = random_vec(&mut rng, sys.b.ncols());
        let full_rhs = sys.eval_rhs(&x, &u).unwrap();
        let rom_rhs = rom.eval_rhs(&x, &u).unwrap();
        assert_relative_eq!(full_rhs, rom_rhs, epsilon = 1e-13);
    }

    #[test]
    fn projection_identities_orders_two_three_four() {
        // Random sparse operators over a two-variable layout; for 20 random
        // reduced states the reduced action must equal project(full action
        // on lifted state) to 1e-12.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let layout = VarLayout::new(&[("p", 5), ("q", 4)]);
        let n = 9;
        let basis = random_basis(&mut rng, &layout, &[3, 2]);
        let side = ProjSide::from_basis(&basis);
        for k in 2..=4 {
            let mut t = MatricizedTensor::new(n, vec![n; k]);
            for _ in 0..60 {
                let subs: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
                t.push(rng.gen_range(0..n), &subs, rng.gen_range(-1.0..1.0));
            }
            t.assemble();
            let reduced = project_tensor(&t, &side, &side).unwrap();
            assert_eq!(reduced.in_dims(), vec![5usize; k].as_slice());
            for _ in 0..20 {
                let xhat = random_vec(&mut rng, 5);
                let fast = reduced.apply_pow(&xhat).unwrap();
                let lifted = basis.lift(&xhat).unwrap();
                let oracle = basis.project(&t.apply_pow(&lifted).unwrap()).unwrap();
                let scale = 1.0 + oracle.amax();
                assert!(
                    (&fast - &oracle).amax() <= 1e-12 * scale,
                    "order {k}: defect {:.3e}",
                    (&fast - &oracle).amax()
                );
            }
        }
    }

    #[test]
    fn reduced_operator_dimension_audit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = TubularConfig { n: 6, ..TubularConfig::default() };
        let sys = build_tubular_quartic(&cfg).unwrap();
        let basis = random_basis(&mut rng, &sys.layout, &[2; 5]);
        let rom = project_quartic(&sys, &basis, false).unwrap();
        assert_eq!(rom.reduced_dim(), 10);
        let g4 = rom.g.iter().find(|g| g.order() == 4).unwrap();
        assert_eq!(g4.in_dims(), &[10, 10, 10, 10]);
        assert_eq!(g4.out_dim(), 10);
        assert_eq!(rom.max_operand_dim(), 10);
        assert_eq!(rom.layout.size(3), 2);
        assert_eq!(rom.layout.name(3), "w2");
    }

    #[test]
    fn quartic_rom_rhs_matches_projected_full_rhs() {
        // Galerkin consistency on the real reactor operators: for states in
        // the basis range, VᵀF(Vx̂) equals the reduced RHS.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = TubularConfig { n: 7, ..TubularConfig::default() };
        let sys = build_tubular_quartic(&cfg).unwrap();
        let basis = random_basis(&mut rng, &sys.layout, &[3, 3, 2, 2, 2]);
        let rom = project_quartic(&sys, &basis, false).unwrap();
        for _ in 0..10 {
            let xhat = random_vec(&mut rng, rom.reduced_dim());
            let u = Vector::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let lifted = basis.lift(&xhat).unwrap();
            let oracle = basis.project(&sys.eval_rhs(&lifted, &u).unwrap()).unwrap();
            let fast = rom.eval_rhs(&xhat, &u).unwrap();
            let scale = 1.0 + oracle.amax();
            assert!(
                (&fast - &oracle).amax() <= 1e-11 * scale,
                "defect {:.3e}",
                (&fast - &oracle).amax()
            );
        }
    }

    #[test]
    fn oversize_reduction_requires_override() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 41 reduced coordinates from a 44-dimensional quadratic-only system.
        let layout = VarLayout::flat("x", 44);
        let mut sys = scalar_quartic();
        sys.layout = layout.clone();
        sys.mass = Vector::from_element(44, 1.0);
        let mut a = MatricizedTensor::new(44, vec![44]);
        a.push(0, &[1], 1.0);
        a.assemble();
        sys.a = a;
        let mut g2 = MatricizedTensor::new(44, vec![44, 44]);
        g2.push(2, &[0, 1], 0.5);
        g2.assemble();
        sys.g = vec![g2];
        sys.n_ops = vec![];
        sys.b = Mat::zeros(44, 0);
        let basis = random_basis(&mut rng, &layout, &[41]);
        match project_quartic(&sys, &basis, false) {
            Err(Error::InvalidConfig(msg)) => assert!(msg.contains("allow_large")),
            other => panic!("expected size gate, got {:?}", other.map(|_| ())),
        }
        let rom = project_quartic(&sys, &basis, true).unwrap();
        assert_eq!(rom.reduced_dim(), 41);
    }

    #[test]
    fn varying_mass_within_a_variable_is_rejected() {
        let mut sys = scalar_quartic();
        // All four scalar states live in separate variables, so perturb one
        // after merging them into a single block.
        sys.layout = VarLayout::flat("x", 4);
        sys.mass = Vector::from_vec(vec![1.0, 1.0, 2.0, 1.0]);
        let basis = PodBasis::identity(&sys.layout);
        assert!(matches!(
            project_quartic(&sys, &basis, false),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let sys = scalar_quartic();
        let wrong = PodBasis::identity(&VarLayout::flat("y", 4));
        assert!(matches!(project_quartic(&sys, &wrong, false), Err(Error::Layout(_))));
    }

    #[test]
    fn identity_projection_reproduces_scalar_dae() {
        let dae = scalar_qb_dae();
        let v1 = PodBasis::identity(&dae.layout1);
        let v2 = PodBasis::identity(&dae.layout2);
        let rom = project_qbdae(&dae, &v1, &v2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x1 = random_vec(&mut rng, dae.dim1());
            let u = random_vec(&mut rng, 1);
            let full = two_step_rhs(&dae, &x1, &u).unwrap();
            let red = two_step_rhs(&rom.dae, &x1, &u).unwrap();
            assert_relative_eq!(full, red, epsilon = 1e-13);
        }
        assert_relative_eq!(
            tensor_to_dense(&rom.dae.h2t),
            tensor_to_dense(&dae.h2t),
            epsilon = 1e-14
        );
    }

    #[test]
    fn algebraic_structure_and_projected_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = TubularConfig { n: 6, ..TubularConfig::default() };
        let dae = build_tubular_qbdae(&cfg).unwrap();
        let v1 = random_basis(&mut rng, &dae.layout1, &[2; 5]);
        let v2 = random_basis(&mut rng, &dae.layout2, &[2; 3]);
        let rom = project_qbdae(&dae, &v1, &v2).unwrap();
        assert_eq!(rom.r1(), 10);
        assert_eq!(rom.r2(), 6);
        assert_eq!(rom.dae.h2t.in_dims(), &[10, 10]);
        // Ĥ₂(x̂₁ ⊗ x̂₁) = V₂ᵀ H̃₂(V₁x̂₁ ⊗ V₁x̂₁) for random reduced states.
        for _ in 0..20 {
            let xhat = random_vec(&mut rng, 10);
            let fast = rom.dae.algebraic_from_differential(&xhat).unwrap();
            let lifted = v1.lift(&xhat).unwrap();
            let oracle = v2.project(&dae.algebraic_from_differential(&lifted).unwrap()).unwrap();
            let scale = 1.0 + oracle.amax();
            assert!((&fast - &oracle).amax() <= 1e-12 * scale);
            // The completed reduced state has exactly zero residual.
            let full = rom.dae.full_state(&xhat).unwrap();
            assert!(rom.dae.algebraic_residual(&full).unwrap().amax() <= 1e-14 * scale);
        }
    }

    #[test]
    fn identity_v2_reduced_dae_equals_quartic_rom() {
        // With V₂ = I, eliminating x̂₂ from the reduced DAE reproduces the
        // quartic ROM built from the same differential basis.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = TubularConfig { n: 8, ..TubularConfig::default() };
        let quartic = build_tubular_quartic(&cfg).unwrap();
        let dae = build_tubular_qbdae(&cfg).unwrap();
        let v1 = random_basis(&mut rng, &quartic.layout, &[2; 5]);
        let v2 = PodBasis::identity(&dae.layout2);
        let qrom = project_quartic(&quartic, &v1, false).unwrap();
        let drom = project_qbdae(&dae, &v1, &v2).unwrap();
        for _ in 0..20 {
            let xhat = random_vec(&mut rng, 10);
            let u = Vector::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let via_dae = two_step_rhs(&drom.dae, &xhat, &u).unwrap();
            let via_quartic = qrom.eval_rhs(&xhat, &u).unwrap();
            let scale = 1.0 + via_quartic.amax();
            assert!(
                (&via_dae - &via_quartic).amax() <= 1e-12 * scale,
                "defect {:.3e}",
                (&via_dae - &via_quartic).amax()
            );
        }
    }

    /// Small random reduced DAE with bounded entries (stable enough to
    /// integrate over a short horizon).
    fn toy_reduced_dae(rng: &mut ChaCha8Rng, r1: usize, r2: usize) -> ReducedQbdae {
        let r = r1 + r2;
        let mut a11 = MatricizedTensor::new(r1, vec![r1]);
        let mut a12 = MatricizedTensor::new(r1, vec![r2]);
        let mut h1 = MatricizedTensor::new(r1, vec![r, r]);
        let mut n1 = MatricizedTensor::new(r1, vec![r]);
        let mut h2t = MatricizedTensor::new(r2, vec![r1, r1]);
        for i in 0..r1 {
            a11.push(i, &[i], -1.0 - rng.gen_range(0.0..1.0));
            for j in 0..r2 {
                a12.push(i, &[j], 0.2 * rng.gen_range(-1.0..1.0));
            }
            for _ in 0..3 {
                h1.push(i, &[rng.gen_range(0..r), rng.gen_range(0..r)], 0.1 * rng.gen_range(-1.0..1.0));
            }
            n1.push(i, &[rng.gen_range(0..r)], 0.3 * rng.gen_range(-1.0..1.0));
        }
        for j in 0..r2 {
            for _ in 0..2 {
                h2t.push(j, &[rng.gen_range(0..r1), rng.gen_range(0..r1)], 0.5 * rng.gen_range(-1.0..1.0));
            }
        }
        for t in [&mut a11, &mut a12, &mut h1, &mut n1, &mut h2t] {
            t.assemble();
        }
        let dae = QbDae {
            layout1: VarLayout::flat("x1", r1),
            layout2: VarLayout::flat("x2", r2),
            mass1: Vector::from_element(r1, 1.0),
            a11,
            a12,
            h1,
            n1_ops: vec![n1],
            b1: Mat::from_fn(r1, 1, |_, _| rng.gen_range(-0.5..0.5)),
            h2t,
        };
        dae.validate().unwrap();
        ReducedQbdae { dae, substituted: None }
    }

    #[test]
    fn substituted_rhs_matches_two_step_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rom = toy_reduced_dae(&mut rng, 2, 2);
        let rom = precompute_substituted_ode(rom, None).unwrap();
        let sub = rom.substituted.as_ref().unwrap();
        assert_eq!(sub.h1_tilde_cols(), 4 + 8 + 16);
        for _ in 0..20 {
            let x1 = random_vec(&mut rng, 2);
            let u = random_vec(&mut rng, 1);
            let direct = sub.eval_rhs(&x1, &u).unwrap();
            let oracle = two_step_rhs(&rom.dae, &x1, &u).unwrap();
            let scale = 1.0 + oracle.amax();
            assert!(
                (&direct - &oracle).amax() <= 1e-13 * scale,
                "defect {:.3e}",
                (&direct - &oracle).amax()
            );
        }
    }

    #[test]
    fn substituted_form_of_projected_reactor_dae() {
        // End-to-end: project the reactor DAE with genuine bases, then check
        // the precomputed substituted RHS against two-step evaluation.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let cfg = TubularConfig { n: 6, ..TubularConfig::default() };
        let dae = build_tubular_qbdae(&cfg).unwrap();
        let v1 = random_basis(&mut rng, &dae.layout1, &[2; 5]);
        let v2 = random_basis(&mut rng, &dae.layout2, &[1; 3]);
        let rom = precompute_substituted_ode(project_qbdae(&dae, &v1, &v2).unwrap(), None).unwrap();
        let sub = rom.substituted.as_ref().unwrap();
        assert_eq!(sub.h1_tilde_cols(), 100 + 1000 + 10000);
        for _ in 0..20 {
            let x1 = random_vec(&mut rng, 10);
            let u = Vector::from_vec(vec![rng.gen_range(-1.0..1.0)]);
            let direct = sub.eval_rhs(&x1, &u).unwrap();
            let oracle = two_step_rhs(&rom.dae, &x1, &u).unwrap();
            let scale = 1.0 + oracle.amax();
            assert!((&direct - &oracle).amax() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_h1_gives_zero_h1_tilde() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut rom = toy_reduced_dae(&mut rng, 3, 2);
        rom.dae.h1 = MatricizedTensor::new(3, vec![5, 5]);
        let rom = precompute_substituted_ode(rom, None).unwrap();
        let sub = rom.substituted.as_ref().unwrap();
        for op in &sub.h1_tilde {
            assert_eq!(op.to_dense().amax(), 0.0);
        }
    }

    #[test]
    fn substitution_budget_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let rom = toy_reduced_dae(&mut rng, 4, 2);
        match precompute_substituted_ode(rom, Some(100)) {
            Err(Error::BudgetExceeded { required, budget, .. }) => {
                assert_eq!(budget, 100);
                // 4·(16+64+256) + 2·4·16 = 1472.
                assert_eq!(required, 1472);
            }
            other => panic!("expected budget error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn substituted_integration_matches_dae_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rom = toy_reduced_dae(&mut rng, 3, 2);
        let rom = precompute_substituted_ode(rom, None).unwrap();
        let x0 = Vector::from_vec(vec![0.3, -0.2, 0.1]);
        let input = InputSignal::Constant(Vector::from_vec(vec![0.7]));
        let opts = IntegrateOptions::span(1e-3, 1.0).unwrap().with_scheme(Scheme::Rk4);
        let via_dae = solve_qbdae(&rom.dae, &input, &x0, &opts).unwrap();
        let via_sub = integrate_ode(rom.substituted.as_ref().unwrap(), &input, &x0, &opts).unwrap();
        let last_dae = via_dae.last_state();
        let last_sub = via_sub.last_state();
        for i in 0..3 {
            assert_relative_eq!(last_dae[i], last_sub[i], epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn qb_ode_projection_identity() {
        use crate::models::{build_fhn_lifted_qb, FhnConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let cfg = FhnConfig { n: 8, ..FhnConfig::default() };
        let sys = build_fhn_lifted_qb(&cfg).unwrap();
        let basis = random_basis(&mut rng, &sys.layout, &[3, 3, 3]);
        let rom = project_qb_ode(&sys, &basis).unwrap();
        assert_eq!(rom.reduced_dim(), 9);
        // Mass keeps the per-variable convention (ε, 1, ε).
        assert_relative_eq!(rom.mass[0], cfg.epsilon, epsilon = 1e-15);
        assert_relative_eq!(rom.mass[3], 1.0, epsilon = 1e-15);
        assert_relative_eq!(rom.mass[6], cfg.epsilon, epsilon = 1e-15);
        for _ in 0..10 {
            let xhat = random_vec(&mut rng, 9);
            let u = random_vec(&mut rng, 2);
            let lifted = basis.lift(&xhat).unwrap();
            let oracle = basis.project(&sys.eval_rhs(&lifted, &u).unwrap()).unwrap();
            let fast = rom.eval_rhs(&xhat, &u).unwrap();
            let scale = 1.0 + oracle.amax();
            assert!(
                (&fast - &oracle).amax() <= 1e-11 * scale,
                "defect {:.3e}",
                (&fast - &oracle).amax()
            );
        }
    }
}
