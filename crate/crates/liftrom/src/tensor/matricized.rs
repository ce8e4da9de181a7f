//! Sparse matricized tensors: order-k multilinear operators flattened to
//! `out_dim × (in_dims[0] * ... * in_dims[k-1])` matrices in COO form.

use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result, Vector};

/// A sparse matricized tensor `T` of order `k = in_dims.len()`.
///
/// `T` represents a multilinear map; its action on vectors `x1, .., xk`
/// (with `xp.len() == in_dims[p]`) is the matrix-vector product of the
/// flattened operator with `x1 ⊗ x2 ⊗ ... ⊗ xk`, evaluated entry-by-entry
/// without materializing the Kronecker product. Column indices are
/// lexicographic with the first factor slowest (see module docs of
/// [`crate::tensor`]).
///
/// Order 1 is permitted and degenerates to an ordinary sparse matrix, which
/// keeps linear, bilinear and higher-order system operators in one storage
/// type.
///
/// Duplicate `(row, column)` entries are summed by [`assemble`], which also
/// sorts entries into a canonical `(row, column)` order and drops entries
/// whose summed value is exactly zero. Builders should call [`assemble`]
/// once after pushing all entries so that evaluation order (and therefore
/// floating-point rounding) is deterministic.
///
/// [`assemble`]: MatricizedTensor::assemble
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct MatricizedTensor {
    out_dim: usize,
    in_dims: Vec<usize>,
    rows: Vec<u32>,
    flats: Vec<u64>,
    vals: Vec<f64>,
    assembled: bool,
}

impl MatricizedTensor {
    /// Creates an empty tensor with the given output dimension and one input
    /// dimension per factor. Panics if `in_dims` is empty or any dimension
    /// is zero while entries could never be valid.
    pub fn new(out_dim: usize, in_dims: Vec<usize>) -> Self {
        assert!(!in_dims.is_empty(), "tensor needs at least one factor");
        assert!(
            out_dim <= u32::MAX as usize,
            "output dimension {out_dim} exceeds supported range"
        );
        let mut prod: u128 = 1;
        for &d in &in_dims {
            prod = prod.saturating_mul(d as u128);
        }
        assert!(
            prod <= u64::MAX as u128,
            "flattened column count overflows u64"
        );
        Self {
            out_dim,
            in_dims,
            rows: Vec::new(),
            flats: Vec::new(),
            vals: Vec::new(),
            assembled: true,
        }
    }

    /// Tensor order (number of Kronecker factors).
    pub fn order(&self) -> usize {
        self.in_dims.len()
    }

    /// Output (row) dimension.
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Input dimension of each factor.
    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    /// Number of columns of the flattened operator.
    pub fn flat_dim(&self) -> u64 {
        self.in_dims.iter().map(|&d| d as u64).product()
    }

    /// Number of stored nonzero entries.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Encodes a multi-index into the flat lexicographic column index.
    /// Panics if a sub-index is out of range for its factor.
    pub fn encode(&self, subs: &[usize]) -> u64 {
        assert_eq!(
            subs.len(),
            self.in_dims.len(),
            "multi-index has {} components, tensor has order {}",
            subs.len(),
            self.in_dims.len()
        );
        let mut flat: u64 = 0;
        for (p, &s) in subs.iter().enumerate() {
            assert!(
                s < self.in_dims[p],
                "sub-index {s} out of range for factor {p} of dimension {}",
                self.in_dims[p]
            );
            flat = flat * self.in_dims[p] as u64 + s as u64;
        }
        flat
    }

    /// Decodes a flat column index into `subs` (length = order).
    #[inline]
    pub fn decode(&self, mut flat: u64, subs: &mut [usize]) {
        debug_assert_eq!(subs.len(), self.in_dims.len());
        for p in (0..self.in_dims.len()).rev() {
            let d = self.in_dims[p] as u64;
            subs[p] = (flat % d) as usize;
            flat /= d;
        }
        debug_assert_eq!(flat, 0, "flat index out of range");
    }

    /// Adds `value` at `(row, subs)`. Duplicates are allowed and summed by
    /// [`assemble`](Self::assemble).
    pub fn push(&mut self, row: usize, subs: &[usize], value: f64) {
        let flat = self.encode(subs);
        self.push_flat(row, flat, value);
    }

    /// Adds `value` at `(row, flat_column)`.
    pub fn push_flat(&mut self, row: usize, flat: u64, value: f64) {
        assert!(
            row < self.out_dim,
            "row {row} out of range for output dimension {}",
            self.out_dim
        );
        assert!(
            flat < self.flat_dim(),
            "flat column {flat} out of range for {} columns",
            self.flat_dim()
        );
        self.rows.push(row as u32);
        self.flats.push(flat);
        self.vals.push(value);
        self.assembled = false;
    }

    /// Sorts entries by `(row, column)`, sums duplicates and drops entries
    /// whose summed value is exactly zero. Idempotent.
    pub fn assemble(&mut self) {
        if self.assembled {
            return;
        }
        let mut triples: Vec<(u32, u64, f64)> = self
            .rows
            .iter()
            .zip(&self.flats)
            .zip(&self.vals)
            .map(|((&r, &f), &v)| (r, f, v))
            .collect();
        triples.sort_unstable_by_key(|&(r, f, _)| (r, f));
        self.rows.clear();
        self.flats.clear();
        self.vals.clear();
        let mut it = triples.into_iter();
        if let Some((mut r, mut f, mut v)) = it.next() {
            for (r2, f2, v2) in it {
                if r2 == r && f2 == f {
                    v += v2;
                } else {
                    if v != 0.0 {
                        self.rows.push(r);
                        self.flats.push(f);
                        self.vals.push(v);
                    }
                    (r, f, v) = (r2, f2, v2);
                }
            }
            if v != 0.0 {
                self.rows.push(r);
                self.flats.push(f);
                self.vals.push(v);
            }
        }
        self.assembled = true;
    }

    /// Multiplies every stored value by `s`.
    pub fn scale(&mut self, s: f64) {
        for v in &mut self.vals {
            *v *= s;
        }
    }

    /// Iterates over `(row, flat_column, value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.flats)
            .zip(&self.vals)
            .map(|((&r, &f), &v)| (r as usize, f, v))
    }

    /// Calls `f(row, subs, value)` for every stored entry, reusing one
    /// decode buffer.
    pub fn for_each_entry(&self, mut f: impl FnMut(usize, &[usize], f64)) {
        let mut subs = vec![0usize; self.order()];
        for i in 0..self.vals.len() {
            self.decode(self.flats[i], &mut subs);
            f(self.rows[i] as usize, &subs, self.vals[i]);
        }
    }

    fn check_factors(&self, factors: &[&Vector]) -> Result<()> {
        if factors.len() != self.order() {
            return Err(Error::dim(
                "tensor apply: number of factors",
                self.order(),
                factors.len(),
            ));
        }
        for (p, x) in factors.iter().enumerate() {
            if x.len() != self.in_dims[p] {
                return Err(Error::dim(
                    format!("tensor apply: factor {p}"),
                    self.in_dims[p],
                    x.len(),
                ));
            }
        }
        Ok(())
    }

    /// Applies the operator to `x1 ⊗ ... ⊗ xk` without materializing the
    /// Kronecker product, accumulating `scale * T(x1 ⊗ ... ⊗ xk)` into `out`.
    pub fn add_apply_scaled(
        &self,
        factors: &[&Vector],
        scale: f64,
        out: &mut Vector,
    ) -> Result<()> {
        self.check_factors(factors)?;
        if out.len() != self.out_dim {
            return Err(Error::dim("tensor apply: output", self.out_dim, out.len()));
        }
        let k = self.order();
        let mut subs = [0usize; 8];
        assert!(k <= 8, "tensor order {k} above supported maximum 8");
        for i in 0..self.vals.len() {
            self.decode(self.flats[i], &mut subs[..k]);
            let mut term = self.vals[i];
            for p in 0..k {
                term *= factors[p][subs[p]];
            }
            out[self.rows[i] as usize] += scale * term;
        }
        Ok(())
    }

    /// `T(x1 ⊗ ... ⊗ xk)` as a fresh vector.
    pub fn apply(&self, factors: &[&Vector]) -> Result<Vector> {
        let mut out = Vector::zeros(self.out_dim);
        self.add_apply_scaled(factors, 1.0, &mut out)?;
        Ok(out)
    }

    /// `T(x ⊗ x ⊗ ... ⊗ x)` with the same vector in every slot.
    pub fn apply_pow(&self, x: &Vector) -> Result<Vector> {
        let factors: Vec<&Vector> = (0..self.order()).map(|_| x).collect();
        self.apply(&factors)
    }

    /// Accumulates `scale * T(x ⊗ ... ⊗ x)` into `out`.
    pub fn add_apply_pow_scaled(&self, x: &Vector, scale: f64, out: &mut Vector) -> Result<()> {
        let factors: Vec<&Vector> = (0..self.order()).map(|_| x).collect();
        self.add_apply_scaled(&factors, scale, out)
    }

    /// Jacobian of `x ↦ T(x ⊗ ... ⊗ x)` at `x`, as unsummed COO triplets
    /// `(row, col, value)`. Requires all input dimensions equal to `x.len()`.
    /// Duplicate `(row, col)` pairs may appear; callers accumulate.
    pub fn jacobian_triplets(&self, x: &Vector, out: &mut Vec<(usize, usize, f64)>) -> Result<()> {
        let k = self.order();
        for (p, &d) in self.in_dims.iter().enumerate() {
            if d != x.len() {
                return Err(Error::dim(format!("tensor jacobian: factor {p}"), d, x.len()));
            }
        }
        let mut subs = [0usize; 8];
        assert!(k <= 8);
        for i in 0..self.vals.len() {
            self.decode(self.flats[i], &mut subs[..k]);
            let row = self.rows[i] as usize;
            for p in 0..k {
                let mut term = self.vals[i];
                for q in 0..k {
                    if q != p {
                        term *= x[subs[q]];
                    }
                }
                if term != 0.0 {
                    out.push((row, subs[p], term));
                }
            }
        }
        Ok(())
    }

    /// Densifies the flattened operator. Intended for small problems and
    /// test oracles; the result has `flat_dim()` columns.
    pub fn to_dense(&self) -> Mat {
        let cols = self.flat_dim();
        assert!(
            cols <= 1 << 26,
            "refusing to densify operator with {cols} columns"
        );
        let mut m = Mat::zeros(self.out_dim, cols as usize);
        for (r, f, v) in self.iter() {
            m[(r, f as usize)] += v;
        }
        m
    }

    /// Builds an order-1 tensor (sparse matrix) from a dense matrix,
    /// storing only its nonzero entries.
    pub fn from_dense_matrix(m: &Mat) -> Self {
        let mut t = Self::new(m.nrows(), vec![m.ncols()]);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    t.push_flat(i, j as u64, m[(i, j)]);
                }
            }
        }
        t.assemble();
        t
    }

    /// Identity as an order-1 tensor.
    pub fn identity(n: usize) -> Self {
        let mut t = Self::new(n, vec![n]);
        for i in 0..n {
            t.push_flat(i, i as u64, 1.0);
        }
        t.assemble();
        t
    }

    /// True if every stored value is finite.
    pub fn all_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}

/// Serialized form: explicit coordinate triplets.
#[derive(Serialize, Deserialize)]
struct TensorRepr {
    out_dim: usize,
    in_dims: Vec<usize>,
    entries: Vec<(u32, u64, f64)>,
}

impl From<MatricizedTensor> for TensorRepr {
    fn from(mut t: MatricizedTensor) -> Self {
        t.assemble();
        TensorRepr {
            out_dim: t.out_dim,
            in_dims: t.in_dims,
            entries: t
                .rows
                .iter()
                .zip(&t.flats)
                .zip(&t.vals)
                .map(|((&r, &f), &v)| (r, f, v))
                .collect(),
        }
    }
}

impl TryFrom<TensorRepr> for MatricizedTensor {
    type Error = Error;

    fn try_from(r: TensorRepr) -> Result<Self> {
        if r.in_dims.is_empty() {
            return Err(Error::InvalidConfig(
                "tensor must have at least one factor dimension".into(),
            ));
        }
        let mut t = MatricizedTensor::new(r.out_dim, r.in_dims);
        let cols = t.flat_dim();
        for (row, flat, val) in r.entries {
            if row as usize >= t.out_dim {
                return Err(Error::InvalidConfig(format!(
                    "tensor entry row {row} out of range for output dimension {}",
                    t.out_dim
                )));
            }
            if flat >= cols {
                return Err(Error::InvalidConfig(format!(
                    "tensor entry column {flat} out of range for {cols} columns"
                )));
            }
            if !val.is_finite() {
                return Err(Error::NonFinite(format!(
                    "tensor entry ({row}, {flat}) is not finite"
                )));
            }
            t.push_flat(row as usize, flat, val);
        }
        t.assemble();
        Ok(t)
    }
}
