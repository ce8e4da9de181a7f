//! Concrete system containers: polynomial ODEs up to fourth order,
//! quadratic-bilinear ODEs, quadratic-bilinear DAEs with quadratic
//! algebraic constraints, and general nonlinear systems with a pointwise
//! nonlinearity descriptor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_ode, InputSignal, IntegrateOptions, OdeSystem, Trajectory, VarLayout};
use crate::tensor::MatricizedTensor;
use crate::{Error, Mat, Result, Vector};

/// Row evaluation callback: `f(row, dep_values) -> f_row`.
pub type RowEvalFn = Arc<dyn Fn(usize, &[f64]) -> Result<f64> + Send + Sync>;
/// Row derivative callback: fills `∂f_row/∂dep_k` into the slice.
pub type RowDerivFn = Arc<dyn Fn(usize, &[f64], &mut [f64]) -> Result<()> + Send + Sync>;

fn check_input(b: &Mat, u: &Vector) -> Result<()> {
    if u.len() != b.ncols() {
        return Err(Error::dim("input channels", b.ncols(), u.len()));
    }
    Ok(())
}

fn add_bu(b: &Mat, u: &Vector, out: &mut Vector) {
    if b.ncols() > 0 {
        out.gemv(1.0, b, u, 1.0);
    }
}

/// Appends `scale * (Jacobian of T(x ⊗ .. ⊗ x))` to `out`.
fn push_scaled_jacobian(
    t: &MatricizedTensor,
    x: &Vector,
    scale: f64,
    out: &mut Vec<(usize, usize, f64)>,
) -> Result<()> {
    if scale == 0.0 {
        return Ok(());
    }
    let before = out.len();
    t.jacobian_triplets(x, out)?;
    if scale != 1.0 {
        for e in out[before..].iter_mut() {
            e.2 *= scale;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Polynomial ODE up to fourth order

/// Polynomial ODE with state terms up to fourth order:
///
/// `E ẋ = A x + Σ_k G_k x^{⊗k} + Σ_j u_j Σ_k N_{jk} x^{⊗k} + B u`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuarticOde {
    pub layout: VarLayout,
    /// Diagonal of `E`, strictly positive.
    pub mass: Vector,
    /// Linear operator `A` (order 1).
    pub a: MatricizedTensor,
    /// Higher-order state operators `G_k`, orders 2..=4.
    pub g: Vec<MatricizedTensor>,
    /// Input-coupled state operators: channel `j` contributes
    /// `u_j · N x^{⊗order}` for each tensor in `n_ops[j]`.
    pub n_ops: Vec<Vec<MatricizedTensor>>,
    /// Affine input map `B`, `n × m`.
    pub b: Mat,
}

impl QuarticOde {
    pub fn validate(&self) -> Result<()> {
        let n = self.layout.total_dim();
        if self.mass.len() != n {
            return Err(Error::dim("quartic system: mass diagonal", n, self.mass.len()));
        }
        if self.a.order() != 1 || self.a.out_dim() != n || self.a.in_dims() != [n] {
            return Err(Error::dim("quartic system: A", n, self.a.out_dim()));
        }
        for g in &self.g {
            if !(2..=4).contains(&g.order()) {
                return Err(Error::InvalidConfig(format!(
                    "quartic system: state operator of order {} outside 2..=4",
                    g.order()
                )));
            }
            if g.out_dim() != n || g.in_dims().iter().any(|&d| d != n) {
                return Err(Error::dim("quartic system: state operator", n, g.out_dim()));
            }
        }
        if self.n_ops.len() != self.b.ncols() {
            return Err(Error::dim(
                "quartic system: bilinear channel count",
                self.b.ncols(),
                self.n_ops.len(),
            ));
        }
        for chan in &self.n_ops {
            for t in chan {
                if t.out_dim() != n || t.in_dims().iter().any(|&d| d != n) {
                    return Err(Error::dim("quartic system: bilinear operator", n, t.out_dim()));
                }
            }
        }
        if self.b.nrows() != n {
            return Err(Error::dim("quartic system: B rows", n, self.b.nrows()));
        }
        Ok(())
    }
}

impl OdeSystem for QuarticOde {
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
        self.a.iter().map(|(r, f, v)| (r, f as usize, v)).collect()
    }

    fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
        self.a.add_apply_scaled(&[x], 1.0, out).expect("validated dims");
    }

    fn add_explicit_terms(&self, x: &Vector, u: &Vector, out: &mut Vector) -> Result<()> {
        check_input(&self.b, u)?;
        for g in &self.g {
            g.add_apply_pow_scaled(x, 1.0, out)?;
        }
        for (j, chan) in self.n_ops.iter().enumerate() {
            if u[j] != 0.0 {
                for t in chan {
                    t.add_apply_pow_scaled(x, u[j], out)?;
                }
            }
        }
        add_bu(&self.b, u, out);
        Ok(())
    }

    fn explicit_jacobian(
        &self,
        x: &Vector,
        u: &Vector,
        out: &mut Vec<(usize, usize, f64)>,
    ) -> Result<()> {
        check_input(&self.b, u)?;
        for g in &self.g {
            push_scaled_jacobian(g, x, 1.0, out)?;
        }
        for (j, chan) in self.n_ops.iter().enumerate() {
            for t in chan {
                push_scaled_jacobian(t, x, u[j], out)?;
            }
        }
        Ok(())
    }
}

/// Full right-hand side `A x + Σ G_k x^{⊗k} + Σ u_j N x^{⊗k} + B u`
/// (the mass matrix is not applied).
pub fn eval_rhs_quartic(sys: &QuarticOde, x: &Vector, u: &Vector) -> Result<Vector> {
    sys.eval_rhs(x, u)
}

// ---------------------------------------------------------------------------
// Quadratic-bilinear ODE

/// Quadratic-bilinear ODE:
///
/// `E ẋ = A x + H (x ⊗ x) + Σ_j u_j N_j x + B u`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QbOde {
    pub layout: VarLayout,
    pub mass: Vector,
    pub a: MatricizedTensor,
    pub h: MatricizedTensor,
    /// One `N_j` (order 1) per input channel.
    pub n_ops: Vec<MatricizedTensor>,
    pub b: Mat,
}

impl QbOde {
    pub fn validate(&self) -> Result<()> {
        let n = self.layout.total_dim();
        if self.mass.len() != n {
            return Err(Error::dim("qb system: mass diagonal", n, self.mass.len()));
        }
        if self.a.order() != 1 || self.a.out_dim() != n || self.a.in_dims() != [n] {
            return Err(Error::dim("qb system: A", n, self.a.out_dim()));
        }
        if self.h.order() != 2 || self.h.out_dim() != n || self.h.in_dims() != [n, n] {
            return Err(Error::dim("qb system: H", n, self.h.out_dim()));
        }
        if self.n_ops.len() != self.b.ncols() {
            return Err(Error::dim(
                "qb system: bilinear channel count",
                self.b.ncols(),
                self.n_ops.len(),
            ));
        }
        for t in &self.n_ops {
            if t.order() != 1 || t.out_dim() != n || t.in_dims() != [n] {
                return Err(Error::dim("qb system: bilinear operator", n, t.out_dim()));
            }
        }
        if self.b.nrows() != n {
            return Err(Error::dim("qb system: B rows", n, self.b.nrows()));
        }
        Ok(())
    }
}

impl OdeSystem for QbOde {
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
        self.a.iter().map(|(r, f, v)| (r, f as usize, v)).collect()
    }

    fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
        self.a.add_apply_scaled(&[x], 1.0, out).expect("validated dims");
    }

    fn add_explicit_terms(&self, x: &Vector, u: &Vector, out: &mut Vector) -> Result<()> {
        check_input(&self.b, u)?;
        self.h.add_apply_pow_scaled(x, 1.0, out)?;
        for (j, t) in self.n_ops.iter().enumerate() {
            if u[j] != 0.0 {
                t.add_apply_scaled(&[x], u[j], out)?;
            }
        }
        add_bu(&self.b, u, out);
        Ok(())
    }

    fn explicit_jacobian(
        &self,
        x: &Vector,
        u: &Vector,
        out: &mut Vec<(usize, usize, f64)>,
    ) -> Result<()> {
        check_input(&self.b, u)?;
        push_scaled_jacobian(&self.h, x, 1.0, out)?;
        for (j, t) in self.n_ops.iter().enumerate() {
            push_scaled_jacobian(t, x, u[j], out)?;
        }
        Ok(())
    }
}

/// Full right-hand side `A x + H (x ⊗ x) + Σ u_j N_j x + B u`.
pub fn eval_rhs_qb(sys: &QbOde, x: &Vector, u: &Vector) -> Result<Vector> {
    sys.eval_rhs(x, u)
}

// ---------------------------------------------------------------------------
// General nonlinear system

/// Pointwise nonlinearity `f: Rⁿ → Rⁿ` where each component depends on a
/// few state entries only. The dependency lists allow evaluating selected
/// rows from gathered values, which keeps interpolation-based
/// approximations independent of the full dimension.
#[derive(Clone)]
pub struct PointwiseNonlinearity {
    /// `deps[i]`: global state indices that `f_i` reads, in a fixed order.
    pub deps: Vec<Vec<usize>>,
    /// `eval(i, vals)` returns `f_i` given the values of `deps[i]`.
    pub eval: RowEvalFn,
    /// Optional partial derivatives: fills `∂f_i/∂(deps[i][k])` into the
    /// slice (same length as `deps[i]`).
    pub deriv: Option<RowDerivFn>,
}

impl std::fmt::Debug for PointwiseNonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PointwiseNonlinearity")
            .field("rows", &self.deps.len())
            .field("has_deriv", &self.deriv.is_some())
            .finish()
    }
}

impl PointwiseNonlinearity {
    pub fn max_deps(&self) -> usize {
        self.deps.iter().map(|d| d.len()).max().unwrap_or(0)
    }

    /// Evaluates the selected rows, reading state values through `get`.
    pub fn eval_rows_with(
        &self,
        rows: &[usize],
        get: impl Fn(usize) -> f64,
        out: &mut [f64],
    ) -> Result<()> {
        assert_eq!(rows.len(), out.len());
        let mut vals = Vec::with_capacity(self.max_deps());
        for (k, &r) in rows.iter().enumerate() {
            vals.clear();
            vals.extend(self.deps[r].iter().map(|&d| get(d)));
            out[k] = (self.eval)(r, &vals)?;
        }
        Ok(())
    }

    /// Evaluates all rows at the full state `x`, accumulating into `out`.
    pub fn add_eval_all(&self, x: &Vector, out: &mut Vector) -> Result<()> {
        let mut vals = Vec::with_capacity(self.max_deps());
        for r in 0..self.deps.len() {
            vals.clear();
            vals.extend(self.deps[r].iter().map(|&d| x[d]));
            out[r] += (self.eval)(r, &vals)?;
        }
        Ok(())
    }
}

/// General nonlinear system `E ẋ = A x + f(x) + B u` with an optional
/// pointwise nonlinearity `f`.
#[derive(Clone, Debug)]
pub struct GeneralNonlinearSystem {
    pub layout: VarLayout,
    pub mass: Vector,
    pub a: MatricizedTensor,
    pub b: Mat,
    pub nonlin: Option<PointwiseNonlinearity>,
}

impl GeneralNonlinearSystem {
    pub fn validate(&self) -> Result<()> {
        let n = self.layout.total_dim();
        if self.mass.len() != n {
            return Err(Error::dim("nonlinear system: mass diagonal", n, self.mass.len()));
        }
        if self.a.order() != 1 || self.a.out_dim() != n || self.a.in_dims() != [n] {
            return Err(Error::dim("nonlinear system: A", n, self.a.out_dim()));
        }
        if self.b.nrows() != n {
            return Err(Error::dim("nonlinear system: B rows", n, self.b.nrows()));
        }
        if let Some(f) = &self.nonlin {
            if f.deps.len() != n {
                return Err(Error::dim("nonlinear system: dependency rows", n, f.deps.len()));
            }
            if f.deps.iter().flatten().any(|&d| d >= n) {
                return Err(Error::InvalidConfig(
                    "nonlinear system: dependency index out of range".into(),
                ));
            }
        }
        Ok(())
    }
}

impl OdeSystem for GeneralNonlinearSystem {
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
        self.a.iter().map(|(r, f, v)| (r, f as usize, v)).collect()
    }

    fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
        self.a.add_apply_scaled(&[x], 1.0, out).expect("validated dims");
    }

    fn add_explicit_terms(&self, x: &Vector, u: &Vector, out: &mut Vector) -> Result<()> {
        check_input(&self.b, u)?;
        if let Some(f) = &self.nonlin {
            f.add_eval_all(x, out)?;
        }
        add_bu(&self.b, u, out);
        Ok(())
    }

    fn explicit_jacobian(
        &self,
        x: &Vector,
        u: &Vector,
        out: &mut Vec<(usize, usize, f64)>,
    ) -> Result<()> {
        check_input(&self.b, u)?;
        let Some(f) = &self.nonlin else { return Ok(()) };
        let Some(deriv) = &f.deriv else {
            return Err(Error::InvalidConfig(
                "nonlinearity has no derivative callback; use an IMEX or explicit scheme".into(),
            ));
        };
        let mut vals = Vec::with_capacity(f.max_deps());
        let mut ders = vec![0.0; f.max_deps()];
        for r in 0..f.deps.len() {
            let deps = &f.deps[r];
            if deps.is_empty() {
                continue;
            }
            vals.clear();
            vals.extend(deps.iter().map(|&d| x[d]));
            deriv(r, &vals, &mut ders[..deps.len()])?;
            for (k, &d) in deps.iter().enumerate() {
                if ders[k] != 0.0 {
                    out.push((r, d, ders[k]));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Quadratic-bilinear DAE

/// Semi-explicit quadratic-bilinear DAE with quadratic algebraic equations:
///
/// `E₁₁ ẋ₁ = A₁₁ x₁ + A₁₂ x₂ + H₁ (x ⊗ x) + Σ_j u_j N₁ⱼ x + B₁ u`
/// `0 = -x₂ + H̃₂ (x₁ ⊗ x₁)`
///
/// with `x = (x₁, x₂)`. The algebraic block is index 1 by construction:
/// `x₂` is an explicit quadratic function of `x₁`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QbDae {
    /// Differential variables `x₁`.
    pub layout1: VarLayout,
    /// Algebraic variables `x₂`.
    pub layout2: VarLayout,
    /// Diagonal of `E₁₁`, strictly positive.
    pub mass1: Vector,
    /// `n₁ × n₁`.
    pub a11: MatricizedTensor,
    /// `n₁ × n₂`.
    pub a12: MatricizedTensor,
    /// `n₁ × (n · n)` acting on the full state.
    pub h1: MatricizedTensor,
    /// One `n₁ × n` operator per input channel, acting on the full state.
    pub n1_ops: Vec<MatricizedTensor>,
    /// `n₁ × m`.
    pub b1: Mat,
    /// `n₂ × (n₁ · n₁)`: the algebraic solution map `x₂ = H̃₂ (x₁ ⊗ x₁)`.
    pub h2t: MatricizedTensor,
}

impl QbDae {
    pub fn dim1(&self) -> usize {
        self.layout1.total_dim()
    }

    pub fn dim2(&self) -> usize {
        self.layout2.total_dim()
    }

    pub fn full_dim(&self) -> usize {
        self.dim1() + self.dim2()
    }

    pub fn full_layout(&self) -> VarLayout {
        self.layout1.concat(&self.layout2)
    }

    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = (self.dim1(), self.dim2());
        let n = n1 + n2;
        if self.mass1.len() != n1 {
            return Err(Error::dim("qb-dae: mass diagonal", n1, self.mass1.len()));
        }
        if self.a11.out_dim() != n1 || self.a11.in_dims() != [n1] {
            return Err(Error::dim("qb-dae: A11", n1, self.a11.out_dim()));
        }
        if self.a12.out_dim() != n1 || self.a12.in_dims() != [n2] {
            return Err(Error::dim("qb-dae: A12", n2, self.a12.in_dims()[0]));
        }
        if self.h1.out_dim() != n1 || self.h1.in_dims() != [n, n] {
            return Err(Error::dim("qb-dae: H1", n, self.h1.in_dims()[0]));
        }
        for t in &self.n1_ops {
            if t.out_dim() != n1 || t.in_dims() != [n] {
                return Err(Error::dim("qb-dae: N1", n, t.in_dims()[0]));
            }
        }
        if self.n1_ops.len() != self.b1.ncols() {
            return Err(Error::dim(
                "qb-dae: bilinear channel count",
                self.b1.ncols(),
                self.n1_ops.len(),
            ));
        }
        if self.b1.nrows() != n1 {
            return Err(Error::dim("qb-dae: B1 rows", n1, self.b1.nrows()));
        }
        if self.h2t.out_dim() != n2 || self.h2t.in_dims() != [n1, n1] {
            return Err(Error::dim("qb-dae: algebraic map", n2, self.h2t.out_dim()));
        }
        Ok(())
    }

    /// Algebraic block consistent with `x₁`: `x₂ = H̃₂ (x₁ ⊗ x₁)`.
    pub fn algebraic_from_differential(&self, x1: &Vector) -> Result<Vector> {
        self.h2t.apply_pow(x1)
    }

    /// Full consistent state `(x₁, H̃₂(x₁ ⊗ x₁))`.
    pub fn full_state(&self, x1: &Vector) -> Result<Vector> {
        let x2 = self.algebraic_from_differential(x1)?;
        let mut x = Vector::zeros(self.full_dim());
        x.rows_mut(0, self.dim1()).copy_from(x1);
        x.rows_mut(self.dim1(), self.dim2()).copy_from(&x2);
        Ok(x)
    }

    /// Residual of the algebraic equations at a full state:
    /// `x₂ - H̃₂(x₁ ⊗ x₁)`.
    pub fn algebraic_residual(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.full_dim() {
            return Err(Error::dim("qb-dae: full state", self.full_dim(), x.len()));
        }
        let x1 = x.rows(0, self.dim1()).into_owned();
        let x2 = x.rows(self.dim1(), self.dim2()).into_owned();
        Ok(x2 - self.algebraic_from_differential(&x1)?)
    }
}

/// ODE view of a [`QbDae`] on the differential variables: every evaluation
/// substitutes `x₂ = H̃₂(x₁ ⊗ x₁)` before applying the coupled operators.
pub struct SubstitutedQbDae<'a> {
    pub dae: &'a QbDae,
}

impl SubstitutedQbDae<'_> {
    fn full_state(&self, x1: &Vector) -> Result<Vector> {
        self.dae.full_state(x1)
    }
}

impl OdeSystem for SubstitutedQbDae<'_> {
    fn layout(&self) -> &VarLayout {
        &self.dae.layout1
    }

    fn input_dim(&self) -> usize {
        self.dae.b1.ncols()
    }

    fn mass_diag(&self) -> &Vector {
        &self.dae.mass1
    }

    fn linear_triplets(&self) -> Vec<(usize, usize, f64)> {
        self.dae.a11.iter().map(|(r, f, v)| (r, f as usize, v)).collect()
    }

    fn add_linear_terms(&self, x1: &Vector, out: &mut Vector) {
        self.dae.a11.add_apply_scaled(&[x1], 1.0, out).expect("validated dims");
    }

    fn add_explicit_terms(&self, x1: &Vector, u: &Vector, out: &mut Vector) -> Result<()> {
        check_input(&self.dae.b1, u)?;
        let x2 = self.dae.algebraic_from_differential(x1)?;
        self.dae.a12.add_apply_scaled(&[&x2], 1.0, out)?;
        let x = self.full_state(x1)?;
        self.dae.h1.add_apply_pow_scaled(&x, 1.0, out)?;
        for (j, t) in self.dae.n1_ops.iter().enumerate() {
            if u[j] != 0.0 {
                t.add_apply_scaled(&[&x], u[j], out)?;
            }
        }
        add_bu(&self.dae.b1, u, out);
        Ok(())
    }

    fn explicit_jacobian(
        &self,
        x1: &Vector,
        u: &Vector,
        out: &mut Vec<(usize, usize, f64)>,
    ) -> Result<()> {
        check_input(&self.dae.b1, u)?;
        let n1 = self.dae.dim1();
        let n2 = self.dae.dim2();
        // Rows of J₂ = ∂x₂/∂x₁ as adjacency lists.
        let mut j2_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n2];
        {
            let mut trip = Vec::new();
            self.dae.h2t.jacobian_triplets(x1, &mut trip)?;
            for (r, c, v) in trip {
                j2_rows[r].push((c, v));
            }
        }
        // A₁₂ x₂(x₁): chain through J₂.
        for (r, f, v) in self.dae.a12.iter() {
            for &(c1, w) in &j2_rows[f as usize] {
                out.push((r, c1, v * w));
            }
        }
        // H₁ and N₁ act on the full state; map full-state columns back to
        // x₁ columns (identity block) or through J₂ (algebraic block).
        let x = self.full_state(x1)?;
        let mut full = Vec::new();
        self.dae.h1.jacobian_triplets(&x, &mut full)?;
        for (j, t) in self.dae.n1_ops.iter().enumerate() {
            push_scaled_jacobian(t, &x, u[j], &mut full)?;
        }
        for (r, c, v) in full {
            if c < n1 {
                out.push((r, c, v));
            } else {
                for &(c1, w) in &j2_rows[c - n1] {
                    out.push((r, c1, v * w));
                }
            }
        }
        Ok(())
    }
}

/// Integrates a [`QbDae`] by substitution of the algebraic equations and
/// returns the trajectory of the full state `(x₁, x₂)`.
///
/// `x1_0` is the initial value of the differential block; the algebraic
/// block is completed consistently. Every recorded state is checked
/// against the algebraic residual (1e-12 tolerance scaled by the state
/// magnitude).
pub fn solve_qbdae(
    dae: &QbDae,
    input: &InputSignal,
    x1_0: &Vector,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    dae.validate()?;
    let sub = SubstitutedQbDae { dae };
    let traj1 = integrate_ode(&sub, input, x1_0, opts)?;
    let (n1, n2) = (dae.dim1(), dae.dim2());
    let mut states = Mat::zeros(n1 + n2, traj1.len());
    for k in 0..traj1.len() {
        let x1 = traj1.state_at(k);
        let full = dae.full_state(&x1)?;
        let res = dae.algebraic_residual(&full)?;
        let scale = 1.0 + full.amax();
        if res.amax() > 1e-12 * scale {
            return Err(Error::Domain(format!(
                "qb-dae: algebraic residual {:.3e} at t = {} exceeds tolerance",
                res.amax(),
                traj1.times[k]
            )));
        }
        states.set_column(k, &full);
    }
    Ok(Trajectory { layout: dae.full_layout(), times: traj1.times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Scheme;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Quadratic-bilinear lifting of ẋ = x⁴ + u with auxiliary variables
    /// w₁ = x², w₂ = x⁴, w₃ = x³:
    ///   ẋ  = w₂ + u
    ///   ẇ₁ = 2 x w₂ + 2 x u
    ///   ẇ₂ = 4 w₂ w₃ + 4 w₃ u
    ///   ẇ₃ = 3 w₁ w₂ + 3 w₁ u
    fn lifted_quartic_scalar() -> QbOde {
        let layout = VarLayout::new(&[("x", 1), ("w1", 1), ("w2", 1), ("w3", 1)]);
        let mut a = MatricizedTensor::new(4, vec![4]);
        a.push(0, &[2], 1.0);
        a.assemble();
        let mut h = MatricizedTensor::new(4, vec![4, 4]);
        h.push(1, &[0, 2], 2.0);
        h.push(2, &[2, 3], 4.0);
        h.push(3, &[1, 2], 3.0);
        h.assemble();
        let mut n = MatricizedTensor::new(4, vec![4]);
        n.push(1, &[0], 2.0);
        n.push(2, &[3], 4.0);
        n.push(3, &[1], 3.0);
        n.assemble();
        let mut b = Mat::zeros(4, 1);
        b[(0, 0)] = 1.0;
        let sys = QbOde {
            layout,
            mass: Vector::from_element(4, 1.0),
            a,
            h,
            n_ops: vec![n],
            b,
        };
        sys.validate().unwrap();
        sys
    }

    /// DAE form of the same scalar system: differential x with
    /// ẋ = w₁² + u, algebraic w₁ = x².
    fn dae_quartic_scalar() -> QbDae {
        let mut h1 = MatricizedTensor::new(1, vec![2, 2]);
        h1.push(0, &[1, 1], 1.0);
        h1.assemble();
        let mut h2t = MatricizedTensor::new(1, vec![1, 1]);
        h2t.push(0, &[0, 0], 1.0);
        h2t.assemble();
        let mut b1 = Mat::zeros(1, 1);
        b1[(0, 0)] = 1.0;
        let dae = QbDae {
            layout1: VarLayout::flat("x", 1),
            layout2: VarLayout::flat("w1", 1),
            mass1: Vector::from_element(1, 1.0),
            a11: MatricizedTensor::new(1, vec![1]),
            a12: MatricizedTensor::new(1, vec![1]),
            h1,
            n1_ops: vec![MatricizedTensor::new(1, vec![2])],
            b1,
            h2t,
        };
        dae.validate().unwrap();
        dae
    }

    /// x(t) for ẋ = x⁴, x(0) = 1: (1 - 3t)^(-1/3).
    fn quartic_exact(t: f64) -> f64 {
        (1.0 - 3.0 * t).powf(-1.0 / 3.0)
    }

    #[test]
    fn lifted_rhs_values() {
        let sys = lifted_quartic_scalar();
        let x = Vector::from_element(4, 1.0);
        let u = Vector::from_element(1, 1.0);
        let rhs = eval_rhs_qb(&sys, &x, &u).unwrap();
        assert_eq!(rhs.as_slice(), &[2.0, 4.0, 8.0, 6.0]);
        let rhs0 = eval_rhs_qb(&sys, &x, &Vector::zeros(1)).unwrap();
        assert_eq!(rhs0.as_slice(), &[1.0, 2.0, 4.0, 3.0]);
    }

    #[test]
    fn lifted_system_reproduces_analytic_solution() {
        let sys = lifted_quartic_scalar();
        let x0 = Vector::from_element(4, 1.0);
        let opts = IntegrateOptions::span(1e-4, 0.1).unwrap().with_scheme(Scheme::Rk4);
        let traj = integrate_ode(&sys, &InputSignal::Zero(1), &x0, &opts).unwrap();
        let xf = traj.last_state();
        let exact = quartic_exact(0.1);
        assert_relative_eq!(xf[0], exact, epsilon = 1e-8);
        // Auxiliary variables track their definitions.
        assert_relative_eq!(xf[1], exact * exact, epsilon = 1e-7);
        assert_relative_eq!(xf[2], exact.powi(4), epsilon = 1e-7);
        assert_relative_eq!(xf[3], exact.powi(3), epsilon = 1e-7);
    }

    #[test]
    fn dae_rhs_and_consistency() {
        let dae = dae_quartic_scalar();
        let sub = SubstitutedQbDae { dae: &dae };
        let x1 = Vector::from_element(1, 2.0);
        let rhs = sub.eval_rhs(&x1, &Vector::zeros(1)).unwrap();
        assert_abs_diff_eq!(rhs[0], 16.0);
        let full = dae.full_state(&x1).unwrap();
        assert_eq!(full.as_slice(), &[2.0, 4.0]);
        let bad = Vector::from_vec(vec![2.0, 5.0]);
        assert_abs_diff_eq!(dae.algebraic_residual(&bad).unwrap()[0], 1.0);
    }

    #[test]
    fn dae_solution_matches_analytic_and_stays_consistent() {
        let dae = dae_quartic_scalar();
        let x1_0 = Vector::from_element(1, 1.0);
        for scheme in [Scheme::Rk4, Scheme::Sbdf2, Scheme::ImplicitEuler] {
            let opts = IntegrateOptions::span(1e-4, 0.1).unwrap().with_scheme(scheme);
            let traj = solve_qbdae(&dae, &InputSignal::Zero(1), &x1_0, &opts).unwrap();
            let tol = match scheme {
                Scheme::Rk4 => 1e-8,
                Scheme::Sbdf2 => 1e-5,
                _ => 1e-3,
            };
            let exact = quartic_exact(0.1);
            assert_relative_eq!(traj.last_state()[0], exact, epsilon = tol, max_relative = tol);
            // Algebraic variable follows x² on the whole record.
            for k in 0..traj.len() {
                let s = traj.state_at(k);
                assert_relative_eq!(s[1], s[0] * s[0], epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn quartic_container_matches_analytic_solution() {
        // Direct fourth-order form ẋ = x⁴ without lifting.
        let mut g4 = MatricizedTensor::new(1, vec![1, 1, 1, 1]);
        g4.push(0, &[0, 0, 0, 0], 1.0);
        g4.assemble();
        let sys = QuarticOde {
            layout: VarLayout::flat("x", 1),
            mass: Vector::from_element(1, 1.0),
            a: MatricizedTensor::new(1, vec![1]),
            g: vec![g4],
            n_ops: vec![],
            b: Mat::zeros(1, 0),
        };
        sys.validate().unwrap();
        let rhs = eval_rhs_quartic(&sys, &Vector::from_element(1, 2.0), &Vector::zeros(0)).unwrap();
        assert_abs_diff_eq!(rhs[0], 16.0);
        let opts = IntegrateOptions::span(1e-4, 0.1).unwrap().with_scheme(Scheme::Rk4);
        let traj =
            integrate_ode(&sys, &InputSignal::Zero(0), &Vector::from_element(1, 1.0), &opts)
                .unwrap();
        assert_relative_eq!(traj.last_state()[0], quartic_exact(0.1), epsilon = 1e-8);
    }

    #[test]
    fn substituted_jacobian_matches_finite_differences() {
        let dae = dae_quartic_scalar();
        let sub = SubstitutedQbDae { dae: &dae };
        let u = Vector::from_element(1, 0.7);
        let x1 = Vector::from_element(1, 1.3);
        let mut trip = Vec::new();
        sub.explicit_jacobian(&x1, &u, &mut trip).unwrap();
        let jac: f64 = trip.iter().map(|&(_, _, v)| v).sum();
        let h = 1e-6;
        let mut xp = x1.clone();
        xp[0] += h;
        let mut xm = x1.clone();
        xm[0] -= h;
        let fd = {
            let mut fp = Vector::zeros(1);
            sub.add_explicit_terms(&xp, &u, &mut fp).unwrap();
            let mut fm = Vector::zeros(1);
            sub.add_explicit_terms(&xm, &u, &mut fm).unwrap();
            (fp[0] - fm[0]) / (2.0 * h)
        };
        // d/dx (x⁴ + u) = 4x³ through the substituted quadratic terms.
        assert_relative_eq!(jac, 4.0 * 1.3f64.powi(3), epsilon = 1e-9, max_relative = 1e-9);
        assert_relative_eq!(jac, fd, epsilon = 1e-6, max_relative = 1e-6);
    }

    #[test]
    fn logistic_nonlinear_system() {
        // ẋ = x - x² via the general container; x(t) = x₀eᵗ/(1 + x₀(eᵗ-1)).
        let mut a = MatricizedTensor::new(1, vec![1]);
        a.push(0, &[0], 1.0);
        a.assemble();
        let sys = GeneralNonlinearSystem {
            layout: VarLayout::flat("x", 1),
            mass: Vector::from_element(1, 1.0),
            a,
            b: Mat::zeros(1, 0),
            nonlin: Some(PointwiseNonlinearity {
                deps: vec![vec![0]],
                eval: Arc::new(|_, v| Ok(-v[0] * v[0])),
                deriv: Some(Arc::new(|_, v, d| {
                    d[0] = -2.0 * v[0];
                    Ok(())
                })),
            }),
        };
        sys.validate().unwrap();
        let x0 = Vector::from_element(1, 0.5);
        let exact = 0.5 * 1f64.exp() / (1.0 + 0.5 * (1f64.exp() - 1.0));
        for (scheme, tol) in [(Scheme::Rk4, 1e-9), (Scheme::ImplicitEuler, 1e-2)] {
            let opts = IntegrateOptions::span(1e-3, 1.0).unwrap().with_scheme(scheme);
            let traj = integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts).unwrap();
            assert_relative_eq!(traj.last_state()[0], exact, epsilon = tol, max_relative = tol);
        }
    }

    #[test]
    fn nonlinearity_row_errors_propagate() {
        let sys = GeneralNonlinearSystem {
            layout: VarLayout::flat("x", 1),
            mass: Vector::from_element(1, 1.0),
            a: MatricizedTensor::new(1, vec![1]),
            b: Mat::zeros(1, 0),
            nonlin: Some(PointwiseNonlinearity {
                deps: vec![vec![0]],
                eval: Arc::new(|_, v| {
                    if v[0] <= 0.0 {
                        Err(Error::Domain("negative state".into()))
                    } else {
                        Ok(v[0].ln())
                    }
                }),
                deriv: None,
            }),
        };
        let x0 = Vector::from_element(1, -1.0);
        let opts = IntegrateOptions::span(0.1, 0.5).unwrap().with_scheme(Scheme::Rk4);
        assert!(matches!(
            integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn row_restricted_evaluation_matches_full() {
        let f = PointwiseNonlinearity {
            deps: vec![vec![0, 1], vec![1], vec![0, 2]],
            eval: Arc::new(|i, v| {
                Ok(match i {
                    0 => v[0] * v[1],
                    1 => v[0].sin(),
                    _ => v[0] + 2.0 * v[1],
                })
            }),
            deriv: None,
        };
        let x = Vector::from_vec(vec![0.3, -0.7, 2.0]);
        let mut all = Vector::zeros(3);
        f.add_eval_all(&x, &mut all).unwrap();
        let mut sel = [0.0; 2];
        f.eval_rows_with(&[2, 0], |d| x[d], &mut sel).unwrap();
        assert_abs_diff_eq!(sel[0], all[2]);
        assert_abs_diff_eq!(sel[1], all[0]);
    }
}
