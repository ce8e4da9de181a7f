//! Discrete empirical interpolation for pointwise nonlinearities.
//!
//! The nonlinear term `f(x)` is approximated in the span of an empirical
//! basis `U` via interpolation at greedily selected rows:
//! `f ≈ U (PᵀU)⁻¹ Pᵀ f`. Because the nonlinearity is pointwise with short
//! dependency lists, the selected rows can be evaluated from a handful of
//! inner products with reduced coordinates — the online phase never forms a
//! full-order vector.

use serde::{Deserialize, Serialize};

use crate::dynamics::{GeneralNonlinearSystem, OdeSystem, PointwiseNonlinearity, VarLayout};
use crate::reduction::project::{project_linear_with_basis, project_rows_with_basis, reduce_mass};
use crate::reduction::{PodBasis, SnapshotSet};
use crate::tensor::{numerical_rank, thin_svd};
use crate::{Error, Mat, Result, Vector};

// ---------------------------------------------------------------------------
// DEIM operator

/// Empirical interpolation operator: basis `U`, greedily selected rows `P`,
/// and the precomputed oblique projector `U (PᵀU)⁻¹`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeimOperator {
    /// Left singular vectors of the nonlinear snapshots (`n × r_deim`).
    basis: Mat,
    /// Selected interpolation rows, in selection order (all distinct).
    indices: Vec<usize>,
    /// `U (PᵀU)⁻¹` (`n × r_deim`): maps sampled values to the approximation.
    oblique: Mat,
    /// Full singular-value spectrum of the snapshot matrix.
    sigma: Vector,
}

impl DeimOperator {
    pub fn full_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn r_deim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn oblique(&self) -> &Mat {
        &self.oblique
    }

    pub fn sigma(&self) -> &Vector {
        &self.sigma
    }

    /// Interpolatory approximation of a full-order vector (offline
    /// diagnostics only).
    pub fn approximate(&self, f: &Vector) -> Result<Vector> {
        if f.len() != self.full_dim() {
            return Err(Error::dim("deim: approximation input", self.full_dim(), f.len()));
        }
        let sampled = Vector::from_fn(self.indices.len(), |k, _| f[self.indices[k]]);
        Ok(&self.oblique * sampled)
    }
}

/// Evaluates the nonlinearity of `sys` at every snapshot, producing the
/// `n × M` matrix of nonlinear snapshots. A system without a nonlinear term
/// yields the zero matrix.
pub fn nonlinear_snapshots(sys: &GeneralNonlinearSystem, snaps: &SnapshotSet) -> Result<Mat> {
    if snaps.layout() != &sys.layout {
        return Err(Error::Layout(format!(
            "nonlinear snapshots: snapshot layout {:?} does not match system layout {:?}",
            snaps.layout().names().collect::<Vec<_>>(),
            sys.layout.names().collect::<Vec<_>>()
        )));
    }
    let n = sys.layout.total_dim();
    let states = snaps.stacked();
    let mut out = Mat::zeros(n, states.ncols());
    if let Some(f) = &sys.nonlin {
        let mut col = Vector::zeros(n);
        for j in 0..states.ncols() {
            col.fill(0.0);
            f.add_eval_all(&states.column(j).into_owned(), &mut col)?;
            out.set_column(j, &col);
        }
    }
    Ok(out)
}

/// Builds a DEIM operator from nonlinear snapshots by greedy row selection:
/// the first row maximizes `|u₁|`; each later row maximizes the residual of
/// interpolating the next basis vector with the rows chosen so far. Ties
/// take the lowest row index, which keeps the construction deterministic.
pub fn deim_build(f_snapshots: &Mat, r_deim: usize) -> Result<DeimOperator> {
    if r_deim == 0 {
        return Err(Error::InvalidConfig("deim: at least one mode is required".into()));
    }
    let svd = thin_svd(f_snapshots)?;
    let rank = numerical_rank(&svd.sigma, f_snapshots.nrows().max(f_snapshots.ncols()));
    if r_deim > rank {
        return Err(Error::RankDeficient {
            context: "DEIM nonlinear snapshot basis".into(),
            requested: r_deim,
            numerical_rank: rank,
        });
    }
    let u = svd.u.columns(0, r_deim).into_owned();
    let mut indices = Vec::with_capacity(r_deim);
    indices.push(argmax_abs(&u.column(0).into_owned()));
    for j in 1..r_deim {
        // Interpolate u_j with the current rows, take the residual maximum.
        let uj = u.column(j).into_owned();
        let ptu = Mat::from_fn(j, j, |a, b| u[(indices[a], b)]);
        let rhs = Vector::from_fn(j, |a, _| uj[indices[a]]);
        let c = ptu.lu().solve(&rhs).ok_or_else(|| {
            Error::SingularMatrix("DEIM interpolation matrix during greedy selection".into())
        })?;
        let mut res = uj;
        res.gemv(-1.0, &u.columns(0, j).into_owned(), &c, 1.0);
        indices.push(argmax_abs(&res));
    }
    let mut seen = std::collections::HashSet::new();
    if !indices.iter().all(|i| seen.insert(*i)) {
        return Err(Error::SingularMatrix(
            "DEIM selected a repeated interpolation row".into(),
        ));
    }
    let ptu = Mat::from_fn(r_deim, r_deim, |a, b| u[(indices[a], b)]);
    let inv = ptu
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("DEIM interpolation matrix".into()))?;
    let oblique = &u * inv;
    Ok(DeimOperator { basis: u, indices, oblique, sigma: svd.sigma })
}

fn argmax_abs(v: &Vector) -> usize {
    let mut best = 0;
    let mut best_val = v[0].abs();
    for i in 1..v.len() {
        let a = v[i].abs();
        if a > best_val {
            best = i;
            best_val = a;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// POD-DEIM reduced model

/// POD-DEIM reduced model of a general nonlinear system:
///
/// `Ê x̂̇ = Â x̂ + Vᵀ U (PᵀU)⁻¹ f_P(V x̂) + B̂ u`
///
/// Only the selected nonlinearity rows are evaluated online; their state
/// dependencies are gathered through precomputed length-`r` rows of `V`, so
/// no online object has full dimension (see [`Self::online_footprint`]).
#[derive(Clone, Debug)]
pub struct PodDeimRom {
    layout: VarLayout,
    mass: Vector,
    a: Mat,
    b: Mat,
    /// `Vᵀ U (PᵀU)⁻¹` (`r × r_deim`).
    w: Mat,
    /// Selected nonlinearity rows (indices into the full-order equations;
    /// metadata only — no full-order array is stored).
    rows: Vec<usize>,
    /// `dep_rows[k][d]`: the row of `V` belonging to dependency `d` of
    /// selected row `k` (each of length `r`).
    dep_rows: Vec<Vec<Vector>>,
    /// Evaluation callbacks of the original nonlinearity.
    nonlin: Option<PointwiseNonlinearity>,
}

impl PodDeimRom {
    pub fn reduced_dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn r_deim(&self) -> usize {
        self.w.ncols()
    }

    /// Largest dimension of any array touched during online evaluation —
    /// the instrumented guard for the offline/online split. Independent of
    /// the full order `n` by construction.
    pub fn online_footprint(&self) -> usize {
        let r = self.reduced_dim();
        let deps = self
            .dep_rows
            .iter()
            .flat_map(|rows| rows.iter().map(|v| v.len()))
            .max()
            .unwrap_or(0);
        r.max(self.r_deim()).max(self.b.ncols()).max(deps)
    }

    /// Evaluates the sampled nonlinearity rows at reduced coordinates.
    fn sampled_rows(&self, xhat: &Vector) -> Result<Vector> {
        let nl = self.nonlin.as_ref().expect("sampled_rows requires a nonlinearity");
        let mut vals: Vec<f64> = Vec::new();
        let mut out = Vector::zeros(self.rows.len());
        for (k, &row) in self.rows.iter().enumerate() {
            vals.clear();
            vals.extend(self.dep_rows[k].iter().map(|vrow| vrow.dot(xhat)));
            out[k] = (nl.eval)(row, &vals)?;
        }
        Ok(out)
    }
}

impl OdeSystem for PodDeimRom {
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
            return Err(Error::dim("pod-deim rom: input", self.b.ncols(), u.len()));
        }
        if self.nonlin.is_some() {
            let sampled = self.sampled_rows(x)?;
            out.gemv(1.0, &self.w, &sampled, 1.0);
        }
        if self.b.ncols() > 0 {
            out.gemv(1.0, &self.b, u, 1.0);
        }
        Ok(())
    }

    fn explicit_jacobian(
        &self,
        x: &Vector,
        u: &Vector,
        out: &mut Vec<(usize, usize, f64)>,
    ) -> Result<()> {
        if u.len() != self.b.ncols() {
            return Err(Error::dim("pod-deim rom: input", self.b.ncols(), u.len()));
        }
        let Some(nl) = &self.nonlin else { return Ok(()) };
        let Some(deriv) = &nl.deriv else {
            return Err(Error::InvalidConfig(
                "nonlinearity has no derivative callback; use an IMEX or explicit scheme".into(),
            ));
        };
        let r = self.reduced_dim();
        // J = W · ∂f_P/∂x̂ with ∂f_{p_k}/∂x̂ = Σ_d (∂f/∂dep_d) · V-row_d.
        let mut jp = Mat::zeros(self.rows.len(), r);
        let mut vals: Vec<f64> = Vec::new();
        let mut ders: Vec<f64> = Vec::new();
        for (k, &row) in self.rows.iter().enumerate() {
            let deps = &self.dep_rows[k];
            vals.clear();
            vals.extend(deps.iter().map(|vrow| vrow.dot(x)));
            ders.clear();
            ders.resize(deps.len(), 0.0);
            deriv(row, &vals, &mut ders)?;
            for (d, vrow) in deps.iter().enumerate() {
                if ders[d] != 0.0 {
                    for j in 0..r {
                        jp[(k, j)] += ders[d] * vrow[j];
                    }
                }
            }
        }
        let jhat = &self.w * jp;
        for j in 0..jhat.ncols() {
            for i in 0..jhat.nrows() {
                if jhat[(i, j)] != 0.0 {
                    out.push((i, j, jhat[(i, j)]));
                }
            }
        }
        Ok(())
    }
}

/// Row `i` of the assembled block-diagonal basis, as a dense length-`r`
/// vector.
fn basis_row(basis: &PodBasis, i: usize) -> Vector {
    let layout = basis.layout();
    let reduced = basis.reduced_layout();
    let mut row = Vector::zeros(reduced.total_dim());
    for var in 0..layout.var_count() {
        let off = layout.offset(var);
        if i >= off && i < off + layout.size(var) {
            let block = basis.block(var);
            let node = i - off;
            for c in 0..block.ncols() {
                row[reduced.offset(var) + c] = block[(node, c)];
            }
            break;
        }
    }
    row
}

/// Builds the POD-DEIM reduced model. `deim` must be supplied exactly when
/// the system has a nonlinear term; linear systems reduce without one.
pub fn build_pod_deim_rom(
    fom: &GeneralNonlinearSystem,
    basis: &PodBasis,
    deim: Option<&DeimOperator>,
) -> Result<PodDeimRom> {
    if basis.layout() != &fom.layout {
        return Err(Error::Layout(
            "pod-deim: basis layout does not match system layout".into(),
        ));
    }
    let n = fom.layout.total_dim();
    let r = basis.reduced_dim();
    let (w, rows, dep_rows, nonlin) = match (&fom.nonlin, deim) {
        (Some(nl), Some(op)) => {
            if op.full_dim() != n {
                return Err(Error::dim("pod-deim: operator dimension", n, op.full_dim()));
            }
            if let Some(&bad) = op.indices().iter().find(|&&i| i >= n) {
                return Err(Error::InvalidConfig(format!(
                    "pod-deim: interpolation row {bad} is out of range for dimension {n}"
                )));
            }
            let w = project_rows_with_basis(op.oblique(), basis)?;
            let rows = op.indices().to_vec();
            let dep_rows: Vec<Vec<Vector>> = rows
                .iter()
                .map(|&p| nl.deps[p].iter().map(|&d| basis_row(basis, d)).collect())
                .collect();
            (w, rows, dep_rows, Some(nl.clone()))
        }
        (None, None) => (Mat::zeros(r, 0), Vec::new(), Vec::new(), None),
        (Some(_), None) => {
            return Err(Error::InvalidConfig(
                "pod-deim: system has a nonlinear term but no DEIM operator was supplied".into(),
            ));
        }
        (None, Some(_)) => {
            return Err(Error::InvalidConfig(
                "pod-deim: DEIM operator supplied for a system without a nonlinear term".into(),
            ));
        }
    };
    Ok(PodDeimRom {
        layout: basis.reduced_layout().clone(),
        mass: reduce_mass(&fom.mass, &fom.layout, basis.reduced_layout())?,
        a: project_linear_with_basis(&fom.a, basis)?,
        b: project_rows_with_basis(&fom.b, basis)?,
        w,
        rows,
        dep_rows,
        nonlin,
    })
}

// ---------------------------------------------------------------------------
// Plain POD reference model

/// Plain POD-Galerkin reduction of a general nonlinear system. The
/// nonlinearity is lifted, evaluated in full order, and projected back on
/// every right-hand-side call — deliberately `n`-dependent, serving as the
/// accuracy reference that interpolation-based models are measured against.
#[derive(Clone, Debug)]
pub struct PodReferenceRom {
    layout: VarLayout,
    mass: Vector,
    a: Mat,
    b: Mat,
    basis: PodBasis,
    nonlin: Option<PointwiseNonlinearity>,
}

impl PodReferenceRom {
    pub fn reduced_dim(&self) -> usize {
        self.layout.total_dim()
    }
}

impl OdeSystem for PodReferenceRom {
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
            return Err(Error::dim("pod rom: input", self.b.ncols(), u.len()));
        }
        if let Some(nl) = &self.nonlin {
            let lifted = self.basis.lift(x)?;
            let mut f = Vector::zeros(lifted.len());
            nl.add_eval_all(&lifted, &mut f)?;
            *out += self.basis.project(&f)?;
        }
        if self.b.ncols() > 0 {
            out.gemv(1.0, &self.b, u, 1.0);
        }
        Ok(())
    }
}

/// Builds the plain POD-Galerkin reference model.
pub fn build_pod_reference_rom(
    fom: &GeneralNonlinearSystem,
    basis: &PodBasis,
) -> Result<PodReferenceRom> {
    if basis.layout() != &fom.layout {
        return Err(Error::Layout(
            "pod reference: basis layout does not match system layout".into(),
        ));
    }
    Ok(PodReferenceRom {
        layout: basis.reduced_layout().clone(),
        mass: reduce_mass(&fom.mass, &fom.layout, basis.reduced_layout())?,
        a: project_linear_with_basis(&fom.a, basis)?,
        b: project_rows_with_basis(&fom.b, basis)?,
        basis: basis.clone(),
        nonlin: fom.nonlin.clone(),
    })
}
