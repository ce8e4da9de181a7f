//! Time integration of semi-linear ODE systems `E ẋ = A x + g(x, u)`.
//!
//! All systems in this crate share the shape: a diagonal positive mass
//! matrix `E`, a constant sparse linear operator `A` that carries the stiff
//! part (diffusion, linear reaction), and remaining terms `g` (polynomial,
//! bilinear-in-input, affine input and general nonlinear terms). The
//! IMEX schemes treat `A` implicitly and `g` explicitly, so every step
//! reuses one banded LU factorization; the fully implicit scheme solves
//! with a damped Newton iteration and exact Jacobians.

mod banded;
mod systems;

pub use banded::{bandwidths, BandedLu, PermutedBandedLu};
pub use systems::{
    eval_rhs_qb, eval_rhs_quartic, solve_qbdae, GeneralNonlinearSystem, PointwiseNonlinearity,
    QbDae, QbOde, QuarticOde, RowDerivFn, RowEvalFn, SubstitutedQbDae,
};

use serde::{Deserialize, Serialize};
use std::io::Write as IoWrite;
use std::sync::Arc;

use crate::{Error, Mat, Result, Vector};

/// Callback form of an input signal: fills `u(t)` into the buffer.
pub type SignalFn = Arc<dyn Fn(f64, &mut Vector) + Send + Sync>;

// ---------------------------------------------------------------------------
// State layout

/// Blocked layout of a state vector: named variables, each discretized with
/// a fixed number of nodes, stored contiguously in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    names: Vec<String>,
    sizes: Vec<usize>,
}

impl VarLayout {
    pub fn new(vars: &[(&str, usize)]) -> Self {
        assert!(!vars.is_empty(), "layout needs at least one variable");
        VarLayout {
            names: vars.iter().map(|(n, _)| n.to_string()).collect(),
            sizes: vars.iter().map(|&(_, s)| s).collect(),
        }
    }

    /// Single unnamed block, used for reduced coordinates.
    pub fn flat(name: &str, dim: usize) -> Self {
        Self::new(&[(name, dim)])
    }

    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    pub fn total_dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn size(&self, var: usize) -> usize {
        self.sizes[var]
    }

    pub fn offset(&self, var: usize) -> usize {
        self.sizes[..var].iter().sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Global index of `(variable, node)`.
    pub fn global(&self, var: usize, node: usize) -> usize {
        assert!(node < self.sizes[var], "node index out of range");
        self.offset(var) + node
    }

    /// Extracts the sub-vector of one variable.
    pub fn var_slice<'a>(&self, x: &'a Vector, var: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(self.offset(var), self.sizes[var])
    }

    /// Node-major interleaving permutation `perm[old] = new`, defined when
    /// the layout has several variables of equal node count. Implicit-step
    /// matrices of blocked PDE operators become narrow-banded under it.
    pub fn interleave_permutation(&self) -> Option<Vec<usize>> {
        let k = self.var_count();
        if k < 2 {
            return None;
        }
        let m = self.sizes[0];
        if self.sizes.iter().any(|&s| s != m) {
            return None;
        }
        let mut perm = vec![0usize; k * m];
        for var in 0..k {
            for node in 0..m {
                perm[var * m + node] = node * k + var;
            }
        }
        Some(perm)
    }

    /// Concatenation of two layouts (differential ++ algebraic blocks).
    pub fn concat(&self, other: &VarLayout) -> VarLayout {
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut sizes = self.sizes.clone();
        sizes.extend(other.sizes.iter().copied());
        VarLayout { names, sizes }
    }
}

// ---------------------------------------------------------------------------
// Input signals

/// Time-dependent input `u(t)` with a fixed number of channels.
#[derive(Clone)]
pub enum InputSignal {
    /// `u(t) = 0` with the given channel count.
    Zero(usize),
    /// `u(t) = c`.
    Constant(Vector),
    /// Two channels `[5·10⁴ t³ e^(-15 t), 1]`: a smooth activation pulse
    /// plus a constant channel for affine terms.
    CubicExpPulse,
    /// Arbitrary callback.
    Custom { dim: usize, f: SignalFn },
}

impl std::fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputSignal::Zero(m) => write!(f, "Zero({m})"),
            InputSignal::Constant(c) => write!(f, "Constant({c:?})"),
            InputSignal::CubicExpPulse => write!(f, "CubicExpPulse"),
            InputSignal::Custom { dim, .. } => write!(f, "Custom(dim={dim})"),
        }
    }
}

impl InputSignal {
    pub fn dim(&self) -> usize {
        match self {
            InputSignal::Zero(m) => *m,
            InputSignal::Constant(c) => c.len(),
            InputSignal::CubicExpPulse => 2,
            InputSignal::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut Vector) {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            InputSignal::Zero(_) => out.fill(0.0),
            InputSignal::Constant(c) => out.copy_from(c),
            InputSignal::CubicExpPulse => {
                out[0] = 5.0e4 * t * t * t * (-15.0 * t).exp();
                out[1] = 1.0;
            }
            InputSignal::Custom { f, .. } => f(t, out),
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.eval_into(t, &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Trajectories

/// Recorded solution: times and one state column per record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub layout: VarLayout,
    pub times: Vec<f64>,
    /// `total_dim × len(times)`.
    pub states: Mat,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_at(&self, k: usize) -> Vector {
        self.states.column(k).into_owned()
    }

    pub fn last_state(&self) -> Vector {
        self.state_at(self.len() - 1)
    }

    /// Time series of one variable at one node.
    pub fn series(&self, var_name: &str, node: usize) -> Result<Vec<f64>> {
        let var = self
            .layout
            .index_of(var_name)
            .ok_or_else(|| Error::UnknownQoi(format!("unknown variable '{var_name}'")))?;
        if node >= self.layout.size(var) {
            return Err(Error::dim(
                format!("node index for variable '{var_name}'"),
                self.layout.size(var) - 1,
                node,
            ));
        }
        let row = self.layout.global(var, node);
        Ok((0..self.len()).map(|k| self.states[(row, k)]).collect())
    }

    /// Writes `t,<var>_<node>,...` CSV with 1-based node indices, one row
    /// per record, shortest round-trip float formatting.
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        write!(w, "t")?;
        for var in 0..self.layout.var_count() {
            for node in 1..=self.layout.size(var) {
                write!(w, ",{}_{}", self.layout.name(var), node)?;
            }
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for i in 0..self.layout.total_dim() {
                write!(w, ",{}", self.states[(i, k)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Columns `start, start+stride, ...` as a new matrix (used to form
    /// snapshot sets on coarser grids than the record grid).
    pub fn subsample_states(&self, start: usize, stride: usize) -> Mat {
        assert!(stride >= 1);
        let cols: Vec<usize> = (start..self.len()).step_by(stride).collect();
        let mut m = Mat::zeros(self.layout.total_dim(), cols.len());
        for (dst, &src) in cols.iter().enumerate() {
            m.set_column(dst, &self.states.column(src));
        }
        m
    }
}

// ---------------------------------------------------------------------------
// System trait and integration options

/// Semi-linear system `E ẋ = A x + g(x, u)` with diagonal `E > 0`.
///
/// `A` is the constant linear part treated implicitly by the IMEX schemes;
/// `g` collects every remaining term. Systems that can differentiate `g`
/// also support the fully implicit scheme.
pub trait OdeSystem {
    fn layout(&self) -> &VarLayout;
    fn input_dim(&self) -> usize;
    /// Diagonal of the mass matrix; strictly positive for ODE integration.
    fn mass_diag(&self) -> &Vector;
    /// COO triplets of `A` (summed; used to assemble implicit-step matrices).
    fn linear_triplets(&self) -> Vec<(usize, usize, f64)>;
    /// `out += A x`.
    fn add_linear_terms(&self, x: &Vector, out: &mut Vector);
    /// `out += g(x, u)`.
    fn add_explicit_terms(&self, x: &Vector, u: &Vector, out: &mut Vector) -> Result<()>;
    /// COO triplets of `∂g/∂x`, appended to `out`. Optional; required only
    /// by the fully implicit scheme.
    fn explicit_jacobian(
        &self,
        _x: &Vector,
        _u: &Vector,
        _out: &mut Vec<(usize, usize, f64)>,
    ) -> Result<()> {
        Err(Error::InvalidConfig(
            "system does not provide Jacobians; use an IMEX or explicit scheme".into(),
        ))
    }

    fn dim(&self) -> usize {
        self.layout().total_dim()
    }

    /// Full right-hand side `A x + g(x, u)` (without the mass matrix).
    fn eval_rhs(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let mut out = Vector::zeros(self.dim());
        self.add_linear_terms(x, &mut out);
        self.add_explicit_terms(x, u, &mut out)?;
        Ok(out)
    }
}

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// First-order IMEX: linear part implicit, rest explicit.
    SemiImplicitEuler,
    /// Second-order semi-implicit BDF (default); first step bootstrapped
    /// with one semi-implicit Euler step.
    #[default]
    Sbdf2,
    /// Fully implicit Euler with damped Newton; needs Jacobians.
    ImplicitEuler,
    /// Classic explicit fourth-order Runge-Kutta.
    Rk4,
}

/// Newton iteration controls for the fully implicit scheme.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence when `‖F‖∞ ≤ tol · (1 + ‖E x_prev / dt‖∞)`.
    pub tol: f64,
    /// Step-halving factor for the backtracking line search.
    pub damping: f64,
    /// Smallest admissible line-search fraction before declaring divergence.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 50, tol: 1e-10, damping: 0.5, min_step: 1e-8 }
    }
}

/// Fixed-step integration options.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrateOptions {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
    /// Record every `store_every`-th step (the initial state is always
    /// recorded).
    pub store_every: usize,
    pub newton: NewtonOptions,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            t0: 0.0,
            dt: 1e-3,
            steps: 0,
            scheme: Scheme::default(),
            store_every: 1,
            newton: NewtonOptions::default(),
        }
    }
}

impl IntegrateOptions {
    /// Covers `[0, t_end]` with steps of size `dt`; `t_end` must be an
    /// integer multiple of `dt` up to rounding.
    pub fn span(dt: f64, t_end: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        let steps_f = t_end / dt;
        let steps = steps_f.round();
        if t_end <= 0.0 || (steps_f - steps).abs() > 1e-8 * steps.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "t_end = {t_end} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(IntegrateOptions { dt, steps: steps as usize, ..Default::default() })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_store_every(mut self, k: usize) -> Self {
        self.store_every = k;
        self
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * self.steps as f64
    }

    fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.store_every == 0 {
            return Err(Error::InvalidConfig("store_every must be at least 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Integration driver

struct Recorder {
    store_every: usize,
    times: Vec<f64>,
    cols: Vec<Vector>,
}

impl Recorder {
    fn new(opts: &IntegrateOptions, x0: &Vector) -> Self {
        let mut r = Recorder {
            store_every: opts.store_every,
            times: Vec::with_capacity(opts.steps / opts.store_every + 1),
            cols: Vec::with_capacity(opts.steps / opts.store_every + 1),
        };
        r.times.push(opts.t0);
        r.cols.push(x0.clone());
        r
    }

    fn record(&mut self, step1: usize, t: f64, x: &Vector) {
        if step1.is_multiple_of(self.store_every) {
            self.times.push(t);
            self.cols.push(x.clone());
        }
    }

    fn finish(self, layout: &VarLayout) -> Trajectory {
        let n = layout.total_dim();
        let mut states = Mat::zeros(n, self.cols.len());
        for (k, c) in self.cols.iter().enumerate() {
            states.set_column(k, c);
        }
        Trajectory { layout: layout.clone(), times: self.times, states }
    }
}

fn check_state(x: &Vector, step: usize, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step, t })
    }
}

/// Integrates `sys` from `x0` under `input` with fixed steps.
///
/// Records the initial state and every `store_every`-th step. Fails on
/// non-finite states, Newton divergence, and singular implicit-step
/// matrices.
pub fn integrate_ode<S: OdeSystem + ?Sized>(
    sys: &S,
    input: &InputSignal,
    x0: &Vector,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::dim("integrate: initial state", n, x0.len()));
    }
    if input.dim() != sys.input_dim() {
        return Err(Error::dim("integrate: input channels", sys.input_dim(), input.dim()));
    }
    let mass = sys.mass_diag();
    if mass.len() != n {
        return Err(Error::dim("integrate: mass diagonal", n, mass.len()));
    }
    if mass.iter().any(|&m| !m.is_finite() || m <= 0.0) {
        return Err(Error::Domain(
            "integrate: mass diagonal must be strictly positive (no algebraic rows)".into(),
        ));
    }
    check_state(x0, 0, opts.t0)?;
    let perm = sys.layout().interleave_permutation();
    let perm_ref = perm.as_deref();
    log::debug!(
        "integrate: n = {n}, scheme = {:?}, dt = {}, steps = {}",
        opts.scheme,
        opts.dt,
        opts.steps
    );

    let mut rec = Recorder::new(opts, x0);
    let dt = opts.dt;
    let a_triplets = sys.linear_triplets();
    let mut u = Vector::zeros(input.dim());
    let mut g = Vector::zeros(n);

    match opts.scheme {
        Scheme::SemiImplicitEuler | Scheme::Sbdf2 => {
            let imex_matrix = |c: f64| -> Vec<(usize, usize, f64)> {
                let mut t: Vec<(usize, usize, f64)> =
                    a_triplets.iter().map(|&(i, j, v)| (i, j, -v)).collect();
                for i in 0..n {
                    t.push((i, i, c * mass[i]));
                }
                t
            };
            let lu1 = PermutedBandedLu::factor(n, &imex_matrix(1.0 / dt), perm_ref)?;
            let sbdf2 = opts.scheme == Scheme::Sbdf2;
            let lu2 = if sbdf2 {
                Some(PermutedBandedLu::factor(n, &imex_matrix(1.5 / dt), perm_ref)?)
            } else {
                None
            };
            let mut x = x0.clone();
            let mut x_prev = x0.clone();
            let mut g_prev = Vector::zeros(n);
            for step in 0..opts.steps {
                let t = opts.t0 + step as f64 * dt;
                input.eval_into(t, &mut u);
                g.fill(0.0);
                sys.add_explicit_terms(&x, &u, &mut g)?;
                let mut rhs;
                let lu = if sbdf2 && step > 0 {
                    // (3E/2dt) x₊ - A x₊ = E (4x - x₋)/(2dt) + 2g - g₋
                    rhs = Vector::from_fn(n, |i, _| {
                        mass[i] * (4.0 * x[i] - x_prev[i]) / (2.0 * dt) + 2.0 * g[i] - g_prev[i]
                    });
                    lu2.as_ref().unwrap()
                } else {
                    // (E/dt) x₊ - A x₊ = E x/dt + g
                    rhs = Vector::from_fn(n, |i, _| mass[i] * x[i] / dt + g[i]);
                    &lu1
                };
                lu.solve_in_place(&mut rhs);
                let t1 = opts.t0 + (step + 1) as f64 * dt;
                check_state(&rhs, step + 1, t1)?;
                if sbdf2 {
                    std::mem::swap(&mut x_prev, &mut x);
                    std::mem::swap(&mut g_prev, &mut g);
                }
                x = rhs;
                rec.record(step + 1, t1, &x);
            }
        }
        Scheme::Rk4 => {
            let mut x = x0.clone();
            let rhs = |t: f64, x: &Vector, u: &mut Vector, out: &mut Vector| -> Result<()> {
                input.eval_into(t, u);
                out.fill(0.0);
                sys.add_linear_terms(x, out);
                sys.add_explicit_terms(x, u, out)?;
                for i in 0..n {
                    out[i] /= mass[i];
                }
                Ok(())
            };
            let mut k1 = Vector::zeros(n);
            let mut k2 = Vector::zeros(n);
            let mut k3 = Vector::zeros(n);
            let mut k4 = Vector::zeros(n);
            for step in 0..opts.steps {
                let t = opts.t0 + step as f64 * dt;
                rhs(t, &x, &mut u, &mut k1)?;
                rhs(t + 0.5 * dt, &(&x + 0.5 * dt * &k1), &mut u, &mut k2)?;
                rhs(t + 0.5 * dt, &(&x + 0.5 * dt * &k2), &mut u, &mut k3)?;
                rhs(t + dt, &(&x + dt * &k3), &mut u, &mut k4)?;
                x += (dt / 6.0) * (&k1 + 2.0 * &k2 + 2.0 * &k3 + &k4);
                let t1 = opts.t0 + (step + 1) as f64 * dt;
                check_state(&x, step + 1, t1)?;
                rec.record(step + 1, t1, &x);
            }
        }
        Scheme::ImplicitEuler => {
            let nop = &opts.newton;
            let mut x = x0.clone();
            let mut jac: Vec<(usize, usize, f64)> = Vec::new();
            for step in 0..opts.steps {
                let t1 = opts.t0 + (step + 1) as f64 * dt;
                input.eval_into(t1, &mut u);
                let scale = 1.0 + (0..n).map(|i| (mass[i] * x[i] / dt).abs()).fold(0.0, f64::max);
                // F(y) = E (y - x)/dt - A y - g(y, u)
                let residual = |y: &Vector, g: &mut Vector| -> Result<Vector> {
                    g.fill(0.0);
                    sys.add_explicit_terms(y, &u, g)?;
                    let mut f = Vector::from_fn(n, |i, _| mass[i] * (y[i] - x[i]) / dt - g[i]);
                    let ay = {
                        let mut t = Vector::zeros(n);
                        sys.add_linear_terms(y, &mut t);
                        t
                    };
                    f -= ay;
                    Ok(f)
                };
                let mut y = x.clone();
                let mut fy = residual(&y, &mut g)?;
                let mut converged = false;
                for it in 0..nop.max_iter {
                    let fnorm = fy.amax();
                    if !fnorm.is_finite() {
                        return Err(Error::NonFiniteState { step: step + 1, t: t1 });
                    }
                    if fnorm <= nop.tol * scale {
                        converged = true;
                        break;
                    }
                    jac.clear();
                    for i in 0..n {
                        jac.push((i, i, mass[i] / dt));
                    }
                    for &(i, j, v) in &a_triplets {
                        jac.push((i, j, -v));
                    }
                    let before = jac.len();
                    sys.explicit_jacobian(&y, &u, &mut jac)?;
                    for e in jac[before..].iter_mut() {
                        e.2 = -e.2;
                    }
                    let lu = PermutedBandedLu::factor(n, &jac, perm_ref)?;
                    let mut delta = fy.clone();
                    lu.solve_in_place(&mut delta);
                    // Backtracking: accept a step that reduces ‖F‖.
                    let mut lambda = 1.0;
                    loop {
                        let y_trial = &y - lambda * &delta;
                        let f_trial = residual(&y_trial, &mut g)?;
                        let ok = f_trial.amax().is_finite()
                            && f_trial.amax() <= (1.0 - 1e-4 * lambda) * fy.amax();
                        if ok {
                            y = y_trial;
                            fy = f_trial;
                            break;
                        }
                        lambda *= nop.damping;
                        if lambda < nop.min_step {
                            return Err(Error::NewtonDiverged {
                                step: step + 1,
                                t: t1,
                                residual: fy.amax(),
                                iterations: it + 1,
                            });
                        }
                    }
                }
                if !converged {
                    return Err(Error::NewtonDiverged {
                        step: step + 1,
                        t: t1,
                        residual: fy.amax(),
                        iterations: nop.max_iter,
                    });
                }
                x = y;
                check_state(&x, step + 1, t1)?;
                rec.record(step + 1, t1, &x);
            }
        }
    }
    Ok(rec.finish(sys.layout()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// dim-1 test system E ẋ = a x + c·x² with mass e.
    struct Scalar {
        layout: VarLayout,
        mass: Vector,
        a: f64,
        c: f64,
    }

    impl Scalar {
        fn new(e: f64, a: f64, c: f64) -> Self {
            Scalar { layout: VarLayout::flat("x", 1), mass: Vector::from_vec(vec![e]), a, c }
        }
    }

    impl OdeSystem for Scalar {
        fn layout(&self) -> &VarLayout {
            &self.layout
        }
        fn input_dim(&self) -> usize {
            0
        }
        fn mass_diag(&self) -> &Vector {
            &self.mass
        }
        fn linear_triplets(&self) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, self.a)]
        }
        fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
            out[0] += self.a * x[0];
        }
        fn add_explicit_terms(&self, x: &Vector, _u: &Vector, out: &mut Vector) -> Result<()> {
            out[0] += self.c * x[0] * x[0];
            Ok(())
        }
        fn explicit_jacobian(
            &self,
            x: &Vector,
            _u: &Vector,
            out: &mut Vec<(usize, usize, f64)>,
        ) -> Result<()> {
            out.push((0, 0, 2.0 * self.c * x[0]));
            Ok(())
        }
    }

    #[test]
    fn layout_offsets_and_lookup() {
        let l = VarLayout::new(&[("v", 3), ("w", 3), ("z", 3)]);
        assert_eq!(l.total_dim(), 9);
        assert_eq!(l.offset(2), 6);
        assert_eq!(l.index_of("w"), Some(1));
        assert_eq!(l.index_of("q"), None);
        assert_eq!(l.global(1, 2), 5);
    }

    #[test]
    fn interleave_permutation_is_node_major() {
        let l = VarLayout::new(&[("a", 3), ("b", 3)]);
        let p = l.interleave_permutation().unwrap();
        assert_eq!(p, vec![0, 2, 4, 1, 3, 5]);
        // Unequal sizes: no permutation.
        let l2 = VarLayout::new(&[("a", 3), ("b", 2)]);
        assert!(l2.interleave_permutation().is_none());
        // Single variable: no permutation.
        assert!(VarLayout::flat("x", 5).interleave_permutation().is_none());
    }

    #[test]
    fn pulse_input_values() {
        let s = InputSignal::CubicExpPulse;
        let u0 = s.eval(0.0);
        assert_abs_diff_eq!(u0[0], 0.0);
        assert_abs_diff_eq!(u0[1], 1.0);
        let u = s.eval(0.2);
        assert_relative_eq!(u[0], 5.0e4 * 0.008 * (-3.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn trajectory_csv_format() {
        let layout = VarLayout::new(&[("v", 2), ("w", 1)]);
        let traj = Trajectory {
            layout,
            times: vec![0.0, 0.5],
            states: Mat::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,v_1,v_2,w_1\n0,1,2,3\n0.5,4,5,6\n");
    }

    #[test]
    fn store_every_subsamples_records() {
        let sys = Scalar::new(1.0, -1.0, 0.0);
        let x0 = Vector::from_vec(vec![1.0]);
        let mut opts = IntegrateOptions::span(0.01, 1.0).unwrap();
        opts.store_every = 10;
        let traj = integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts).unwrap();
        assert_eq!(traj.len(), 11);
        assert_abs_diff_eq!(traj.times[1], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(traj.times[10], 1.0, epsilon = 1e-12);
    }

    fn decay_error(scheme: Scheme, dt: f64) -> f64 {
        let sys = Scalar::new(1.0, -1.0, 0.0);
        let x0 = Vector::from_vec(vec![1.0]);
        let opts = IntegrateOptions::span(dt, 1.0).unwrap().with_scheme(scheme);
        let traj = integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts).unwrap();
        (traj.last_state()[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn convergence_orders_on_linear_decay() {
        // Step pairs chosen so truncation error stays well above rounding.
        for (scheme, dt, expected) in [
            (Scheme::SemiImplicitEuler, 2e-3, 2.0),
            (Scheme::ImplicitEuler, 2e-3, 2.0),
            (Scheme::Sbdf2, 2e-3, 4.0),
            (Scheme::Rk4, 5e-2, 16.0),
        ] {
            let e1 = decay_error(scheme, dt);
            let e2 = decay_error(scheme, dt / 2.0);
            let ratio = e1 / e2;
            assert!(
                (ratio - expected).abs() < 0.35 * expected,
                "{scheme:?}: ratio {ratio}, expected ~{expected} (e1={e1:.3e}, e2={e2:.3e})"
            );
        }
    }

    #[test]
    fn nonlinear_decay_matches_analytic_solution() {
        // ẋ = -x³ with x(0) = 2 has x(t) = (x₀⁻² + 2t)^(-1/2).
        struct Cubic {
            layout: VarLayout,
            mass: Vector,
        }
        impl OdeSystem for Cubic {
            fn layout(&self) -> &VarLayout {
                &self.layout
            }
            fn input_dim(&self) -> usize {
                0
            }
            fn mass_diag(&self) -> &Vector {
                &self.mass
            }
            fn linear_triplets(&self) -> Vec<(usize, usize, f64)> {
                vec![]
            }
            fn add_linear_terms(&self, _x: &Vector, _out: &mut Vector) {}
            fn add_explicit_terms(&self, x: &Vector, _u: &Vector, out: &mut Vector) -> Result<()> {
                out[0] -= x[0] * x[0] * x[0];
                Ok(())
            }
            fn explicit_jacobian(
                &self,
                x: &Vector,
                _u: &Vector,
                out: &mut Vec<(usize, usize, f64)>,
            ) -> Result<()> {
                out.push((0, 0, -3.0 * x[0] * x[0]));
                Ok(())
            }
        }
        let sys = Cubic { layout: VarLayout::flat("x", 1), mass: Vector::from_vec(vec![1.0]) };
        let x0 = Vector::from_vec(vec![2.0]);
        let exact = (0.25f64 + 2.0).powf(-0.5);
        for (scheme, tol) in [
            (Scheme::Rk4, 1e-9),
            (Scheme::Sbdf2, 1e-5),
            (Scheme::ImplicitEuler, 1e-2),
        ] {
            let opts = IntegrateOptions::span(1e-3, 1.0).unwrap().with_scheme(scheme);
            let traj = integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts).unwrap();
            let err = (traj.last_state()[0] - exact).abs();
            assert!(err < tol, "{scheme:?}: error {err:.3e} vs tol {tol:.0e}");
        }
    }

    #[test]
    fn stiff_relaxation_is_stable_at_large_steps() {
        // 0.01 ẋ = -(x - 1): semi-implicit stays stable with dt >> mass.
        struct Relax {
            layout: VarLayout,
            mass: Vector,
        }
        impl OdeSystem for Relax {
            fn layout(&self) -> &VarLayout {
                &self.layout
            }
            fn input_dim(&self) -> usize {
                0
            }
            fn mass_diag(&self) -> &Vector {
                &self.mass
            }
            fn linear_triplets(&self) -> Vec<(usize, usize, f64)> {
                vec![(0, 0, -1.0)]
            }
            fn add_linear_terms(&self, x: &Vector, out: &mut Vector) {
                out[0] -= x[0];
            }
            fn add_explicit_terms(&self, _x: &Vector, _u: &Vector, out: &mut Vector) -> Result<()> {
                out[0] += 1.0;
                Ok(())
            }
        }
        let sys = Relax { layout: VarLayout::flat("x", 1), mass: Vector::from_vec(vec![0.01]) };
        let x0 = Vector::from_vec(vec![0.0]);
        for scheme in [Scheme::SemiImplicitEuler, Scheme::Sbdf2] {
            let opts = IntegrateOptions::span(0.1, 5.0).unwrap().with_scheme(scheme);
            let traj = integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts).unwrap();
            assert_relative_eq!(traj.last_state()[0], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn newton_divergence_is_reported() {
        // Implicit Euler on ẋ = x² with dt = 10: the step equation
        // y - 1 = 10 y² has no real solution.
        let sys = Scalar::new(1.0, 0.0, 1.0);
        let x0 = Vector::from_vec(vec![1.0]);
        let mut opts = IntegrateOptions::span(10.0, 10.0).unwrap();
        opts.scheme = Scheme::ImplicitEuler;
        match integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts) {
            Err(Error::NewtonDiverged { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected Newton divergence, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn blow_up_is_reported_as_non_finite() {
        let sys = Scalar::new(1.0, 0.0, 1.0);
        let x0 = Vector::from_vec(vec![10.0]);
        let opts = IntegrateOptions::span(1.0, 50.0).unwrap().with_scheme(Scheme::Rk4);
        match integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts) {
            Err(Error::NonFiniteState { .. }) => {}
            other => panic!("expected non-finite state, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn zero_mass_is_rejected() {
        let sys = Scalar::new(0.0, -1.0, 0.0);
        let x0 = Vector::from_vec(vec![1.0]);
        let opts = IntegrateOptions::span(0.1, 1.0).unwrap();
        assert!(matches!(
            integrate_ode(&sys, &InputSignal::Zero(0), &x0, &opts),
            Err(Error::Domain(_))
        ));
    }
}
