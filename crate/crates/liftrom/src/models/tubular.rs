//! Non-adiabatic tubular reactor with a single Arrhenius reaction, and its
//! quartic-ODE and quadratic-bilinear DAE liftings.
//!
//! Governing equations on `s ∈ (0, 1)` for species `ψ` and temperature `θ`:
//!
//! ```text
//! ψ̇ = (1/Pe) ψ_ss - ψ_s - D ψ ⊙ exp(γ - γ/θ)
//! θ̇ = (1/Pe) θ_ss - θ_s - β (θ - θ_ref) + B D ψ ⊙ exp(γ - γ/θ)
//! ```
//!
//! Robin conditions at the inlet, `ψ_s(0) = Pe (ψ(0) - μ)` and
//! `θ_s(0) = Pe (θ(0) - 1)`, and Neumann conditions `ψ_s(1) = θ_s(1) = 0`
//! at the outlet. Ghost-node elimination folds the boundary data into the
//! constant input vectors `b_ψ, b_θ` driven by `u(t) ≡ 1`; the convection
//! term at the boundary rows is imposed exactly from the boundary
//! relations, and in the interior by first-order upwinding (second-order
//! central optional).
//!
//! Lifting with `w₁ = exp(γ - γ/θ), w₂ = θ⁻², w₃ = θ⁻¹` gives the exact
//! quartic system (writing `θ̇` for the right-hand side above):
//!
//! ```text
//! ẇ₁ = γ w₁ ⊙ w₂ ⊙ θ̇      ẇ₂ = -2 w₂ ⊙ w₃ ⊙ θ̇      ẇ₃ = -w₂ ⊙ θ̇
//! ```
//!
//! whose highest-order (quartic) interactions live only in the `w₁` and
//! `w₂` rows. Introducing `w₄ = ψ ⊙ w₁, w₅ = w₂ ⊙ w₃, w₆ = w₁ ⊙ w₂` as
//! algebraic variables reduces everything to quadratic-bilinear form with
//! three algebraic constraints (an index-1 DAE).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    GeneralNonlinearSystem, InputSignal, PointwiseNonlinearity, QbDae, QuarticOde, RowDerivFn,
    RowEvalFn, VarLayout,
};
use crate::error::{Error, Result};
use crate::tensor::MatricizedTensor;
use crate::{Mat, Vector};

fn default_pe() -> f64 {
    5.0
}
fn default_damkohler() -> f64 {
    0.167
}
fn default_b_const() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    2.5
}
fn default_gamma() -> f64 {
    25.0
}
fn default_theta_ref() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    1.0
}
fn default_n() -> usize {
    100
}
fn default_t_f() -> f64 {
    30.0
}

/// Tubular-reactor constants and discretization size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubularConfig {
    /// Péclet number (inverse diffusivity).
    #[serde(default = "default_pe")]
    pub pe: f64,
    /// Damköhler number (reaction strength); the bifurcation parameter.
    #[serde(default = "default_damkohler")]
    pub damkohler: f64,
    /// Heat-release constant multiplying the reaction term in the
    /// temperature equation.
    #[serde(default = "default_b_const")]
    pub b_const: f64,
    /// Heat-loss coefficient.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Activation energy in the Arrhenius factor `exp(γ - γ/θ)`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Ambient temperature for the heat-loss term.
    #[serde(default = "default_theta_ref")]
    pub theta_ref: f64,
    /// Feed concentration at the inlet.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Grid nodes per variable.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Simulation horizon.
    #[serde(default = "default_t_f")]
    pub t_f: f64,
    /// Interior convection stencil.
    #[serde(default)]
    pub convection: Convection,
}

impl Default for TubularConfig {
    fn default() -> Self {
        TubularConfig {
            pe: default_pe(),
            damkohler: default_damkohler(),
            b_const: default_b_const(),
            beta: default_beta(),
            gamma: default_gamma(),
            theta_ref: default_theta_ref(),
            mu: default_mu(),
            n: default_n(),
            t_f: default_t_f(),
            convection: Convection::default(),
        }
    }
}

impl TubularConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidConfig(format!("tubular: n = {} must be >= 3", self.n)));
        }
        if !(self.pe > 0.0 && self.pe.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tubular: pe = {} must be positive",
                self.pe
            )));
        }
        if !(self.t_f > 0.0 && self.t_f.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tubular: t_f = {} must be positive",
                self.t_f
            )));
        }
        if !(self.damkohler >= 0.0 && self.damkohler.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tubular: damkohler = {} must be nonnegative",
                self.damkohler
            )));
        }
        for (name, v) in [
            ("b_const", self.b_const),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("theta_ref", self.theta_ref),
            ("mu", self.mu),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("tubular: {name} = {v} must be finite")));
            }
        }
        Ok(())
    }

    fn ds(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }
}

/// Interior convection stencil.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convection {
    /// Second-order central differences (the standard choice here).
    #[default]
    Central,
    /// First-order upwind (extra robustness for convection-dominated
    /// transport, at the cost of numerical diffusion).
    Upwind,
}

/// Constant input `u(t) ≡ 1` carrying the boundary and ambient data.
pub fn tubular_input() -> InputSignal {
    InputSignal::Constant(Vector::from_element(1, 1.0))
}

/// Feed-equilibrated initial state `ψ ≡ 1, θ ≡ 1`.
pub fn tubular_initial_state(cfg: &TubularConfig) -> Vector {
    Vector::from_element(2 * cfg.n, 1.0)
}

/// The two spatial-transport blocks and their boundary-data vectors:
/// `A_ψ, A_θ` (as triplets) and `b_ψ, b_θ` with `u ≡ 1`.
struct TransportBlocks {
    a_psi: Vec<(usize, usize, f64)>,
    a_theta: Vec<(usize, usize, f64)>,
    b_psi: Vector,
    b_theta: Vector,
}

fn transport_blocks(cfg: &TubularConfig) -> TransportBlocks {
    let n = cfg.n;
    let conv = cfg.convection;
    let ds = cfg.ds();
    let pe = cfg.pe;
    let diff = 1.0 / (pe * ds * ds);

    // One block pattern, parameterized by the inlet feed value: Robin
    // `·_s(0) = Pe(·(0) - feed)`, Neumann `·_s(1) = 0`.
    let block = |feed: f64| -> (Vec<(usize, usize, f64)>, Vector) {
        let mut a = Vec::with_capacity(4 * n);
        let mut b = Vector::zeros(n);
        // Inlet row: ghost elimination in the diffusion term and the exact
        // Robin relation in place of the convection stencil.
        a.push((0, 0, -2.0 * diff - 2.0 / ds - pe));
        a.push((0, 1, 2.0 * diff));
        b[0] = 2.0 * feed / ds + pe * feed;
        for i in 1..n - 1 {
            a.push((i, i - 1, diff));
            a.push((i, i, -2.0 * diff));
            a.push((i, i + 1, diff));
            match conv {
                Convection::Upwind => {
                    a.push((i, i - 1, 1.0 / ds));
                    a.push((i, i, -1.0 / ds));
                }
                Convection::Central => {
                    a.push((i, i - 1, 0.5 / ds));
                    a.push((i, i + 1, -0.5 / ds));
                }
            }
        }
        // Outlet row: Neumann ghost in the diffusion; the convection term
        // vanishes exactly.
        a.push((n - 1, n - 2, 2.0 * diff));
        a.push((n - 1, n - 1, -2.0 * diff));
        (a, b)
    };

    let (a_psi, b_psi) = block(cfg.mu);
    let (mut a_theta, mut b_theta) = block(1.0);
    // Heat loss -β(θ - θ_ref).
    for i in 0..n {
        a_theta.push((i, i, -cfg.beta));
        b_theta[i] += cfg.beta * cfg.theta_ref;
    }
    TransportBlocks { a_psi, a_theta, b_psi, b_theta }
}

/// Arrhenius factor `exp(γ - γ/θ)`, rejecting nonpositive temperatures.
fn arrhenius(gamma: f64, theta: f64) -> Result<f64> {
    if theta <= 0.0 {
        return Err(Error::Domain(format!(
            "tubular: temperature {theta} is not positive; Arrhenius factor undefined"
        )));
    }
    Ok((gamma - gamma / theta).exp())
}

/// Original reactor semidiscretization: `2n` states `[ψ; θ]` with the
/// Arrhenius reaction kept as a pointwise nonlinearity.
pub fn build_tubular_fom(cfg: &TubularConfig) -> Result<GeneralNonlinearSystem> {
    cfg.validate()?;
    let n = cfg.n;
    let blocks = transport_blocks(cfg);

    let layout = VarLayout::new(&[("psi", n), ("theta", n)]);
    let mut a = MatricizedTensor::new(2 * n, vec![2 * n]);
    for &(i, j, v) in &blocks.a_psi {
        a.push(i, &[j], v);
    }
    for &(i, j, v) in &blocks.a_theta {
        a.push(n + i, &[n + j], v);
    }
    a.assemble();

    let mut b = Mat::zeros(2 * n, 1);
    for i in 0..n {
        b[(i, 0)] = blocks.b_psi[i];
        b[(n + i, 0)] = blocks.b_theta[i];
    }

    // Reaction rows: -D ψ exp(γ - γ/θ) in ψ, +B D ψ exp(γ - γ/θ) in θ.
    let d = cfg.damkohler;
    let bd = cfg.b_const * cfg.damkohler;
    let gamma = cfg.gamma;
    let deps: Vec<Vec<usize>> = (0..2 * n).map(|r| vec![r % n, n + r % n]).collect();
    let eval: RowEvalFn = Arc::new(move |row, vals| {
        let (psi, theta) = (vals[0], vals[1]);
        let arr = arrhenius(gamma, theta)?;
        Ok(if row < n { -d * psi * arr } else { bd * psi * arr })
    });
    let deriv: RowDerivFn = Arc::new(move |row, vals, out| {
        let (psi, theta) = (vals[0], vals[1]);
        let arr = arrhenius(gamma, theta)?;
        let coeff = if row < n { -d } else { bd };
        out[0] = coeff * arr;
        out[1] = coeff * psi * arr * gamma / (theta * theta);
        Ok(())
    });

    let sys = GeneralNonlinearSystem {
        layout,
        mass: Vector::from_element(2 * n, 1.0),
        a,
        b,
        nonlin: Some(PointwiseNonlinearity { deps, eval, deriv: Some(deriv) }),
    };
    sys.validate()?;
    Ok(sys)
}

/// Quartic lifting over `[ψ; θ; w₁; w₂; w₃]` (dimension `5n`).
pub fn build_tubular_quartic(cfg: &TubularConfig) -> Result<QuarticOde> {
    cfg.validate()?;
    let n = cfg.n;
    let dim = 5 * n;
    let blocks = transport_blocks(cfg);
    let d = cfg.damkohler;
    let bd = cfg.b_const * cfg.damkohler;
    let gamma = cfg.gamma;
    // Block offsets.
    let (ips, ith, iw1, iw2, iw3) = (0, n, 2 * n, 3 * n, 4 * n);

    let layout = VarLayout::new(&[("psi", n), ("theta", n), ("w1", n), ("w2", n), ("w3", n)]);

    let mut a = MatricizedTensor::new(dim, vec![dim]);
    for &(i, j, v) in &blocks.a_psi {
        a.push(ips + i, &[ips + j], v);
    }
    for &(i, j, v) in &blocks.a_theta {
        a.push(ith + i, &[ith + j], v);
    }
    a.assemble();

    let mut b = Mat::zeros(dim, 1);
    for i in 0..n {
        b[(ips + i, 0)] = blocks.b_psi[i];
        b[(ith + i, 0)] = blocks.b_theta[i];
    }

    // Quadratic: the reaction in the ψ/θ rows and the A_θ part of
    // ẇ₃ = -w₂ ⊙ θ̇.
    let mut g2 = MatricizedTensor::new(dim, vec![dim, dim]);
    for i in 0..n {
        g2.push(ips + i, &[ips + i, iw1 + i], -d);
        g2.push(ith + i, &[ips + i, iw1 + i], bd);
    }
    for &(i, j, v) in &blocks.a_theta {
        g2.push(iw3 + i, &[iw2 + i, ith + j], -v);
    }
    g2.assemble();

    // Cubic: A_θ parts of ẇ₁, ẇ₂ and the reaction part of ẇ₃.
    let mut g3 = MatricizedTensor::new(dim, vec![dim, dim, dim]);
    for &(i, j, v) in &blocks.a_theta {
        g3.push(iw1 + i, &[iw1 + i, iw2 + i, ith + j], gamma * v);
        g3.push(iw2 + i, &[iw2 + i, iw3 + i, ith + j], -2.0 * v);
    }
    for i in 0..n {
        g3.push(iw3 + i, &[ips + i, iw1 + i, iw2 + i], -bd);
    }
    g3.assemble();

    // Quartic: reaction parts of ẇ₁ and ẇ₂ only.
    let mut g4 = MatricizedTensor::new(dim, vec![dim, dim, dim, dim]);
    for i in 0..n {
        g4.push(iw1 + i, &[ips + i, iw1 + i, iw1 + i, iw2 + i], gamma * bd);
        g4.push(iw2 + i, &[ips + i, iw1 + i, iw2 + i, iw3 + i], -2.0 * bd);
    }
    g4.assemble();

    // Boundary-data couplings b_θ ⊙ (auxiliary products) on the u ≡ 1
    // channel: linear in ẇ₃, quadratic in ẇ₁ and ẇ₂.
    let mut n1 = MatricizedTensor::new(dim, vec![dim]);
    let mut n2 = MatricizedTensor::new(dim, vec![dim, dim]);
    for i in 0..n {
        let bt = blocks.b_theta[i];
        n1.push(iw3 + i, &[iw2 + i], -bt);
        n2.push(iw1 + i, &[iw1 + i, iw2 + i], gamma * bt);
        n2.push(iw2 + i, &[iw2 + i, iw3 + i], -2.0 * bt);
    }
    n1.assemble();
    n2.assemble();

    let sys = QuarticOde {
        layout,
        mass: Vector::from_element(dim, 1.0),
        a,
        g: vec![g2, g3, g4],
        n_ops: vec![vec![n1, n2]],
        b,
    };
    sys.validate()?;
    Ok(sys)
}

/// Quadratic-bilinear DAE lifting: differential `[ψ; θ; w₁; w₂; w₃]`
/// (`5n`) and algebraic `[w₄; w₅; w₆]` (`3n`).
pub fn build_tubular_qbdae(cfg: &TubularConfig) -> Result<QbDae> {
    cfg.validate()?;
    let n = cfg.n;
    let n1dim = 5 * n;
    let n2dim = 3 * n;
    let full = n1dim + n2dim;
    let blocks = transport_blocks(cfg);
    let d = cfg.damkohler;
    let bd = cfg.b_const * cfg.damkohler;
    let gamma = cfg.gamma;
    // Offsets in the differential block, the algebraic block, and the
    // concatenated full state.
    let (ips, ith, iw1, iw2, iw3) = (0, n, 2 * n, 3 * n, 4 * n);
    let (jw4, jw5, jw6) = (0, n, 2 * n);
    let (fth, fw2) = (n, 3 * n);
    let (fw4, fw5, fw6) = (5 * n, 6 * n, 7 * n);

    let layout1 = VarLayout::new(&[("psi", n), ("theta", n), ("w1", n), ("w2", n), ("w3", n)]);
    let layout2 = VarLayout::new(&[("w4", n), ("w5", n), ("w6", n)]);

    let mut a11 = MatricizedTensor::new(n1dim, vec![n1dim]);
    for &(i, j, v) in &blocks.a_psi {
        a11.push(ips + i, &[ips + j], v);
    }
    for &(i, j, v) in &blocks.a_theta {
        a11.push(ith + i, &[ith + j], v);
    }
    a11.assemble();

    // Reaction through the algebraic product w₄ = ψ ⊙ w₁.
    let mut a12 = MatricizedTensor::new(n1dim, vec![n2dim]);
    for i in 0..n {
        a12.push(ips + i, &[jw4 + i], -d);
        a12.push(ith + i, &[jw4 + i], bd);
    }
    a12.assemble();

    // Quadratic couplings on the full state.
    let mut h1 = MatricizedTensor::new(n1dim, vec![full, full]);
    for &(i, j, v) in &blocks.a_theta {
        h1.push(iw1 + i, &[fw6 + i, fth + j], gamma * v);
        h1.push(iw2 + i, &[fw5 + i, fth + j], -2.0 * v);
        h1.push(iw3 + i, &[fw2 + i, fth + j], -v);
    }
    for i in 0..n {
        h1.push(iw1 + i, &[fw4 + i, fw6 + i], gamma * bd);
        h1.push(iw2 + i, &[fw4 + i, fw5 + i], -2.0 * bd);
        h1.push(iw3 + i, &[fw2 + i, fw4 + i], -bd);
    }
    h1.assemble();

    // b_θ couplings on the u ≡ 1 channel.
    let mut n1 = MatricizedTensor::new(n1dim, vec![full]);
    for i in 0..n {
        let bt = blocks.b_theta[i];
        n1.push(iw1 + i, &[fw6 + i], gamma * bt);
        n1.push(iw2 + i, &[fw5 + i], -2.0 * bt);
        n1.push(iw3 + i, &[fw2 + i], -bt);
    }
    n1.assemble();

    let mut b1 = Mat::zeros(n1dim, 1);
    for i in 0..n {
        b1[(ips + i, 0)] = blocks.b_psi[i];
        b1[(ith + i, 0)] = blocks.b_theta[i];
    }

    // Algebraic solution map: w₄ = ψ⊙w₁, w₅ = w₂⊙w₃, w₆ = w₁⊙w₂.
    let mut h2t = MatricizedTensor::new(n2dim, vec![n1dim, n1dim]);
    for i in 0..n {
        h2t.push(jw4 + i, &[ips + i, iw1 + i], 1.0);
        h2t.push(jw5 + i, &[iw2 + i, iw3 + i], 1.0);
        h2t.push(jw6 + i, &[iw1 + i, iw2 + i], 1.0);
    }
    h2t.assemble();

    let sys = QbDae {
        layout1,
        layout2,
        mass1: Vector::from_element(n1dim, 1.0),
        a11,
        a12,
        h1,
        n1_ops: vec![n1],
        b1,
        h2t,
    };
    sys.validate()?;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        integrate_ode, solve_qbdae, IntegrateOptions, OdeSystem, Scheme,
    };
    use crate::models::{consistent_lift_ic, LiftKind};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn small_cfg(n: usize, damkohler: f64) -> TubularConfig {
        TubularConfig { n, damkohler, ..TubularConfig::default() }
    }

    #[test]
    fn unit_temperature_normalizes_arrhenius() {
        let cfg = small_cfg(11, 0.162);
        let fom = build_tubular_fom(&cfg).unwrap();
        let mut x = Vector::from_element(2 * cfg.n, 1.0);
        for i in 0..cfg.n {
            x[i] = 0.3 + 0.05 * i as f64; // arbitrary species profile
        }
        let mut f = Vector::zeros(2 * cfg.n);
        fom.nonlin.as_ref().unwrap().add_eval_all(&x, &mut f).unwrap();
        for i in 0..cfg.n {
            assert_relative_eq!(f[i], -cfg.damkohler * x[i], max_relative = 1e-14);
            assert_relative_eq!(
                f[cfg.n + i],
                cfg.b_const * cfg.damkohler * x[i],
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn nonpositive_temperature_is_a_domain_error() {
        let cfg = small_cfg(7, 0.162);
        let fom = build_tubular_fom(&cfg).unwrap();
        let mut x = Vector::from_element(2 * cfg.n, 1.0);
        x[cfg.n + 3] = -0.2;
        let err = fom.eval_rhs(&x, &Vector::from_element(1, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn uniform_feed_is_steady_without_reaction() {
        // ψ ≡ μ = 1, θ ≡ θ_ref = 1, D = 0: boundary fluxes, convection and
        // heat loss all vanish, so the state is an exact equilibrium.
        for conv in [Convection::Upwind, Convection::Central] {
            let cfg = TubularConfig { convection: conv, ..small_cfg(13, 0.0) };
            let fom = build_tubular_fom(&cfg).unwrap();
            let x = Vector::from_element(2 * cfg.n, 1.0);
            let rhs = fom.eval_rhs(&x, &Vector::from_element(1, 1.0)).unwrap();
            for r in rhs.iter() {
                assert_abs_diff_eq!(*r, 0.0, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn linear_regime_matches_direct_steady_solve() {
        // D = 0 turns the model linear; by t = 30 the transient has
        // decayed and the trajectory must sit on the solve of A x = -b.
        let cfg = small_cfg(40, 0.0);
        let fom = build_tubular_fom(&cfg).unwrap();
        let opts = IntegrateOptions::span(1e-3, cfg.t_f).unwrap().with_store_every(1000);
        let traj =
            integrate_ode(&fom, &tubular_input(), &tubular_initial_state(&cfg), &opts).unwrap();

        let n2 = 2 * cfg.n;
        let mut dense = Mat::zeros(n2, n2);
        for (i, j, v) in fom.a.iter() {
            dense[(i, j as usize)] += v;
        }
        let b = fom.b.column(0).into_owned();
        let steady = dense.lu().solve(&(-&b)).expect("transport operator is invertible");
        let got = traj.last_state();
        let mut worst = 0.0f64;
        for i in 0..n2 {
            worst = worst.max((got[i] - steady[i]).abs() / steady[i].abs().max(1.0));
        }
        assert!(worst <= 1e-10, "steady-state deviation {worst}");
    }

    #[test]
    fn quartic_unit_lift_matches_fom_rhs() {
        let cfg = small_cfg(9, 0.167);
        let fom = build_tubular_fom(&cfg).unwrap();
        let quartic = build_tubular_quartic(&cfg).unwrap();
        let u = Vector::from_element(1, 1.0);
        let x2 = Vector::from_element(2 * cfg.n, 1.0);
        let x5 = consistent_lift_ic(LiftKind::TubularQuartic { gamma: cfg.gamma }, &x2).unwrap();
        assert!(x5.iter().all(|&v| v == 1.0));

        let rf = fom.eval_rhs(&x2, &u).unwrap();
        let rq = quartic.eval_rhs(&x5, &u).unwrap();
        let n = cfg.n;
        for i in 0..2 * n {
            assert_relative_eq!(rq[i], rf[i], max_relative = 1e-13);
        }
        // At the unit lift the chain rule collapses to multiples of θ̇.
        for i in 0..n {
            let td = rf[n + i];
            assert_relative_eq!(rq[2 * n + i], cfg.gamma * td, max_relative = 1e-12);
            assert_relative_eq!(rq[3 * n + i], -2.0 * td, max_relative = 1e-12);
            assert_relative_eq!(rq[4 * n + i], -td, max_relative = 1e-12);
        }
    }

    #[test]
    fn quartic_interactions_only_in_w1_w2_rows() {
        let cfg = small_cfg(8, 0.167);
        let quartic = build_tubular_quartic(&cfg).unwrap();
        let g4 = quartic.g.iter().find(|g| g.order() == 4).unwrap();
        assert!(g4.nnz() > 0);
        let n = cfg.n;
        for (row, _, _) in g4.iter() {
            assert!(
                (2 * n..4 * n).contains(&row),
                "quartic interaction outside the w1/w2 rows: {row}"
            );
        }
    }

    #[test]
    fn qbdae_reaction_enters_through_w4() {
        let cfg = small_cfg(6, 0.162);
        let dae = build_tubular_qbdae(&cfg).unwrap();
        let n = cfg.n;
        let d = cfg.damkohler;
        let bd = cfg.b_const * cfg.damkohler;
        let mut seen = 0;
        for (row, flat, v) in dae.a12.iter() {
            let col = flat as usize;
            if row < n {
                assert_eq!(col, row);
                assert_relative_eq!(v, -d, max_relative = 1e-15);
            } else {
                assert!(row >= n && row < 2 * n);
                assert_eq!(col, row - n);
                assert_relative_eq!(v, bd, max_relative = 1e-15);
            }
            seen += 1;
        }
        assert_eq!(seen, 2 * n);
    }

    #[test]
    fn qbdae_unit_lift_is_consistent_and_matches_quartic_rhs() {
        let cfg = small_cfg(9, 0.167);
        let dae = build_tubular_qbdae(&cfg).unwrap();
        let x1 = Vector::from_element(5 * cfg.n, 1.0);
        let full = dae.full_state(&x1).unwrap();
        assert!(full.iter().all(|&v| v == 1.0));
        let res = dae.algebraic_residual(&full).unwrap();
        assert_eq!(res.amax(), 0.0);

        let quartic = build_tubular_quartic(&cfg).unwrap();
        let sub = crate::dynamics::SubstitutedQbDae { dae: &dae };
        let u = Vector::from_element(1, 1.0);
        let rd = sub.eval_rhs(&x1, &u).unwrap();
        let rq = quartic.eval_rhs(&x1, &u).unwrap();
        for i in 0..5 * cfg.n {
            assert_relative_eq!(rd[i], rq[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn lifted_forms_track_the_fom_trajectory() {
        let cfg = TubularConfig { n: 30, t_f: 3.0, ..TubularConfig::default() };
        let fom = build_tubular_fom(&cfg).unwrap();
        let quartic = build_tubular_quartic(&cfg).unwrap();
        let dae = build_tubular_qbdae(&cfg).unwrap();
        let input = tubular_input();
        let opts = IntegrateOptions::span(2e-4, cfg.t_f)
            .unwrap()
            .with_scheme(Scheme::Rk4)
            .with_store_every(500);
        let x0 = tubular_initial_state(&cfg);
        let x0q = consistent_lift_ic(LiftKind::TubularQuartic { gamma: cfg.gamma }, &x0).unwrap();

        let tf = integrate_ode(&fom, &input, &x0, &opts).unwrap();
        let tq = integrate_ode(&quartic, &input, &x0q, &opts).unwrap();
        let td = solve_qbdae(&dae, &input, &x0q, &opts).unwrap();

        let mut worst_q = 0.0f64;
        let mut worst_d = 0.0f64;
        for k in 0..tf.len() {
            let a = tf.state_at(k);
            let b = tq.state_at(k);
            let c = td.state_at(k);
            for i in 0..2 * cfg.n {
                worst_q = worst_q.max((a[i] - b[i]).abs());
                worst_d = worst_d.max((a[i] - c[i]).abs());
            }
        }
        assert!(worst_q <= 1e-8, "quartic deviation {worst_q}");
        assert!(worst_d <= 1e-8, "qb-dae deviation {worst_d}");
        // The auxiliary blocks track their definitions.
        let xq = tq.last_state();
        for i in 0..cfg.n {
            let theta = xq[cfg.n + i];
            assert_relative_eq!(xq[4 * cfg.n + i], 1.0 / theta, max_relative = 1e-8);
        }
    }

    #[test]
    fn convection_flag_selects_the_interior_stencil() {
        let cfg = small_cfg(12, 0.162);
        let up =
            build_tubular_fom(&TubularConfig { convection: Convection::Upwind, ..cfg.clone() })
                .unwrap();
        let cen = build_tubular_fom(&cfg).unwrap();
        assert_eq!(cfg.convection, Convection::Central);
        let pick = |sys: &GeneralNonlinearSystem, i: usize, j: usize| -> f64 {
            sys.a.iter().filter(|&(r, f, _)| r == i && f as usize == j).map(|(_, _, v)| v).sum()
        };
        let ds = 1.0 / (cfg.n - 1) as f64;
        let diff = 1.0 / (cfg.pe * ds * ds);
        let i = 5;
        assert_relative_eq!(pick(&up, i, i), -2.0 * diff - 1.0 / ds, max_relative = 1e-13);
        assert_relative_eq!(pick(&cen, i, i), -2.0 * diff, max_relative = 1e-13);
        assert_relative_eq!(pick(&cen, i, i + 1), diff - 0.5 / ds, max_relative = 1e-13);
    }

    #[test]
    fn config_parses_with_exact_keys_and_rejects_unknown() {
        let cfg: TubularConfig =
            toml::from_str("pe = 5.0\ndamkohler = 0.162\nn = 64").unwrap();
        assert_eq!(cfg.damkohler, 0.162);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.b_const, 0.5);
        assert_eq!(cfg.theta_ref, 1.0);
        assert_eq!(cfg.mu, 1.0);
        let bad: std::result::Result<TubularConfig, _> = toml::from_str("peclet = 5.0");
        assert!(bad.is_err(), "unknown keys must be rejected");
        assert!(small_cfg(2, 0.1).validate().is_err());
        assert!(TubularConfig { pe: -1.0, ..TubularConfig::default() }.validate().is_err());
    }
}
