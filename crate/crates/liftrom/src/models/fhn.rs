//! FitzHugh-Nagumo neuron model and its quadratic-bilinear lifting.
//!
//! Governing equations on `s ∈ [0, L]`:
//!
//! ```text
//! ε v̇ = ε² v_ss - v³ + 0.1 v² - 0.1 v - w + c
//!   ẇ = h v - γ w + c
//! ```
//!
//! with flux boundary conditions `v_s(0,t) = u(t)`, `v_s(L,t) = 0`, the
//! stimulus `u(t) = 5·10⁴ t³ e^(-15t)`, and rest initial data `v = w = 0`.
//! Second-order central differences with ghost-node elimination put the
//! flux data into the input matrix; the input vector is `[u(t), 1]` with
//! the constant channel carrying the affine source `c`.
//!
//! Lifting with `z = v²` closes the cubic term quadratically:
//!
//! ```text
//! ε v̇ = ε² v_ss - z v + 0.1 z - 0.1 v - w + c
//!   ẇ = h v - γ w + c
//! ε ż = 2 [ε² v v_ss - z² + 0.1 z v - 0.1 z - w v + c v]
//! ```
//!
//! The `z` equation keeps the diffusion term in the product form
//! `v ⊙ (v_ss)`, so the stimulus enters bilinearly: the chain rule gives
//! `z_s(0,t) = 2 v(0,t) u(t)`, which becomes an `N₁` entry coupling the
//! first `z` row to `v(0)` — twice the flux coefficient of the `v` block.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::flux_laplacian_triplets;
use crate::dynamics::{
    GeneralNonlinearSystem, InputSignal, PointwiseNonlinearity, QbOde, RowDerivFn, RowEvalFn,
    VarLayout,
};
use crate::error::{Error, Result};
use crate::tensor::MatricizedTensor;
use crate::{Mat, Vector};

fn default_l() -> f64 {
    1.0
}
fn default_c() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    2.0
}
fn default_h() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    0.015
}
fn default_n() -> usize {
    512
}
fn default_t_f() -> f64 {
    12.0
}

/// FitzHugh-Nagumo model constants and discretization size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FhnConfig {
    /// Domain length.
    #[serde(default = "default_l")]
    pub l: f64,
    /// Constant source in both equations.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Recovery decay rate.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Recovery coupling.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Timescale separation; also sets the diffusion coefficient `ε²`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Grid nodes per variable.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Simulation horizon.
    #[serde(default = "default_t_f")]
    pub t_f: f64,
}

impl Default for FhnConfig {
    fn default() -> Self {
        FhnConfig {
            l: default_l(),
            c: default_c(),
            gamma: default_gamma(),
            h: default_h(),
            epsilon: default_epsilon(),
            n: default_n(),
            t_f: default_t_f(),
        }
    }
}

impl FhnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidConfig(format!("fhn: n = {} must be >= 3", self.n)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fhn: epsilon = {} must be positive",
                self.epsilon
            )));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidConfig(format!("fhn: l = {} must be positive", self.l)));
        }
        if !(self.t_f > 0.0 && self.t_f.is_finite()) {
            return Err(Error::InvalidConfig(format!("fhn: t_f = {} must be positive", self.t_f)));
        }
        for (name, v) in [("c", self.c), ("gamma", self.gamma), ("h", self.h)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("fhn: {name} = {v} must be finite")));
            }
        }
        Ok(())
    }

    fn ds(&self) -> f64 {
        self.l / (self.n - 1) as f64
    }
}

/// Mass-matrix convention for the lifted system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FhnMassConvention {
    /// `E = diag(ε Iₙ, Iₙ, ε Iₙ)`: each block keeps the timescale of its
    /// governing equation (`ẇ` carries no `ε`).
    #[default]
    PerEquation,
    /// `E = ε I₃ₙ`: a uniform-ε variant kept for compatibility with
    /// formulations that scale all three equations alike. Note this
    /// changes the `w` dynamics; it is not equivalent to the default.
    UniformEpsilon,
}

/// Stimulus-plus-constant input `[u(t), 1]` used by both FHN forms.
pub fn fhn_input() -> InputSignal {
    InputSignal::CubicExpPulse
}

/// Rest initial state `v = w = 0`.
pub fn fhn_initial_state(cfg: &FhnConfig) -> Vector {
    Vector::zeros(2 * cfg.n)
}

/// Original FitzHugh-Nagumo semidiscretization: `2n` states `[v; w]` with
/// the cubic source kept as a pointwise nonlinearity.
pub fn build_fhn_fom(cfg: &FhnConfig) -> Result<GeneralNonlinearSystem> {
    cfg.validate()?;
    let n = cfg.n;
    let (eps, c, gamma, h) = (cfg.epsilon, cfg.c, cfg.gamma, cfg.h);
    let eps2 = eps * eps;
    let ds = cfg.ds();

    let layout = VarLayout::new(&[("v", n), ("w", n)]);
    let mut mass = Vector::from_element(2 * n, 1.0);
    mass.rows_mut(0, n).fill(eps);

    let mut a = MatricizedTensor::new(2 * n, vec![2 * n]);
    for (i, j, val) in flux_laplacian_triplets(n, ds) {
        a.push(i, &[j], eps2 * val);
    }
    for i in 0..n {
        a.push(i, &[i], -0.1); // linear part of the cubic source
        a.push(i, &[n + i], -1.0); // -w
        a.push(n + i, &[i], h);
        a.push(n + i, &[n + i], -gamma);
    }
    a.assemble();

    let mut b = Mat::zeros(2 * n, 2);
    b[(0, 0)] = -2.0 * eps2 / ds; // ghost-eliminated stimulus flux
    for i in 0..2 * n {
        b[(i, 1)] = c;
    }

    // f(v) = -v³ + 0.1 v² on the voltage rows; recovery rows are linear.
    let deps: Vec<Vec<usize>> =
        (0..2 * n).map(|r| if r < n { vec![r] } else { Vec::new() }).collect();
    let eval: RowEvalFn = Arc::new(|_, vals| match vals.first() {
        Some(&v) => Ok(v * v * (0.1 - v)),
        None => Ok(0.0),
    });
    let deriv: RowDerivFn = Arc::new(|_, vals, out| {
        if let Some(&v) = vals.first() {
            out[0] = v * (0.2 - 3.0 * v);
        }
        Ok(())
    });

    let sys = GeneralNonlinearSystem {
        layout,
        mass,
        a,
        b,
        nonlin: Some(PointwiseNonlinearity { deps, eval, deriv: Some(deriv) }),
    };
    sys.validate()?;
    Ok(sys)
}

/// Lifted quadratic-bilinear form over `[v; w; z]` with the default mass
/// convention `E = diag(ε Iₙ, Iₙ, ε Iₙ)`.
pub fn build_fhn_lifted_qb(cfg: &FhnConfig) -> Result<QbOde> {
    build_fhn_lifted_qb_with_mass(cfg, FhnMassConvention::PerEquation)
}

/// Lifted quadratic-bilinear form with an explicit mass convention.
pub fn build_fhn_lifted_qb_with_mass(
    cfg: &FhnConfig,
    convention: FhnMassConvention,
) -> Result<QbOde> {
    cfg.validate()?;
    let n = cfg.n;
    let (eps, c, gamma, h) = (cfg.epsilon, cfg.c, cfg.gamma, cfg.h);
    let eps2 = eps * eps;
    let ds = cfg.ds();
    let dim = 3 * n;
    let (iv, iw, iz) = (0, n, 2 * n);

    let layout = VarLayout::new(&[("v", n), ("w", n), ("z", n)]);
    let mass = match convention {
        FhnMassConvention::PerEquation => {
            let mut m = Vector::from_element(dim, eps);
            m.rows_mut(iw, n).fill(1.0);
            m
        }
        FhnMassConvention::UniformEpsilon => Vector::from_element(dim, eps),
    };

    let lap = flux_laplacian_triplets(n, ds);

    let mut a = MatricizedTensor::new(dim, vec![dim]);
    for &(i, j, val) in &lap {
        a.push(iv + i, &[iv + j], eps2 * val);
    }
    for i in 0..n {
        a.push(iv + i, &[iv + i], -0.1);
        a.push(iv + i, &[iw + i], -1.0);
        a.push(iv + i, &[iz + i], 0.1); // 0.1 v² written through z
        a.push(iw + i, &[iv + i], h);
        a.push(iw + i, &[iw + i], -gamma);
        a.push(iz + i, &[iz + i], -0.2);
    }
    a.assemble();

    let mut hq = MatricizedTensor::new(dim, vec![dim, dim]);
    for i in 0..n {
        hq.push(iv + i, &[iv + i, iz + i], -1.0); // -z v
        hq.push(iz + i, &[iz + i, iz + i], -2.0); // -2 z²
        hq.push(iz + i, &[iz + i, iv + i], 0.2); // +0.2 z v
        hq.push(iz + i, &[iw + i, iv + i], -2.0); // -2 w v
    }
    // 2 ε² v ⊙ v_ss with the homogeneous part of the flux stencil.
    for &(i, j, val) in &lap {
        hq.push(iz + i, &[iv + i, iv + j], 2.0 * eps2 * val);
    }
    hq.assemble();

    // Stimulus channel: flux in the v block, bilinear closure in z.
    let mut n1 = MatricizedTensor::new(dim, vec![dim]);
    n1.push(iz, &[iv], -4.0 * eps2 / ds);
    n1.assemble();
    // Constant channel: the 2 c v term of the z equation.
    let mut n2 = MatricizedTensor::new(dim, vec![dim]);
    for i in 0..n {
        n2.push(iz + i, &[iv + i], 2.0 * c);
    }
    n2.assemble();

    let mut b = Mat::zeros(dim, 2);
    b[(iv, 0)] = -2.0 * eps2 / ds;
    for i in 0..n {
        b[(iv + i, 1)] = c;
        b[(iw + i, 1)] = c;
    }

    let sys = QbOde { layout, mass, a, h: hq, n_ops: vec![n1, n2], b };
    sys.validate()?;
    Ok(sys)
}
