//! Benchmark models in original and lifted polynomial forms.
//!
//! Two reaction-diffusion benchmarks are provided, each discretized by
//! finite differences on a uniform grid whose nodes include both
//! boundaries:
//!
//! * FitzHugh-Nagumo ([`fhn`]): a cubic neuron model with a flux stimulus
//!   at the left boundary. Lifting with `z = v²` yields an equivalent
//!   quadratic-bilinear ODE.
//! * Non-adiabatic tubular reactor ([`tubular`]): species/temperature
//!   transport with an Arrhenius source. Lifting with
//!   `w₁ = exp(γ - γ/θ), w₂ = θ⁻², w₃ = θ⁻¹` yields an equivalent quartic
//!   ODE; three further products `w₄ = ψ⊙w₁, w₅ = w₂⊙w₃, w₆ = w₁⊙w₂`
//!   yield a quadratic-bilinear DAE of index 1.
//!
//! Every lifting is exact: the lifted systems reproduce the original
//! variables up to integration tolerance, with auxiliary initial values
//! supplied by [`consistent_lift_ic`]. A tiny scalar model ([`scalar`])
//! exercises the same machinery in closed form.

pub mod fhn;
pub mod scalar;
pub mod tubular;

use std::path::Path;

use crate::error::{Error, Result};
use crate::Vector;

pub use fhn::{
    build_fhn_fom, build_fhn_lifted_qb, build_fhn_lifted_qb_with_mass, fhn_initial_state,
    fhn_input, FhnConfig, FhnMassConvention,
};
pub use tubular::{
    build_tubular_fom, build_tubular_qbdae, build_tubular_quartic, tubular_initial_state,
    tubular_input, Convection,
    TubularConfig,
};

// ---------------------------------------------------------------------------
// Consistent lifting of initial conditions

/// Which lifted form an original state should be completed for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LiftKind {
    /// `[v, w] -> [v, w, z]` with `z = v ⊙ v`.
    FhnQb,
    /// `[ψ, θ] -> [ψ, θ, w₁, w₂, w₃]` with
    /// `w₁ = exp(γ - γ/θ), w₂ = θ⁻², w₃ = θ⁻¹`.
    TubularQuartic { gamma: f64 },
    /// The quartic blocks plus `[w₄, w₅, w₆] = [ψ⊙w₁, w₂⊙w₃, w₁⊙w₂]`.
    TubularQbdae { gamma: f64 },
}

/// Completes an original state `[v, w]` or `[ψ, θ]` (two blocks of equal
/// length) with auxiliary blocks computed exactly from their definitions.
///
/// Tubular kinds require `θ > 0` at every node; a nonpositive temperature
/// makes the lifting undefined and is reported as a domain error.
pub fn consistent_lift_ic(kind: LiftKind, original: &Vector) -> Result<Vector> {
    if original.len() % 2 != 0 {
        return Err(Error::dim(
            "consistent lift: original state must hold two equal blocks",
            original.len() + 1,
            original.len(),
        ));
    }
    let n = original.len() / 2;
    match kind {
        LiftKind::FhnQb => {
            let mut out = Vector::zeros(3 * n);
            out.rows_mut(0, 2 * n).copy_from(original);
            for i in 0..n {
                out[2 * n + i] = original[i] * original[i];
            }
            Ok(out)
        }
        LiftKind::TubularQuartic { gamma } | LiftKind::TubularQbdae { gamma } => {
            let full = matches!(kind, LiftKind::TubularQbdae { .. });
            let dim = if full { 8 * n } else { 5 * n };
            let mut out = Vector::zeros(dim);
            out.rows_mut(0, 2 * n).copy_from(original);
            for i in 0..n {
                let psi = original[i];
                let theta = original[n + i];
                if theta <= 0.0 {
                    return Err(Error::Domain(format!(
                        "consistent lift: theta[{i}] = {theta} is not positive"
                    )));
                }
                let w1 = (gamma - gamma / theta).exp();
                let w3 = 1.0 / theta;
                let w2 = w3 * w3;
                out[2 * n + i] = w1;
                out[3 * n + i] = w2;
                out[4 * n + i] = w3;
                if full {
                    out[5 * n + i] = psi * w1;
                    out[6 * n + i] = w2 * w3;
                    out[7 * n + i] = w1 * w2;
                }
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Initial-condition profiles

/// Reads a spatial profile from a CSV file with two columns `s,value`.
///
/// A single leading header line is tolerated; blank lines and lines
/// starting with `#` are skipped. Sample points must be strictly
/// increasing in `s`.
pub fn load_profile_csv<P: AsRef<Path>>(path: P) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
            return Err(Error::InvalidConfig(format!(
                "profile {}: line {} needs two comma-separated columns",
                path.as_ref().display(),
                lineno + 1
            )));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(s), Ok(v)) => points.push((s, v)),
            _ if points.is_empty() => continue, // header line
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "profile {}: line {} is not numeric",
                    path.as_ref().display(),
                    lineno + 1
                )));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "profile {}: no sample points",
            path.as_ref().display()
        )));
    }
    if points.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidConfig(
            "profile: s column must be strictly increasing".into(),
        ));
    }
    Ok(points)
}

/// Samples a piecewise-linear profile onto the `n`-node uniform grid over
/// `[0, length]`; queries outside the tabulated range clamp to the nearest
/// end value.
pub fn sample_profile(points: &[(f64, f64)], n: usize, length: f64) -> Result<Vector> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("profile: no sample points".into()));
    }
    if n < 2 || length <= 0.0 {
        return Err(Error::InvalidConfig(
            "profile: need n >= 2 grid nodes and a positive length".into(),
        ));
    }
    let ds = length / (n - 1) as f64;
    let mut out = Vector::zeros(n);
    for i in 0..n {
        let s = i as f64 * ds;
        out[i] = if s <= points[0].0 {
            points[0].1
        } else if s >= points[points.len() - 1].0 {
            points[points.len() - 1].1
        } else {
            let k = points.partition_point(|p| p.0 < s);
            let (s0, v0) = points[k - 1];
            let (s1, v1) = points[k];
            v0 + (v1 - v0) * (s - s0) / (s1 - s0)
        };
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Shared grid stencils

/// Second-difference triplets of `d²/ds²` on an `n`-node grid with flux
/// (Neumann-type) conditions eliminated through ghost nodes at both ends.
/// Only the homogeneous part is produced; inhomogeneous flux data enters
/// the boundary rows separately as `∓(2/Δs)·flux`.
pub(crate) fn flux_laplacian_triplets(n: usize, ds: f64) -> Vec<(usize, usize, f64)> {
    let s = 1.0 / (ds * ds);
    let mut t = Vec::with_capacity(3 * n);
    t.push((0, 0, -2.0 * s));
    t.push((0, 1, 2.0 * s));
    for i in 1..n - 1 {
        t.push((i, i - 1, s));
        t.push((i, i, -2.0 * s));
        t.push((i, i + 1, s));
    }
    t.push((n - 1, n - 2, 2.0 * s));
    t.push((n - 1, n - 1, -2.0 * s));
    t
}
