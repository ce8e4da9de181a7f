//! Self-verification: fast end-to-end consistency checks over the numerical
//! kernels, each validated against an independent oracle (dense linear
//! algebra, exact algebraic identities, or byte comparison). Intended for
//! the `verify` command; every check reports one pass/fail line.

use std::fmt::Write as FmtWrite;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{ErrorRecord, ErrorReport, R2Spec};
use crate::dynamics::{solve_qbdae, IntegrateOptions, VarLayout};
use crate::models::{
    build_fhn_fom, build_tubular_qbdae, consistent_lift_ic, fhn_initial_state, fhn_input,
    tubular_initial_state, tubular_input, FhnConfig, LiftKind, TubularConfig,
};
use crate::reduction::{
    collect_snapshots, compute_pod_basis, deim_build, nonlinear_snapshots, PodBasis,
};
use crate::tensor::{kron_vec, MatricizedTensor};
use crate::dynamics::integrate_ode;
use crate::{Mat, Result, Vector};

/// One verification check: a stable name, the verdict, and a short
/// human-readable measurement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The full verification outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{verdict} {} — {}", c.name, c.detail);
        }
        let _ = writeln!(
            out,
            "{}/{} checks passed",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        );
        out
    }
}

fn check(name: &str, passed: bool, detail: String) -> VerifyCheck {
    VerifyCheck { name: name.into(), passed, detail }
}

/// Random matrix with entries in `[-1, 1)`.
fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Orthonormal block basis over `layout` from seeded random matrices.
fn random_basis(rng: &mut ChaCha8Rng, layout: &VarLayout, r: usize) -> Result<PodBasis> {
    let blocks: Vec<Mat> = (0..layout.var_count())
        .map(|v| {
            let qr = random_mat(rng, layout.size(v), r).qr();
            qr.q()
        })
        .collect();
    PodBasis::from_blocks(layout, blocks)
}

/// POD bases of real simulation snapshots are orthonormal per block.
fn check_pod_orthonormality() -> Result<VerifyCheck> {
    let cfg = TubularConfig { n: 24, t_f: 2.0, damkohler: 0.08, ..TubularConfig::default() };
    let dae = build_tubular_qbdae(&cfg)?;
    let ic = consistent_lift_ic(
        LiftKind::TubularQuartic { gamma: cfg.gamma },
        &tubular_initial_state(&cfg),
    )?;
    let opts = IntegrateOptions::span(1e-3, cfg.t_f)?.with_store_every(20);
    let traj = solve_qbdae(&dae, &tubular_input(), &ic, &opts)?;
    let snaps = collect_snapshots(&traj, &dae.layout1, (1e-3, cfg.t_f + 1e-3))?;
    let basis = compute_pod_basis(&snaps, &[4; 5])?;
    let defect = basis.orthonormality_defect();
    Ok(check(
        "pod-orthonormality",
        defect <= 1e-12,
        format!("max |VᵀV − I| = {defect:.2e} (tolerance 1e-12)"),
    ))
}

/// Every record of a DAE solve satisfies the algebraic constraints.
fn check_dae_constraints() -> Result<VerifyCheck> {
    let cfg = TubularConfig { n: 16, t_f: 1.5, ..TubularConfig::default() };
    let dae = build_tubular_qbdae(&cfg)?;
    let ic = consistent_lift_ic(
        LiftKind::TubularQuartic { gamma: cfg.gamma },
        &tubular_initial_state(&cfg),
    )?;
    let opts = IntegrateOptions::span(1e-3, cfg.t_f)?.with_store_every(25);
    let traj = solve_qbdae(&dae, &tubular_input(), &ic, &opts)?;
    let mut worst = 0.0f64;
    for k in 0..traj.len() {
        let res = dae.algebraic_residual(&traj.state_at(k))?;
        worst = worst.max(res.amax());
    }
    Ok(check(
        "dae-constraint-residual",
        worst <= 1e-10,
        format!("max |g(x₁,x₂)| over {} records = {worst:.2e} (tolerance 1e-10)", traj.len()),
    ))
}

/// DEIM reproduces exactly the vectors that lie in its interpolation space.
fn check_deim_exactness() -> Result<VerifyCheck> {
    let cfg = FhnConfig { n: 48, t_f: 4.0, ..FhnConfig::default() };
    let fom = build_fhn_fom(&cfg)?;
    let opts = IntegrateOptions::span(1e-3, cfg.t_f)?.with_store_every(40);
    let traj = integrate_ode(&fom, &fhn_input(), &fhn_initial_state(&cfg), &opts)?;
    let snaps = collect_snapshots(&traj, &fom.layout, (1e-3, cfg.t_f + 1e-3))?;
    let nl = nonlinear_snapshots(&fom, &snaps)?;
    let op = deim_build(&nl, 12)?;
    let mut worst = 0.0f64;
    for j in 0..op.r_deim() {
        let col: Vector = op.basis().column(j).into_owned();
        let rebuilt = op.approximate(&col)?;
        worst = worst.max((rebuilt - col).amax());
    }
    Ok(check(
        "deim-interpolation-exactness",
        worst <= 1e-11,
        format!("max defect over basis directions = {worst:.2e} (tolerance 1e-11)"),
    ))
}

/// Sparse matricized tensor contraction agrees with the dense Kronecker
/// oracle `G · (x ⊗ y ⊗ …)`.
fn check_kron_oracle(rng: &mut ChaCha8Rng) -> Result<VerifyCheck> {
    let mut worst = 0.0f64;
    for in_dims in [vec![5usize, 4], vec![4, 3, 2], vec![3, 2, 2, 2]] {
        let out_dim = 6;
        let mut g = MatricizedTensor::new(out_dim, in_dims.clone());
        for _ in 0..40 {
            let row = rng.gen_range(0..out_dim);
            let subs: Vec<usize> =
                in_dims.iter().map(|&d| rng.gen_range(0..d)).collect();
            g.push(row, &subs, rng.gen_range(-1.0..1.0));
        }
        g.assemble();
        let factors: Vec<Vector> = in_dims.iter().map(|&d| random_vec(rng, d)).collect();
        let refs: Vec<&Vector> = factors.iter().collect();
        let got = g.apply(&refs)?;

        // Dense oracle: materialize the matricization and one big Kronecker
        // vector, then multiply.
        let flat: usize = in_dims.iter().product();
        let mut dense = Mat::zeros(out_dim, flat);
        for (row, code, v) in g.iter() {
            dense[(row, code as usize)] += v;
        }
        let mut kron = factors[0].clone();
        for f in &factors[1..] {
            kron = kron_vec(&kron, f);
        }
        let oracle = &dense * &kron;
        worst = worst.max((got - oracle).amax());
    }
    Ok(check(
        "tensor-kron-oracle",
        worst <= 1e-12,
        format!("max |sparse − dense| over orders 2..4 = {worst:.2e} (tolerance 1e-12)"),
    ))
}

/// Projection after lifting is the identity on reduced coordinates, and
/// projection of a full vector is idempotent through one lift/project
/// round trip.
fn check_projection_identities(rng: &mut ChaCha8Rng) -> Result<VerifyCheck> {
    let layout = VarLayout::new(&[("a", 17), ("b", 11), ("c", 9)]);
    let basis = random_basis(rng, &layout, 4)?;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let xhat = random_vec(rng, basis.reduced_dim());
        let roundtrip = basis.project(&basis.lift(&xhat)?)?;
        worst = worst.max((roundtrip - &xhat).amax());

        let x = random_vec(rng, basis.full_dim());
        let once = basis.project(&x)?;
        let twice = basis.project(&basis.lift(&once)?)?;
        worst = worst.max((twice - once).amax());
    }
    Ok(check(
        "projection-identities",
        worst <= 1e-12,
        format!("max identity defect = {worst:.2e} (tolerance 1e-12)"),
    ))
}

/// Report CSV rendering is byte-deterministic and keeps non-finite sweep
/// points visible.
fn check_csv_determinism() -> Result<VerifyCheck> {
    let mut report = ErrorReport::default();
    for (r1, err) in [(15usize, 2.5e-3), (10, f64::INFINITY), (5, 8.0e-2)] {
        report.records.push(ErrorRecord {
            model: "tubular".into(),
            method: "quartic".into(),
            r1,
            r2: R2Spec::None,
            r_deim: None,
            error: err,
            offline_secs: 0.0,
            online_secs: 0.0,
        });
    }
    report.records.push(ErrorRecord {
        model: "tubular".into(),
        method: "qbdae".into(),
        r1: 15,
        r2: R2Spec::Dim(9),
        r_deim: None,
        error: 1.0e-3,
        offline_secs: 0.0,
        online_secs: 0.0,
    });
    let mut a = Vec::new();
    report.write_csv(&mut a)?;
    let mut b = Vec::new();
    report.write_csv(&mut b)?;
    let text = String::from_utf8_lossy(&a);
    let deterministic = a == b;
    let sorted = text.lines().nth(1).map(|l| l.starts_with("tubular,qbdae,15,9")) == Some(true);
    let inf_visible = text.contains(",inf");
    Ok(check(
        "csv-determinism",
        deterministic && sorted && inf_visible,
        format!(
            "identical reruns: {deterministic}; sorted rows: {sorted}; non-finite kept: {inf_visible}"
        ),
    ))
}

/// Runs the whole verification suite. `seed` fixes the random draws used
/// by the oracle checks, so a given seed always verifies the same cases.
pub fn run_verification(seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = vec![
        check_pod_orthonormality()?,
        check_dae_constraints()?,
        check_deim_exactness()?,
        check_kron_oracle(&mut rng)?,
        check_projection_identities(&mut rng)?,
        check_csv_determinism()?,
    ];
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verification_suite_passes_and_is_seed_stable() {
        let report = run_verification(0).unwrap();
        assert!(report.all_passed(), "{}", report.render());
        assert_eq!(report.checks.len(), 6);
        let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "pod-orthonormality",
                "dae-constraint-residual",
                "deim-interpolation-exactness",
                "tensor-kron-oracle",
                "projection-identities",
                "csv-determinism"
            ]
        );
        // Same seed, same rendered report (the RNG-dependent details match).
        let again = run_verification(0).unwrap();
        assert_eq!(report.render(), again.render());
        // A different seed still passes (the identities are seed-free).
        assert!(run_verification(42).unwrap().all_passed());
    }

    #[test]
    fn render_marks_failures() {
        let report = VerifyReport {
            checks: vec![
                VerifyCheck { name: "x".into(), passed: true, detail: "ok".into() },
                VerifyCheck { name: "y".into(), passed: false, detail: "broke".into() },
            ],
        };
        assert!(!report.all_passed());
        let text = report.render();
        assert!(text.contains("PASS x"));
        assert!(text.contains("FAIL y"));
        assert!(text.contains("1/2 checks passed"));
    }
}
