//! Thin SVD and the method of snapshots.

use crate::tensor::all_finite;
use crate::{Error, Mat, Result, Vector};

/// Thin singular value decomposition `X = U diag(sigma) Wᵀ` with
/// `min(nrows, ncols)` columns in `u` and `w` and singular values sorted in
/// nonincreasing order.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Left singular vectors, `nrows × min(nrows, ncols)`, orthonormal columns.
    pub u: Mat,
    /// Singular values, nonincreasing, nonnegative.
    pub sigma: Vector,
    /// Right singular vectors, `ncols × min(nrows, ncols)`, orthonormal columns.
    pub w: Mat,
}

/// Computes the thin SVD of `x`. Fails if `x` is empty or contains
/// non-finite entries, or if the iteration does not converge.
pub fn thin_svd(x: &Mat) -> Result<SvdResult> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::dim("thin_svd: matrix must be nonempty", 1, 0));
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("thin_svd input".into()));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::SingularMatrix("svd did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SingularMatrix("svd did not return Vᵀ".into()))?;
    let sigma = svd.singular_values;
    let k = sigma.len();

    // Sort defensively: downstream truncation logic relies on a
    // nonincreasing singular-value sequence.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
    let mut us = Mat::zeros(u.nrows(), k);
    let mut ws = Mat::zeros(v_t.ncols(), k);
    let mut sig = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        ws.set_column(dst, &v_t.row(src).transpose());
        sig[dst] = sigma[src];
    }
    Ok(SvdResult { u: us, sigma: sig, w: ws })
}

/// Numerical rank of a nonincreasing singular-value sequence, using the
/// relative threshold `sigma[0] * max(dims) * machine epsilon`.
pub fn numerical_rank(sigma: &Vector, max_dim: usize) -> usize {
    if sigma.is_empty() || sigma[0] == 0.0 {
        return 0;
    }
    let tol = sigma[0] * max_dim as f64 * f64::EPSILON;
    sigma.iter().take_while(|&&s| s > tol).count()
}

/// Computes `r` dominant left singular vectors of `x` via the method of
/// snapshots: eigen-decomposition of the Gram matrix `XᵀX`, followed by
/// `v_i = X q_i / sigma_i` and a re-orthonormalization pass.
///
/// Fails if `r` exceeds the numerical rank of `x` (the error reports the
/// rank), or if `x` contains non-finite entries.
pub fn method_of_snapshots(x: &Mat, r: usize) -> Result<Mat> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::dim("method_of_snapshots: matrix must be nonempty", 1, 0));
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("method_of_snapshots input".into()));
    }
    let m = x.ncols();
    let gram = x.transpose() * x;
    let eig = nalgebra::SymmetricEigen::new(gram);
    // Eigenvalues of the Gram matrix are squared singular values; clamp
    // small negatives caused by rounding.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let sigma = Vector::from_fn(m, |i, _| eig.eigenvalues[order[i]].max(0.0).sqrt());
    // Rank threshold on the *eigenvalues*: the Gram route carries an
    // absolute eigenvalue error of order eps * lambda_1, so singular values
    // below sqrt(eps) * sigma_1 are indistinguishable from noise here.
    let max_dim = x.nrows().max(m);
    let rank = if sigma[0] == 0.0 {
        0
    } else {
        let tol = sigma[0] * (max_dim as f64 * f64::EPSILON).sqrt();
        sigma.iter().take_while(|&&s| s > tol).count()
    };
    if r > rank {
        return Err(Error::RankDeficient {
            context: "method_of_snapshots".into(),
            requested: r,
            numerical_rank: rank,
        });
    }
    let mut v = Mat::zeros(x.nrows(), r);
    for j in 0..r {
        let q = eig.eigenvectors.column(order[j]);
        let col = x * q / sigma[j];
        v.set_column(j, &col);
    }
    // Two rounds of modified Gram-Schmidt to restore orthonormality lost to
    // rounding in the Gram-matrix route.
    for _ in 0..2 {
        for j in 0..r {
            for i in 0..j {
                let proj = v.column(i).dot(&v.column(j));
                let vi = v.column(i).into_owned();
                let mut vj = v.column_mut(j);
                vj.axpy(-proj, &vi, 1.0);
            }
            let norm = v.column(j).norm();
            if norm == 0.0 {
                return Err(Error::RankDeficient {
                    context: "method_of_snapshots re-orthonormalization".into(),
                    requested: r,
                    numerical_rank: j,
                });
            }
            v.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthonormality_defect(m: &Mat) -> f64 {
        let gram = m.transpose() * m;
        (&gram - Mat::identity(gram.nrows(), gram.ncols())).norm()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let res = thin_svd(&Mat::identity(3, 3)).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(res.sigma[i], 1.0, epsilon = 1e-12);
        }
        assert!(orthonormality_defect(&res.u) < 1e-12);
        assert!(orthonormality_defect(&res.w) < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Mat::from_fn(50, 10, |_, _| rng.gen_range(-1.0..1.0));
        let res = thin_svd(&x).unwrap();
        assert_eq!(res.u.shape(), (50, 10));
        assert_eq!(res.w.shape(), (10, 10));
        for i in 1..10 {
            assert!(res.sigma[i] <= res.sigma[i - 1] + 1e-15);
        }
        let recon = &res.u * Mat::from_diagonal(&res.sigma) * res.w.transpose();
        assert!((&x - &recon).norm() <= 1e-10 * x.norm());
        assert!(orthonormality_defect(&res.u) < 1e-12);
        assert!(orthonormality_defect(&res.w) < 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut x = Mat::zeros(2, 2);
        x[(0, 0)] = f64::NAN;
        assert!(matches!(thin_svd(&x), Err(Error::NonFinite(_))));
        assert!(matches!(method_of_snapshots(&x, 1), Err(Error::NonFinite(_))));
    }

    fn rank3_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Mat {
        let a = Mat::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let b = Mat::from_fn(3, m, |_, _| rng.gen_range(-1.0..1.0));
        a * b
    }

    #[test]
    fn snapshots_method_agrees_with_svd_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = rank3_matrix(&mut rng, 200, 20);
        let v = method_of_snapshots(&x, 3).unwrap();
        assert!(orthonormality_defect(&v) < 1e-10);
        let u3 = thin_svd(&x).unwrap().u.columns(0, 3).into_owned();
        // Same column span: projecting V onto span(U3) must reproduce V.
        let diff = (&v - &u3 * (u3.transpose() * &v)).norm();
        assert!(diff < 1e-8, "subspace mismatch {diff}");
    }

    #[test]
    fn snapshots_method_reports_numerical_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = rank3_matrix(&mut rng, 40, 8);
        match method_of_snapshots(&x, 5) {
            Err(Error::RankDeficient { requested, numerical_rank, .. }) => {
                assert_eq!(requested, 5);
                assert_eq!(numerical_rank, 3);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn repeated_column_has_rank_one() {
        let col = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let mut x = Mat::zeros(3, 4);
        for j in 0..4 {
            x.set_column(j, &col);
        }
        let v = method_of_snapshots(&x, 1).unwrap();
        let cos = v.column(0).dot(&col).abs() / col.norm();
        assert_relative_eq!(cos, 1.0, epsilon = 1e-12);
        assert!(method_of_snapshots(&x, 2).is_err());
    }

    #[test]
    fn singular_values_match_between_methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Mat::from_fn(30, 6, |_, _| rng.gen_range(-1.0..1.0));
        let svd = thin_svd(&x).unwrap();
        let v = method_of_snapshots(&x, 6).unwrap();
        // Rayleigh quotients of XXᵀ on the snapshot basis reproduce σ².
        for j in 0..6 {
            let xj = x.transpose() * v.column(j);
            assert_relative_eq!(xj.norm(), svd.sigma[j], epsilon = 1e-8, max_relative = 1e-8);
        }
    }
}
