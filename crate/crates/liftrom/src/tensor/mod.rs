//! Dense and sparse linear-algebra kernels.
//!
//! Provides Kronecker products, sparse matricized-tensor contractions
//! (order-k operators stored as `n × Π in_dims` matrices acting on Kronecker
//! powers of the state), thin SVD and the method of snapshots.
//!
//! Index convention: the flat column index of a k-fold Kronecker product is
//! lexicographic with the *first* factor slowest, i.e. for factors of sizes
//! `d1..dk` the multi-index `(i1,..,ik)` maps to
//! `((i1*d2 + i2)*d3 + i3)*...`. All indices are 0-based internally.

mod matricized;
mod svd;

pub use matricized::MatricizedTensor;
pub use svd::{method_of_snapshots, numerical_rank, thin_svd, SvdResult};

use crate::{Mat, Vector};

/// Kronecker product of two vectors: `result[i*|y| + j] = x[i]*y[j]`.
pub fn kron_vec(x: &Vector, y: &Vector) -> Vector {
    let mut out = Vector::zeros(x.len() * y.len());
    for (i, xi) in x.iter().enumerate() {
        for (j, yj) in y.iter().enumerate() {
            out[i * y.len() + j] = xi * yj;
        }
    }
    out
}

/// Kronecker power `x ⊗ x ⊗ ... ⊗ x` (k factors).
pub fn kron_pow(x: &Vector, k: usize) -> Vector {
    assert!(k >= 1);
    let mut out = x.clone();
    for _ in 1..k {
        out = kron_vec(&out, x);
    }
    out
}

/// Kronecker product of two matrices.
pub fn kron_mat(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for ia in 0..a.nrows() {
        for ja in 0..a.ncols() {
            let av = a[(ia, ja)];
            if av == 0.0 {
                continue;
            }
            for ib in 0..b.nrows() {
                for jb in 0..b.ncols() {
                    out[(ia * b.nrows() + ib, ja * b.ncols() + jb)] = av * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// True if every entry of `m` is finite.
pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn randm(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn kron_unit_vectors() {
        let x = Vector::from_vec(vec![1.0, 0.0]);
        let y = Vector::from_vec(vec![0.0, 1.0]);
        assert_eq!(kron_vec(&x, &y).as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn kron_identity_like_factor() {
        let x = Vector::from_vec(vec![1.0]);
        let y = Vector::from_vec(vec![3.5, -2.0]);
        assert_eq!(kron_vec(&x, &y).as_slice(), &[3.5, -2.0]);
    }

    #[test]
    fn kron_hand_expansion() {
        let x = Vector::from_vec(vec![2.0, 3.0]);
        let y = Vector::from_vec(vec![4.0, 5.0]);
        assert_eq!(kron_vec(&x, &y).as_slice(), &[8.0, 10.0, 12.0, 15.0]);
    }

    #[test]
    fn kron_empty_inputs() {
        let x = Vector::zeros(0);
        let y = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(kron_vec(&x, &y).len(), 0);
    }

    #[test]
    fn kron_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = randn(&mut rng, 5);
            let y = randn(&mut rng, 4);
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let lhs = kron_vec(&(alpha * &x), &y);
            let rhs = alpha * kron_vec(&x, &y);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
            let z = randn(&mut rng, 5);
            let sum = kron_vec(&(&x + &z), &y);
            let parts = kron_vec(&x, &y) + kron_vec(&z, &y);
            assert_relative_eq!(sum, parts, epsilon = 1e-14);
        }
    }

    #[test]
    fn mixed_product_identity() {
        // (AC) ⊗ (BD) = (A ⊗ B)(C ⊗ D) for conforming shapes.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = randm(&mut rng, 3, 2);
            let c = randm(&mut rng, 2, 4);
            let b = randm(&mut rng, 2, 3);
            let d = randm(&mut rng, 3, 2);
            let lhs = kron_mat(&(&a * &c), &(&b * &d));
            let rhs = kron_mat(&a, &b) * kron_mat(&c, &d);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn kron_mat_consistent_with_kron_vec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = randm(&mut rng, 3, 3);
        let b = randm(&mut rng, 2, 2);
        let x = randn(&mut rng, 3);
        let y = randn(&mut rng, 2);
        let lhs = kron_mat(&a, &b) * kron_vec(&x, &y);
        let rhs = kron_vec(&(&a * &x), &(&b * &y));
        assert_relative_eq!(lhs, rhs, epsilon = 1e-13);
    }
}
