//! Banded LU factorization with partial pivoting.
//!
//! Implicit time stepping repeatedly solves `(c·E - A) x = b` where the
//! operators of the discretized PDE systems are banded once the state is
//! permuted to node-major (interleaved) ordering. Band storage keeps each
//! factorization at `O(n · bandwidth²)` and each solve at `O(n · bandwidth)`.
//!
//! Storage follows the LAPACK general-band convention: entry `(i, j)` lives
//! in working row `kl + ku + i - j` of column `j`, with `kl` extra rows on
//! top for the fill-in produced by row pivoting.

use crate::{Error, Result, Vector};

/// LU factorization of a banded matrix with `kl` sub- and `ku`
/// super-diagonals, with partial pivoting.
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Working upper bandwidth `kl + ku` (fill-in included).
    kv: usize,
    /// Column-major band storage, `ldab = 2 kl + ku + 1` rows.
    ab: Vec<f64>,
    ldab: usize,
    ipiv: Vec<usize>,
}

/// Lower and upper bandwidths of a COO triplet list.
pub fn bandwidths(n: usize, triplets: &[(usize, usize, f64)]) -> (usize, usize) {
    let mut kl = 0usize;
    let mut ku = 0usize;
    for &(i, j, v) in triplets {
        debug_assert!(i < n && j < n);
        if v == 0.0 {
            continue;
        }
        if i > j {
            kl = kl.max(i - j);
        } else {
            ku = ku.max(j - i);
        }
    }
    (kl, ku)
}

impl BandedLu {
    /// Factors the matrix given by summed COO `triplets` (duplicates
    /// allowed). Bandwidths are taken from the triplets themselves.
    pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let (kl, ku) = bandwidths(n, triplets);
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::dim("banded factor: triplet index", n - 1, i.max(j)));
            }
            ab[j * ldab + (kv + i - j)] += v;
        }
        let mut lu = BandedLu { n, kl, kv, ab, ldab, ipiv: vec![0; n] };
        lu.factorize()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.ab[c * self.ldab + r]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.ab[c * self.ldab + r]
    }

    fn factorize(&mut self) -> Result<()> {
        let (n, kl, kv) = (self.n, self.kl, self.kv);
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Partial pivot among the diagonal and subdiagonal entries.
            let mut jp = 0;
            let mut pmax = self.at(kv, j).abs();
            for ii in 1..=km {
                let v = self.at(kv + ii, j).abs();
                if v > pmax {
                    pmax = v;
                    jp = ii;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(Error::SingularMatrix(format!(
                    "banded LU: zero or non-finite pivot at column {j}"
                )));
            }
            self.ipiv[j] = j + jp;
            // Row j of U can extend kv columns right of the diagonal once
            // pivoting fill-in is accounted for; entries beyond the current
            // fill front are zero and skipped in the update loop.
            let last_col = (j + kv).min(n - 1);
            if jp != 0 {
                for jj in j..=last_col {
                    let r1 = kv + j - jj;
                    let r2 = kv + j + jp - jj;
                    let tmp = self.at(r1, jj);
                    *self.at_mut(r1, jj) = self.at(r2, jj);
                    *self.at_mut(r2, jj) = tmp;
                }
            }
            let pivot = self.at(kv, j);
            for ii in 1..=km {
                *self.at_mut(kv + ii, j) /= pivot;
            }
            if last_col > j {
                for jj in (j + 1)..=last_col {
                    let f = self.at(kv + j - jj, jj);
                    if f != 0.0 {
                        for ii in 1..=km {
                            let l = self.at(kv + ii, j);
                            *self.at_mut(kv + j + ii - jj, jj) -= f * l;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place using the stored factorization.
    pub fn solve_in_place(&self, b: &mut Vector) {
        assert_eq!(b.len(), self.n, "banded solve: rhs length");
        let (n, kl, kv) = (self.n, self.kl, self.kv);
        // Forward: apply pivots and L.
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap_rows(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for ii in 1..=km {
                    b[j + ii] -= self.at(kv + ii, j) * bj;
                }
            }
        }
        // Backward: solve U x = y.
        for j in (0..n).rev() {
            let mut v = b[j];
            v /= self.at(kv, j);
            b[j] = v;
            if v != 0.0 {
                let dmax = kv.min(j);
                for d in 1..=dmax {
                    b[j - d] -= self.at(kv - d, j) * v;
                }
            }
        }
    }
}

/// Banded solver operating in a permuted index ordering.
///
/// The permutation maps original index `i` to permuted index `perm[i]`.
/// Node-major interleaving of blocked PDE states turns block-structured
/// operators (bandwidth ~ n) into narrow-band ones (bandwidth ~ number of
/// variables × stencil width).
pub struct PermutedBandedLu {
    perm: Option<Vec<usize>>,
    lu: BandedLu,
    scratch: std::cell::RefCell<Vector>,
}

impl PermutedBandedLu {
    pub fn factor(
        n: usize,
        triplets: &[(usize, usize, f64)],
        perm: Option<&[usize]>,
    ) -> Result<Self> {
        let lu = match perm {
            Some(p) => {
                assert_eq!(p.len(), n, "permutation length");
                let permuted: Vec<(usize, usize, f64)> =
                    triplets.iter().map(|&(i, j, v)| (p[i], p[j], v)).collect();
                BandedLu::factor(n, &permuted)?
            }
            None => BandedLu::factor(n, triplets)?,
        };
        Ok(PermutedBandedLu {
            perm: perm.map(|p| p.to_vec()),
            lu,
            scratch: std::cell::RefCell::new(Vector::zeros(n)),
        })
    }

    pub fn solve_in_place(&self, b: &mut Vector) {
        match &self.perm {
            None => self.lu.solve_in_place(b),
            Some(p) => {
                let mut s = self.scratch.borrow_mut();
                for i in 0..b.len() {
                    s[p[i]] = b[i];
                }
                self.lu.solve_in_place(&mut s);
                for i in 0..b.len() {
                    b[i] = s[p[i]];
                }
            }
        }
    }
}
