//! Small dense complex linear algebra for precoder construction.
//!
//! The matrices here are at most 6×6, so a straightforward Gauss-Jordan
//! elimination with partial pivoting is both adequate and easy to audit.

use num_complex::Complex64;

/// Inversion failed: some pivot collapsed relative to the largest one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SingularMatrix {
    /// min|pivot| / max|pivot| at the point of failure; 0 for an exact
    /// rank deficiency.
    pub pivot_ratio: f64,
}

/// Relative pivot collapse below which a matrix is treated as singular.
pub(crate) const PIVOT_TOLERANCE: f64 = 1e-12;

/// Inverts a row-major n×n complex matrix by partial-pivot elimination.
///
/// Returns the inverse together with max|pivot|/min|pivot|, a cheap
/// conditioning proxy that the capacity layer reports alongside singularity
/// statistics.
pub(crate) fn invert(
    n: usize,
    a: &[Complex64],
) -> Result<(Vec<Complex64>, f64), SingularMatrix> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        inv[k * n + k] = Complex64::new(1.0, 0.0);
    }
    let mut pivots = Vec::with_capacity(n);
    for col in 0..n {
        let (prow, pmag) = (col..n)
            .map(|r| (r, m[r * n + col].norm()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("column range is non-empty");
        if pmag == 0.0 {
            return Err(SingularMatrix { pivot_ratio: 0.0 });
        }
        pivots.push(pmag);
        if prow != col {
            for j in 0..n {
                m.swap(col * n + j, prow * n + j);
                inv.swap(col * n + j, prow * n + j);
            }
        }
        let scale = m[col * n + col].inv();
        for j in 0..n {
            m[col * n + j] *= scale;
            inv[col * n + j] *= scale;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let mc = m[col * n + j];
                let ic = inv[col * n + j];
                m[r * n + j] -= f * mc;
                inv[r * n + j] -= f * ic;
            }
        }
    }
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < PIVOT_TOLERANCE * max {
        return Err(SingularMatrix {
            pivot_ratio: min / max,
        });
    }
    Ok((inv, max / min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matmul(n: usize, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        out
    }

    fn assert_identity(n: usize, m: &[Complex64], tol: f64) {
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (m[i * n + j] - c(expect, 0.0)).norm() < tol,
                    "entry ({i},{j}) = {}",
                    m[i * n + j]
                );
            }
        }
    }

    #[test]
    fn identity_inverts_to_itself() {
        let id = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let (inv, cond) = invert(2, &id).unwrap();
        assert_eq!(inv, id);
        assert_eq!(cond, 1.0);
    }

    #[test]
    fn two_by_two_complex_hand_inverse() {
        // A = [[1+i, 2], [0, 3i]], det = -3+3i
        let a = vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, 0.0), c(0.0, 3.0)];
        let (inv, _) = invert(2, &a).unwrap();
        let det = c(-3.0, 3.0);
        let expect = [c(0.0, 3.0) / det, c(-2.0, 0.0) / det, c(0.0, 0.0), c(1.0, 1.0) / det];
        for (got, want) in inv.iter().zip(expect) {
            assert!((got - want).norm() < 1e-14, "{got} vs {want}");
        }
        assert_identity(2, &matmul(2, &a, &inv), 1e-14);
    }

    #[test]
    fn four_by_four_roundtrip() {
        let a: Vec<Complex64> = (0..16)
            .map(|j| {
                let j = j as f64;
                c((j * 0.7 + 1.0).sin() + 2.0 * ((j == 0.0) as u8 as f64), (j * 0.3).cos())
            })
            .collect();
        let (inv, cond) = invert(4, &a).unwrap();
        assert_identity(4, &matmul(4, &a, &inv), 1e-12);
        assert_identity(4, &matmul(4, &inv, &a), 1e-12);
        assert!(cond >= 1.0);
    }

    #[test]
    fn pivoting_handles_leading_zero() {
        let a = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let (inv, _) = invert(2, &a).unwrap();
        assert_identity(2, &matmul(2, &a, &inv), 1e-15);
    }

    #[test]
    fn rank_deficient_matrix_is_rejected() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        let err = invert(2, &a).unwrap_err();
        assert!(err.pivot_ratio < PIVOT_TOLERANCE);
        let zero = vec![c(0.0, 0.0); 4];
        assert_eq!(invert(2, &zero).unwrap_err().pivot_ratio, 0.0);
    }
}
