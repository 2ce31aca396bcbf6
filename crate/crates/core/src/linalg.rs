//! Dense linear-algebra helpers on top of nalgebra: a pivot-tolerant
//! Cholesky for semi-definite covariances, guarded least squares, and
//! triangular solves used by the posterior samplers.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{domain, invalid};
use crate::math;
use crate::{Error, Result};

/// Relative pivot tolerance for semi-definite Cholesky factorizations.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Upper bound on cond(XᵀX) accepted by least-squares fits.
pub const MAX_CONDITION: f64 = 1e12;

/// Lower Cholesky factor of a symmetric positive semi-definite matrix.
///
/// Pivots within `tol · max|diag|` of zero are treated as exact zeros and
/// their column is zeroed, so rank-deficient covariances (including the zero
/// matrix) factor cleanly. A pivot below `-tol · max|diag|`, or a zero pivot
/// whose column is not itself zero, fails with the 1-based order of the
/// offending leading minor.
pub fn psd_cholesky(cov: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let p = cov.nrows();
    if cov.ncols() != p {
        return Err(invalid!("covariance must be square, got {}x{}", p, cov.ncols()));
    }
    let scale = (0..p).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..p {
        for j in 0..i {
            let (a, b) = (cov[(i, j)], cov[(j, i)]);
            if (a - b).abs() > tol * scale.max(f64::MIN_POSITIVE) * 10.0 {
                return Err(domain!("covariance is not symmetric at ({}, {})", i, j));
            }
        }
        if !cov[(i, i)].is_finite() {
            return Err(domain!("non-finite covariance diagonal at {}", i));
        }
    }
    let thresh = tol * scale;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -thresh {
            return Err(domain!(
                "matrix is not positive semi-definite: leading minor of order {} is negative (pivot {:e})",
                j + 1,
                d
            ));
        }
        if d <= thresh {
            // Zero pivot: the rest of the column must vanish as well.
            for i in (j + 1)..p {
                let mut s = cov[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                let bound = thresh.max(f64::MIN_POSITIVE) * 1e3;
                if s.abs() > bound.max(1e-8 * scale) {
                    return Err(domain!(
                        "matrix is not positive semi-definite: leading minor of order {} is negative",
                        i + 1
                    ));
                }
            }
            continue;
        }
        let djj = math::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Strict Cholesky factorization of a symmetric positive-definite matrix.
pub fn spd_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(domain!("{} has non-finite entries", what));
    }
    Cholesky::new(m.clone()).ok_or_else(|| domain!("{} is not positive definite", what))
}

/// Solves `R x = b` for upper-triangular `R` in place.
pub fn solve_upper_in_place(r: &DMatrix<f64>, b: &mut DVector<f64>) -> Result<()> {
    if r.solve_upper_triangular_mut(b) {
        Ok(())
    } else {
        Err(domain!("triangular factor is singular"))
    }
}

/// Spectral condition number of a square matrix (ratio of extreme singular
/// values); infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares fit of `y` on the columns of `x`, computed by Householder QR.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Coefficients β̂.
    pub beta: DVector<f64>,
    /// Upper-triangular factor with `RᵀR = XᵀX`.
    pub r: DMatrix<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    /// 1-norm condition number of XᵀX.
    pub condition: f64,
}

impl LeastSquares {
    /// Fits by QR; fails with [`Error::SingularDesign`] when cond(XᵀX)
    /// exceeds [`MAX_CONDITION`].
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if y.len() != n {
            return Err(invalid!("design has {} rows but response has {}", n, y.len()));
        }
        if n < k {
            return Err(invalid!("{} rows cannot identify {} coefficients", n, k));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(domain!("non-finite value in design or response"));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let condition = gram_condition(&r);
        if !(condition < MAX_CONDITION) {
            return Err(Error::SingularDesign {
                columns: dependent_columns(&r),
                condition,
            });
        }
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        let mut beta = qty.rows(0, k).into_owned();
        solve_upper_in_place(&r, &mut beta)?;
        let rss = qty.rows(k, n - k).norm_squared();
        Ok(LeastSquares {
            beta,
            r,
            rss,
            condition,
        })
    }
}

/// 1-norm condition number of `RᵀR` from its triangular factor; infinite
/// when `R` is singular.
pub fn gram_condition(r: &DMatrix<f64>) -> f64 {
    let k = r.nrows();
    let mut rinv = DMatrix::identity(k, k);
    if (0..k).any(|i| r[(i, i)] == 0.0) || !r.solve_upper_triangular_mut(&mut rinv) {
        return f64::INFINITY;
    }
    let norm1 = |m: &DMatrix<f64>| m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let gram = r.tr_mul(r);
    let gram_inv = &rinv * rinv.transpose();
    let c = norm1(&gram) * norm1(&gram_inv);
    if c.is_finite() { c } else { f64::INFINITY }
}

fn dependent_columns(r: &DMatrix<f64>) -> Vec<usize> {
    let k = r.nrows();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let flagged: Vec<usize> = (0..k).filter(|&i| diag[i] <= 1e-6 * max).collect();
    if !flagged.is_empty() {
        return flagged;
    }
    let argmin = (0..k)
        .min_by(|&a, &b| diag[a].total_cmp(&diag[b]))
        .unwrap_or(0);
    alloc::vec![argmin]
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(spd_cholesky(m, what)?.inverse())
}

/// Serializes a `DVector` as a plain list of numbers.
pub mod serde_vector {
    use alloc::vec::Vec;
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serializes a `DMatrix` as a list of rows.
pub mod serde_matrix {
    use alloc::vec::Vec;
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use nalgebra::dmatrix;

    #[test]
    fn psd_cholesky_reconstructs() {
        let c = dmatrix![4.0, 2.0, 0.6; 2.0, 2.0, 0.5; 0.6, 0.5, 1.0];
        let l = psd_cholesky(&c, PSD_TOLERANCE).unwrap();
        let back = &l * l.transpose();
        let err = (&back - &c).abs().max();
        assert!(err <= 1e-8 * c.abs().max(), "err {err}");
    }

    #[test]
    fn psd_cholesky_zero_matrix() {
        let l = psd_cholesky(&DMatrix::zeros(3, 3), PSD_TOLERANCE).unwrap();
        assert!(l.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psd_cholesky_rank_deficient() {
        // [[1,1],[1,1]] has rank one.
        let c = dmatrix![1.0, 1.0; 1.0, 1.0];
        let l = psd_cholesky(&c, PSD_TOLERANCE).unwrap();
        assert_eq!(l[(1, 1)], 0.0);
        assert!(((&l * l.transpose()) - c).abs().max() < 1e-12);
    }

    #[test]
    fn psd_cholesky_names_minor() {
        let c = dmatrix![1.0, 2.0; 2.0, 1.0];
        match psd_cholesky(&c, PSD_TOLERANCE) {
            Err(Error::NumericDomain(msg)) => assert!(msg.contains("order 2"), "{msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn least_squares_exact_fit() {
        let x = dmatrix![1.0, 0.0; 1.0, 1.0; 1.0, 2.0; 1.0, 3.0];
        let y = DVector::from_vec(alloc::vec![1.0, 3.0, 5.0, 7.0]);
        let ls = LeastSquares::fit(&x, &y).unwrap();
        assert!((ls.beta[0] - 1.0).abs() < 1e-12);
        assert!((ls.beta[1] - 2.0).abs() < 1e-12);
        assert!(ls.rss < 1e-20);
    }

    #[test]
    fn least_squares_duplicate_column() {
        let x = dmatrix![1.0, 2.0, 2.0; 1.0, 3.0, 3.0; 1.0, 5.0, 5.0; 1.0, 7.0, 7.0];
        let y = DVector::from_vec(alloc::vec![1.0, 2.0, 3.0, 4.0]);
        match LeastSquares::fit(&x, &y) {
            Err(Error::SingularDesign { columns, .. }) => assert_eq!(columns, alloc::vec![2]),
            other => panic!("expected singular design, got {other:?}"),
        }
    }
}
