//! Dense helpers shared by the estimators, bounds and detector.

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;
pub type RVec = DVector<f64>;

/// Relative size of the diagonal loading tried once when a factorization fails.
pub const RIDGE_SCALE: f64 = 1e-10;

/// Cholesky factor of a Hermitian positive definite matrix.
///
/// On failure a ridge of `RIDGE_SCALE * trace / dim` is added and the
/// factorization retried once.
pub fn spd_factor<T>(m: DMatrix<T>, what: &'static str) -> Result<Cholesky<T, Dyn>>
where
    T: ComplexField<RealField = f64>,
{
    let n = m.nrows();
    if n != m.ncols() {
        return Err(crate::error::mismatch(
            what,
            "square matrix",
            format!("{}x{}", n, m.ncols()),
        ));
    }
    if n == 0 {
        return Err(Error::Singular { what });
    }
    let trace: f64 = (0..n).map(|i| m[(i, i)].clone().real()).sum();
    if !trace.is_finite() {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    let ridge = RIDGE_SCALE * trace.abs().max(f64::MIN_POSITIVE) / n as f64;
    let mut loaded = m.clone();
    if let Some(c) = Cholesky::new(m) {
        return Ok(c);
    }
    for i in 0..n {
        loaded[(i, i)] += T::from_real(ridge);
    }
    Cholesky::new(loaded).ok_or(Error::Singular { what })
}

/// Inverse of a Hermitian positive definite matrix under the ridge policy.
pub fn spd_inverse<T>(m: DMatrix<T>, what: &'static str) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    Ok(spd_factor(m, what)?.inverse())
}

/// Sum with a fixed binary-tree order, independent of how values were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Elementwise pairwise sum of equally shaped matrices.
pub fn pairwise_sum_mats(v: &[RMat]) -> Option<RMat> {
    match v.len() {
        0 => None,
        1 => Some(v[0].clone()),
        n => {
            let (a, b) = v.split_at(n / 2);
            Some(pairwise_sum_mats(a)? + pairwise_sum_mats(b)?)
        }
    }
}

/// `(a + aᵀ)/2`, used to scrub rounding asymmetry before factorizations.
pub fn symmetrize(a: &mut RMat) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

pub fn hermitianize(a: &mut CMat) {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = s;
            a[(j, i)] = s.conj();
        }
    }
}

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs_diff_c(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff_r(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_sum_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn ridge_rescues_rank_deficient_psd() {
        // rank one, so the plain factorization breaks down
        let v = RVec::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(Cholesky::new(m.clone()).is_none());
        let c = spd_factor(m, "test").unwrap();
        assert!(c.l()[(0, 0)] > 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_factor(m, "x"), Err(Error::Singular { .. })));
    }

    #[test]
    fn complex_inverse_roundtrip() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.5),
                Complex64::new(0.5, -0.5),
                Complex64::new(3.0, 0.0),
            ],
        );
        let inv = spd_inverse(a.clone(), "a").unwrap();
        let id = &a * inv;
        assert!(max_abs_diff_c(&id, &CMat::identity(2, 2)) < 1e-14);
    }
}
