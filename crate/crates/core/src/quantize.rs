//! One-bit quantizer and second-order statistics of quantized Gaussians.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{invalid, mismatch, Result};
use crate::linalg::{CMat, RMat, RVec};

/// How far outside [-1, 1] an arcsin argument may drift before it is an error.
pub const ASIN_SLACK: f64 = 1e-9;

fn sign_scaled(x: f64) -> f64 {
    if x >= 0.0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    }
}

pub fn quantize_sample(y: Complex64) -> Complex64 {
    Complex64::new(sign_scaled(y.re), sign_scaled(y.im))
}

/// Output of the one-bit front end; every entry is `(±1 ± j)/√2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedFrame(Vec<Complex64>);

impl QuantizedFrame {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }
}

pub fn quantize_1bit(y: &[Complex64]) -> QuantizedFrame {
    QuantizedFrame(y.iter().map(|&v| quantize_sample(v)).collect())
}

/// `Φ C_h Φᴴ + sigma_n^2 (I_{n_r} ⊗ G Gᵀ)`.
pub fn pilot_covariance(phi: &CMat, c_h: &CMat, sigma_n2: f64, g: &RMat) -> Result<CMat> {
    if phi.ncols() != c_h.nrows() || c_h.nrows() != c_h.ncols() {
        return Err(mismatch("pilot covariance", phi.ncols(), c_h.nrows()));
    }
    let per = g.nrows();
    if per == 0 || !phi.nrows().is_multiple_of(per) {
        return Err(mismatch("noise blocks", per, phi.nrows()));
    }
    let ggt = g * g.transpose();
    let mut c = phi * c_h * phi.adjoint();
    add_block_noise(&mut c, &ggt, sigma_n2);
    crate::linalg::hermitianize(&mut c);
    Ok(c)
}

pub(crate) fn add_block_noise(c: &mut CMat, noise_corr: &RMat, sigma_n2: f64) {
    let per = noise_corr.nrows();
    for b in 0..c.nrows() / per {
        for i in 0..per {
            for j in 0..per {
                c[(b * per + i, b * per + j)].re += sigma_n2 * noise_corr[(i, j)];
            }
        }
    }
}

/// Diagonal of `A = √(2/π) diag(C_y)^{-1/2}`.
pub fn bussgang_operator(c_y: &CMat) -> Result<RVec> {
    let scale = (2.0 / PI).sqrt();
    let mut a = RVec::zeros(c_y.nrows());
    for k in 0..c_y.nrows() {
        let d = c_y[(k, k)].re;
        if d.is_nan() || d <= 0.0 {
            return Err(invalid("C_y", format!("diagonal entry {k} is {d}")));
        }
        a[k] = scale / d.sqrt();
    }
    Ok(a)
}

fn clamped_asin(x: f64) -> Result<f64> {
    if x.is_nan() || x.abs() > 1.0 + ASIN_SLACK {
        return Err(invalid("arcsin argument", format!("{x} is not a correlation")));
    }
    Ok(x.clamp(-1.0, 1.0).asin())
}

/// Arcsin law for a real covariance: `(2/π) asin(K C K)` with `K = diag(C)^{-1/2}`.
pub fn arcsin_covariance_real(c: &RMat) -> Result<RMat> {
    let n = c.nrows();
    let k = diag_inv_sqrt(n, |i| c[(i, i)])?;
    let mut out = RMat::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 2.0 / PI * clamped_asin(k[i] * c[(i, j)] * k[j])?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Arcsin law for a circular complex covariance, applied to real and imaginary
/// parts separately.
pub fn arcsin_covariance(c_s: &CMat) -> Result<CMat> {
    let n = c_s.nrows();
    let k = diag_inv_sqrt(n, |i| c_s[(i, i)].re)?;
    let mut out = CMat::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = c_s[(i, j)] * (k[i] * k[j]);
            let v = Complex64::new(clamped_asin(c.re)?, clamped_asin(c.im)?) * (2.0 / PI);
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    Ok(out)
}

fn diag_inv_sqrt(n: usize, d: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    (0..n)
        .map(|i| {
            let v = d(i);
            if v > 0.0 {
                Ok(1.0 / v.sqrt())
            } else {
                Err(invalid("covariance", format!("diagonal entry {i} is {v}")))
            }
        })
        .collect()
}
