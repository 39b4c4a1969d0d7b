//! Kronecker-correlated Rayleigh channels.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::linalg::{CMat, RMat};

/// Draws CN(0, 1): variance 1/2 in each of the real and imaginary parts.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationSpec {
    pub rho: f64,
    pub n_r: usize,
    pub n_t: usize,
}

/// A PSD correlation matrix together with its symmetric square root.
#[derive(Clone, Debug)]
pub struct Correlation {
    pub matrix: RMat,
    pub sqrt: RMat,
}

/// Symmetric PSD square root; rejects eigenvalues below -1e-10.
pub fn psd_sqrt(m: &RMat) -> Result<RMat> {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(invalid("correlation", format!("not PSD, smallest eigenvalue {min}")));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * RMat::from_diagonal(&d) * v.transpose())
}

/// `R_r[i][j] = rho^((i-j)^2)`.
pub fn receive_correlation(rho: f64, n_r: usize) -> Result<Correlation> {
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} is outside [0, 1)")));
    }
    if n_r < 1 {
        return Err(invalid("n_r", "must be at least 1"));
    }
    let matrix = RMat::from_fn(n_r, n_r, |i, j| {
        let d = i.abs_diff(j) as i32;
        rho.powi(d * d)
    });
    let sqrt = if rho == 0.0 {
        RMat::identity(n_r, n_r)
    } else {
        psd_sqrt(&matrix)?
    };
    Ok(Correlation { matrix, sqrt })
}

/// Prior of `h = vec(H')`, index `t * n_r + r`.
#[derive(Clone, Debug)]
pub struct ChannelPrior {
    pub n_r: usize,
    pub n_t: usize,
    pub r_r: Correlation,
    pub r_t: Correlation,
    pub c_h: CMat,
}

impl ChannelPrior {
    pub fn kronecker(spec: CorrelationSpec) -> Result<Self> {
        if spec.n_t < 1 {
            return Err(invalid("n_t", "must be at least 1"));
        }
        let r_r = receive_correlation(spec.rho, spec.n_r)?;
        let r_t = Correlation {
            matrix: RMat::identity(spec.n_t, spec.n_t),
            sqrt: RMat::identity(spec.n_t, spec.n_t),
        };
        Ok(Self::from_parts(r_r, r_t))
    }

    pub fn from_parts(r_r: Correlation, r_t: Correlation) -> Self {
        let n_r = r_r.matrix.nrows();
        let n_t = r_t.matrix.nrows();
        let c = r_t.matrix.transpose().kronecker(&r_r.matrix);
        Self {
            n_r,
            n_t,
            r_r,
            r_t,
            c_h: c.map(|x| Complex64::new(x, 0.0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_r * self.n_t
    }

    /// True when `C_h` is the identity, which lets callers work per antenna.
    pub fn is_white(&self) -> bool {
        self.r_r.matrix == RMat::identity(self.n_r, self.n_r) && self.r_t.matrix == RMat::identity(self.n_t, self.n_t)
    }

    /// `H' = R_r^{1/2} H_w R_t^{1/2}`, an `n_r x n_t` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let hw = CMat::from_fn(self.n_r, self.n_t, |_, _| complex_normal(rng));
        if self.is_white() {
            return hw;
        }
        let rr = self.r_r.sqrt.map(|x| Complex64::new(x, 0.0));
        let rt = self.r_t.sqrt.map(|x| Complex64::new(x, 0.0));
        rr * hw * rt
    }
}

pub fn sample_channel<R: Rng + ?Sized>(prior: &ChannelPrior, rng: &mut R) -> CMat {
    prior.sample(rng)
}
