//! LRA-LMMSE channel estimation, the unquantized LMMSE baseline and MSE metrics.

use num_complex::Complex64;

use crate::channel::ChannelPrior;
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{pairwise_sum, spd_factor, CMat, CVec, RMat};
use crate::quantize::{add_block_noise, arcsin_covariance, bussgang_operator, QuantizedFrame};
use crate::system::PilotModel;

/// 1.96, the two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// A linear estimator `h = W y`, either dense or replicated per antenna.
#[derive(Clone, Debug)]
enum Weights {
    Dense(CMat),
    /// `w` maps one antenna's samples to that antenna's `n_t` coefficients.
    PerAntenna {
        w: CMat,
        n_r: usize,
    },
}

impl Weights {
    fn input_len(&self) -> usize {
        match self {
            Weights::Dense(w) => w.ncols(),
            Weights::PerAntenna { w, n_r } => w.ncols() * n_r,
        }
    }

    fn apply(&self, y: &[Complex64]) -> Result<CVec> {
        if y.len() != self.input_len() {
            return Err(mismatch("estimator input", self.input_len(), y.len()));
        }
        match self {
            Weights::Dense(w) => Ok(w * CVec::from_column_slice(y)),
            Weights::PerAntenna { w, n_r } => {
                let (n_t, len) = w.shape();
                let mut h = CVec::zeros(n_t * n_r);
                for r in 0..*n_r {
                    let yr = &y[r * len..(r + 1) * len];
                    for t in 0..n_t {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (i, &v) in yr.iter().enumerate() {
                            acc += w[(t, i)] * v;
                        }
                        h[t * n_r + r] = acc;
                    }
                }
                Ok(h)
            }
        }
    }
}

/// `W = C_h Ãᴴ C⁻¹` together with the resulting Bayesian MSE.
fn lmmse_weights(a: &CMat, c_h: &CMat, c: CMat, what: &'static str) -> Result<(CMat, f64)> {
    let chol = spd_factor(c, what)?;
    let ac = a * c_h;
    let w = chol.solve(&ac).adjoint();
    let k = c_h.nrows() as f64;
    let tr_ch: f64 = (0..c_h.nrows()).map(|i| c_h[(i, i)].re).sum();
    let tr_gain = (&w * &ac).trace().re;
    Ok((w, ((tr_ch - tr_gain) / k).max(0.0)))
}

fn scale_rows(m: &CMat, d: &[f64]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i])
}

/// Bussgang-aware LMMSE estimator for one-bit oversampled pilots.
#[derive(Clone, Debug)]
pub struct LraLmmse {
    weights: Weights,
    mse: f64,
}

impl LraLmmse {
    /// Dense construction from Φ, `C_h` and the per-antenna noise correlation.
    pub fn new(phi: &CMat, c_h: &CMat, sigma_n2: f64, noise_corr: &RMat) -> Result<Self> {
        check_shapes(phi, c_h, noise_corr)?;
        let mut c_y = phi * c_h * phi.adjoint();
        add_block_noise(&mut c_y, noise_corr, sigma_n2);
        crate::linalg::hermitianize(&mut c_y);
        let a = bussgang_operator(&c_y)?;
        let c_q = arcsin_covariance(&c_y)?;
        let phi_t = scale_rows(phi, a.as_slice());
        let (w, mse) = lmmse_weights(&phi_t, c_h, c_q, "quantized pilot covariance")?;
        Ok(Self {
            weights: Weights::Dense(w),
            mse,
        })
    }

    /// Uses the per-antenna shortcut when the prior is white.
    pub fn from_model(model: &PilotModel, prior: &ChannelPrior) -> Result<Self> {
        if !prior.is_white() {
            return Self::new(&model.phi, &prior.c_h, model.sigma_n2, &model.bank.noise_corr);
        }
        let b = &model.block;
        let mut c_y = b * b.adjoint();
        add_block_noise(&mut c_y, &model.bank.noise_corr, model.sigma_n2);
        crate::linalg::hermitianize(&mut c_y);
        let a = bussgang_operator(&c_y)?;
        let c_q = arcsin_covariance(&c_y)?;
        let b_t = scale_rows(b, a.as_slice());
        let eye = CMat::identity(b.ncols(), b.ncols());
        let (w, mse) = lmmse_weights(&b_t, &eye, c_q, "quantized pilot covariance")?;
        Ok(Self {
            weights: Weights::PerAntenna { w, n_r: model.n_r },
            mse,
        })
    }

    pub fn estimate(&self, yq: &QuantizedFrame) -> Result<CVec> {
        self.weights.apply(yq.as_slice())
    }

    /// Applies the filter to any vector; the map is linear.
    pub fn apply(&self, v: &[Complex64]) -> Result<CVec> {
        self.weights.apply(v)
    }

    /// Bayesian normalized MSE implied by the Bussgang model.
    pub fn analytic_mse(&self) -> f64 {
        self.mse
    }
}

pub fn lra_lmmse_estimate(yq: &QuantizedFrame, phi: &CMat, c_h: &CMat, sigma_n2: f64, g: &RMat) -> Result<CVec> {
    LraLmmse::new(phi, c_h, sigma_n2, &(g * g.transpose()))?.estimate(yq)
}

/// LMMSE on unquantized samples, `C_h Φᴴ (Φ C_h Φᴴ + C_n)⁻¹ y`.
#[derive(Clone, Debug)]
pub struct UnquantizedLmmse {
    weights: Weights,
    mse: f64,
}

impl UnquantizedLmmse {
    /// `c_n` is the per-antenna noise covariance, repeated over antennas.
    pub fn new(phi: &CMat, c_h: &CMat, c_n: &RMat) -> Result<Self> {
        check_shapes(phi, c_h, c_n)?;
        let mut c_y = phi * c_h * phi.adjoint();
        add_block_noise(&mut c_y, c_n, 1.0);
        crate::linalg::hermitianize(&mut c_y);
        let (w, mse) = lmmse_weights(phi, c_h, c_y, "pilot covariance")?;
        Ok(Self {
            weights: Weights::Dense(w),
            mse,
        })
    }

    pub fn from_model(model: &PilotModel, prior: &ChannelPrior) -> Result<Self> {
        let c_n = model.noise_cov();
        if !prior.is_white() {
            return Self::new(&model.phi, &prior.c_h, &c_n);
        }
        let b = &model.block;
        let mut c_y = b * b.adjoint();
        add_block_noise(&mut c_y, &c_n, 1.0);
        crate::linalg::hermitianize(&mut c_y);
        let eye = CMat::identity(b.ncols(), b.ncols());
        let (w, mse) = lmmse_weights(b, &eye, c_y, "pilot covariance")?;
        Ok(Self {
            weights: Weights::PerAntenna { w, n_r: model.n_r },
            mse,
        })
    }

    pub fn estimate(&self, y: &[Complex64]) -> Result<CVec> {
        self.weights.apply(y)
    }

    pub fn analytic_mse(&self) -> f64 {
        self.mse
    }
}

pub fn lmmse_unquantized(y: &[Complex64], phi: &CMat, c_h: &CMat, c_n: &RMat) -> Result<CVec> {
    UnquantizedLmmse::new(phi, c_h, c_n)?.estimate(y)
}

fn check_shapes(phi: &CMat, c_h: &CMat, noise: &RMat) -> Result<()> {
    if phi.ncols() != c_h.nrows() || c_h.nrows() != c_h.ncols() {
        return Err(mismatch("channel covariance", phi.ncols(), c_h.nrows()));
    }
    let per = noise.nrows();
    if per == 0 || noise.ncols() != per || !phi.nrows().is_multiple_of(per) {
        return Err(mismatch("noise covariance blocks", phi.nrows(), per));
    }
    Ok(())
}

/// One estimate scored against the channel that produced it.
#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub h_hat: CVec,
    pub per_trial_se: f64,
}

impl EstimateReport {
    pub fn new(h_hat: CVec, truth: &CVec) -> Result<Self> {
        let per_trial_se = squared_error(&h_hat, truth)?;
        Ok(Self { h_hat, per_trial_se })
    }
}

pub fn squared_error(h_hat: &CVec, truth: &CVec) -> Result<f64> {
    if h_hat.len() != truth.len() {
        return Err(mismatch("estimate", truth.len(), h_hat.len()));
    }
    Ok(h_hat.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum())
}

/// Sample mean with a normal-approximation 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSummary {
    pub value: f64,
    pub ci_half_width: f64,
    pub trials: usize,
}

pub fn summarize(samples: &[f64]) -> Result<MeanSummary> {
    let n = samples.len();
    if n == 0 {
        return Err(invalid("samples", "no trials"));
    }
    let mean = pairwise_sum(samples) / n as f64;
    let half = if n > 1 {
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Z95 * (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(MeanSummary {
        value: mean,
        ci_half_width: half,
        trials: n,
    })
}

/// Mean of `|ĥ - h|² / K` over trials.
pub fn normalized_mse(estimates: &[CVec], truths: &[CVec]) -> Result<MeanSummary> {
    if estimates.len() != truths.len() {
        return Err(mismatch("trials", truths.len(), estimates.len()));
    }
    let per: Vec<f64> = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| Ok(squared_error(e, t)? / t.len().max(1) as f64))
        .collect::<Result<_>>()?;
    summarize(&per)
}
