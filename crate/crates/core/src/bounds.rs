//! Bayesian information matrices and the resulting CRB.
//!
//! Real parameters are stacked as `[Re h; Im h]` with `h = vec(H')`. The
//! received real (or imaginary) part of antenna r only sees that antenna's
//! coefficients, and the noise is independent across antennas, so every data
//! information matrix is assembled from per-antenna `2 n_t x 2 n_t` blocks.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::ChannelPrior;
use crate::error::{invalid, mismatch, Error, Result};
use crate::estimation::{summarize, Z95};
use crate::linalg::{pairwise_sum, pairwise_sum_mats, spd_factor, spd_inverse, symmetrize, CMat, CVec, RMat, RVec};
use crate::orthant::{gaussian_tail, normal_pdf, OrthantKernel};
use crate::rng::{stream, Purpose};
use crate::system::{real_stack, real_stack_matrix, PilotModel};

/// Rows whose quantized variance falls below this carry no usable information.
const DEGENERATE_VARIANCE: f64 = 1e-280;

/// Number of batch means used for the bound's confidence interval.
const BATCHES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BimKind {
    ExactM1,
    MomentLowerBound,
}

#[derive(Clone, Debug)]
pub struct Bim {
    pub j: RMat,
    pub kind: BimKind,
    pub draws: usize,
    /// Monte Carlo standard error of `trace(j)`.
    pub trace_std_err: f64,
    /// Averages over consecutive, equally sized groups of draws.
    pub batches: Vec<RMat>,
}

#[derive(Clone, Debug)]
pub struct CrbReport {
    pub per_coefficient_bound: f64,
    pub j_complex: CMat,
}

/// `2 C_h̃⁻¹` with `C_h̃ = ½ [[Re C, -Im C], [Im C, Re C]]`.
pub fn bim_prior(c_h: &CMat) -> Result<RMat> {
    let mut j = spd_inverse(real_stack_matrix(c_h), "channel prior")? * 4.0;
    symmetrize(&mut j);
    Ok(j)
}

/// First and second moments of one-bit outputs of a real Gaussian vector.
#[derive(Clone, Debug)]
pub struct QuantizedMoments {
    pub mu: RVec,
    pub cov: RMat,
}

struct PartStats {
    /// Noiseless sample over its noise standard deviation.
    x: Vec<f64>,
    std: Vec<f64>,
}

fn part_stats(reg: &RMat, h_tilde: &RVec, c_n: &RMat) -> Result<PartStats> {
    let l = reg.nrows();
    if reg.ncols() != h_tilde.len() {
        return Err(mismatch("regressor", h_tilde.len(), reg.ncols()));
    }
    if c_n.nrows() != l || c_n.ncols() != l {
        return Err(mismatch("noise covariance", l, c_n.nrows()));
    }
    let a = reg * h_tilde;
    let mut x = Vec::with_capacity(l);
    let mut std = Vec::with_capacity(l);
    for k in 0..l {
        let v = c_n[(k, k)];
        if v.is_nan() || v <= 0.0 {
            return Err(invalid("C_n", format!("diagonal entry {k} is {v}")));
        }
        let s = (v / 2.0).sqrt();
        std.push(s);
        x.push(a[k] / s);
    }
    Ok(PartStats { x, std })
}

fn noise_correlation(c_n: &RMat, k: usize, n: usize) -> f64 {
    c_n[(k, n)] / (c_n[(k, k)] * c_n[(n, n)]).sqrt()
}

/// Moments of `Q(reg h̃ + n)` for real noise `n ~ N(0, C_n / 2)`.
pub fn quantized_moments(reg: &RMat, h_tilde: &RVec, c_n: &RMat) -> Result<QuantizedMoments> {
    let st = part_stats(reg, h_tilde, c_n)?;
    let l = st.x.len();
    let mu = RVec::from_fn(l, |k, _| FRAC_1_SQRT_2 * (1.0 - 2.0 * gaussian_tail(st.x[k])));
    let mut cov = RMat::zeros(l, l);
    for k in 0..l {
        cov[(k, k)] = 2.0 * gaussian_tail(st.x[k]) * gaussian_tail(-st.x[k]);
        for n in (k + 1)..l {
            let kern = OrthantKernel::new(noise_correlation(c_n, k, n));
            let v = 2.0 * kern.excess(-st.x[k], -st.x[n]);
            cov[(k, n)] = v;
            cov[(n, k)] = v;
        }
    }
    Ok(QuantizedMoments { mu, cov })
}

/// `∂μ/∂h̃`: row k is `2 exp(-a_k²/C_kk) / sqrt(2π C_kk)` times regressor row k.
pub fn quantized_mean_jacobian(reg: &RMat, h_tilde: &RVec, c_n: &RMat) -> Result<RMat> {
    let st = part_stats(reg, h_tilde, c_n)?;
    Ok(RMat::from_fn(reg.nrows(), reg.ncols(), |k, i| {
        SQRT_2 * normal_pdf(st.x[k]) / st.std[k] * reg[(k, i)]
    }))
}

/// Moment-based information `Jᵀ C⁻¹ J` of one real observation part.
///
/// Works with the correlation form `D C D`, `D = diag(C)^{-1/2}`, so that the
/// tiny variances of nearly deterministic outputs do not spoil the solve.
fn part_information<'a>(
    reg: &RMat,
    h_tilde: &RVec,
    c_n: &RMat,
    kernel: impl Fn(usize, usize) -> Option<&'a OrthantKernel>,
) -> Result<RMat> {
    let st = part_stats(reg, h_tilde, c_n)?;
    let p = reg.ncols();
    let mut keep = Vec::with_capacity(st.x.len());
    let mut sd = Vec::with_capacity(st.x.len());
    for (k, &x) in st.x.iter().enumerate() {
        let v = 2.0 * gaussian_tail(x) * gaussian_tail(-x);
        if v > DEGENERATE_VARIANCE {
            keep.push(k);
            sd.push(v.sqrt());
        }
    }
    let m = keep.len();
    if m == 0 {
        return Ok(RMat::zeros(p, p));
    }
    let jn = RMat::from_fn(m, p, |a, i| {
        let k = keep[a];
        SQRT_2 * normal_pdf(st.x[k]) / st.std[k] / sd[a] * reg[(k, i)]
    });
    let mut corr = RMat::identity(m, m);
    for a in 0..m {
        for b in (a + 1)..m {
            let (k, n) = (keep[a], keep[b]);
            let owned;
            let kern = match kernel(k, n) {
                Some(kern) => kern,
                None => {
                    owned = OrthantKernel::new(noise_correlation(c_n, k, n));
                    &owned
                }
            };
            let v = 2.0 * kern.excess(-st.x[k], -st.x[n]) / (sd[a] * sd[b]);
            corr[(a, b)] = v;
            corr[(b, a)] = v;
        }
    }
    let chol = spd_factor(corr, "quantized output covariance")?;
    let mut j = jn.transpose() * chol.solve(&jn);
    symmetrize(&mut j);
    Ok(j)
}

/// Exact Fisher information of one real part when the noise is white.
fn part_fisher_white(reg: &RMat, h_tilde: &RVec, c_n_diag: &RMat) -> Result<RMat> {
    let st = part_stats(reg, h_tilde, c_n_diag)?;
    let p = reg.ncols();
    let mut j = RMat::zeros(p, p);
    for (k, &x) in st.x.iter().enumerate() {
        let qq = gaussian_tail(x) * gaussian_tail(-x);
        if qq <= 0.0 {
            continue;
        }
        let pdf = normal_pdf(x);
        let w = pdf * pdf / qq / (st.std[k] * st.std[k]);
        let row = reg.row(k);
        j += row.transpose() * row * w;
    }
    Ok(j)
}

/// Exact data Fisher information of `Q(Φ h + n)` at one channel, white noise.
pub fn fisher_exact_white(phi: &CMat, h: &CVec, noise_var: f64) -> Result<RMat> {
    let stacked = real_stack_matrix(phi);
    let l = phi.nrows();
    let c_n = RMat::identity(l, l) * noise_var;
    let h_t = real_stack(h);
    let re = stacked.rows(0, l).into_owned();
    let im = stacked.rows(l, l).into_owned();
    Ok(part_fisher_white(&re, &h_t, &c_n)? + part_fisher_white(&im, &h_t, &c_n)?)
}

/// Moment-based data information of `Q(Φ h + n)` at one channel for
/// `n ~ CN(0, c_n)`, without any structure assumptions.
pub fn moment_information(phi: &CMat, h: &CVec, c_n: &RMat) -> Result<RMat> {
    let stacked = real_stack_matrix(phi);
    let l = phi.nrows();
    let h_t = real_stack(h);
    let re = stacked.rows(0, l).into_owned();
    let im = stacked.rows(l, l).into_owned();
    Ok(part_information(&re, &h_t, c_n, |_, _| None)? + part_information(&im, &h_t, c_n, |_, _| None)?)
}

/// Orthant kernels per lag of a Toeplitz noise correlation.
struct LagKernels(Vec<OrthantKernel>);

impl LagKernels {
    fn new(c_n: &RMat) -> Self {
        let l = c_n.nrows();
        Self(
            (0..l)
                .map(|lag| OrthantKernel::new(noise_correlation(c_n, 0, lag)))
                .collect(),
        )
    }

    fn get(&self, k: usize, n: usize) -> &OrthantKernel {
        &self.0[k.abs_diff(n)]
    }
}

fn is_toeplitz(c: &RMat) -> bool {
    let l = c.nrows();
    (1..l).all(|i| (1..l).all(|j| (c[(i, j)] - c[(i - 1, j - 1)]).abs() <= 1e-14 * c[(0, 0)].abs()))
}

fn is_diagonal(c: &RMat) -> bool {
    c.iter()
        .enumerate()
        .all(|(idx, &v)| idx % (c.nrows() + 1) == 0 || v == 0.0)
}

/// Real regressors of antenna-local parameters `[Re h_r; Im h_r]`.
fn antenna_regressors(block: &CMat) -> (RMat, RMat) {
    let s = real_stack_matrix(block);
    let l = block.nrows();
    (s.rows(0, l).into_owned(), s.rows(l, l).into_owned())
}

fn scatter(global: &mut RMat, local: &RMat, r: usize, n_r: usize, n_t: usize) {
    let k = n_r * n_t;
    let idx = |i: usize| if i < n_t { i * n_r + r } else { k + (i - n_t) * n_r + r };
    for a in 0..2 * n_t {
        for b in 0..2 * n_t {
            global[(idx(a), idx(b))] += local[(a, b)];
        }
    }
}

fn local_params(h: &CMat, r: usize) -> RVec {
    let n_t = h.ncols();
    RVec::from_fn(2 * n_t, |i, _| if i < n_t { h[(r, i)].re } else { h[(r, i - n_t)].im })
}

fn average_draws(per_draw: Vec<RMat>, kind: BimKind) -> Result<Bim> {
    let draws = per_draw.len();
    let traces: Vec<f64> = per_draw.iter().map(|j| j.trace()).collect();
    let trace_std_err = summarize(&traces)?.ci_half_width / Z95;
    let j =
        pairwise_sum_mats(&per_draw).ok_or_else(|| invalid("n_channel_draws", "must be at least 1"))? / draws as f64;
    let batches = if draws >= 2 * BATCHES {
        let size = draws / BATCHES;
        (0..BATCHES)
            .map(|b| pairwise_sum_mats(&per_draw[b * size..(b + 1) * size]).map(|m| m / size as f64))
            .collect::<Option<Vec<_>>>()
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    Ok(Bim {
        j,
        kind,
        draws,
        trace_std_err,
        batches,
    })
}

fn per_draw_information(
    model: &PilotModel,
    prior: &ChannelPrior,
    draws: usize,
    seed: u64,
    per_antenna: impl Fn(&RMat, &RMat, &RVec, &RMat) -> Result<RMat> + Sync,
) -> Result<Vec<RMat>> {
    if draws < 1 {
        return Err(invalid("n_channel_draws", "must be at least 1"));
    }
    if prior.n_r != model.n_r || prior.n_t != model.n_t() {
        return Err(mismatch(
            "prior",
            format!("{}x{}", model.n_r, model.n_t()),
            format!("{}x{}", prior.n_r, prior.n_t),
        ));
    }
    let c_n = model.noise_cov();
    let (re, im) = antenna_regressors(&model.block);
    let (n_r, n_t) = (model.n_r, model.n_t());
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let h = prior.sample(&mut stream(seed, d as u64, Purpose::BoundChannel));
            let mut j = RMat::zeros(2 * n_r * n_t, 2 * n_r * n_t);
            for r in 0..n_r {
                let local = per_antenna(&re, &im, &local_params(&h, r), &c_n)?;
                scatter(&mut j, &local, r, n_r, n_t);
            }
            Ok(j)
        })
        .collect()
}

/// Exact data BIM for white noise, averaged over `draws` prior samples.
pub fn bim_data_m1(model: &PilotModel, prior: &ChannelPrior, draws: usize, seed: u64) -> Result<Bim> {
    if model.sigma_n2.is_nan() || model.sigma_n2 <= 0.0 {
        return Err(invalid("sigma_n2", "the likelihood degenerates without noise"));
    }
    if !is_diagonal(&model.bank.noise_corr) {
        return Err(invalid("noise", "the exact information needs white noise"));
    }
    let per = per_draw_information(model, prior, draws, seed, |re, im, h, c_n| {
        Ok(part_fisher_white(re, h, c_n)? + part_fisher_white(im, h, c_n)?)
    })?;
    average_draws(per, BimKind::ExactM1)
}

/// Moment-based lower bound on the data BIM, averaged over `draws` prior samples.
pub fn bim_data_lower_oversampled(model: &PilotModel, prior: &ChannelPrior, draws: usize, seed: u64) -> Result<Bim> {
    if model.sigma_n2.is_nan() || model.sigma_n2 <= 0.0 {
        return Err(invalid("sigma_n2", "the likelihood degenerates without noise"));
    }
    let c_n = model.noise_cov();
    let lags = is_toeplitz(&c_n).then(|| LagKernels::new(&c_n));
    let per = per_draw_information(model, prior, draws, seed, |re, im, h, c_n| {
        let lookup = |k, n| lags.as_ref().map(|l| l.get(k, n));
        Ok(part_information(re, h, c_n, lookup)? + part_information(im, h, c_n, lookup)?)
    })?;
    average_draws(per, BimKind::MomentLowerBound)
}

/// Complex BIM `¼(J_RR + J_II) + j¼(J_RI - J_IR)` of `J_D + J_P`, inverted.
///
/// The bound is the mean real diagonal of the inverse.
pub fn crb_from_bim(jd: &RMat, jp: &RMat) -> Result<CrbReport> {
    if jd.shape() != jp.shape() || jd.nrows() != jd.ncols() || !jd.nrows().is_multiple_of(2) {
        return Err(mismatch(
            "information matrices",
            format!("{:?}", jp.shape()),
            format!("{:?}", jd.shape()),
        ));
    }
    let j = jd + jp;
    let k = j.nrows() / 2;
    let mut jc = CMat::from_fn(k, k, |a, b| {
        Complex64::new(
            0.25 * (j[(a, b)] + j[(k + a, k + b)]),
            0.25 * (j[(a, k + b)] - j[(k + a, b)]),
        )
    });
    crate::linalg::hermitianize(&mut jc);
    let inv = spd_factor(jc.clone(), "Bayesian information")?.inverse();
    let bound = (0..k).map(|i| inv[(i, i)].re).sum::<f64>() / k as f64;
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::Numerical(format!("bound evaluated to {bound}")));
    }
    Ok(CrbReport {
        per_coefficient_bound: bound,
        j_complex: jc,
    })
}

/// Bound and a 95% half-width from the spread of the batch bounds.
pub fn crb_with_ci(bim: &Bim, jp: &RMat) -> Result<(CrbReport, f64)> {
    let report = crb_from_bim(&bim.j, jp)?;
    if bim.batches.len() < 2 {
        return Ok((report, 0.0));
    }
    let values: Vec<f64> = bim
        .batches
        .iter()
        .map(|b| crb_from_bim(b, jp).map(|r| r.per_coefficient_bound))
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let sd = (pairwise_sum(&dev) / (n - 1.0)).sqrt();
    Ok((report, Z95 * sd / n.sqrt()))
}

/// Zero-mean arcsin limit used by checks: `(1/π) asin(r)`.
pub fn zero_mean_quantized_covariance(r: f64) -> f64 {
    r.clamp(-1.0, 1.0).asin() / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CorrelationSpec;
    use crate::signal::PulseBank;
    use crate::system::{make_pilots, snr_to_noise_variance};

    fn model(m: usize, snr: f64, tau: usize) -> (PilotModel, ChannelPrior) {
        let bank = PulseBank::new(0.8, tau, m).unwrap();
        let pilots = make_pilots(2, tau, &mut stream(4, 0, Purpose::Pilots)).unwrap();
        let prior = ChannelPrior::kronecker(CorrelationSpec {
            rho: 0.0,
            n_r: 2,
            n_t: 2,
        })
        .unwrap();
        (
            PilotModel::new(pilots, bank, 2, snr_to_noise_variance(snr, 2)).unwrap(),
            prior,
        )
    }

    #[test]
    fn prior_information() {
        let white = ChannelPrior::kronecker(CorrelationSpec {
            rho: 0.0,
            n_r: 3,
            n_t: 2,
        })
        .unwrap();
        assert_eq!(bim_prior(&white.c_h).unwrap(), RMat::identity(12, 12) * 4.0);
        let corr = ChannelPrior::kronecker(CorrelationSpec {
            rho: 0.75,
            n_r: 3,
            n_t: 2,
        })
        .unwrap();
        let jp = bim_prior(&corr.c_h).unwrap();
        assert_eq!(jp, jp.transpose());
        let prod = &jp * real_stack_matrix(&corr.c_h) * 0.5;
        assert!((prod - RMat::identity(12, 12) * 2.0).amax() < 1e-10);
    }

    #[test]
    fn prior_only_bound_is_half() {
        let jp = RMat::identity(8, 8) * 4.0;
        let rep = crb_from_bim(&RMat::zeros(8, 8), &jp).unwrap();
        assert!((rep.per_coefficient_bound - 0.5).abs() < 1e-15);
        assert!((rep.j_complex[(0, 0)] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_mean_moments_follow_arcsin_law() {
        let c_n = RMat::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let reg = RMat::from_row_slice(2, 1, &[1.0, -2.0]);
        let mom = quantized_moments(&reg, &RVec::zeros(1), &c_n).unwrap();
        assert_eq!(mom.mu, RVec::zeros(2));
        assert!((mom.cov[(0, 0)] - 0.5).abs() < 1e-15);
        let r = 0.6 / (2.0f64 * 0.5).sqrt();
        assert!((mom.cov[(0, 1)] - zero_mean_quantized_covariance(r)).abs() < 1e-12);
        let jac = quantized_mean_jacobian(&reg, &RVec::zeros(1), &c_n).unwrap();
        assert!((jac[(0, 0)] - (2.0 / (PI * 2.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn saturation() {
        let c_n = RMat::identity(1, 1);
        let reg = RMat::from_element(1, 1, 1.0);
        let mom = quantized_moments(&reg, &RVec::from_element(1, 40.0), &c_n).unwrap();
        assert!((mom.mu[0] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(mom.cov[(0, 0)] < 1e-300);
    }

    #[test]
    fn moment_bound_is_exact_for_white_noise() {
        let (m, prior) = model(1, 5.0, 4);
        let exact = bim_data_m1(&m, &prior, 6, 1).unwrap();
        let lower = bim_data_lower_oversampled(&m, &prior, 6, 1).unwrap();
        assert!((&exact.j - &lower.j).amax() < 1e-10 * exact.j.amax());
        assert_eq!(exact.kind, BimKind::ExactM1);
        assert_eq!(lower.kind, BimKind::MomentLowerBound);
    }

    #[test]
    fn exact_path_rejects_colored_noise() {
        let (m, prior) = model(2, 5.0, 4);
        assert!(bim_data_m1(&m, &prior, 2, 1).is_err());
        let (mut w, prior) = model(1, 5.0, 4);
        w.sigma_n2 = 0.0;
        assert!(bim_data_m1(&w, &prior, 2, 1).is_err());
        assert!(bim_data_lower_oversampled(&m, &prior, 0, 1).is_err());
    }

    #[test]
    fn structured_path_matches_generic() {
        let (m, prior) = model(2, 3.0, 3);
        let bim = bim_data_lower_oversampled(&m, &prior, 1, 9).unwrap();
        let h = prior.sample(&mut stream(9, 0, Purpose::BoundChannel));
        let h = CVec::from_column_slice(h.as_slice());
        let c_n = m.noise_cov();
        let full_cn = RMat::identity(m.n_r, m.n_r).kronecker(&c_n);
        let dense = moment_information(&m.phi, &h, &full_cn).unwrap();
        assert!((&bim.j - dense).amax() < 1e-9 * bim.j.amax());
    }

    #[test]
    fn noise_dominated_information_vanishes() {
        let (m, prior) = model(2, -60.0, 4);
        let jd = bim_data_lower_oversampled(&m, &prior, 4, 2).unwrap();
        assert!(jd.j.amax() < 1e-3 * 4.0);
        let (m1, prior) = model(1, -60.0, 4);
        assert!(bim_data_m1(&m1, &prior, 4, 2).unwrap().j.amax() < 1e-3 * 4.0);
    }
}
