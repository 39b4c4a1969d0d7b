//! Pulse shaping taps and the structured matrices `G`, `Z` and `U`.
//!
//! Time is measured in symbol periods (T = 1).

use std::f64::consts::PI;

use crate::error::{invalid, mismatch, Result};
use crate::linalg::RMat;

/// Symmetric, unit-energy filter sampled at spacing 1/M over [-N, N].
#[derive(Clone, Debug, PartialEq)]
pub struct FilterTaps {
    taps: Vec<f64>,
    half_span: usize,
    oversampling: usize,
}

impl FilterTaps {
    /// Wraps an explicit tap vector after checking length, symmetry and energy.
    pub fn new(taps: Vec<f64>, half_span: usize, oversampling: usize) -> Result<Self> {
        check_dims(half_span, oversampling)?;
        let len = 2 * half_span * oversampling + 1;
        if taps.len() != len {
            return Err(mismatch("filter taps", len, taps.len()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(invalid("taps", "non-finite tap"));
        }
        for k in 0..len / 2 {
            if taps[k] != taps[len - 1 - k] {
                return Err(invalid("taps", format!("not even-symmetric at index {k}")));
            }
        }
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        if (energy - 1.0).abs() > 1e-12 {
            return Err(invalid("taps", format!("energy {energy} is not 1")));
        }
        Ok(Self {
            taps,
            half_span,
            oversampling,
        })
    }

    /// Discrete delta at the center tap.
    pub fn impulse(half_span: usize, oversampling: usize) -> Result<Self> {
        check_dims(half_span, oversampling)?;
        let mut taps = vec![0.0; 2 * half_span * oversampling + 1];
        taps[half_span * oversampling] = 1.0;
        Ok(Self {
            taps,
            half_span,
            oversampling,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn half_span(&self) -> usize {
        self.half_span
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn center_index(&self) -> usize {
        self.half_span * self.oversampling
    }

    pub fn sample_spacing(&self) -> f64 {
        1.0 / self.oversampling as f64
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

fn check_dims(half_span: usize, oversampling: usize) -> Result<()> {
    if half_span < 1 {
        return Err(invalid("half_span", "must be at least 1"));
    }
    if oversampling < 1 {
        return Err(invalid("oversampling", "must be at least 1"));
    }
    Ok(())
}

fn check_roll_off(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("roll_off", format!("{beta} is outside (0, 1]")));
    }
    Ok(())
}

/// Root-raised-cosine impulse response for T = 1, finite everywhere.
pub fn rrc_pulse(t: f64, beta: f64) -> f64 {
    let t = t.abs();
    if t < 1e-9 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let t_sing = 1.0 / (4.0 * beta);
    if (t - t_sing).abs() < 1e-9 * t_sing.max(1.0) {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Sampled RRC on [-N, N] at spacing 1/M, scaled to unit energy.
pub fn rrc_taps(roll_off: f64, half_span: usize, oversampling: usize) -> Result<FilterTaps> {
    check_roll_off(roll_off)?;
    check_dims(half_span, oversampling)?;
    let c = (half_span * oversampling) as i64;
    let m = oversampling as f64;
    let raw: Vec<f64> = (-c..=c).map(|k| rrc_pulse(k as f64 / m, roll_off)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut taps: Vec<f64> = raw.iter().map(|x| x / norm).collect();
    // exact symmetry regardless of rounding in the two halves
    let len = taps.len();
    for k in 0..len / 2 {
        taps[len - 1 - k] = taps[k];
    }
    FilterTaps::new(taps, half_span, oversampling)
}

/// Matched filter as seen on the sampling lattice.
///
/// The RRC spectrum occupies (1 + β)/T. When the sample rate M/T covers it the
/// sampled RRC is used directly. Below that rate (M = 1) sampled taps alias, and
/// the filter is replaced by its symbol-spaced equivalent: sampling the Nyquist
/// pulse p ⊛ m at multiples of T leaves a unit impulse.
pub fn matched_filter_taps(roll_off: f64, half_span: usize, oversampling: usize) -> Result<FilterTaps> {
    check_roll_off(roll_off)?;
    if (oversampling as f64) >= 1.0 + roll_off {
        rrc_taps(roll_off, half_span, oversampling)
    } else {
        FilterTaps::impulse(half_span, oversampling)
    }
}

/// Noise shaping matrix, MN x 3MN, row r holding the taps from column r.
pub fn build_g_matrix(m_taps: &FilterTaps) -> RMat {
    let mn = m_taps.half_span * m_taps.oversampling;
    let mut g = RMat::zeros(mn, 3 * mn);
    for r in 0..mn {
        for (k, &t) in m_taps.taps.iter().enumerate() {
            g[(r, r + k)] = t;
        }
    }
    g
}

/// Lags 0..=2MN of z = p ⊛ m, scaled so that z(0) = 1.
pub fn combined_response(p_taps: &FilterTaps, m_taps: &FilterTaps) -> Result<Vec<f64>> {
    if p_taps.half_span != m_taps.half_span || p_taps.oversampling != m_taps.oversampling {
        return Err(mismatch(
            "combined response",
            format!("N={} M={}", p_taps.half_span, p_taps.oversampling),
            format!("N={} M={}", m_taps.half_span, m_taps.oversampling),
        ));
    }
    let p = &p_taps.taps;
    let m = &m_taps.taps;
    let len = p.len();
    // z[l] = sum_k p[k] m[k + l]; symmetric taps make this the convolution
    let mut z: Vec<f64> = (0..len).map(|l| (0..len - l).map(|k| p[k] * m[k + l]).sum()).collect();
    let z0 = z[0];
    if z0 <= 0.0 {
        return Err(invalid("taps", "combined response vanishes at lag zero"));
    }
    for v in &mut z {
        *v /= z0;
    }
    Ok(z)
}

/// Symmetric Toeplitz matrix of the combined response, MN x MN.
pub fn build_z_matrix(p_taps: &FilterTaps, m_taps: &FilterTaps) -> Result<RMat> {
    let z = combined_response(p_taps, m_taps)?;
    let mn = p_taps.half_span * p_taps.oversampling;
    Ok(RMat::from_fn(mn, mn, |i, j| z[i.abs_diff(j)]))
}

/// The operator `I ⊗ [0, .., 0, 1]ᵀ`, applied without forming the matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Upsampler {
    blocks: usize,
    factor: usize,
}

pub fn build_upsampler(blocks: usize, factor: usize) -> Result<Upsampler> {
    if blocks < 1 || factor < 1 {
        return Err(invalid("upsampler", "sizes must be at least 1"));
    }
    Ok(Upsampler { blocks, factor })
}

impl Upsampler {
    pub fn input_len(&self) -> usize {
        self.blocks
    }

    pub fn output_len(&self) -> usize {
        self.blocks * self.factor
    }

    /// Output position of input sample `n`.
    pub fn slot(&self, n: usize) -> usize {
        n * self.factor + self.factor - 1
    }

    pub fn apply<T: Copy + Default>(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.blocks {
            return Err(mismatch("upsampler input", self.blocks, x.len()));
        }
        let mut out = vec![T::default(); self.output_len()];
        for (n, &v) in x.iter().enumerate() {
            out[self.slot(n)] = v;
        }
        Ok(out)
    }

    /// `Uᵀ`: picks every M-th sample.
    pub fn apply_transpose<T: Copy>(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.output_len() {
            return Err(mismatch("upsampler output", self.output_len(), y.len()));
        }
        Ok((0..self.blocks).map(|n| y[self.slot(n)]).collect())
    }

    pub fn to_dense(&self) -> RMat {
        let mut u = RMat::zeros(self.output_len(), self.blocks);
        for n in 0..self.blocks {
            u[(self.slot(n), n)] = 1.0;
        }
        u
    }
}

/// Everything the sampled model needs for one block of N symbols.
#[derive(Clone, Debug)]
pub struct PulseBank {
    pub roll_off: f64,
    pub block_len: usize,
    pub oversampling: usize,
    pub p_taps: FilterTaps,
    pub m_taps: FilterTaps,
    pub g: RMat,
    pub z: RMat,
    /// z at lags 0..=2MN.
    pub z_lags: Vec<f64>,
    /// Per-antenna noise correlation G·Gᵀ.
    pub noise_corr: RMat,
}

impl PulseBank {
    pub fn new(roll_off: f64, block_len: usize, oversampling: usize) -> Result<Self> {
        let m_taps = matched_filter_taps(roll_off, block_len, oversampling)?;
        let p_taps = m_taps.clone();
        let g = build_g_matrix(&m_taps);
        let z_lags = combined_response(&p_taps, &m_taps)?;
        let z = build_z_matrix(&p_taps, &m_taps)?;
        let noise_corr = &g * g.transpose();
        Ok(Self {
            roll_off,
            block_len,
            oversampling,
            p_taps,
            m_taps,
            g,
            z,
            z_lags,
            noise_corr,
        })
    }

    pub fn samples(&self) -> usize {
        self.block_len * self.oversampling
    }

    pub fn upsampler(&self) -> Upsampler {
        Upsampler {
            blocks: self.block_len,
            factor: self.oversampling,
        }
    }

    /// z at an integer sample lag, zero beyond the filter support.
    pub fn z_at(&self, lag: i64) -> f64 {
        self.z_lags.get(lag.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }
}
