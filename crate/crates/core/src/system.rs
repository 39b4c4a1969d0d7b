//! Equivalent transmit matrix, filtered noise and real/complex stacking.
//!
//! Received samples are ordered antenna-major (`r * M * N + i`); channel
//! coefficients follow `vec(H')`, i.e. `t * n_r + r`.

use std::collections::HashSet;

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, mismatch, Result};
use crate::linalg::{CMat, CVec, RMat, RVec};
use crate::signal::{FilterTaps, PulseBank};

/// `sigma_n^2 = N_t * 10^(-SNR/10)`.
pub fn snr_to_noise_variance(snr_db: f64, n_t: usize) -> f64 {
    n_t as f64 * 10f64.powf(-snr_db / 10.0)
}

const QPSK_PHASES: [Complex64; 4] = [
    Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    Complex64::new(-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    Complex64::new(-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
    Complex64::new(std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
];

const QUARTER_TURNS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

fn hadamard(l: usize) -> RMat {
    let mut h = RMat::from_element(1, 1, 1.0);
    while h.nrows() < l {
        let n = h.nrows();
        let mut next = RMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let v = h[(i, j)];
                next[(i, j)] = v;
                next[(i, j + n)] = v;
                next[(i + n, j)] = v;
                next[(i + n, j + n)] = -v;
            }
        }
        h = next;
    }
    h
}

/// Orthogonal unit-modulus pilots, `tau x n_t`.
///
/// Rows come in blocks of L = next power of two ≥ `n_t`. Each block takes `n_t`
/// random columns of an L x L Hadamard matrix, then scrambles rows with random
/// QPSK phases and columns with random quarter turns, so entries stay on the
/// QPSK alphabet. If L does not divide `tau`, the last Hadamard block and the
/// remainder are merged into one DFT block (unit modulus, not QPSK).
///
/// After one-bit quantization two rows that differ only by a common phase
/// rotation observe the same thing at high SNR, so blocks are redrawn until
/// their rows are new up to such a rotation, as long as that is possible.
pub fn make_pilots<R: Rng + ?Sized>(n_t: usize, tau: usize, rng: &mut R) -> Result<CMat> {
    if n_t < 1 {
        return Err(invalid("n_t", "must be at least 1"));
    }
    if tau < n_t {
        return Err(invalid(
            "tau",
            format!("{tau} pilots cannot be orthogonal for {n_t} users"),
        ));
    }
    let l = n_t.next_power_of_two();
    let mut sizes = vec![l; tau / l];
    let rem = tau % l;
    if rem != 0 {
        match sizes.pop() {
            Some(last) => sizes.push(last + rem),
            None => sizes.push(rem),
        }
    }
    let had = hadamard(l);
    let mut seen = HashSet::new();
    let mut x = CMat::zeros(tau, n_t);
    let mut row0 = 0;
    for &size in &sizes {
        let mut best: Option<(usize, CMat)> = None;
        for _ in 0..PILOT_ATTEMPTS {
            let block = pilot_block(&had, size, n_t, rng);
            let clashes = (0..size).filter(|&i| seen.contains(&row_class(&block, i))).count();
            if best.as_ref().is_none_or(|(c, _)| clashes < *c) {
                best = Some((clashes, block));
            }
            if clashes == 0 {
                break;
            }
        }
        let (_, block) = best.expect("at least one attempt");
        for i in 0..size {
            seen.insert(row_class(&block, i));
        }
        x.rows_mut(row0, size).copy_from(&block);
        row0 += size;
    }
    Ok(x)
}

const PILOT_ATTEMPTS: usize = 256;

fn pilot_block<R: Rng + ?Sized>(had: &RMat, size: usize, n_t: usize, rng: &mut R) -> CMat {
    let l = had.nrows();
    let cols = sample_indices(rng, size, n_t).into_vec();
    let col_turn: Vec<Complex64> = (0..n_t).map(|_| QUARTER_TURNS[rng.random_range(0..4)]).collect();
    let mut b = CMat::zeros(size, n_t);
    for i in 0..size {
        let row_phase = QPSK_PHASES[rng.random_range(0..4)];
        for (t, &c) in cols.iter().enumerate() {
            let base = if size == l {
                Complex64::new(had[(i, c)], 0.0)
            } else {
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (i * c) as f64 / size as f64)
            };
            b[(i, t)] = base * row_phase * col_turn[t];
        }
    }
    b
}

/// A row up to a common phase, rounded so that equal rows hash equally.
fn row_class(b: &CMat, i: usize) -> Vec<(i64, i64)> {
    let r0 = b[(i, 0)];
    (0..b.ncols())
        .map(|t| {
            let v = b[(i, t)] / r0;
            ((v.re * 1e9).round() as i64, (v.im * 1e9).round() as i64)
        })
        .collect()
}

/// `B = Z_cols * X`: the per-antenna response to each user's symbol stream,
/// where `Z_cols` holds the columns of Z at the symbol slots.
pub fn antenna_response(symbols: &CMat, bank: &PulseBank) -> Result<CMat> {
    if symbols.nrows() != bank.block_len {
        return Err(mismatch("symbol block", bank.block_len, symbols.nrows()));
    }
    let up = bank.upsampler();
    let mn = bank.samples();
    let mut b = CMat::zeros(mn, symbols.ncols());
    for t in 0..symbols.ncols() {
        for n in 0..bank.block_len {
            let s = symbols[(n, t)];
            let col = up.slot(n);
            for i in 0..mn {
                b[(i, t)] += s * bank.z[(i, col)];
            }
        }
    }
    Ok(b)
}

/// Noiseless received block `(I ⊗ Z) U (H' ⊗ I_N) x` for an `N x n_t` symbol
/// block `x` and an `n_r x n_t` channel.
pub fn apply_equivalent_channel(h_prime: &CMat, symbols: &CMat, bank: &PulseBank) -> Result<CVec> {
    if symbols.ncols() != h_prime.ncols() {
        return Err(mismatch("users", h_prime.ncols(), symbols.ncols()));
    }
    let b = antenna_response(symbols, bank)?;
    Ok(stack_antennas(&(b * h_prime.transpose())))
}

/// Columns of an `MN x n_r` matrix concatenated antenna by antenna.
fn stack_antennas(per_antenna: &CMat) -> CVec {
    CVec::from_column_slice(per_antenna.as_slice())
}

/// Dense Φ, built column by column from the unit channels `E_q`.
pub fn build_phi(pilots: &CMat, bank: &PulseBank, n_r: usize) -> Result<CMat> {
    let n_t = pilots.ncols();
    let rows = bank.samples() * n_r;
    let mut phi = CMat::zeros(rows, n_r * n_t);
    for q in 0..n_r * n_t {
        let mut e = CMat::zeros(n_r, n_t);
        e[(q % n_r, q / n_r)] = Complex64::new(1.0, 0.0);
        phi.set_column(q, &apply_equivalent_channel(&e, pilots, bank)?);
    }
    Ok(phi)
}

/// Everything about the pilot phase that does not depend on the channel draw.
#[derive(Clone, Debug)]
pub struct PilotModel {
    pub pilots: CMat,
    pub n_r: usize,
    pub sigma_n2: f64,
    pub bank: PulseBank,
    /// Per-antenna block of Φ, `M tau x n_t`.
    pub block: CMat,
    pub phi: CMat,
}

impl PilotModel {
    pub fn new(pilots: CMat, bank: PulseBank, n_r: usize, sigma_n2: f64) -> Result<Self> {
        let tau = pilots.nrows();
        let n_t = pilots.ncols();
        if n_r < 1 {
            return Err(invalid("n_r", "must be at least 1"));
        }
        if !(sigma_n2 >= 0.0 && sigma_n2.is_finite()) {
            return Err(invalid("sigma_n2", format!("{sigma_n2} is not a finite variance")));
        }
        if bank.block_len != tau {
            return Err(mismatch("pilot window", tau, bank.block_len));
        }
        if pilots.iter().any(|x| (x.norm() - 1.0).abs() > 1e-12) {
            return Err(invalid("pilots", "symbols must have unit modulus"));
        }
        let gram = pilots.adjoint() * &pilots;
        let scaled = CMat::identity(n_t, n_t) * Complex64::new(tau as f64, 0.0);
        if crate::linalg::max_abs_diff_c(&gram, &scaled) > 1e-10 {
            return Err(invalid("pilots", "columns are not orthogonal"));
        }
        let block = antenna_response(&pilots, &bank)?;
        let phi = build_phi(&pilots, &bank, n_r)?;
        Ok(Self {
            pilots,
            n_r,
            sigma_n2,
            bank,
            block,
            phi,
        })
    }

    pub fn n_t(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn tau(&self) -> usize {
        self.pilots.nrows()
    }

    pub fn samples_per_antenna(&self) -> usize {
        self.bank.samples()
    }

    /// Per-antenna noise covariance `sigma_n^2 G Gᵀ`.
    pub fn noise_cov(&self) -> RMat {
        &self.bank.noise_corr * self.sigma_n2
    }

    /// `Φ h` using the per-antenna structure.
    pub fn noiseless(&self, h: &CVec) -> Result<CVec> {
        let k = self.n_r * self.n_t();
        if h.len() != k {
            return Err(mismatch("channel vector", k, h.len()));
        }
        let h_prime = CMat::from_column_slice(self.n_r, self.n_t(), h.as_slice());
        Ok(stack_antennas(&(&self.block * h_prime.transpose())))
    }

    pub fn observe<R: Rng + ?Sized>(&self, h: &CVec, rng: &mut R) -> Result<CVec> {
        let clean = self.noiseless(h)?;
        let noise = synth_noise(self.sigma_n2, &self.bank.m_taps, self.n_r, rng);
        Ok(clean + noise)
    }
}

/// Filtered noise `(I ⊗ G) w` with `w ~ CN(0, sigma_n^2 I)`.
pub fn synth_noise<R: Rng + ?Sized>(sigma_n2: f64, m_taps: &FilterTaps, n_r: usize, rng: &mut R) -> CVec {
    let mn = m_taps.half_span() * m_taps.oversampling();
    let taps: Vec<(usize, f64)> = m_taps
        .taps()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, t)| t != 0.0)
        .collect();
    let scale = (sigma_n2 / 2.0).sqrt();
    let mut out = CVec::zeros(mn * n_r);
    let mut w = vec![Complex64::new(0.0, 0.0); 3 * mn];
    for r in 0..n_r {
        for v in w.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v = Complex64::new(re * scale, im * scale);
        }
        for i in 0..mn {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(k, t) in &taps {
                acc += w[i + k] * t;
            }
            out[r * mn + i] = acc;
        }
    }
    out
}

/// `[re; im]`.
pub fn real_stack(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn complex_unstack(v: &RVec) -> Result<CVec> {
    if !v.len().is_multiple_of(2) {
        return Err(invalid("stacked vector", "odd length"));
    }
    let n = v.len() / 2;
    Ok(CVec::from_fn(n, |i, _| Complex64::new(v[i], v[i + n])))
}

/// `[[A_re, -A_im], [A_im, A_re]]`.
pub fn real_stack_matrix(a: &CMat) -> RMat {
    let (r, c) = a.shape();
    RMat::from_fn(2 * r, 2 * c, |i, j| {
        let x = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => x.re,
            (true, false) => -x.im,
            (false, true) => x.im,
        }
    })
}
