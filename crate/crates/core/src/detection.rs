//! QPSK mapping and the sliding-window Bussgang LMMSE detector.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{invalid, mismatch, Result};
use crate::estimation::Z95;
use crate::linalg::{hermitianize, spd_factor, CMat};
use crate::quantize::{arcsin_covariance, QuantizedFrame};
use crate::signal::PulseBank;

/// Gray mapping: bit 0 picks the sign of the real part, bit 1 the imaginary part.
pub fn qpsk_mod(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(invalid("bits", "QPSK needs an even number of bits"));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(invalid("bits", "values must be 0 or 1"));
    }
    let level = |b: u8| if b == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Ok(bits
        .chunks(2)
        .map(|p| Complex64::new(level(p[0]), level(p[1])))
        .collect())
}

pub fn qpsk_demod(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [u8::from(s.re < 0.0), u8::from(s.im < 0.0)])
        .collect()
}

/// Nearest QPSK point; ties go to the positive side.
pub fn slice(s: Complex64) -> Complex64 {
    crate::quantize::quantize_sample(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectionConfig {
    pub window_len: usize,
    pub block_len: usize,
}

impl DetectionConfig {
    pub fn new(window_len: usize, block_len: usize) -> Result<Self> {
        if window_len.is_multiple_of(2) {
            return Err(invalid("window_len", "must be odd so the target symbol is centered"));
        }
        if block_len < 1 {
            return Err(invalid("block_len", "must be at least 1"));
        }
        Ok(Self { window_len, block_len })
    }
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            window_len: 3,
            block_len: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frontend {
    OneBit,
    Unquantized,
}

#[derive(Clone, Debug)]
struct WindowFilter {
    /// First sample relative to the target symbol's peak.
    rel_lo: i64,
    len: usize,
    /// `n_t x (n_r * len)`, antenna-major columns.
    f: CMat,
}

/// Linear per-symbol detector built for one channel and noise level.
///
/// Every symbol is estimated from the samples within `window_len` symbol
/// periods around its peak, from all antennas. Symbols outside the window act
/// as interference with the statistics of an infinitely long stream, so all
/// windows that fit inside the block share one filter; windows clipped by the
/// block edges get their own, using only the symbols actually present.
#[derive(Clone, Debug)]
pub struct SlidingWindowDetector {
    n_r: usize,
    n_t: usize,
    m: usize,
    block_len: usize,
    filters: Vec<WindowFilter>,
    /// Filter index per symbol position.
    assignment: Vec<usize>,
}

struct Geometry<'a> {
    bank: &'a PulseBank,
    gram_hh: CMat,
    h: &'a CMat,
    sigma_n2: f64,
    frontend: Frontend,
}

impl Geometry<'_> {
    /// Filter for the samples `[lo, lo + len)` around the peak `c`.
    fn filter(&self, c: i64, lo: i64, len: usize, stationary: bool) -> Result<CMat> {
        let bank = self.bank;
        let m = bank.oversampling as i64;
        let n_r = self.h.nrows();
        let n_t = self.h.ncols();
        let idx: Vec<i64> = (lo..lo + len as i64).collect();
        // pulse Gram: sum over symbols of z(i - p) z(j - p)
        let span = bank.z_lags.len() as i64;
        let mut sg = vec![0.0; len * len];
        for a in 0..len {
            for b in a..len {
                let mut acc = 0.0;
                if stationary {
                    let d_a = idx[a] - c;
                    let d_b = idx[b] - c;
                    let reach = (span + len as i64) / m + 1;
                    for j in -reach..=reach {
                        acc += bank.z_at(d_a - j * m) * bank.z_at(d_b - j * m);
                    }
                } else {
                    for n in 0..bank.block_len as i64 {
                        let p = n * m + m - 1;
                        acc += bank.z_at(idx[a] - p) * bank.z_at(idx[b] - p);
                    }
                }
                sg[a * len + b] = acc;
                sg[b * len + a] = acc;
            }
        }
        let dim = n_r * len;
        let mut cov = CMat::zeros(dim, dim);
        for r in 0..n_r {
            for s in 0..n_r {
                let g = self.gram_hh[(r, s)];
                for a in 0..len {
                    for b in 0..len {
                        let mut v = g * sg[a * len + b];
                        if r == s {
                            let (i, j) = (idx[a] as usize, idx[b] as usize);
                            v += self.sigma_n2 * bank.noise_corr[(i, j)];
                        }
                        cov[(r * len + a, s * len + b)] = v;
                    }
                }
            }
        }
        hermitianize(&mut cov);
        let mut cross = CMat::from_fn(dim, n_t, |row, t| {
            let (r, a) = (row / len, row % len);
            self.h[(r, t)] * bank.z_at(idx[a] - c)
        });
        let target = match self.frontend {
            Frontend::Unquantized => cov,
            Frontend::OneBit => {
                for row in 0..dim {
                    let d = cov[(row, row)].re;
                    if d.is_nan() || d <= 0.0 {
                        return Err(invalid("window covariance", format!("diagonal entry {row} is {d}")));
                    }
                    let a = (2.0 / PI).sqrt() / d.sqrt();
                    for t in 0..n_t {
                        cross[(row, t)] *= a;
                    }
                }
                arcsin_covariance(&cov)?
            }
        };
        let chol = spd_factor(target, "detector window covariance")?;
        Ok(chol.solve(&cross).adjoint())
    }
}

impl SlidingWindowDetector {
    /// `h` is the `n_r x n_t` channel the filter trusts, true or estimated.
    pub fn new(h: &CMat, bank: &PulseBank, sigma_n2: f64, cfg: &DetectionConfig, frontend: Frontend) -> Result<Self> {
        if cfg.block_len != bank.block_len {
            return Err(mismatch("data block", bank.block_len, cfg.block_len));
        }
        if !(sigma_n2 >= 0.0 && sigma_n2.is_finite()) {
            return Err(invalid("sigma_n2", format!("{sigma_n2} is not a finite variance")));
        }
        let m = bank.oversampling;
        let total = (bank.samples()) as i64;
        let wl = cfg.window_len * m;
        let half = ((wl - 1) / 2) as i64;
        let geo = Geometry {
            bank,
            gram_hh: h * h.adjoint(),
            h,
            sigma_n2,
            frontend,
        };
        let mut filters = Vec::new();
        let mut interior: Option<usize> = None;
        let mut assignment = Vec::with_capacity(cfg.block_len);
        for n in 0..cfg.block_len {
            let c = (n * m + m - 1) as i64;
            let lo = c - half;
            let hi = lo + wl as i64;
            let (clo, chi) = (lo.max(0), hi.min(total));
            if clo == lo && chi == hi {
                let id = match interior {
                    Some(id) => id,
                    None => {
                        let f = geo.filter(c, lo, wl, true)?;
                        filters.push(WindowFilter {
                            rel_lo: lo - c,
                            len: wl,
                            f,
                        });
                        interior = Some(filters.len() - 1);
                        filters.len() - 1
                    }
                };
                assignment.push(id);
            } else {
                let len = (chi - clo) as usize;
                let f = geo.filter(c, clo, len, false)?;
                filters.push(WindowFilter {
                    rel_lo: clo - c,
                    len,
                    f,
                });
                assignment.push(filters.len() - 1);
            }
        }
        Ok(Self {
            n_r: h.nrows(),
            n_t: h.ncols(),
            m,
            block_len: cfg.block_len,
            filters,
            assignment,
        })
    }

    /// Number of distinct filters; interior windows share one.
    pub fn distinct_filters(&self) -> usize {
        self.filters.len()
    }

    /// Soft estimates, `block_len x n_t`.
    pub fn equalize(&self, y: &[Complex64]) -> Result<CMat> {
        let per = self.block_len * self.m;
        if y.len() != per * self.n_r {
            return Err(mismatch("received block", per * self.n_r, y.len()));
        }
        let mut out = CMat::zeros(self.block_len, self.n_t);
        let mut window = Vec::new();
        for n in 0..self.block_len {
            let wf = &self.filters[self.assignment[n]];
            let c = (n * self.m + self.m - 1) as i64;
            let lo = (c + wf.rel_lo) as usize;
            window.clear();
            for r in 0..self.n_r {
                window.extend_from_slice(&y[r * per + lo..r * per + lo + wf.len]);
            }
            for t in 0..self.n_t {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, v) in window.iter().enumerate() {
                    acc += wf.f[(t, k)] * v;
                }
                out[(n, t)] = acc;
            }
        }
        Ok(out)
    }

    /// Hard QPSK decisions, `block_len x n_t`.
    pub fn detect(&self, y: &[Complex64]) -> Result<CMat> {
        Ok(self.equalize(y)?.map(slice))
    }
}

pub fn sliding_window_detect(
    yq: &QuantizedFrame,
    h: &CMat,
    sigma_n2: f64,
    bank: &PulseBank,
    cfg: &DetectionConfig,
) -> Result<CMat> {
    SlidingWindowDetector::new(h, bank, sigma_n2, cfg, Frontend::OneBit)?.detect(yq.as_slice())
}

/// Symbol error rate with a 95% Wilson half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SerSummary {
    pub value: f64,
    pub ci_half_width: f64,
    pub errors: u64,
    pub symbols: u64,
}

pub fn symbol_errors(decisions: &[Complex64], truth: &[Complex64]) -> Result<u64> {
    if decisions.len() != truth.len() {
        return Err(mismatch("symbol streams", truth.len(), decisions.len()));
    }
    let quadrant = |s: &Complex64| (s.re >= 0.0, s.im >= 0.0);
    Ok(decisions
        .iter()
        .zip(truth)
        .filter(|(d, t)| quadrant(d) != quadrant(t))
        .count() as u64)
}

pub fn ser_from_counts(errors: u64, symbols: u64) -> Result<SerSummary> {
    if symbols == 0 {
        return Err(invalid("symbols", "no symbols were detected"));
    }
    if errors > symbols {
        return Err(invalid("errors", "more errors than symbols"));
    }
    let n = symbols as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(SerSummary {
        value: p,
        ci_half_width: half,
        errors,
        symbols,
    })
}

pub fn ser(decisions: &[Complex64], truth: &[Complex64]) -> Result<SerSummary> {
    ser_from_counts(symbol_errors(decisions, truth)?, truth.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelPrior, CorrelationSpec};
    use crate::rng::{stream, Purpose};
    use crate::system::{apply_equivalent_channel, synth_noise};
    use rand::Rng;

    #[test]
    fn gray_mapping() {
        let s = qpsk_mod(&[0, 0, 1, 0, 1, 1, 0, 1]).unwrap();
        assert_eq!(s[0], Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        assert_eq!(s[2], Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2));
        assert_eq!(qpsk_demod(&s), vec![0, 0, 1, 0, 1, 1, 0, 1]);
        assert!(s.iter().all(|v| (v.norm_sqr() - 1.0).abs() < 1e-15));
        assert!(qpsk_mod(&[1]).is_err());
        assert!(qpsk_mod(&[2, 0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DetectionConfig::new(2, 10).is_err());
        assert!(DetectionConfig::new(3, 0).is_err());
    }

    #[test]
    fn ser_edges() {
        let s = qpsk_mod(&[0, 0, 1, 0, 1, 1, 0, 1]).unwrap();
        assert_eq!(ser(&s, &s).unwrap().value, 0.0);
        let flipped: Vec<Complex64> = s.iter().map(|v| -v).collect();
        assert_eq!(ser(&flipped, &s).unwrap().value, 1.0);
        assert!(ser(&[], &[]).is_err());
        let w = ser_from_counts(0, 100).unwrap();
        assert!(w.ci_half_width > 0.0);
    }

    #[test]
    fn random_decisions_hit_chance_level() {
        let mut rng = stream(3, 0, Purpose::Test);
        let n = 40_000;
        let bits: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2)).collect();
        let guess: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2)).collect();
        let s = ser(&qpsk_mod(&guess).unwrap(), &qpsk_mod(&bits).unwrap()).unwrap();
        assert!((s.value - 0.75).abs() < 3.0 * s.ci_half_width, "{s:?}");
    }

    #[test]
    fn interior_windows_share_a_filter() {
        let h = ChannelPrior::kronecker(CorrelationSpec {
            rho: 0.0,
            n_r: 4,
            n_t: 2,
        })
        .unwrap()
        .sample(&mut stream(1, 0, Purpose::Test));
        let cfg = DetectionConfig::new(3, 12).unwrap();
        // the peak of symbol n sits at sample nM + M - 1, so the right edge clips
        // one window for M = 1 and two for M = 2, 3
        for (m, want) in [(1, 3), (2, 4), (3, 4)] {
            let bank = PulseBank::new(0.8, 12, m).unwrap();
            let det = SlidingWindowDetector::new(&h, &bank, 0.1, &cfg, Frontend::OneBit).unwrap();
            assert_eq!(det.distinct_filters(), want, "M={m}");
        }
    }

    #[test]
    fn noiseless_unquantized_detection_is_error_free() {
        let n = 50;
        let bank = PulseBank::new(0.8, n, 3).unwrap();
        let prior = ChannelPrior::kronecker(CorrelationSpec {
            rho: 0.0,
            n_r: 8,
            n_t: 2,
        })
        .unwrap();
        let mut errors = 0;
        let mut total = 0;
        for b in 0..100 {
            let mut rng = stream(2, b, Purpose::Test);
            let h = prior.sample(&mut rng);
            let bits: Vec<u8> = (0..2 * n * 2).map(|_| rng.random_range(0..2)).collect();
            let x = CMat::from_column_slice(n, 2, &qpsk_mod(&bits).unwrap());
            let y = apply_equivalent_channel(&h, &x, &bank).unwrap();
            let cfg = DetectionConfig::new(3, n).unwrap();
            let det = SlidingWindowDetector::new(&h, &bank, 1e-9, &cfg, Frontend::Unquantized).unwrap();
            let d = det.detect(y.as_slice()).unwrap();
            errors += symbol_errors(d.as_slice(), x.as_slice()).unwrap();
            total += x.len();
        }
        assert!(total >= 10_000);
        assert_eq!(errors, 0);
        // quantized path runs on the same kind of block
        let h = prior.sample(&mut stream(5, 0, Purpose::Test));
        let noise = synth_noise(0.1, &bank.m_taps, 8, &mut stream(5, 1, Purpose::Test));
        let x = CMat::from_element(n, 2, Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        let y = apply_equivalent_channel(&h, &x, &bank).unwrap() + noise;
        let yq = crate::quantize::quantize_1bit(y.as_slice());
        let d = sliding_window_detect(&yq, &h, 0.1, &bank, &DetectionConfig::new(3, n).unwrap()).unwrap();
        assert_eq!(d.shape(), (n, 2));
    }
}
