//! Scenario configuration and the Monte Carlo sweeps behind the figures.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::bounds::{bim_data_lower_oversampled, bim_data_m1, bim_prior, crb_with_ci};
use crate::channel::{ChannelPrior, CorrelationSpec};
use crate::detection::{qpsk_mod, ser_from_counts, symbol_errors, DetectionConfig, Frontend, SlidingWindowDetector};
use crate::error::{Error, Result};
use crate::estimation::{squared_error, summarize, LraLmmse, UnquantizedLmmse};
use crate::linalg::{CMat, CVec};
use crate::quantize::quantize_1bit;
use crate::records::{CurveRecord, Metric};
use crate::rng::{stream, Purpose};
use crate::signal::PulseBank;
use crate::system::{apply_equivalent_channel, make_pilots, snr_to_noise_variance, synth_noise, PilotModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    Tau,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::Tau => "tau",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" | "snr_db" => Ok(SweepAxis::Snr),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}`, expected snr or tau"
            ))),
        }
    }
}

/// Every scenario parameter, defaulting to the reference scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    /// Data block length N used for detection.
    pub data_block_len: usize,
    pub tau: usize,
    pub oversampling: Vec<usize>,
    pub roll_off: f64,
    pub rho: f64,
    pub snr_grid_db: Vec<f64>,
    pub tau_grid: Vec<usize>,
    pub sweep: SweepAxis,
    pub trials: usize,
    pub channel_draws_for_bounds: usize,
    /// Target number of detected symbols per SER point.
    pub ser_symbols: usize,
    pub seed: u64,
    pub window_len: usize,
    /// Whether `mse-sweep` also evaluates the bound.
    pub bounds: bool,
    /// Worker threads, 0 for one per core. Results do not depend on it.
    pub workers: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_t: 4,
            n_r: 16,
            data_block_len: 100,
            tau: 40,
            oversampling: vec![1, 2, 3],
            roll_off: 0.8,
            rho: 0.0,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            tau_grid: (1..=17).map(|k| 4 * k).collect(),
            sweep: SweepAxis::Snr,
            trials: 2000,
            channel_draws_for_bounds: 200,
            ser_symbols: 600_000,
            seed: 1,
            window_len: 3,
            bounds: true,
            workers: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{v}`: {e}")))
}

pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl SystemConfig {
    /// Sets one parameter from its text form. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_t" => self.n_t = parse_value(key, value)?,
            "n_r" => self.n_r = parse_value(key, value)?,
            "data_block_len" => self.data_block_len = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "m" => self.oversampling = parse_list(key, value)?,
            "roll_off" => self.roll_off = parse_value(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "snr_db" => self.snr_grid_db = parse_list(key, value)?,
            "tau_grid" => self.tau_grid = parse_list(key, value)?,
            "sweep" => self.sweep = value.trim().parse()?,
            "trials" => self.trials = parse_value(key, value)?,
            "bound_draws" => self.channel_draws_for_bounds = parse_value(key, value)?,
            "ser_symbols" => self.ser_symbols = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "window_len" => self.window_len = parse_value(key, value)?,
            "bounds" => self.bounds = parse_value(key, value)?,
            "workers" => self.workers = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    /// `#` starts a comment; a key may appear once.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: `{k}` set twice", no + 1)));
            }
            self.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", no + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_t < 1 || self.n_r < self.n_t {
            return fail(format!("need n_r >= n_t >= 1, got n_r={} n_t={}", self.n_r, self.n_t));
        }
        if self.tau < self.n_t || self.tau_grid.iter().any(|&t| t < self.n_t) {
            return fail(format!("pilot lengths must be at least n_t={}", self.n_t));
        }
        if self.oversampling.is_empty() || self.oversampling.contains(&0) {
            return fail("m must list oversampling factors >= 1".into());
        }
        if !(self.roll_off > 0.0 && self.roll_off <= 1.0) {
            return fail(format!("roll_off {} outside (0, 1]", self.roll_off));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho {} outside [0, 1)", self.rho));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return fail("snr_db values must be finite".into());
        }
        if self.trials < 1 || self.channel_draws_for_bounds < 1 || self.ser_symbols < 1 || self.data_block_len < 1 {
            return fail("trials, bound_draws, ser_symbols and data_block_len must be at least 1".into());
        }
        if self.window_len.is_multiple_of(2) {
            return fail(format!("window_len {} must be odd", self.window_len));
        }
        Ok(())
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Pilot-phase model and prior for one (M, tau, SNR) point.
pub struct PointSetup {
    pub model: PilotModel,
    pub prior: ChannelPrior,
}

impl PointSetup {
    pub fn new(cfg: &SystemConfig, m: usize, tau: usize, snr_db: f64) -> Result<Self> {
        let prior = ChannelPrior::kronecker(CorrelationSpec {
            rho: cfg.rho,
            n_r: cfg.n_r,
            n_t: cfg.n_t,
        })?;
        let pilots = make_pilots(cfg.n_t, tau, &mut stream(cfg.seed, tau as u64, Purpose::Pilots))?;
        let bank = PulseBank::new(cfg.roll_off, tau, m)?;
        let model = PilotModel::new(pilots, bank, cfg.n_r, snr_to_noise_variance(snr_db, cfg.n_t))?;
        Ok(Self { model, prior })
    }
}

struct Point {
    value: f64,
    tau: usize,
    snr_db: f64,
}

fn sweep_points(cfg: &SystemConfig) -> Result<Vec<Point>> {
    match cfg.sweep {
        SweepAxis::Snr => Ok(cfg
            .snr_grid_db
            .iter()
            .map(|&s| Point {
                value: s,
                tau: cfg.tau,
                snr_db: s,
            })
            .collect()),
        SweepAxis::Tau => {
            if cfg.tau_grid.is_empty() {
                return Ok(Vec::new());
            }
            let [snr] = cfg.snr_grid_db[..] else {
                return Err(Error::Config("a tau sweep needs exactly one snr_db value".into()));
            };
            Ok(cfg
                .tau_grid
                .iter()
                .map(|&t| Point {
                    value: t as f64,
                    tau: t,
                    snr_db: snr,
                })
                .collect())
        }
    }
}

/// `stat` is (value, 95% half-width, trials).
fn record(cfg: &SystemConfig, m: usize, x: f64, metric: Metric, id: &str, stat: (f64, f64, u64)) -> CurveRecord {
    let (value, ci, trials) = stat;
    CurveRecord {
        sweep_name: cfg.sweep.name().into(),
        sweep_value: x,
        m,
        rho: cfg.rho,
        metric_name: metric,
        estimator_or_bound: id.into(),
        value,
        ci_half_width: ci,
        trials,
        seed: cfg.seed,
    }
}

fn point_label(axis: SweepAxis, m: usize, x: f64) -> String {
    format!("M={m}, {}={x}", axis.name())
}

/// Squared errors per trial for the quantized and unquantized estimators.
pub fn mse_trials(setup: &PointSetup, trials: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let lra = LraLmmse::from_model(&setup.model, &setup.prior)?;
    let unq = UnquantizedLmmse::from_model(&setup.model, &setup.prior)?;
    let k = setup.prior.dim() as f64;
    let per: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let h = setup.prior.sample(&mut stream(seed, t as u64, Purpose::Channel));
            let h = CVec::from_column_slice(h.as_slice());
            let y = setup
                .model
                .observe(&h, &mut stream(seed, t as u64, Purpose::PilotNoise))?;
            let yq = quantize_1bit(y.as_slice());
            let a = squared_error(&lra.estimate(&yq)?, &h)? / k;
            let b = squared_error(&unq.estimate(y.as_slice())?, &h)? / k;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().unzip())
}

/// Bound at one point: exact for white noise, the moment bound otherwise.
pub fn bound_at(setup: &PointSetup, draws: usize, seed: u64) -> Result<(f64, f64, &'static str)> {
    let jp = bim_prior(&setup.prior.c_h)?;
    let white = setup.model.samples_per_antenna() == setup.model.tau()
        && setup.model.bank.noise_corr == crate::linalg::RMat::identity(setup.model.tau(), setup.model.tau());
    let (bim, id) = if white {
        (bim_data_m1(&setup.model, &setup.prior, draws, seed)?, "bcrb-exact")
    } else {
        (
            bim_data_lower_oversampled(&setup.model, &setup.prior, draws, seed)?,
            "bcrb-upper",
        )
    };
    let (rep, ci) = crb_with_ci(&bim, &jp)?;
    Ok((rep.per_coefficient_bound, ci, id))
}

/// Normalized MSE of LRA-LMMSE and unquantized LMMSE, plus the bound when
/// `cfg.bounds` is set, for every M and grid point.
pub fn run_mse_sweep(cfg: &SystemConfig) -> Result<Vec<CurveRecord>> {
    cfg.validate()?;
    let points = sweep_points(cfg)?;
    with_pool(cfg.workers, || {
        let mut out = Vec::new();
        for &m in &cfg.oversampling {
            for p in &points {
                let mut run = || -> Result<()> {
                    let setup = PointSetup::new(cfg, m, p.tau, p.snr_db)?;
                    let (lra, unq) = mse_trials(&setup, cfg.trials, cfg.seed)?;
                    let n = cfg.trials as u64;
                    let s = summarize(&lra)?;
                    out.push(record(
                        cfg,
                        m,
                        p.value,
                        Metric::Mse,
                        "lra-lmmse",
                        (s.value, s.ci_half_width, n),
                    ));
                    let s = summarize(&unq)?;
                    out.push(record(
                        cfg,
                        m,
                        p.value,
                        Metric::Mse,
                        "lmmse-unquantized",
                        (s.value, s.ci_half_width, n),
                    ));
                    if cfg.bounds {
                        let draws = cfg.channel_draws_for_bounds;
                        let (v, ci, id) = bound_at(&setup, draws, cfg.seed)?;
                        out.push(record(cfg, m, p.value, Metric::CrbBound, id, (v, ci, draws as u64)));
                    }
                    Ok(())
                };
                run().map_err(|e| e.at(point_label(cfg.sweep, m, p.value)))?;
            }
        }
        Ok(out)
    })?
}

/// Bounds only, over the same grid as `run_mse_sweep`.
pub fn run_crb_sweep(cfg: &SystemConfig) -> Result<Vec<CurveRecord>> {
    cfg.validate()?;
    let points = sweep_points(cfg)?;
    with_pool(cfg.workers, || {
        let mut out = Vec::new();
        for &m in &cfg.oversampling {
            for p in &points {
                let draws = cfg.channel_draws_for_bounds;
                let (v, ci, id) = PointSetup::new(cfg, m, p.tau, p.snr_db)
                    .and_then(|s| bound_at(&s, draws, cfg.seed))
                    .map_err(|e| e.at(point_label(cfg.sweep, m, p.value)))?;
                out.push(record(cfg, m, p.value, Metric::CrbBound, id, (v, ci, draws as u64)));
            }
        }
        Ok(out)
    })?
}

/// Symbol errors over one block: (perfect channel, estimated channel, symbols).
pub struct BlockErrors {
    pub perfect: u64,
    pub estimated: u64,
    pub symbols: u64,
}

/// One pilot phase plus one data block, detected with the true and the
/// estimated channel.
pub fn ser_block(
    setup: &PointSetup,
    lra: &LraLmmse,
    data_bank: &PulseBank,
    det_cfg: &DetectionConfig,
    seed: u64,
    block: u64,
) -> Result<BlockErrors> {
    let model = &setup.model;
    let (n_r, n_t) = (model.n_r, model.n_t());
    let h = setup.prior.sample(&mut stream(seed, block, Purpose::Channel));
    let hv = CVec::from_column_slice(h.as_slice());
    let yp = model.observe(&hv, &mut stream(seed, block, Purpose::PilotNoise))?;
    let h_hat = lra.estimate(&quantize_1bit(yp.as_slice()))?;
    let h_hat = CMat::from_column_slice(n_r, n_t, h_hat.as_slice());

    let n = data_bank.block_len;
    let mut rng = stream(seed, block, Purpose::DataSymbols);
    let bits: Vec<u8> = (0..2 * n * n_t).map(|_| rng.random_range(0..2u8)).collect();
    let x = CMat::from_column_slice(n, n_t, &qpsk_mod(&bits)?);
    let noise = synth_noise(
        model.sigma_n2,
        &data_bank.m_taps,
        n_r,
        &mut stream(seed, block, Purpose::DataNoise),
    );
    let y = apply_equivalent_channel(&h, &x, data_bank)? + noise;
    let yq = quantize_1bit(y.as_slice());

    let count = |hh: &CMat| -> Result<u64> {
        let det = SlidingWindowDetector::new(hh, data_bank, model.sigma_n2, det_cfg, Frontend::OneBit)?;
        let d = det.detect(yq.as_slice())?;
        symbol_errors(d.as_slice(), x.as_slice())
    };
    Ok(BlockErrors {
        perfect: count(&h)?,
        estimated: count(&h_hat)?,
        symbols: (n * n_t) as u64,
    })
}

/// SER with perfect and with LRA-LMMSE-estimated channels over the SNR grid.
pub fn run_ser_sweep(cfg: &SystemConfig) -> Result<Vec<CurveRecord>> {
    cfg.validate()?;
    let det_cfg = DetectionConfig::new(cfg.window_len, cfg.data_block_len)?;
    let per_block = (cfg.data_block_len * cfg.n_t) as u64;
    let blocks = (cfg.ser_symbols as u64).div_ceil(per_block);
    let ser_cfg = SystemConfig {
        sweep: SweepAxis::Snr,
        ..cfg.clone()
    };
    with_pool(cfg.workers, || {
        let mut out = Vec::new();
        for &m in &cfg.oversampling {
            let data_bank = PulseBank::new(cfg.roll_off, cfg.data_block_len, m)?;
            for &snr in &cfg.snr_grid_db {
                let mut run = || -> Result<()> {
                    let setup = PointSetup::new(cfg, m, cfg.tau, snr)?;
                    let lra = LraLmmse::from_model(&setup.model, &setup.prior)?;
                    let counts: Vec<BlockErrors> = (0..blocks)
                        .into_par_iter()
                        .map(|b| ser_block(&setup, &lra, &data_bank, &det_cfg, cfg.seed, b))
                        .collect::<Result<_>>()?;
                    let symbols: u64 = counts.iter().map(|c| c.symbols).sum();
                    for (id, errors) in [
                        ("perfect-csi", counts.iter().map(|c| c.perfect).sum::<u64>()),
                        ("estimated-csi", counts.iter().map(|c| c.estimated).sum::<u64>()),
                    ] {
                        let s = ser_from_counts(errors, symbols)?;
                        out.push(record(
                            &ser_cfg,
                            m,
                            snr,
                            Metric::Ser,
                            id,
                            (s.value, s.ci_half_width, symbols),
                        ));
                    }
                    Ok(())
                };
                run().map_err(|e| e.at(point_label(SweepAxis::Snr, m, snr)))?;
            }
        }
        Ok(out)
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_overrides_and_rejects_unknown_keys() {
        let c = SystemConfig::from_text("# comment\nrho = 0.75\nm = 1, 3\nsnr_db = 0,10 # trailing\nseed=9\n").unwrap();
        assert_eq!(c.rho, 0.75);
        assert_eq!(c.oversampling, vec![1, 3]);
        assert_eq!(c.snr_grid_db, vec![0.0, 10.0]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.tau, 40);
        assert!(SystemConfig::from_text("rhoo = 0.5").is_err());
        assert!(SystemConfig::from_text("rho = 0.5\nrho = 0.6").is_err());
        assert!(SystemConfig::from_text("trials = many").is_err());
        assert!(SystemConfig::from_text("just words").is_err());
        assert!(SystemConfig::from_text("tau = 2").is_err());
        assert!(SystemConfig::from_text("window_len = 4").is_err());
    }

    #[test]
    fn one_record_per_metric_and_m() {
        let cfg = SystemConfig {
            n_r: 4,
            n_t: 2,
            tau: 4,
            oversampling: vec![1, 2],
            snr_grid_db: vec![5.0],
            trials: 1,
            channel_draws_for_bounds: 2,
            ..SystemConfig::default()
        };
        let recs = run_mse_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs[2].estimator_or_bound, "bcrb-exact");
        assert_eq!(recs[5].estimator_or_bound, "bcrb-upper");
        assert!(recs.iter().all(|r| r.value >= 0.0 && r.ci_half_width >= 0.0));
    }

    #[test]
    fn empty_grids_give_empty_output() {
        let cfg = SystemConfig {
            snr_grid_db: vec![],
            ..SystemConfig::default()
        };
        assert!(run_ser_sweep(&cfg).unwrap().is_empty());
        assert!(run_mse_sweep(&cfg).unwrap().is_empty());
    }

    #[test]
    fn tau_sweep_needs_one_snr() {
        let cfg = SystemConfig {
            sweep: SweepAxis::Tau,
            ..SystemConfig::default()
        };
        assert!(run_mse_sweep(&cfg).is_err());
    }
}
