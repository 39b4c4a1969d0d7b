//! Detector behaviour, SER statistics, records I/O and sweep reproducibility.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use onebit_core::channel::{ChannelPrior, CorrelationSpec};
use onebit_core::detection::{
    qpsk_demod, qpsk_mod, ser, ser_from_counts, DetectionConfig, Frontend, SlidingWindowDetector,
};
use onebit_core::harness::{run_crb_sweep, run_mse_sweep, run_ser_sweep, SweepAxis, SystemConfig};
use onebit_core::linalg::{CMat, CVec};
use onebit_core::quantize::quantize_1bit;
use onebit_core::records::{emit, parse, CurveRecord, Format, Metric};
use onebit_core::rng::{stream, Purpose};
use onebit_core::signal::PulseBank;
use onebit_core::system::{apply_equivalent_channel, snr_to_noise_variance, synth_noise};
use rand::Rng;

#[test]
fn gray_mapping_table() {
    let s = qpsk_mod(&[0, 0, 1, 0, 0, 1, 1, 1]).unwrap();
    let c = |re: f64, im: f64| Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2);
    assert_eq!(s, vec![c(1.0, 1.0), c(-1.0, 1.0), c(1.0, -1.0), c(-1.0, -1.0)]);
    assert_eq!(qpsk_demod(&s), vec![0, 0, 1, 0, 0, 1, 1, 1]);
    assert!(qpsk_mod(&[1]).is_err());
    assert!(qpsk_mod(&[2, 0]).is_err());
}

#[test]
fn wilson_half_widths() {
    let s = ser_from_counts(10, 1000).unwrap();
    assert_eq!(s.value, 0.01);
    assert!((s.ci_half_width - 0.006_434_357_212_392_763).abs() < 1e-12);
    let z = ser_from_counts(0, 500).unwrap();
    assert_eq!(z.value, 0.0);
    assert!((z.ci_half_width - 0.003_812_170_230_776_122).abs() < 1e-12);
    assert!(ser_from_counts(3, 2).is_err());
    assert!(ser_from_counts(0, 0).is_err());
}

struct Scenario {
    h: CMat,
    x: CMat,
    y: CVec,
    bank: PulseBank,
    sigma2: f64,
}

fn scenario(m: usize, snr_db: f64, seed: u64) -> Scenario {
    let (n_r, n_t, n) = (8, 2, 30);
    let prior = ChannelPrior::kronecker(CorrelationSpec { rho: 0.0, n_r, n_t }).unwrap();
    let h = prior.sample(&mut stream(seed, 0, Purpose::Channel));
    let bank = PulseBank::new(0.8, n, m).unwrap();
    let mut rng = stream(seed, 0, Purpose::DataSymbols);
    let bits: Vec<u8> = (0..2 * n * n_t).map(|_| rng.random_range(0..2u8)).collect();
    let x = CMat::from_column_slice(n, n_t, &qpsk_mod(&bits).unwrap());
    let sigma2 = snr_to_noise_variance(snr_db, n_t);
    let noise = synth_noise(sigma2, &bank.m_taps, n_r, &mut stream(seed, 0, Purpose::DataNoise));
    let y = apply_equivalent_channel(&h, &x, &bank).unwrap() + noise;
    Scenario { h, x, y, bank, sigma2 }
}

#[test]
fn unquantized_detector_is_error_free_at_high_snr() {
    for m in 1..=3 {
        let s = scenario(m, 30.0, 1);
        let cfg = DetectionConfig::new(3, 30).unwrap();
        let det = SlidingWindowDetector::new(&s.h, &s.bank, s.sigma2, &cfg, Frontend::Unquantized).unwrap();
        let d = det.detect(s.y.as_slice()).unwrap();
        assert_eq!(ser(d.as_slice(), s.x.as_slice()).unwrap().errors, 0, "M={m}");
    }
}

#[test]
fn one_bit_detector_beats_chance_and_improves_with_snr() {
    let cfg = DetectionConfig::new(3, 30).unwrap();
    let count = |snr: f64| -> u64 {
        (0..20)
            .map(|seed| {
                let s = scenario(2, snr, seed);
                let det = SlidingWindowDetector::new(&s.h, &s.bank, s.sigma2, &cfg, Frontend::OneBit).unwrap();
                let d = det.detect(quantize_1bit(s.y.as_slice()).as_slice()).unwrap();
                ser(d.as_slice(), s.x.as_slice()).unwrap().errors
            })
            .sum()
    };
    let low = count(-5.0);
    let high = count(10.0);
    assert!(low < 20 * 60 * 3 / 4 / 2, "far better than guessing: {low}");
    assert!(high < low);
}

#[test]
fn equalizer_is_linear() {
    let s = scenario(3, 5.0, 2);
    let t = scenario(3, 5.0, 3);
    let cfg = DetectionConfig::new(5, 30).unwrap();
    let det = SlidingWindowDetector::new(&s.h, &s.bank, s.sigma2, &cfg, Frontend::OneBit).unwrap();
    let sum = &s.y + &t.y * Complex64::new(0.5, -2.0);
    let lhs = det.equalize(sum.as_slice()).unwrap();
    let rhs = det.equalize(s.y.as_slice()).unwrap() + det.equalize(t.y.as_slice()).unwrap() * Complex64::new(0.5, -2.0);
    assert!((lhs - rhs).camax() < 1e-10);
    assert!(det.equalize(&s.y.as_slice()[1..]).is_err());
}

fn tiny() -> SystemConfig {
    SystemConfig {
        n_t: 2,
        n_r: 4,
        tau: 8,
        data_block_len: 20,
        oversampling: vec![1, 2],
        snr_grid_db: vec![0.0, 10.0],
        trials: 40,
        channel_draws_for_bounds: 20,
        ser_symbols: 400,
        seed: 99,
        ..SystemConfig::default()
    }
}

fn bits(r: &[CurveRecord]) -> Vec<(u64, u64)> {
    r.iter()
        .map(|x| (x.value.to_bits(), x.ci_half_width.to_bits()))
        .collect()
}

#[test]
fn sweeps_are_bit_identical_across_worker_counts() {
    let one = SystemConfig { workers: 1, ..tiny() };
    let three = SystemConfig { workers: 3, ..tiny() };
    assert_eq!(
        bits(&run_mse_sweep(&one).unwrap()),
        bits(&run_mse_sweep(&three).unwrap())
    );
    assert_eq!(
        bits(&run_ser_sweep(&one).unwrap()),
        bits(&run_ser_sweep(&three).unwrap())
    );
    assert_eq!(
        bits(&run_crb_sweep(&one).unwrap()),
        bits(&run_crb_sweep(&three).unwrap())
    );
    assert_eq!(run_mse_sweep(&one).unwrap(), run_mse_sweep(&one).unwrap());
}

#[test]
fn seed_changes_the_draws() {
    let a = run_mse_sweep(&SystemConfig {
        bounds: false,
        ..tiny()
    })
    .unwrap();
    let b = run_mse_sweep(&SystemConfig {
        bounds: false,
        seed: 100,
        ..tiny()
    })
    .unwrap();
    assert_ne!(bits(&a), bits(&b));
}

#[test]
fn ser_records_count_every_symbol() {
    let recs = run_ser_sweep(&tiny()).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 2);
    for r in &recs {
        assert_eq!(r.metric_name, Metric::Ser);
        assert_eq!(r.trials, 400);
        assert!((0.0..=1.0).contains(&r.value));
    }
    assert_eq!(recs[0].estimator_or_bound, "perfect-csi");
    assert_eq!(recs[1].estimator_or_bound, "estimated-csi");
}

#[test]
fn tau_sweep_uses_the_pilot_length_axis() {
    let cfg = SystemConfig {
        sweep: SweepAxis::Tau,
        tau_grid: vec![4, 12],
        snr_grid_db: vec![0.0],
        oversampling: vec![1],
        bounds: false,
        ..tiny()
    };
    let recs = run_mse_sweep(&cfg).unwrap();
    let lra: Vec<&CurveRecord> = recs.iter().filter(|r| r.estimator_or_bound == "lra-lmmse").collect();
    assert_eq!(lra.len(), 2);
    assert_eq!(lra[0].sweep_name, "tau");
    assert_eq!(lra[1].sweep_value, 12.0);
    assert!(lra[1].value < lra[0].value);
}

#[test]
fn failures_name_the_grid_point() {
    let cfg = SystemConfig {
        snr_grid_db: vec![0.0, f64::NAN],
        ..tiny()
    };
    assert!(run_mse_sweep(&cfg).is_err());
    let cfg = SystemConfig {
        snr_grid_db: vec![400.0],
        oversampling: vec![1],
        ..tiny()
    };
    if let Err(e) = run_crb_sweep(&cfg) {
        assert!(e.to_string().contains("M=1"), "{e}");
    }
}

#[test]
fn records_round_trip_through_files() {
    let recs = run_mse_sweep(&tiny()).unwrap();
    let dir = std::env::temp_dir().join(format!("onebit-records-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for format in [Format::Csv, Format::Json] {
        let path = dir.join(format!("out.{format:?}"));
        emit(&recs, &path, format).unwrap();
        assert_eq!(parse(&path, format).unwrap(), recs);
    }
    let csv = std::fs::read_to_string(dir.join("out.Csv")).unwrap();
    assert!(csv
        .starts_with("sweep_name,sweep_value,m,rho,metric_name,estimator_or_bound,value,ci_half_width,trials,seed\n"));
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        for i in [1, 3, 6, 7] {
            assert!(!cols[i].contains(['e', 'E']), "plain decimals only: {line}");
        }
    }
    assert!(parse(&dir.join("missing.csv"), Format::Csv).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_loading() {
    let dir = std::env::temp_dir().join(format!("onebit-config-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("scenario.cfg");
    std::fs::write(
        &path,
        "# pilot length sweep\nsweep = tau\nsnr_db = 0\ntau_grid = 4, 20, 40\nrho=0.75\n",
    )
    .unwrap();
    let cfg = SystemConfig::load(&path).unwrap();
    assert_eq!(cfg.sweep, SweepAxis::Tau);
    assert_eq!(cfg.tau_grid, vec![4, 20, 40]);
    assert_eq!(cfg.rho, 0.75);
    std::fs::write(&path, "tau_grid = 4\nmystery = 1\n").unwrap();
    let err = SystemConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("mystery"), "{err}");
    assert!(SystemConfig::load(&dir.join("absent.cfg")).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
