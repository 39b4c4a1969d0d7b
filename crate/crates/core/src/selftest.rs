//! Quick numerical self-checks run by `onebit selftest`.

use std::f64::consts::PI;

use crate::estimation::LraLmmse;
use crate::harness::{bound_at, mse_trials, PointSetup, SystemConfig};
use crate::linalg::RMat;
use crate::orthant::{bvn_upper, gaussian_tail};
use crate::quantize::arcsin_covariance_real;
use crate::records::{read_csv, write_csv, CurveRecord, Metric};
use crate::signal::PulseBank;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn tail_value() -> Check {
    let q = gaussian_tail(1.0);
    check(
        "gaussian tail Q(1)",
        (q - 0.158_655_253_931_457).abs() < 1e-12,
        format!("{q:.15}"),
    )
}

fn orthant_closed_form() -> Check {
    let mut worst: f64 = 0.0;
    for &r in &[-0.99f64, -0.6, 0.0, 0.3, 0.95] {
        let exact = 0.25 + r.asin() / (2.0 * PI);
        worst = worst.max((bvn_upper(0.0, 0.0, r) - exact).abs());
    }
    check(
        "orthant probability at the origin",
        worst < 1e-13,
        format!("max error {worst:.2e}"),
    )
}

fn arcsin_law() -> Check {
    let c = RMat::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
    let r = 0.6 / (2.0f64 * 0.5).sqrt();
    let got = arcsin_covariance_real(&c).map(|a| a[(0, 1)]);
    match got {
        Ok(v) => {
            let want = 2.0 / PI * r.asin();
            check("arcsin law", (v - want).abs() < 1e-12, format!("{v:.12} vs {want:.12}"))
        }
        Err(e) => check("arcsin law", false, e.to_string()),
    }
}

fn pulse_response() -> Check {
    match PulseBank::new(0.8, 16, 2) {
        Ok(bank) => {
            let z0 = bank.z_at(0);
            let isi = (1..4).map(|k| bank.z_at(2 * k).abs()).fold(0.0, f64::max);
            check(
                "raised-cosine response",
                (z0 - 1.0).abs() < 1e-12 && isi < 1e-2,
                format!("z(0)={z0:.6}, max symbol-spaced ISI {isi:.2e}"),
            )
        }
        Err(e) => check("raised-cosine response", false, e.to_string()),
    }
}

fn small_config() -> SystemConfig {
    SystemConfig {
        n_t: 2,
        n_r: 4,
        tau: 8,
        trials: 4000,
        channel_draws_for_bounds: 20,
        seed: 7,
        ..SystemConfig::default()
    }
}

fn mse_matches_prediction() -> Check {
    let cfg = small_config();
    let run = || -> crate::Result<(f64, f64, f64)> {
        let setup = PointSetup::new(&cfg, 2, cfg.tau, 5.0)?;
        let predicted = LraLmmse::from_model(&setup.model, &setup.prior)?.analytic_mse();
        let (lra, _) = mse_trials(&setup, cfg.trials, cfg.seed)?;
        let s = crate::estimation::summarize(&lra)?;
        Ok((predicted, s.value, s.ci_half_width))
    };
    match run() {
        Ok((p, v, ci)) => check(
            "LRA-LMMSE empirical vs predicted MSE",
            (p - v).abs() < 2.0 * ci + 1e-3,
            format!("empirical {v:.4} +- {ci:.4}, predicted {p:.4}"),
        ),
        Err(e) => check("LRA-LMMSE empirical vs predicted MSE", false, e.to_string()),
    }
}

fn bound_in_range() -> Check {
    let cfg = small_config();
    let run = || -> crate::Result<Vec<f64>> {
        [1, 2]
            .iter()
            .map(|&m| {
                let setup = PointSetup::new(&cfg, m, cfg.tau, 10.0)?;
                Ok(bound_at(&setup, cfg.channel_draws_for_bounds, cfg.seed)?.0)
            })
            .collect()
    };
    match run() {
        Ok(b) => check(
            "bound below the prior-only value",
            b.iter().all(|&x| x > 0.0 && x < 0.5),
            format!("M=1 {:.4}, M=2 {:.4}", b[0], b[1]),
        ),
        Err(e) => check("bound below the prior-only value", false, e.to_string()),
    }
}

fn csv_round_trip() -> Check {
    let rec = CurveRecord {
        sweep_name: "snr_db".into(),
        sweep_value: 7.5,
        m: 3,
        rho: 0.75,
        metric_name: Metric::Mse,
        estimator_or_bound: "lra-lmmse".into(),
        value: 0.123_456_789_012_345_67,
        ci_half_width: 1e-4,
        trials: 10,
        seed: 3,
    };
    let mut buf = Vec::new();
    let ok = write_csv(std::slice::from_ref(&rec), &mut buf)
        .and_then(|_| read_csv(buf.as_slice()))
        .map(|back| back == vec![rec])
        .unwrap_or(false);
    check("CSV round trip", ok, String::new())
}

/// Runs every check; takes a few seconds.
pub fn run_all() -> Vec<Check> {
    vec![
        tail_value(),
        orthant_closed_form(),
        arcsin_law(),
        pulse_response(),
        csv_round_trip(),
        mse_matches_prediction(),
        bound_in_range(),
    ]
}
