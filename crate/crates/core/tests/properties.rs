use num_complex::Complex64;
use onebit_core::detection::{qpsk_demod, qpsk_mod};
use onebit_core::linalg::{CMat, CVec};
use onebit_core::orthant::{bvn_upper, gaussian_tail};
use onebit_core::quantize::arcsin_covariance;
use onebit_core::records::format_decimal;
use onebit_core::rng::{stream, Purpose};
use onebit_core::signal::{rrc_taps, PulseBank};
use onebit_core::system::{complex_unstack, make_pilots, real_stack, real_stack_matrix};
use proptest::prelude::*;

fn complex_matrix(r: usize, c: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), r * c)
        .prop_map(move |v| CMat::from_iterator(r, c, v.into_iter().map(|(a, b)| Complex64::new(a, b))))
}

proptest! {
    #[test]
    fn orthant_identities(h in -4.0..4.0f64, k in -4.0..4.0f64, r in -0.999..0.999f64) {
        let p = bvn_upper(h, k, r);
        let (qh, qk) = (gaussian_tail(h), gaussian_tail(k));
        prop_assert!((p - bvn_upper(k, h, r)).abs() < 1e-12);
        // P(X > h, Y > k) + P(X > h, Y <= k) = Q(h)
        prop_assert!((p + bvn_upper(h, -k, -r) - qh).abs() < 1e-10);
        prop_assert!(p >= (qh + qk - 1.0).max(0.0) - 1e-12);
        prop_assert!(p <= qh.min(qk) + 1e-12);
        prop_assert!(bvn_upper(h + 0.1, k, r) <= p + 1e-12);
    }

    #[test]
    fn arcsin_covariance_is_a_valid_covariance(a in complex_matrix(4, 4), ridge in 0.01..2.0f64) {
        let c = &a * a.adjoint() + CMat::identity(4, 4) * Complex64::new(ridge, 0.0);
        let q = arcsin_covariance(&c).unwrap();
        prop_assert!((&q - q.adjoint()).camax() < 1e-14);
        for i in 0..4 {
            prop_assert_eq!(q[(i, i)], Complex64::new(1.0, 0.0));
        }
        // the real-stacked form of a complex covariance must be PSD
        let eig = real_stack_matrix(&q).symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > -1e-10);
    }

    #[test]
    fn decimal_text_round_trips(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let s = format_decimal(x);
        prop_assert!(!s.contains(['e', 'E']));
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn qpsk_round_trips(bits in prop::collection::vec(0u8..2, 0..64).prop_filter("even", |b| b.len() % 2 == 0)) {
        let s = qpsk_mod(&bits).unwrap();
        prop_assert!(s.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        prop_assert_eq!(qpsk_demod(&s), bits);
    }

    #[test]
    fn taps_and_response_structure(beta in 0.05..1.0f64, n in 1usize..12, m in 1usize..5) {
        let t = rrc_taps(beta, n, m).unwrap();
        let e: f64 = t.taps().iter().map(|x| x * x).sum();
        prop_assert!((e - 1.0).abs() < 1e-12);
        let bank = PulseBank::new(beta, n, m).unwrap();
        prop_assert_eq!(bank.z_at(0), 1.0);
        prop_assert!(bank.z_lags.iter().all(|z| z.abs() <= 1.0 + 1e-12));
        prop_assert_eq!(bank.z_at(-3), bank.z_at(3));
    }

    #[test]
    fn pilots_orthogonal_for_any_shape(n_t in 1usize..7, extra in 0usize..30, seed in any::<u64>()) {
        let tau = n_t + extra;
        let x = make_pilots(n_t, tau, &mut stream(seed, 0, Purpose::Pilots)).unwrap();
        let gram = x.adjoint() * &x;
        let want = CMat::identity(n_t, n_t) * Complex64::new(tau as f64, 0.0);
        prop_assert!((gram - want).camax() < 1e-9);
    }

    #[test]
    fn real_stacking_is_a_homomorphism(a in complex_matrix(3, 2), v in complex_matrix(2, 1)) {
        let v = CVec::from_column_slice(v.as_slice());
        let lhs = real_stack(&(&a * &v));
        let rhs = real_stack_matrix(&a) * real_stack(&v);
        prop_assert!((lhs - rhs).amax() < 1e-12);
        prop_assert_eq!(complex_unstack(&real_stack(&v)).unwrap(), v);
    }
}
