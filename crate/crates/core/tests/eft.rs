use bart_bmm::eft::{self, EftGp, Expansion, InputMap};
use bart_bmm::Error;
use proptest::prelude::*;

fn gamma_fn(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

#[test]
fn weak_coefficients_match_closed_form() {
    let s = eft::weak_coefficients(6);
    let fact = [1.0, 1.0, 2.0, 6.0];
    for (t, st) in s.iter().enumerate() {
        let want = if t % 2 == 0 {
            2f64.sqrt() * gamma_fn(t as f64 + 0.5) / fact[t / 2] * (-4f64).powi((t / 2) as i32)
        } else {
            0.0
        };
        assert!((st - want).abs() <= 1e-12 * want.abs().max(1.0), "t={t}");
    }
    assert!((s[0] - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
}

#[test]
fn strong_leading_coefficient() {
    let l = eft::strong_coefficients(4);
    assert!((l[0] - 1.812_804_954_110_954).abs() < 1e-9);
    let mut fact = 1.0;
    for (t, lt) in l.iter().enumerate() {
        if t > 0 {
            fact *= t as f64;
        }
        let want = gamma_fn(0.5 * t as f64 + 0.25) / (2.0 * fact) * (-0.5f64).powi(t as i32);
        assert!((lt - want).abs() <= 1e-12 * want.abs());
    }
}

#[test]
fn expansions_track_the_true_system_where_valid() {
    let weak = Expansion::weak(2);
    let strong = Expansion::strong(4);
    let small = bart_bmm::dataset::true_system_phi4(0.03);
    assert!((weak.evaluate(&[0.03]).unwrap() - small).abs() < 1e-3);
    let large = bart_bmm::dataset::true_system_phi4(5.0);
    assert!((strong.evaluate(&[5.0]).unwrap() - large).abs() < 1e-4);
}

#[test]
fn strong_domain_error() {
    let strong = Expansion::strong(2);
    assert!(matches!(strong.evaluate(&[0.0]), Err(Error::Domain(_))));
    assert!(matches!(strong.evaluate(&[-1.0]), Err(Error::Domain(_))));
}

#[test]
fn extraction_errors() {
    assert!(eft::extract_coefficients(&[], 0.5, 1.0).is_err());
    assert!(matches!(
        eft::extract_coefficients(&[1.0, 2.0], 0.5, 0.0),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        eft::extract_coefficients(&[1.0, 2.0], 0.0, 1.0),
        Err(Error::Domain(_))
    ));
}

proptest! {
    #[test]
    fn extraction_inverts_partial_sums(x in 0.01f64..1.0, order in 0usize..8) {
        let e = Expansion::weak(order);
        let runs: Vec<f64> = (0..=order).map(|k| e.evaluate_partial(k, &[x]).unwrap()).collect();
        let c = eft::extract_coefficients(&runs, x, 1.0).unwrap();
        let mut acc = 0.0;
        for (k, ck) in c.iter().enumerate() {
            acc += ck * x.powi(k as i32);
            prop_assert!((acc - runs[k]).abs() <= 1e-12 * runs[k].abs());
        }
    }

    #[test]
    fn truncation_cov_is_symmetric_and_psd(
        xs in proptest::collection::vec(0.02f64..0.6, 10),
        order in 0usize..5,
        cbar2 in 0.01f64..10.0,
    ) {
        let grid: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let gp = EftGp::with_params(0.0, cbar2, 1.0, InputMap::Identity, InputMap::Constant(1.0)).unwrap();
        let m = eft::truncation_cov_matrix(&gp, order, &grid);
        prop_assert_eq!(&m, &m.transpose());
        let scale = m.diagonal().max();
        prop_assert!(m.symmetric_eigenvalues().min() >= -1e-8 * scale);
    }
}

#[test]
fn capped_points_are_flagged() {
    let gp =
        EftGp::with_params(0.0, 1.0, 1.0, InputMap::Reciprocal, InputMap::InverseSqrt).unwrap();
    let inside = eft::truncation_cov(&gp, 4, &[2.0], &[3.0]);
    assert!(!inside.capped);
    let capped = eft::truncation_cov(&gp, 4, &[0.5], &[0.5]);
    assert!(capped.capped && capped.value.is_finite() && capped.value > 0.0);
}
