use flare_core::stats::{abs_loss_diff, empirical_cdf, ks_statistic, window_std, EmpiricalSample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `sup |F_a - F_b|` evaluated at every merged sample point by counting.
fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn two_pass_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn ks_equals_brute_force_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let n = rng.gen_range(1..60);
        let m = rng.gen_range(1..60);
        // Coarse grids force ties within and across samples.
        let levels = if case % 3 == 0 { 5.0 } else { 1000.0 };
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| (rng.gen::<f64>() * levels).floor() / levels).collect() };
        let a = draw(n);
        let b = draw(m);
        let fast = ks_statistic(&EmpiricalSample::new(a.clone()).unwrap(), &EmpiricalSample::new(b.clone()).unwrap());
        assert_eq!(fast, brute_force_ks(&a, &b), "case {case}: {a:?} vs {b:?}");
    }
}

#[test]
fn ks_known_values() {
    let s = |v: &[f64]| EmpiricalSample::new(v.to_vec()).unwrap();
    assert_eq!(ks_statistic(&s(&[0.1, 0.2]), &s(&[0.1, 0.2])), 0.0);
    assert_eq!(ks_statistic(&s(&[0.1, 0.2]), &s(&[0.8, 0.9])), 1.0);
    assert_eq!(ks_statistic(&s(&[0.5]), &s(&[0.5, 0.9])), 0.5);
}

#[test]
fn window_std_matches_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let n = rng.gen_range(2..40);
        let offset = rng.gen_range(-1e3..1e3);
        let xs: Vec<f64> = (0..n).map(|_| offset + rng.gen_range(-1.0..1.0)).collect();
        let got = window_std(&xs).unwrap();
        let want = two_pass_std(&xs);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn ks_is_symmetric_and_bounded(
        a in prop::collection::vec(0.0f64..1.0, 1..50),
        b in prop::collection::vec(0.0f64..1.0, 1..50),
    ) {
        let sa = EmpiricalSample::new(a.clone()).unwrap();
        let sb = EmpiricalSample::new(b.clone()).unwrap();
        let d = ks_statistic(&sa, &sb);
        prop_assert_eq!(d, ks_statistic(&sb, &sa));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(ks_statistic(&sa, &sa), 0.0);
    }

    #[test]
    fn ecdf_is_monotone(v in prop::collection::vec(0.0f64..1.0, 1..50), x in 0.0f64..1.0, dx in 0.0f64..0.5) {
        let s = EmpiricalSample::new(v).unwrap();
        prop_assert!(empirical_cdf(&s, x) <= empirical_cdf(&s, x + dx));
        prop_assert_eq!(empirical_cdf(&s, 1.0), 1.0);
    }

    #[test]
    fn constant_window_has_zero_spread(c in -10.0f64..10.0, n in 2usize..30) {
        prop_assert_eq!(window_std(&vec![c; n]).unwrap(), 0.0);
    }

    #[test]
    fn abs_diff_is_nonnegative(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30)) {
        let (t, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d = abs_loss_diff(&t, &v).unwrap();
        prop_assert!(d.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn short_or_mismatched_windows_are_rejected() {
    assert!(window_std(&[1.0]).is_err());
    assert!(abs_loss_diff(&[1.0, 2.0], &[1.0]).is_err());
    assert!(EmpiricalSample::new(vec![]).is_err());
    assert!(EmpiricalSample::new(vec![f64::NAN]).is_err());
}
