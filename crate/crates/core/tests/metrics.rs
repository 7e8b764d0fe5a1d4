mod common;

use common::rng;
use mbrsep::metrics::*;
use mbrsep::Error;
use proptest::prelude::*;
use rand::Rng;

fn noise(len: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt against `basis` (assumed orthonormal) and normalise.
fn orthonormal(mut v: Vec<f64>, basis: &[&[f64]]) -> Vec<f64> {
    for b in basis {
        let c = dot(&v, b);
        v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= c * y);
    }
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

#[test]
fn perfect_estimate_is_capped() {
    let mut r = rng(1);
    let s1 = noise(8000, &mut r);
    let s2 = noise(8000, &mut r);
    for est in [s1.clone(), s1.iter().map(|v| -2.5 * v).collect()] {
        let res = bss_eval(&est, &[&s1, &s2], 0, DEFAULT_FILTER_LEN).unwrap();
        assert_eq!(res.capped(), ([CAP_DB; 3], true), "{res:?}");
    }
}

#[test]
fn orthonormal_mixture_closed_form() {
    let mut r = rng(2);
    let s1 = orthonormal(noise(4000, &mut r), &[]);
    let s2 = orthonormal(noise(4000, &mut r), &[&s1]);
    let est: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + 0.5 * b).collect();
    let d = bss_decompose(&est, &[&s1, &s2], 0, 1).unwrap();
    for t in 0..4000 {
        assert!((d.s_target[t] - s1[t]).abs() < 1e-9);
        assert!((d.e_interf[t] - 0.5 * s2[t]).abs() < 1e-9);
        assert!(d.e_artif[t].abs() < 1e-9);
    }
    let res = bss_eval(&est, &[&s1, &s2], 0, 1).unwrap();
    let expected = 10.0 * (1.0f64 / 0.25).log10();
    assert!((res.sdr - expected).abs() < 0.01 && (res.sir - expected).abs() < 0.01);
    assert!((res.sdr - 6.02).abs() < 0.01);
    let (vals, capped) = res.capped();
    assert!(capped && vals[2] == CAP_DB);
}

#[test]
fn orthogonal_noise_is_pure_artifact() {
    let mut r = rng(3);
    let s1 = noise(3000, &mut r);
    let s2 = noise(3000, &mut r);
    // Orthogonalise against s1 and s2 with filter_len = 1.
    let q1 = orthonormal(s1.clone(), &[]);
    let q2 = orthonormal(s2.clone(), &[&q1]);
    let n = orthonormal(noise(3000, &mut r), &[&q1, &q2]);
    let est: Vec<f64> = s1.iter().zip(&n).map(|(s, e)| s + 3.0 * e).collect();
    let res = bss_eval(&est, &[&s1, &s2], 0, 1).unwrap();
    assert!(res.sir.is_infinite());
    assert!((res.sdr - res.sar).abs() < 1e-9);
    let expected = 10.0 * (dot(&s1, &s1) / 9.0).log10();
    assert!((res.sdr - expected).abs() < 1e-9);
}

#[test]
fn degenerate_references() {
    let mut r = rng(4);
    let s1 = noise(1000, &mut r);
    let zero = vec![0.0; 1000];
    let err = bss_eval(&s1, &[&s1, &zero], 0, 4).unwrap_err();
    assert!(matches!(err, Error::Singular { index: 1 }), "{err}");
    assert!(err.to_string().contains("reference 1"));
    let err = bss_eval(&s1, &[&s1, &s1], 0, 1).unwrap_err();
    assert!(matches!(err, Error::Singular { index: 1 }));
}

#[test]
fn estimate_orthogonal_to_target_is_an_error() {
    let mut r = rng(5);
    let s1 = orthonormal(noise(500, &mut r), &[]);
    let s2 = orthonormal(noise(500, &mut r), &[&s1]);
    assert!(bss_eval(&s2, &[&s1, &s2], 0, 1).is_err());
    assert!(bss_eval(&s1, &[&s1], 0, 1).is_ok());
    assert!(bss_eval(&s1[..10], &[&s1], 0, 1).is_err());
}

/// Two-sided p by enumerating all sign assignments of the ranks 1..=n.
fn brute_force_p(n: usize, w: f64) -> f64 {
    let total = (n * (n + 1)) as f64 / 2.0;
    let lo = w.min(total - w);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: usize = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).sum();
        if (s as f64) <= lo {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn wilcoxon_exact_small_samples() {
    let b = vec![0.0; 6];
    let a: Vec<f64> = (1..=6).map(|i| i as f64 * 0.3).collect();
    let r5 = wilcoxon_signed_rank(&a[..5], &b[..5]).unwrap();
    assert_eq!((r5.statistic, r5.method, r5.n_effective), (0.0, PMethod::Exact, 5));
    assert!((r5.p_value - 0.0625).abs() < 1e-15);
    assert!((r5.p_value - brute_force_p(5, 15.0)).abs() < 1e-15);
    let r6 = wilcoxon_signed_rank(&a, &b).unwrap();
    assert!((r6.p_value - 0.03125).abs() < 1e-15);
    assert!(wilcoxon_signed_rank(&a, &a).is_err());
    assert!(wilcoxon_signed_rank(&a[..4], &b[..4]).is_err());
    // zero differences are dropped before counting
    let mut a7 = a.clone();
    a7.push(1.0);
    let mut b7 = b.clone();
    b7.push(1.0);
    assert_eq!(wilcoxon_signed_rank(&a7, &b7).unwrap().n_effective, 6);
}

#[test]
fn wilcoxon_matches_enumeration() {
    let mut r = rng(6);
    for n in 5..=14 {
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.5)).collect();
        let b = vec![0.0; n];
        let rep = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!((rep.p_value - brute_force_p(n, rep.statistic)).abs() < 1e-12, "n={n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn decomposition_sums_back_and_is_orthogonal(seed in 0u64..10_000, len in 200usize..600, taps in 1usize..10) {
        let mut r = rng(seed);
        let s1 = noise(len, &mut r);
        let s2 = noise(len, &mut r);
        let est = noise(len, &mut r);
        let d = bss_decompose(&est, &[&s1, &s2], 0, taps).unwrap();
        let scale = dot(&est, &est);
        for t in 0..d.s_target.len() {
            let sum = d.s_target[t] + d.e_interf[t] + d.e_artif[t];
            let want = if t < len { est[t] } else { 0.0 };
            prop_assert!((sum - want).abs() <= 1e-10 * scale.sqrt());
        }
        prop_assert!(dot(&d.s_target, &d.e_interf).abs() < 1e-8 * scale);
        prop_assert!(dot(&d.s_target, &d.e_artif).abs() < 1e-8 * scale);
        prop_assert!(dot(&d.e_interf, &d.e_artif).abs() < 1e-8 * scale);
    }

    #[test]
    fn span_members_stay_capped(seed in 0u64..10_000, alpha in prop_oneof![-4.0f64..-0.1, 0.1f64..4.0]) {
        let mut r = rng(seed);
        let s1 = noise(700, &mut r);
        let s2 = noise(700, &mut r);
        let est: Vec<f64> = s1.iter().map(|v| alpha * v).collect();
        let res = bss_eval(&est, &[&s1, &s2], 0, 16).unwrap();
        prop_assert!(res.sdr.is_infinite());
    }

    #[test]
    fn exact_and_normal_agree_for_moderate_n(seed in 0u64..10_000, n in 15usize..=20) {
        let mut r = rng(seed);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.3)).collect();
        let b = vec![0.0; n];
        let exact = wilcoxon_signed_rank(&a, &b).unwrap();
        let total = (n * (n + 1)) as f64 / 2.0;
        let mean = total / 2.0;
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0;
        // Continuity-corrected normal tail, computed independently here.
        let z = ((mean - exact.statistic).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = (libm::erfc(z / std::f64::consts::SQRT_2)).min(1.0);
        prop_assert!((exact.p_value - normal).abs() < 0.02, "{} vs {}", exact.p_value, normal);
    }
}
