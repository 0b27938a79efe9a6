use proptest::prelude::*;

use wetting_core::certify::{
    delocalization_at, phase_scan, ScanOptions, ScanPoint, ThresholdOptions, Verdict,
};
use wetting_core::kernels::{make_binomial, make_sos, sos_sigma2, validate_kernel};
use wetting_core::potentials::{decouple, make_family, rho, theorem2_lhs, Family, PowerSign};
use wetting_core::rw_oracle::{oracle_partition, path_count};
use wetting_core::spectral::{
    localization_certificate, test_function_bound, top_eigenvalue_bisection, PinnedOperator,
};
use wetting_core::transfer::{log_partition, log_partition_series, transfer_matrix, TransferConfig};
use wetting_core::{Execution, PinningPotential};

fn binomial() -> impl Strategy<Value = f64> {
    (1u32..=50).prop_map(|k| k as f64 / 100.0)
}

fn small_potential() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..0.6f64, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn binomial_kernels_are_members(s2 in binomial()) {
        let k = make_binomial(s2).unwrap();
        let total: f64 = k.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-15);
        prop_assert_eq!(k.p(1), k.p(-1));
        let var: f64 = k.offsets().zip(k.probs()).map(|(o, p)| (o * o) as f64 * p).sum();
        prop_assert!((var - s2).abs() < 1e-15);
        prop_assert!(validate_kernel(&k, 1.0).member());
    }

    #[test]
    fn transfer_matches_oracle(s2 in binomial(), l in 1usize..=10, wall in prop::option::of(0usize..=3), vals in small_potential()) {
        let k = make_binomial(s2).unwrap();
        let pot = PinningPotential::from_values(vals).unwrap();
        let t = log_partition(&k, l, wall, Some(&pot)).unwrap().exp();
        let o = oracle_partition(&k, l, wall, Some(&pot)).unwrap();
        prop_assert!((t - o.value).abs() <= 1e-12 * o.value, "{t} vs {}", o.value);
    }

    #[test]
    fn rho_is_linear(vals in small_potential(), t in 0.0..5.0f64, s2 in binomial()) {
        let pot = PinningPotential::from_values(vals).unwrap();
        let scaled = pot.scaled(t).unwrap();
        let (a, b) = (rho(&scaled, s2).value, t * rho(&pot, s2).value);
        prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
    }

    #[test]
    fn decoupling_reproduces_each_level(vals in small_potential(), b in 0.01..2.0f64, s2 in binomial()) {
        let pot = PinningPotential::from_values(vals.clone()).unwrap();
        let dec = decouple(&pot, b, s2).unwrap();
        for lw in &dec.levels {
            prop_assert!((lw.weight * lw.strength - vals[lw.level]).abs() <= 1e-15 * vals[lw.level].max(1e-300));
        }
    }

    #[test]
    fn localization_lhs_monotone(vals in small_potential(), bump in 0.0..0.3f64, idx in 0usize..4, d in 0usize..20) {
        let pot = PinningPotential::from_values(vals.clone()).unwrap();
        let mut more = vals.clone();
        let i = idx % more.len();
        more[i] += bump;
        let bigger = PinningPotential::from_values(more).unwrap();
        prop_assert!(theorem2_lhs(&bigger, d) >= theorem2_lhs(&pot, d));
        prop_assert!(theorem2_lhs(&pot.scaled(1.5).unwrap(), d) >= theorem2_lhs(&pot, d));
    }

    #[test]
    fn wall_and_pinning_monotonicity(s2 in binomial(), l in 2usize..60, j in 0usize..4, e1 in 0.0..0.4f64, de in 0.0..0.4f64) {
        let k = make_binomial(s2).unwrap();
        let walled = |j: usize| log_partition(&k, l, Some(j), None).unwrap();
        let free = log_partition(&k, l, None, None).unwrap();
        let slack = 1e-13;
        prop_assert!(walled(j) <= walled(j + 1) + slack);
        prop_assert!(walled(j + 1) <= free + slack);
        let p1 = PinningPotential::single(0, e1).unwrap();
        let p2 = PinningPotential::single(0, e1 + de).unwrap();
        prop_assert!(log_partition(&k, l, Some(j), Some(&p1)).unwrap() <= log_partition(&k, l, Some(j), Some(&p2)).unwrap() + slack);
    }

    #[test]
    fn rayleigh_quotient_below_top_eigenvalue(s2 in binomial(), e0 in 0.0..1.5f64, e1 in 0.0..0.5f64, d in 1usize..40) {
        let k = make_binomial(s2).unwrap();
        let pot = PinningPotential::from_values(vec![e0, e1]).unwrap();
        let q = test_function_bound(&k, &pot, d).quotient;
        let op = PinnedOperator::new(&k, Some(&pot), 400).unwrap();
        let top = top_eigenvalue_bisection(&op, 1e-13);
        prop_assert!(q <= top.value + top.residual + 1e-12, "{q} vs {:?}", top);
    }
}

#[test]
fn sos_variance_converges_with_tail_tolerance() {
    let beta = 3.0;
    let errs: Vec<f64> = [1e-6, 1e-10, 1e-14]
        .iter()
        .map(|&t| (make_sos(beta, t).unwrap().sigma2() - sos_sigma2(beta)).abs())
        .collect();
    assert!(errs[0] > errs[1] && errs[1] >= errs[2], "{errs:?}");
    assert!(errs[2] < 1e-11);
}

#[test]
fn motzkin_counts_for_walled_bridges() {
    let k = make_binomial(0.5).unwrap();
    let counts: Vec<u64> = (2..=6).map(|l| path_count(&k, l, Some(0)).unwrap()).collect();
    assert_eq!(counts, vec![2, 4, 9, 21, 51]);
}

#[test]
fn transfer_matrix_is_symmetric() {
    let k = make_binomial(0.3).unwrap();
    let pot = PinningPotential::from_values(vec![0.2, 0.4, 0.1]).unwrap();
    let m = transfer_matrix(&k, 6, Some(0), Some(&pot), 10).unwrap();
    for i in 0..m.len() {
        for j in 0..m.len() {
            let (a, b) = (m[i][j], m[j][i]);
            if a.is_finite() || b.is_finite() {
                assert!((a.exp() - b.exp()).abs() <= 1e-12 * a.exp().max(b.exp()), "{i},{j}");
            }
        }
    }
}

#[test]
fn log_partition_is_convex_in_amplitude() {
    let k = make_binomial(0.25).unwrap();
    let l = 200;
    let base = PinningPotential::from_values(vec![0.3, 0.2, 0.1]).unwrap();
    let f: Vec<f64> = (0..=12)
        .map(|i| {
            let p = base.scaled(0.25 * i as f64).unwrap();
            log_partition(&k, l, Some(0), Some(&p)).unwrap() / l as f64
        })
        .collect();
    for w in f.windows(3) {
        assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12, "{w:?}");
    }
}

#[test]
fn gaussian_local_limit() {
    for s2 in [0.1, 0.5] {
        let k = make_binomial(s2).unwrap();
        let from = (100.0 / s2).ceil() as usize;
        let series = log_partition_series(&k, 4096, None, None, &TransferConfig::default()).unwrap();
        for l in from..=4096 {
            let v = (2.0 * std::f64::consts::PI * s2 * l as f64).sqrt() * series.at(l).exp();
            assert!((v - 1.0).abs() <= 0.1, "sigma2={s2} L={l}: {v}");
        }
    }
}

#[test]
fn walled_ratio_decays_like_inverse_length() {
    // Z^{+,j}/Z ≍ 1/L: fit the exponent on the last decade
    let k = make_binomial(0.25).unwrap();
    let cfg = TransferConfig::default();
    let free = log_partition_series(&k, 8192, None, None, &cfg).unwrap();
    for j in [0, 2] {
        let wall = log_partition_series(&k, 8192, Some(j), None, &cfg).unwrap();
        let r = |l: usize| wall.at(l) - free.at(l);
        let slope = (r(8192) - r(819)) / (8192f64 / 819.0).ln();
        assert!((slope + 1.0).abs() <= 0.1, "j={j}: exponent {slope}");
    }
}

#[test]
fn certified_growth_rate_is_realised() {
    let k = make_binomial(0.25).unwrap();
    let pot = PinningPotential::from_values(vec![0.0, 0.6, 0.3]).unwrap();
    let cert = localization_certificate(&k, &pot);
    assert_eq!(cert.verdict, Verdict::Localized);
    let q = cert.spectral.as_ref().unwrap().quotient;
    assert!(q > 1.0);
    let l = 2048;
    let s = log_partition_series(&k, 2 * l, Some(0), Some(&pot), &TransferConfig::default()).unwrap();
    let growth = (s.at(2 * l) - s.at(l)) / l as f64;
    assert!(growth >= q.ln() - 0.01, "{growth} vs {}", q.ln());
}

#[test]
fn verdicts_are_consistent_and_monotone_along_a_ray() {
    let k = make_binomial(0.5).unwrap();
    let fam = Family::Power { delta: 0.5, sign: PowerSign::Plus };
    let opts = ThresholdOptions::default();
    let mut seen_localized = false;
    for i in 1..=12 {
        let a = 0.03 * i as f64;
        let pot = make_family(&fam, a, 1e-10).unwrap();
        let loc = localization_certificate(&k, &pot).verdict == Verdict::Localized;
        let del = delocalization_at(&k, &pot, &opts).unwrap().verdict == Verdict::DelocalizedEmpirical;
        assert!(!(loc && del), "amplitude {a} got both verdicts");
        assert!(loc || !seen_localized, "localization lost at amplitude {a}");
        seen_localized |= loc;
    }
    assert!(seen_localized);
}

#[test]
fn scan_is_identical_across_execution_modes() {
    let k = make_binomial(0.5).unwrap();
    let points: Vec<ScanPoint> = [0.05, 0.2, 0.4]
        .iter()
        .map(|&a| ScanPoint {
            kernel_spec: "binomial:sigma2=0.5".into(),
            kernel: k.clone(),
            family: Family::Single { level: 0 },
            amplitude: a,
        })
        .collect();
    let mut opts = ScanOptions { deterministic: true, ..Default::default() };
    opts.exec = Execution::Sequential;
    let a = phase_scan(&points, &opts);
    opts.exec = Execution::Parallel;
    let b = phase_scan(&points, &opts);
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.error.is_none()));
}
