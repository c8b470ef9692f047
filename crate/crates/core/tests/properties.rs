use proptest::prelude::*;
use streamaad_core::eval::{accuracy, decide, wilcoxon_signed_rank_exact};
use streamaad_core::numerics::softmax;
use streamaad_core::signal::{bandpass, resample, window_count, Band};
use streamaad_core::Tensor;

/// Brute-force signed-rank p-value: walks all 2^m sign patterns with
/// float ranks, sharing nothing with the library beyond the definition.
fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| d.abs() > 1e-12)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let m = d.len();
    let mut ranks = vec![0.0; m];
    for i in 0..m {
        let below = d.iter().filter(|v| v.abs() < d[i].abs() - 1e-12).count();
        let tied = d
            .iter()
            .filter(|v| (v.abs() - d[i].abs()).abs() <= 1e-12)
            .count();
        ranks[i] = below as f64 + (tied as f64 + 1.0) / 2.0;
    }
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = (0..m).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let obs = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << m) {
        let w: f64 = (0..m)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w.min(total - w) <= obs + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << m) as f64
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // coarse grid so that ties and zero differences are common
    (1usize..=10).prop_flat_map(|n| {
        (
            prop::collection::vec((0i32..8).prop_map(|v| v as f64 / 8.0), n),
            prop::collection::vec((0i32..8).prop_map(|v| v as f64 / 8.0), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wilcoxon_matches_enumeration((a, b) in paired()) {
        let r = wilcoxon_signed_rank_exact(&a, &b).unwrap();
        let oracle = brute_force_p(&a, &b);
        prop_assert!((r.p_value - oracle).abs() < 1e-12, "{} vs {}", r.p_value, oracle);
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let s = wilcoxon_signed_rank_exact(&b, &a).unwrap();
        prop_assert_eq!(r.p_value, s.p_value);
    }

    #[test]
    fn wilcoxon_eight_never_below_floor(a in prop::collection::vec(0.0f64..1.0, 8), b in prop::collection::vec(0.0f64..1.0, 8)) {
        let r = wilcoxon_signed_rank_exact(&a, &b).unwrap();
        prop_assert!(r.p_value >= 2.0 / 256.0);
    }

    #[test]
    fn window_count_matches_enumeration(m in 0usize..2000, len in 1usize..300, stride in 1usize..200) {
        let enumerated = (0..).map(|i| i * stride).take_while(|s| s + len <= m).count();
        prop_assert_eq!(window_count(m, len, stride), enumerated);
    }

    #[test]
    fn decide_invariant_under_logit_scaling(z0 in -5.0f64..5.0, z1 in -5.0f64..5.0, k in 0.01f64..20.0) {
        prop_assume!((z0 - z1).abs() > 1e-9);
        let p = softmax(&Tensor::vector(vec![z0, z1])).unwrap();
        let q = softmax(&Tensor::vector(vec![k * z0, k * z1])).unwrap();
        prop_assert_eq!(decide(p.data()), decide(q.data()));
    }

    #[test]
    fn accuracy_complements(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..50)) {
        let (d, l): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let flipped: Vec<u8> = l.iter().map(|v| 1 - v).collect();
        let sum = accuracy(&d, &l).unwrap() + accuracy(&d, &flipped).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn preprocessing_is_linear_and_deterministic(
        x in prop::collection::vec(-1.0f64..1.0, 800 * 2),
        a in -4.0f64..4.0,
    ) {
        let x = Tensor::new([800, 2], x).unwrap();
        let ax = x.map(|v| a * v);
        let run = |t: &Tensor<f64>| {
            let r = resample(t, 1000, 128).unwrap();
            bandpass(&r, 128, Band::BROADBAND, 4, true).unwrap()
        };
        let y = run(&x);
        prop_assert_eq!(&y, &run(&x));
        let scaled = y.map(|v| a * v);
        let tol = 1e-12 * (1.0 + y.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) * a.abs());
        prop_assert!(run(&ax).max_abs_diff(&scaled) <= tol);
    }
}
