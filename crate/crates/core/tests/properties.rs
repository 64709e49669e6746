use fieldlab::decomposition::{decompose_superlinear, identity_mismatch};
use fieldlab::field::{CoefficientField, TruncationSpec};
use fieldlab::noise::ThreePointLaw;
use fieldlab::stats::{ks_distance_to_normal, mean_abs_ratio, summarize};
use fieldlab::tower::{shifted_diff, TowerFunction, TowerScale};
use fieldlab::weights::{exact_second_moment, sample_partial_sum, sample_partial_sums, window_weights, window_weights_naive};
use proptest::prelude::*;

fn field_strategy() -> impl Strategy<Value = CoefficientField> {
    prop_oneof![
        (4.5f64..9.0).prop_map(|a| CoefficientField::superlinear(a).unwrap()),
        Just(CoefficientField::l1_not_l2()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn law_is_centered(v in 1e-3f64..1e3, p in 1e-6f64..=0.5) {
        let law = ThreePointLaw::new(v, p).unwrap();
        let support = [(law.v(), law.p()), (-law.v(), law.p()), (0.0, 1.0 - 2.0 * law.p())];
        let mean: f64 = support.iter().map(|(x, q)| x * q).sum();
        prop_assert_eq!(mean, 0.0);
    }

    #[test]
    fn prefix_weights_equal_naive(field in field_strategy(), n1 in 1u64..6, n2 in 1u64..6, k_max in 2u32..5, lag in 0u32..4) {
        let trunc = TruncationSpec::for_field(&field, k_max, lag);
        let fast = window_weights(&field, n1, n2, &trunc).unwrap();
        let naive = window_weights_naive(&field, n1, n2, &trunc);
        prop_assert_eq!(fast.scales.len(), naive.scales.len());
        let scale = fast.max_weight().max(1.0);
        for (a, b) in fast.scales.iter().zip(&naive.scales) {
            prop_assert_eq!((a.s0, a.t0, a.rows, a.cols), (b.s0, b.t0, b.rows, b.cols));
            for (x, y) in a.w.iter().zip(&b.w) {
                prop_assert!((x - y).abs() <= 1e-12 * scale, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn superlinear_weights_fall_away_from_window(alpha in 4.5f64..9.0, n1 in 1u64..7, n2 in 1u64..7, lag in 1u32..6) {
        let field = CoefficientField::superlinear(alpha).unwrap();
        let w = window_weights(&field, n1, n2, &TruncationSpec::for_field(&field, 4, lag)).unwrap();
        for sw in &w.scales {
            for s in sw.s0..=0 {
                for t in sw.t0..=0 {
                    let here = sw.get(s, t);
                    prop_assert!(sw.get(s - 1, t) <= here && sw.get(s, t - 1) <= here, "k={} s={} t={}", sw.k, s, t);
                }
            }
        }
    }

    #[test]
    fn second_moment_transpose_invariant(field in field_strategy(), n1 in 1u64..8, n2 in 1u64..8, lag in 0u32..5) {
        let trunc = TruncationSpec::for_field(&field, 5, lag);
        let a = exact_second_moment(&window_weights(&field, n1, n2, &trunc).unwrap(), field.laws()).unwrap();
        let b = exact_second_moment(&window_weights(&field, n2, n1, &trunc).unwrap(), field.laws()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn sampling_is_order_free(seed in any::<u64>(), first in 0u64..50, count in 1u64..8) {
        let field = CoefficientField::superlinear(5.0).unwrap();
        let w = window_weights(&field, 5, 4, &TruncationSpec::for_field(&field, 6, 3)).unwrap();
        let batch = sample_partial_sums(&w, field.laws(), seed, first, count).unwrap();
        for s in batch.iter().rev() {
            let single = sample_partial_sum(&w, field.laws(), seed, s.replication).unwrap();
            prop_assert_eq!(single.value.to_bits(), s.value.to_bits());
        }
    }

    #[test]
    fn decomposition_recombines(alpha in 4.5f64..8.0, k_max in 2u32..6, lag in 0u32..5) {
        let field = CoefficientField::superlinear(alpha).unwrap();
        let trunc = TruncationSpec::for_field(&field, k_max, lag);
        let terms = decompose_superlinear(&field, &trunc).unwrap();
        prop_assert!(identity_mismatch(&terms, &field.form(&trunc)) <= 1e-13);
    }

    #[test]
    fn summarize_permutation_invariant(mut xs in prop::collection::vec(-1e3f64..1e3, 2..200), seed in any::<u64>()) {
        let a = summarize(&xs, &[0.5, 10.0]).unwrap();
        let mut rng = fieldlab::rng::CounterStream::new(seed);
        for i in (1..xs.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
        let b = summarize(&xs, &[0.5, 10.0]).unwrap();
        prop_assert_eq!(&a.quantiles, &b.quantiles);
        prop_assert_eq!(&a.exceedances, &b.exceedances);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
        prop_assert!(close(a.mean, b.mean) && close(a.mean_abs, b.mean_abs) && close(a.variance, b.variance));
    }

    #[test]
    fn ks_scale_equivariant(xs in prop::collection::vec(-5f64..5.0, 10..300), sigma in 0.1f64..3.0, e in -8i32..8, c in 0.01f64..100.0) {
        let base = ks_distance_to_normal(&xs, sigma).unwrap().statistic;
        // powers of two rescale without rounding
        let p = 2f64.powi(e);
        let scaled: Vec<f64> = xs.iter().map(|x| x * p).collect();
        prop_assert_eq!(ks_distance_to_normal(&scaled, sigma * p).unwrap().statistic, base);
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        prop_assert!((ks_distance_to_normal(&scaled, sigma * c).unwrap().statistic - base).abs() < 1e-12);
    }

    #[test]
    fn mean_abs_sign_flip_invariant(xs in prop::collection::vec(-5f64..5.0, 2..300), flips in prop::collection::vec(any::<bool>(), 300), sigma in 0.1f64..3.0) {
        let flipped: Vec<f64> = xs.iter().zip(&flips).map(|(x, f)| if *f { -x } else { *x }).collect();
        let a = mean_abs_ratio(&xs, sigma).unwrap();
        let b = mean_abs_ratio(&flipped, sigma).unwrap();
        prop_assert_eq!(a.ratio, b.ratio);
    }

    #[test]
    fn tower_telescoping(k in 4u32..14, n_frac in 0.0f64..1.0, probe in prop::collection::vec(any::<u64>(), 16)) {
        let sc = TowerScale::new(k).unwrap();
        let g = TowerFunction::new(sc);
        let n = 1 + ((sc.max_shift() - 1) as f64 * n_frac) as u64;
        let d1 = shifted_diff(&g, 1).unwrap();
        let dn = shifted_diff(&g, n).unwrap();
        let mut levels: Vec<u64> = probe.iter().map(|p| p % sc.levels).collect();
        levels.extend(dn.entries.iter().map(|e| e.0).take(64));
        for j in levels {
            // sum_{i<n} (U^i d1)[j] = d1[j] + d1[j-1] + ... + d1[j-n+1]
            let lo = j as i64 - n as i64 + 1;
            let total: i64 = d1
                .entries
                .iter()
                .filter(|&&(l, _)| {
                    let l = l as i64;
                    (lo..=j as i64).contains(&l) || (lo..=j as i64).contains(&(l - sc.levels as i64))
                })
                .map(|e| e.1)
                .sum();
            prop_assert_eq!(total, dn.height(j), "k={} n={} level={}", k, n, j);
        }
        prop_assert_eq!(dn.entries.iter().map(|e| e.1).sum::<i64>(), 0);
    }
}
