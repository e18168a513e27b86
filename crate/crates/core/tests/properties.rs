use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vipera_core::dataset::{split_manifest, split_sizes, synthetic_manifest, Crf, Generator, Split};
use vipera_core::head::prototype_score;
use vipera_core::metrics::{auc, EvalRecord};
use vipera_core::numcore::{matmul, sigmoid, softmax_rows, softplus, softplus_inverse};
use vipera_core::sampler::{aggregate, plan_training_windows, plan_windows, Label, WindowPlan};
use vipera_core::trainer::{adam_step, lr_schedule_update, AdamConfig, AdamState, TrainConfig};
use vipera_core::Matrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f32..2.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn records() -> impl Strategy<Value = Vec<EvalRecord>> {
    // a coarse score grid forces ties
    prop::collection::vec((any::<bool>(), 0u8..12), 2..120).prop_map(|v| {
        let mut recs: Vec<EvalRecord> = v
            .into_iter()
            .map(|(fake, q)| {
                let (label, generator) = if fake {
                    (Label::Fake, Generator::Seine)
                } else {
                    (Label::Real, Generator::Real)
                };
                EvalRecord::new("v", label, generator, Crf::Uncompressed, q as f64 / 11.0)
            })
            .collect();
        recs[0].label = Label::Fake;
        recs[1].label = Label::Real;
        recs
    })
}

fn brute_auc(recs: &[EvalRecord]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for f in recs.iter().filter(|r| r.label == Label::Fake) {
        for r in recs.iter().filter(|r| r.label == Label::Real) {
            pairs += 1.0;
            if f.phi > r.phi {
                num += 1.0;
            } else if f.phi == r.phi {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn assert_plan_shape(plan: &WindowPlan, n: usize, b: usize, j: usize) {
    assert_eq!(plan.starts.len(), b);
    assert_eq!(plan.frame_indices.len(), b);
    for (&s, idx) in plan.starts.iter().zip(&plan.frame_indices) {
        assert!(s <= n.saturating_sub(j));
        assert_eq!(idx.len(), j);
        for (i, &f) in idx.iter().enumerate() {
            assert_eq!(f, (s + i).min(n - 1));
        }
    }
}

proptest! {
    #[test]
    fn matmul_is_associative((a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
        .prop_flat_map(|(m, k, l, n)| (matrix(m, k), matrix(k, l), matrix(l, n))))
    {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.frobenius_distance(&right).unwrap() < 1e-4 * (1.0 + left.frobenius_norm()));
    }

    #[test]
    fn matmul_transpose_rule((a, b) in (1usize..6, 1usize..6, 1usize..6)
        .prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n))))
    {
        let lhs = matmul(&a, &b).unwrap().transpose();
        let rhs = matmul(&b.transpose(), &a.transpose()).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert_eq!(matmul(&a, &Matrix::identity(a.cols())).unwrap(), a);
    }

    #[test]
    fn sigmoid_symmetry_and_range(x in -800.0f64..800.0) {
        let (p, q) = (sigmoid(x), sigmoid(-x));
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((p + q - 1.0).abs() < 1e-12);
        prop_assert!(sigmoid(x + 1e-3) >= p);
    }

    #[test]
    fn softplus_round_trip(x in -20.0f64..30.0) {
        let y = softplus(x);
        prop_assert!(y > 0.0);
        prop_assert!((softplus_inverse(y) - x).abs() < 1e-6 * (1.0 + x.abs()));
    }

    #[test]
    fn softmax_rows_are_distributions(m in (1usize..6, 1usize..9).prop_flat_map(|(r, c)| matrix(r, c))) {
        let s = softmax_rows(&m);
        for i in 0..s.rows() {
            let row = s.row(i);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn planned_windows_are_consecutive(n in 1usize..400, b in 1usize..12, j in 1usize..20) {
        let plan = plan_windows(n, b, j).unwrap();
        assert_plan_shape(&plan, n, b, j);
        prop_assert_eq!(plan.starts[0], 0);
        prop_assert!(plan.starts.windows(2).all(|w| w[0] <= w[1]));
        if b > 1 {
            prop_assert_eq!(*plan.starts.last().unwrap(), n.saturating_sub(j));
        }
    }

    #[test]
    fn training_windows_stay_in_range(n in 1usize..400, b in 1usize..12, j in 1usize..20, seed in any::<u64>()) {
        let plan = plan_training_windows(n, b, j, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_plan_shape(&plan, n, b, j);
    }

    #[test]
    fn decision_follows_score_sign(scores in prop::collection::vec(-5.0f64..5.0, 1..16)) {
        let v = aggregate(&scores).unwrap();
        let sum: f64 = scores.iter().sum();
        prop_assert_eq!(v.decision == Label::Fake, sum > 0.0);
        prop_assert!((v.phi - sigmoid(sum)).abs() < 1e-15);
    }

    #[test]
    fn aggregate_is_order_free_and_monotone(
        scores in prop::collection::vec(-5.0f64..5.0, 1..16),
        bump in 0.01f64..3.0,
        at in any::<prop::sample::Index>(),
    ) {
        let base = aggregate(&scores).unwrap();
        let mut reversed = scores.clone();
        reversed.reverse();
        prop_assert!((aggregate(&reversed).unwrap().phi - base.phi).abs() < 1e-12);
        let mut raised = scores.clone();
        raised[at.index(scores.len())] += bump;
        prop_assert!(aggregate(&raised).unwrap().phi >= base.phi);
    }

    #[test]
    fn auc_matches_pair_count(recs in records()) {
        prop_assert!((auc(&recs).unwrap() - brute_auc(&recs)).abs() <= 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms(recs in records(), scale in 0.1f64..10.0, shift in -3.0f64..3.0) {
        let moved: Vec<EvalRecord> = recs
            .iter()
            .map(|r| EvalRecord { phi: (scale * r.phi + shift).exp(), ..r.clone() })
            .collect();
        prop_assert_eq!(auc(&recs).unwrap(), auc(&moved).unwrap());
    }

    #[test]
    fn auc_label_swap_complements(recs in records()) {
        let swapped: Vec<EvalRecord> = recs
            .iter()
            .map(|r| EvalRecord {
                label: match r.label { Label::Real => Label::Fake, Label::Fake => Label::Real },
                ..r.clone()
            })
            .collect();
        prop_assert!((auc(&recs).unwrap() + auc(&swapped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_increases_with_omega(a in -10.0f64..10.0, d in 1e-3f64..5.0, c in -3.0f64..3.0, sigma in 1.01f64..5.0) {
        let lo = prototype_score(&[a], &[c], &[sigma]).unwrap();
        let hi = prototype_score(&[a + d], &[c], &[sigma]).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn zero_gradient_adam_step_is_identity(values in prop::collection::vec(-5.0f32..5.0, 1..30), lr in 1e-6f64..1e-1) {
        let mut p = values.clone();
        let g = vec![0.0f64; p.len()];
        let mut state = AdamState::new(AdamConfig::default(), &[p.len()]);
        adam_step(&mut [&mut p[..]], &[&g[..]], &mut state, lr).unwrap();
        prop_assert_eq!(p, values);
    }

    #[test]
    fn schedule_never_raises_or_undershoots(losses in prop::collection::vec(0.0f64..2.0, 1..60)) {
        let cfg = TrainConfig::default();
        let (mut lr, mut best, mut since) = (cfg.lr0, f64::INFINITY, 0);
        for v in losses {
            let (next, count) = lr_schedule_update(best, v, since, lr, &cfg);
            prop_assert!(next <= lr && next >= cfg.lr_min);
            prop_assert!(count < cfg.plateau_epochs);
            if v < best - cfg.improvement_epsilon {
                best = v;
            }
            lr = next;
            since = count;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_keeps_sources_together(sources in 10usize..120, seed in any::<u64>()) {
        let m = synthetic_manifest(sources, &[Generator::TokenFlow, Generator::DynamiCrafter], 16);
        let s = split_manifest(&m, seed).unwrap();
        for e in &s.entries {
            if let Some(src) = &e.source_video_id {
                prop_assert_eq!(s.get(src).unwrap().split, e.split);
            }
        }
        let reals = |sp: Split| s.in_split(sp).filter(|e| e.label == Label::Real).count();
        prop_assert_eq!((reals(Split::Train), reals(Split::Val), reals(Split::Test)), split_sizes(sources));
        prop_assert_eq!(split_manifest(&m, seed).unwrap(), s);
    }
}
