//! End-to-end behaviour on generated data with known ground truth.

mod common;

use std::collections::BTreeMap;

use common::{gbt_comparisons, random_theta, set_of, spearman};
use equirank_core::dataset::split;
use equirank_core::equity::build_report;
use equirank_core::gbt::{fit_gbt, GbtConfig};
use equirank_core::ltr::{predict_all, train, LossWeights, TrainConfig};
use equirank_core::scaling::{mehestan_scale, Aggregator, MehestanConfig, MehestanOutput};
use equirank_core::simgen::{generate, ArchetypeMix, GroupLayout, SimConfig};

#[test]
fn gbt_recovers_ranking_from_noiseless_comparisons() {
    let theta = random_theta(20, 3);
    let set = set_of(gbt_comparisons("u", &theta, 1000, 0.0, 4));
    let fit = fit_gbt(&set, &GbtConfig::default()).unwrap();
    assert!(fit.converged);
    let truth: Vec<f64> = theta.values().copied().collect();
    let est: Vec<f64> = fit.theta.values().copied().collect();
    assert!(spearman(&truth, &est) >= 0.95);
}

#[test]
fn gbt_mean_score_is_near_zero() {
    let theta = random_theta(15, 8);
    let set = set_of(gbt_comparisons("u", &theta, 300, 0.1, 9));
    let fit = fit_gbt(&set, &GbtConfig::default()).unwrap();
    let mean = fit.theta.values().sum::<f64>() / fit.theta.len() as f64;
    assert!(mean.abs() < 1e-6, "mean {mean}");
}

#[test]
fn mehestan_recovers_affine_relation() {
    let cfg = SimConfig {
        n_users: 1,
        archetype_mix: ArchetypeMix::all_neutral(1),
        ..SimConfig::default()
    };
    let (_, _, truth) = generate(&cfg).unwrap();
    let ta = truth.user_theta["u00"].clone();
    let tb: BTreeMap<String, f64> = ta.iter().map(|(k, v)| (k.clone(), 2.0 * v + 3.0)).collect();
    let mut rows = gbt_comparisons("A", &ta, 500, 0.0, 11);
    rows.extend(gbt_comparisons("B", &tb, 500, 0.0, 12));
    let out = mehestan_scale(&set_of(rows), &MehestanConfig::default()).unwrap();
    let (aa, ab) = (&out.affine[0], &out.affine[1]);
    assert_eq!((aa.user_id.as_str(), ab.user_id.as_str()), ("A", "B"));
    let ratio = ab.s / aa.s;
    assert!((ratio - 0.5).abs() <= 0.05, "scale ratio {ratio}");

    let (sa, sb) = (&out.scores[0].theta, &out.scores[1].theta);
    let mapped_a: Vec<f64> = sa.values().map(|v| aa.s * v + aa.tau).collect();
    let range = mapped_a.iter().cloned().fold(f64::MIN, f64::max) - mapped_a.iter().cloned().fold(f64::MAX, f64::min);
    let max_dev = sa
        .keys()
        .zip(&mapped_a)
        .map(|(k, x)| (x - (ab.s * sb[k] + ab.tau)).abs())
        .fold(0.0, f64::max);
    assert!(max_dev <= 0.1 * range, "deviation {max_dev} of range {range}");
}

fn affine_shift(a: &MehestanOutput, b: &MehestanOutput) -> f64 {
    let b_map: BTreeMap<&str, (f64, f64)> = b.affine.iter().map(|x| (x.user_id.as_str(), (x.s, x.tau))).collect();
    a.affine
        .iter()
        .map(|x| {
            let (s, t) = b_map[x.user_id.as_str()];
            (x.s - s).abs() + (x.tau - t).abs()
        })
        .sum()
}

#[test]
fn resilient_aggregation_limits_poisoning() {
    let cfg = SimConfig {
        n_users: 9,
        archetype_mix: ArchetypeMix {
            neutral: 8,
            malicious: 1,
            ..Default::default()
        },
        user_spread: 0.0,
        ..SimConfig::default()
    };
    let (set, _, _) = generate(&cfg).unwrap();
    let clean = set.filter(|c| c.user_id != "u08");
    let shift = |aggregator| {
        let mc = MehestanConfig {
            aggregator,
            ..MehestanConfig::default()
        };
        let clean = mehestan_scale(&clean, &mc).unwrap();
        let poisoned = mehestan_scale(&set, &mc).unwrap();
        affine_shift(&clean, &poisoned)
    };
    let resilient = shift(Aggregator::Resilient);
    let plain = shift(Aggregator::PlainMean);
    assert!(resilient < plain, "resilient {resilient} plain {plain}");
}

#[test]
fn conservative_users_concentrate_near_zero() {
    let cfg = SimConfig {
        n_users: 2,
        archetype_mix: ArchetypeMix {
            neutral: 1,
            conservative: 1,
            ..Default::default()
        },
        ..SimConfig::default()
    };
    let (set, _, _) = generate(&cfg).unwrap();
    let conservative = set.for_user("u01");
    let near = conservative.iter().filter(|c| c.score.abs() < 0.3).count() as f64 / conservative.len() as f64;
    assert!(near >= 0.8, "fraction {near}");
}

#[test]
fn contrastive_loss_spreads_predictions() {
    let (set, feats, _) = generate(&SimConfig::default()).unwrap();
    let mean_abs = |contrastive| {
        let tc = TrainConfig {
            loss_weights: LossWeights {
                contrastive,
                ..LossWeights::default()
            },
            ..TrainConfig::default()
        };
        let out = train(&set, &feats, &tc).unwrap();
        let preds = predict_all(&out.params, &set, &feats).unwrap();
        preds.iter().map(|(_, d)| d.abs()).sum::<f64>() / preds.len() as f64
    };
    let without = mean_abs(0.0);
    let with = mean_abs(1.0);
    assert!(with > without, "{with} <= {without}");
}

#[test]
fn user_embeddings_reduce_accuracy_spread_for_opposed_groups() {
    let mut stds = [0.0, 0.0];
    for seed in 0..5u64 {
        let cfg = SimConfig {
            n_users: 10,
            archetype_mix: ArchetypeMix::all_neutral(10),
            n_groups: 2,
            group_layout: GroupLayout::Opposed,
            seed,
            ..SimConfig::default()
        };
        let (set, feats, _) = generate(&cfg).unwrap();
        let (train_set, test_set) = split(&set, 0.8, seed).unwrap();
        for (slot, embeddings) in [false, true].into_iter().enumerate() {
            let tc = TrainConfig {
                use_user_embeddings: embeddings,
                seed,
                ..TrainConfig::default()
            };
            let out = train(&train_set, &feats, &tc).unwrap();
            let preds = predict_all(&out.params, &test_set, &feats).unwrap();
            stds[slot] += build_report(&preds, tc.tie_epsilon).unwrap().acc_std;
        }
    }
    assert!(stds[1] < stds[0], "shared {} embeddings {}", stds[0], stds[1]);
}

#[test]
fn training_is_deterministic() {
    let (set, feats, _) = generate(&SimConfig::default()).unwrap();
    let tc = TrainConfig {
        use_user_embeddings: true,
        seed: 7,
        ..TrainConfig::default()
    };
    let a = train(&set, &feats, &tc).unwrap();
    let b = train(&set, &feats, &tc).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_fits_realizable_data() {
    let cfg = SimConfig {
        noise_std: 0.0,
        user_spread: 0.0,
        archetype_mix: ArchetypeMix::all_neutral(8),
        ..SimConfig::default()
    };
    let (set, feats, _) = generate(&cfg).unwrap();
    let out = train(&set, &feats, &TrainConfig::default()).unwrap();
    let first = out.loss_trace[0];
    let last = *out.loss_trace.last().unwrap();
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn generation_is_deterministic_and_in_range() {
    let cfg = SimConfig {
        archetype_mix: ArchetypeMix {
            neutral: 2,
            conservative: 2,
            extreme: 2,
            malicious: 2,
        },
        ..SimConfig::default()
    };
    let (a, fa, _) = generate(&cfg).unwrap();
    let (b, fb, _) = generate(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(fa, fb);
    assert!(a.iter().all(|c| (-1.0..=1.0).contains(&c.score)));
    assert_eq!(a.len(), 8 * cfg.comparisons_per_user);
}
