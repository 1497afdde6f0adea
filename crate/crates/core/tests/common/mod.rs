#![allow(dead_code)]

use std::collections::BTreeMap;

use equirank_core::dataset::{Comparison, ComparisonSet};
use equirank_core::gbt::expected_comparison;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[order[k]] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Comparisons for `user` drawn over uniform item pairs with score
/// `E[r | theta(right) - theta(left)]` plus clipped Gaussian noise.
pub fn gbt_comparisons(
    user: &str,
    theta: &BTreeMap<String, f64>,
    n: usize,
    noise: f64,
    seed: u64,
) -> Vec<Comparison> {
    let items: Vec<&String> = theta.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let l = rng.random_range(0..items.len());
            let mut r = rng.random_range(0..items.len() - 1);
            if r >= l {
                r += 1;
            }
            let delta = theta[items[r]] - theta[items[l]];
            let eps: f64 = if noise > 0.0 {
                noise * rng.sample::<f64, _>(rand_distr::StandardNormal)
            } else {
                0.0
            };
            let score = (expected_comparison(delta) + eps).clamp(-1.0, 1.0);
            Comparison::new(user, "quality", items[l].as_str(), items[r].as_str(), score).unwrap()
        })
        .collect()
}

/// Known latent scores: `n` items with standard normal utilities.
pub fn random_theta(n: usize, seed: u64) -> BTreeMap<String, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| (format!("i{i:03}"), rng.sample(rand_distr::StandardNormal)))
        .collect()
}

pub fn set_of(rows: Vec<Comparison>) -> ComparisonSet {
    ComparisonSet::new(rows).unwrap()
}
