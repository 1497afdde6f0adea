//! Per-user rescaling of comparison scores before training.
//!
//! [`minmax_scale`] and [`normalization_scale`] look at one user's raw scores
//! at a time. [`mehestan_scale`] is collaborative: every user's latent GBT
//! scores are aligned to the other users' scores on shared items with
//! resilient aggregation, and the rescaled targets are read back from the
//! aligned scores. Users are never merged into a global ranking.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::{Comparison, ComparisonSet};
use crate::error::{Error, Result};
use crate::gbt::{fit_gbt, GbtConfig, IndividualScores};
use crate::robust::{br_mean, plain_mean, ResilienceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalerTag {
    None,
    MinMax,
    Normalization,
    Mehestan,
}

impl ScalerTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalerTag::None => "none",
            ScalerTag::MinMax => "minmax",
            ScalerTag::Normalization => "normalization",
            ScalerTag::Mehestan => "mehestan",
        }
    }
}

impl core::str::FromStr for ScalerTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ScalerTag::None),
            "minmax" => Ok(ScalerTag::MinMax),
            "normalization" => Ok(ScalerTag::Normalization),
            "mehestan" => Ok(ScalerTag::Mehestan),
            other => Err(Error::InvalidConfig(alloc::format!("unknown scaler `{other}`"))),
        }
    }
}

impl core::fmt::Display for ScalerTag {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Comparisons whose scores were produced by a scaler. Scores stay in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledComparisonSet {
    pub set: ComparisonSet,
    pub scaler: ScalerTag,
}

impl ScaledComparisonSet {
    pub fn unscaled(set: ComparisonSet) -> Self {
        ScaledComparisonSet {
            set,
            scaler: ScalerTag::None,
        }
    }
}

/// Affine map `theta -> s * theta + tau` applied to one user's latent scores.
#[derive(Debug, Clone, PartialEq)]
pub struct UserAffine {
    pub user_id: String,
    pub s: f64,
    pub tau: f64,
}

/// Rewrites every score with `f(user_scores, score)`, one user at a time.
fn per_user_map(set: &ComparisonSet, f: impl Fn(&[f64]) -> Vec<f64>) -> ComparisonSet {
    let mut scores: Vec<f64> = set.iter().map(|c| c.score).collect();
    for indices in set.indices_by_user().values() {
        let raw: Vec<f64> = indices.iter().map(|&i| set.comparisons()[i].score).collect();
        for (&i, v) in indices.iter().zip(f(&raw)) {
            scores[i] = v;
        }
    }
    ComparisonSet::from_valid(
        set.iter()
            .zip(scores)
            .map(|(c, s)| c.with_score(s))
            .collect(),
    )
}

/// Maps each user's scores affinely onto `[-1, 1]`; constant users map to 0.
pub fn minmax_scale(set: &ComparisonSet) -> ScaledComparisonSet {
    let scaled = per_user_map(set, |raw| {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return alloc::vec![0.0; raw.len()];
        }
        raw.iter()
            .map(|r| (2.0 * (r - min) / (max - min) - 1.0).clamp(-1.0, 1.0))
            .collect()
    });
    ScaledComparisonSet {
        set: scaled,
        scaler: ScalerTag::MinMax,
    }
}

/// Per-user z-scores (population standard deviation) divided by their
/// largest magnitude; zero-variance users map to 0.
pub fn normalization_scale(set: &ComparisonSet) -> ScaledComparisonSet {
    let scaled = per_user_map(set, |raw| {
        let z = standardize(raw);
        let peak = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return alloc::vec![0.0; raw.len()];
        }
        z.iter().map(|v| (v / peak).clamp(-1.0, 1.0)).collect()
    });
    ScaledComparisonSet {
        set: scaled,
        scaler: ScalerTag::Normalization,
    }
}

/// `(r - mean) / std` with the population standard deviation, or all zeros
/// when the standard deviation vanishes.
pub fn standardize(raw: &[f64]) -> Vec<f64> {
    if raw.is_empty() {
        return Vec::new();
    }
    if raw.iter().all(|r| *r == raw[0]) {
        return alloc::vec![0.0; raw.len()];
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if std == 0.0 {
        return alloc::vec![0.0; raw.len()];
    }
    raw.iter().map(|r| (r - mean) / std).collect()
}

/// How per-user evidence is combined in [`mehestan_scale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    /// [`br_mean`] centered at the regularized median.
    Resilient,
    /// Arithmetic mean. Not resilient; kept as a baseline.
    PlainMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MehestanConfig {
    pub gbt: GbtConfig,
    /// Resilience weight `W` shared by both aggregation steps.
    pub resilience_w: f64,
    /// Clip radius for scale-ratio aggregation.
    pub scale_clip: f64,
    /// Clip radius for translation aggregation.
    pub translation_clip: f64,
    /// Pairs whose score gap is at most this are skipped when estimating ratios.
    pub pair_epsilon: f64,
    /// Lower bound for `s`.
    pub min_scale: f64,
    pub aggregator: Aggregator,
}

impl Default for MehestanConfig {
    fn default() -> Self {
        MehestanConfig {
            gbt: GbtConfig::default(),
            resilience_w: 1.0,
            scale_clip: 0.5,
            translation_clip: 1.0,
            pair_epsilon: 1e-6,
            min_scale: 1e-3,
            aggregator: Aggregator::Resilient,
        }
    }
}

impl MehestanConfig {
    fn aggregate(&self, values: &[f64], default: f64, clip: f64) -> Result<f64> {
        let params = ResilienceParams::new(self.resilience_w, default, clip)?;
        match self.aggregator {
            Aggregator::Resilient => br_mean(values, &params),
            Aggregator::PlainMean => plain_mean(values, &params),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MehestanOutput {
    pub scaled: ScaledComparisonSet,
    /// One entry per user, in user-id order.
    pub affine: Vec<UserAffine>,
    /// Raw GBT scores, in user-id order.
    pub scores: Vec<IndividualScores>,
    pub reference_user: String,
}

/// The user with the most scored items; ties go to the smallest user id.
pub fn reference_user(scores: &BTreeMap<String, IndividualScores>) -> Option<&str> {
    let mut best: Option<(&str, usize)> = None;
    for (user, s) in scores {
        let n = s.theta.len();
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((user.as_str(), n));
        }
    }
    best.map(|(u, _)| u)
}

/// Collaborative rescaling of one criterion's comparisons.
///
/// 1. Fit GBT scores `theta_u` for every user.
/// 2. The reference user (most scored items, then smallest id) keeps `s = 1`, `tau = 0`.
/// 3. Every other user `u` pools, over every other user `v` and every pair of
///    items both scored with `|theta_u(a) - theta_u(b)| > pair_epsilon`, the
///    signed ratio `(theta_v(a) - theta_v(b)) / (theta_u(a) - theta_u(b))` and
///    aggregates them (default 1) into `s_u`, floored at `min_scale`.
///    Discordant pairs give negative ratios, so a user voting against
///    everyone else is shrunk toward `min_scale`.
/// 4. Translation candidates `s_v theta_v(a) - s_u theta_u(a)` over shared
///    items of every other user are aggregated (default 0) into `tau_u`.
/// 5. Targets become `clip(theta'_u(right) - theta'_u(left), -1, 1)` with
///    `theta'_u = s_u theta_u + tau_u`.
pub fn mehestan_scale(set: &ComparisonSet, config: &MehestanConfig) -> Result<MehestanOutput> {
    if set.users().len() < 2 {
        return Err(Error::TooFewUsers {
            needed: 2,
            found: set.users().len(),
        });
    }
    if !(config.min_scale > 0.0) {
        return Err(Error::InvalidConfig("min_scale must be positive".into()));
    }
    let mut fits = BTreeMap::new();
    for user in set.users() {
        fits.insert(user.clone(), fit_gbt(&set.for_user(user), &config.gbt)?);
    }
    let reference = String::from(reference_user(&fits).unwrap_or_default());

    let mut scales: BTreeMap<&str, f64> = BTreeMap::new();
    for (user, fit) in &fits {
        if *user == reference {
            scales.insert(user, 1.0);
            continue;
        }
        let ratios = scale_ratios(user, &fit.theta, &fits, config.pair_epsilon);
        let s = config
            .aggregate(&ratios, 1.0, config.scale_clip)?
            .max(config.min_scale);
        scales.insert(user, s);
    }

    let mut affine = Vec::with_capacity(fits.len());
    for (user, fit) in &fits {
        if *user == reference {
            affine.push(UserAffine {
                user_id: user.clone(),
                s: 1.0,
                tau: 0.0,
            });
            continue;
        }
        let s_u = scales[user.as_str()];
        let mut candidates = Vec::new();
        for (other, other_fit) in &fits {
            if other == user {
                continue;
            }
            let s_v = scales[other.as_str()];
            for (item, theta_u) in &fit.theta {
                if let Some(theta_v) = other_fit.theta.get(item) {
                    candidates.push(s_v * theta_v - s_u * theta_u);
                }
            }
        }
        let tau = config.aggregate(&candidates, 0.0, config.translation_clip)?;
        affine.push(UserAffine {
            user_id: user.clone(),
            s: s_u,
            tau,
        });
    }

    let by_user: BTreeMap<&str, &UserAffine> =
        affine.iter().map(|a| (a.user_id.as_str(), a)).collect();
    let mut rescaled = Vec::with_capacity(set.len());
    for c in set {
        let a = by_user[c.user_id.as_str()];
        let theta = &fits[&c.user_id].theta;
        let left = a.s * theta[&c.left_item] + a.tau;
        let right = a.s * theta[&c.right_item] + a.tau;
        let target = (right - left).clamp(-1.0, 1.0);
        if !target.is_finite() {
            return Err(Error::NonFinite {
                context: "scaled target",
            });
        }
        rescaled.push(c.with_score(target));
    }

    Ok(MehestanOutput {
        scaled: ScaledComparisonSet {
            set: ComparisonSet::from_valid(rescaled),
            scaler: ScalerTag::Mehestan,
        },
        affine,
        scores: fits.into_values().collect(),
        reference_user: reference,
    })
}

fn scale_ratios(
    user: &str,
    theta_u: &BTreeMap<String, f64>,
    fits: &BTreeMap<String, IndividualScores>,
    pair_epsilon: f64,
) -> Vec<f64> {
    let mut ratios = Vec::new();
    for (other, fit) in fits {
        if other == user {
            continue;
        }
        let common: Vec<(f64, f64)> = theta_u
            .iter()
            .filter_map(|(item, tu)| fit.theta.get(item).map(|tv| (*tu, *tv)))
            .collect();
        for (i, (ua, va)) in common.iter().enumerate() {
            for (ub, vb) in &common[i + 1..] {
                let du = ua - ub;
                if du.abs() > pair_epsilon {
                    ratios.push((va - vb) / du);
                }
            }
        }
    }
    ratios
}

/// Applies `scale` to each criterion's comparisons separately and reassembles
/// the result in input order.
pub fn per_criterion<F>(set: &ComparisonSet, mut scale: F) -> Result<ComparisonSet>
where
    F: FnMut(&ComparisonSet) -> Result<ComparisonSet>,
{
    let mut scores: Vec<Option<f64>> = alloc::vec![None; set.len()];
    for criterion in set.criteria() {
        let indices: Vec<usize> = set
            .iter()
            .enumerate()
            .filter(|(_, c)| c.criterion == criterion)
            .map(|(i, _)| i)
            .collect();
        let subset = ComparisonSet::from_valid(
            indices.iter().map(|&i| set.comparisons()[i].clone()).collect(),
        );
        let scaled = scale(&subset)?;
        for (&i, c) in indices.iter().zip(scaled.iter()) {
            scores[i] = Some(c.score);
        }
    }
    let rows: Vec<Comparison> = set
        .iter()
        .zip(scores)
        .map(|(c, s)| c.with_score(s.unwrap_or(c.score)))
        .collect();
    Ok(ComparisonSet::from_valid(rows))
}

/// Users whose rows differ between two sets of the same length.
pub fn changed_users(a: &ComparisonSet, b: &ComparisonSet) -> BTreeSet<String> {
    a.iter()
        .zip(b.iter())
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.user_id.clone())
        .collect()
}
