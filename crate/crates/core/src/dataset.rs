//! Pairwise comparison records, item feature tables and per-user splitting.
//!
//! Score sign convention: a negative score prefers the left item, a positive
//! score prefers the right item and scores near zero express no preference.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One annotation: `user` compared `left_item` against `right_item` on
/// `criterion` with strength `score` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub user_id: String,
    pub criterion: String,
    pub left_item: String,
    pub right_item: String,
    pub score: f64,
}

impl Comparison {
    pub fn new(
        user_id: impl Into<String>,
        criterion: impl Into<String>,
        left_item: impl Into<String>,
        right_item: impl Into<String>,
        score: f64,
    ) -> Result<Self> {
        let comparison = Comparison {
            user_id: user_id.into(),
            criterion: criterion.into(),
            left_item: left_item.into(),
            right_item: right_item.into(),
            score,
        };
        comparison.validate()?;
        Ok(comparison)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.score.is_finite() {
            return Err(Error::NonFinite {
                context: "comparison score",
            });
        }
        if !(-1.0..=1.0).contains(&self.score) {
            return Err(Error::ScoreOutOfRange { score: self.score });
        }
        if self.left_item == self.right_item {
            return Err(Error::SelfComparison {
                item: self.left_item.clone(),
            });
        }
        Ok(())
    }

    /// Same comparison with a different score. The score is not range checked.
    pub(crate) fn with_score(&self, score: f64) -> Self {
        Comparison {
            score,
            ..self.clone()
        }
    }
}

/// An ordered, validated list of comparisons together with the users and
/// items that occur in it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonSet {
    comparisons: Vec<Comparison>,
    users: BTreeSet<String>,
    items: BTreeSet<String>,
}

impl ComparisonSet {
    pub fn new(comparisons: Vec<Comparison>) -> Result<Self> {
        for c in &comparisons {
            c.validate()?;
        }
        Ok(Self::from_valid(comparisons))
    }

    pub(crate) fn from_valid(comparisons: Vec<Comparison>) -> Self {
        let mut users = BTreeSet::new();
        let mut items = BTreeSet::new();
        for c in &comparisons {
            users.insert(c.user_id.clone());
            items.insert(c.left_item.clone());
            items.insert(c.right_item.clone());
        }
        ComparisonSet {
            comparisons,
            users,
            items,
        }
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn into_comparisons(self) -> Vec<Comparison> {
        self.comparisons
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn items(&self) -> &BTreeSet<String> {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Comparison> {
        self.comparisons.iter()
    }

    /// Distinct criteria in order of first appearance.
    pub fn criteria(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.comparisons {
            if seen.insert(c.criterion.as_str()) {
                out.push(c.criterion.as_str());
            }
        }
        out
    }

    pub fn filter_criterion(&self, criterion: &str) -> ComparisonSet {
        self.filter(|c| c.criterion == criterion)
    }

    pub fn for_user(&self, user_id: &str) -> ComparisonSet {
        self.filter(|c| c.user_id == user_id)
    }

    pub fn filter(&self, mut keep: impl FnMut(&Comparison) -> bool) -> ComparisonSet {
        Self::from_valid(
            self.comparisons
                .iter()
                .filter(|c| keep(c))
                .cloned()
                .collect(),
        )
    }

    /// Indices of each user's comparisons, in input order.
    pub fn indices_by_user(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.comparisons.iter().enumerate() {
            by_user.entry(c.user_id.as_str()).or_default().push(i);
        }
        by_user
    }
}

impl<'a> IntoIterator for &'a ComparisonSet {
    type Item = &'a Comparison;
    type IntoIter = core::slice::Iter<'a, Comparison>;

    fn into_iter(self) -> Self::IntoIter {
        self.comparisons.iter()
    }
}

/// Precomputed item feature vectors, all of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    features: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(FeatureTable {
            dim,
            features: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, item: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let item = item.into();
        if vector.len() != self.dim {
            return Err(Error::FeatureWidth {
                item,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "feature vector",
            });
        }
        if self.features.contains_key(&item) {
            return Err(Error::DuplicateItem(item));
        }
        self.features.insert(item, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, item: &str) -> Option<&[f64]> {
        self.features.get(item).map(Vec::as_slice)
    }

    pub fn require(&self, item: &str) -> Result<&[f64]> {
        self.get(item)
            .ok_or_else(|| Error::MissingItem(String::from(item)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.features
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Per-user stratified split into `(train, test)`.
///
/// Every user keeps `floor(n * train_fraction)` comparisons for training,
/// clamped to `[1, n - 1]`, so both parts contain every user. Each part
/// preserves input order.
pub fn split(
    set: &ComparisonSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(ComparisonSet, ComparisonSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "train fraction {train_fraction} is not in (0, 1)"
        )));
    }
    let by_user = set.indices_by_user();
    let short: Vec<String> = by_user
        .iter()
        .filter(|(_, idx)| idx.len() < 2)
        .map(|(u, _)| String::from(*u))
        .collect();
    if !short.is_empty() {
        return Err(Error::TooFewComparisons(short));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = alloc::vec![false; set.len()];
    for indices in by_user.values() {
        let n = indices.len();
        let n_train = ((n as f64 * train_fraction) as usize).clamp(1, n - 1);
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..n_train] {
            in_train[i] = true;
        }
    }

    let (train, test): (Vec<_>, Vec<_>) = set
        .comparisons
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    Ok((
        ComparisonSet::from_valid(train.into_iter().map(|(c, _)| c).collect()),
        ComparisonSet::from_valid(test.into_iter().map(|(c, _)| c).collect()),
    ))
}
