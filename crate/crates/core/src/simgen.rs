//! Seeded synthetic voter populations with known latent utilities.
//!
//! Items get i.i.d. standard normal feature vectors. Users belong to
//! preference groups; a user's utility for an item is
//! `(group_weight + own_perturbation) . features`. Each comparison draws a
//! uniform item pair, takes the noisy utility difference and passes it
//! through the user's voting archetype.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::{Comparison, ComparisonSet, FeatureTable};
use crate::equity::{classify, Class};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Archetype {
    /// Reports the clipped utility difference.
    Neutral,
    /// Shrinks differences toward 0.
    Conservative,
    /// Pushes differences toward the ends of the scale.
    Extreme,
    /// Poisons the data (see [`MaliciousMode`]).
    Malicious,
}

impl Archetype {
    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Neutral => "neutral",
            Archetype::Conservative => "conservative",
            Archetype::Extreme => "extreme",
            Archetype::Malicious => "malicious",
        }
    }
}

impl core::str::FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neutral" => Ok(Archetype::Neutral),
            "conservative" => Ok(Archetype::Conservative),
            "extreme" => Ok(Archetype::Extreme),
            "malicious" => Ok(Archetype::Malicious),
            other => Err(Error::InvalidConfig(alloc::format!("unknown archetype `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaliciousMode {
    /// Reports the negated clipped difference.
    SignFlip,
    /// Reports uniform noise on `[-1, 1]`.
    Random,
}

/// Number of users of each archetype. Users are assigned in the order
/// neutral, conservative, extreme, malicious.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ArchetypeMix {
    pub neutral: usize,
    pub conservative: usize,
    pub extreme: usize,
    pub malicious: usize,
}

impl ArchetypeMix {
    pub fn all_neutral(n: usize) -> Self {
        ArchetypeMix {
            neutral: n,
            ..Self::default()
        }
    }

    pub fn total(&self) -> usize {
        self.neutral + self.conservative + self.extreme + self.malicious
    }

    fn archetype_of(&self, index: usize) -> Archetype {
        if index < self.neutral {
            Archetype::Neutral
        } else if index < self.neutral + self.conservative {
            Archetype::Conservative
        } else if index < self.neutral + self.conservative + self.extreme {
            Archetype::Extreme
        } else {
            Archetype::Malicious
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupLayout {
    /// Independent random weight vectors per group.
    Independent,
    /// Group 0 draws `w`; odd groups use `-w`, even groups `w`.
    Opposed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_items: usize,
    pub feature_dim: usize,
    pub n_users: usize,
    pub comparisons_per_user: usize,
    /// Standard deviation of Gaussian noise added to utility differences.
    pub noise_std: f64,
    pub archetype_mix: ArchetypeMix,
    pub n_groups: usize,
    pub seed: u64,
    /// Standard deviation of the utility difference between two random
    /// items under a group weight vector.
    pub utility_scale: f64,
    /// Standard deviation of each component of a user's weight perturbation.
    pub user_spread: f64,
    pub group_layout: GroupLayout,
    pub conservative_gain: f64,
    pub extreme_gain: f64,
    pub malicious_mode: MaliciousMode,
    pub criterion: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_items: 30,
            feature_dim: 4,
            n_users: 8,
            comparisons_per_user: 500,
            noise_std: 0.1,
            archetype_mix: ArchetypeMix::all_neutral(8),
            n_groups: 1,
            seed: 42,
            utility_scale: 1.0,
            user_spread: 0.05,
            group_layout: GroupLayout::Independent,
            conservative_gain: 0.2,
            extreme_gain: 3.0,
            malicious_mode: MaliciousMode::SignFlip,
            criterion: String::from("quality"),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.n_items < 2 {
            return fail("n_items must be at least 2");
        }
        if self.feature_dim == 0 || self.n_users == 0 || self.comparisons_per_user == 0 {
            return fail("feature_dim, n_users and comparisons_per_user must be positive");
        }
        if self.n_groups == 0 {
            return fail("n_groups must be positive");
        }
        if self.archetype_mix.total() != self.n_users {
            return Err(Error::InvalidConfig(alloc::format!(
                "archetype counts sum to {}, expected n_users = {}",
                self.archetype_mix.total(),
                self.n_users
            )));
        }
        let non_negative = [
            self.noise_std,
            self.utility_scale,
            self.user_spread,
            self.conservative_gain,
            self.extreme_gain,
        ];
        if non_negative.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return fail("noise, scales and gains must be finite and non-negative");
        }
        if self.criterion.is_empty() {
            return fail("criterion must be non-empty");
        }
        Ok(())
    }

    pub fn user_id(&self, index: usize) -> String {
        let width = digits(self.n_users.saturating_sub(1)).max(2);
        alloc::format!("u{index:0width$}")
    }

    pub fn item_id(&self, index: usize) -> String {
        let width = digits(self.n_items.saturating_sub(1)).max(3);
        alloc::format!("i{index:0width$}")
    }
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub item_features: FeatureTable,
    pub group_weights: BTreeMap<usize, Vec<f64>>,
    pub user_group: BTreeMap<String, usize>,
    /// Group weight plus the user's perturbation.
    pub user_weights: BTreeMap<String, Vec<f64>>,
    pub user_theta: BTreeMap<String, BTreeMap<String, f64>>,
    pub user_archetype: BTreeMap<String, Archetype>,
}

impl GroundTruth {
    pub fn theta(&self, user: &str, item: &str) -> Result<f64> {
        self.user_theta
            .get(user)
            .ok_or_else(|| Error::UnknownUser(user.into()))?
            .get(item)
            .copied()
            .ok_or_else(|| Error::MissingItem(item.into()))
    }
}

fn normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn scaled_to(mut v: Vec<f64>, norm: f64) -> Vec<f64> {
    let current = libm::sqrt(v.iter().map(|x| x * x).sum());
    if current > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / current);
    }
    v
}

/// Applies an archetype to a raw (noisy) utility difference.
pub fn archetype_transform(
    archetype: Archetype,
    t: f64,
    config: &SimConfig,
    rng: &mut impl Rng,
) -> f64 {
    let out = match archetype {
        Archetype::Neutral => t,
        Archetype::Conservative => config.conservative_gain * t,
        Archetype::Extreme => {
            let magnitude = (config.extreme_gain * t.abs()).min(1.0);
            if t > 0.0 {
                magnitude
            } else if t < 0.0 {
                -magnitude
            } else {
                0.0
            }
        }
        Archetype::Malicious => match config.malicious_mode {
            MaliciousMode::SignFlip => -t,
            MaliciousMode::Random => rng.random_range(-1.0..=1.0),
        },
    };
    out.clamp(-1.0, 1.0)
}

/// Draws a population. Identical configs give identical output.
pub fn generate(config: &SimConfig) -> Result<(ComparisonSet, FeatureTable, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;

    let mut features = FeatureTable::new(dim)?;
    let item_ids: Vec<String> = (0..config.n_items).map(|i| config.item_id(i)).collect();
    for id in &item_ids {
        features.insert(id.clone(), normal_vector(&mut rng, dim))?;
    }

    // Var(w . (x_a - x_b)) = 2 |w|^2 for standard normal features.
    let norm = config.utility_scale / core::f64::consts::SQRT_2;
    let mut group_weights = BTreeMap::new();
    match config.group_layout {
        GroupLayout::Independent => {
            for g in 0..config.n_groups {
                group_weights.insert(g, scaled_to(normal_vector(&mut rng, dim), norm));
            }
        }
        GroupLayout::Opposed => {
            let base = scaled_to(normal_vector(&mut rng, dim), norm);
            for g in 0..config.n_groups {
                let sign = if g % 2 == 0 { 1.0 } else { -1.0 };
                group_weights.insert(g, base.iter().map(|x| sign * x).collect());
            }
        }
    }

    let spread = Normal::new(0.0, config.user_spread)
        .map_err(|_| Error::InvalidConfig("user_spread".into()))?;
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|_| Error::InvalidConfig("noise_std".into()))?;

    let mut truth = GroundTruth {
        item_features: features.clone(),
        group_weights,
        user_group: BTreeMap::new(),
        user_weights: BTreeMap::new(),
        user_theta: BTreeMap::new(),
        user_archetype: BTreeMap::new(),
    };
    let mut comparisons = Vec::with_capacity(config.n_users * config.comparisons_per_user);
    for u in 0..config.n_users {
        let user = config.user_id(u);
        let group = u % config.n_groups;
        let archetype = config.archetype_mix.archetype_of(u);
        let weights: Vec<f64> = truth.group_weights[&group]
            .iter()
            .map(|w| w + spread.sample(&mut rng))
            .collect();
        let theta: BTreeMap<String, f64> = features
            .iter()
            .map(|(item, x)| (String::from(item), x.iter().zip(&weights).map(|(a, b)| a * b).sum()))
            .collect();

        for _ in 0..config.comparisons_per_user {
            let left = rng.random_range(0..config.n_items);
            let mut right = rng.random_range(0..config.n_items - 1);
            if right >= left {
                right += 1;
            }
            let (left, right) = (&item_ids[left], &item_ids[right]);
            let t = theta[right] - theta[left] + noise.sample(&mut rng);
            let score = archetype_transform(archetype, t, config, &mut rng);
            comparisons.push(Comparison::new(
                user.clone(),
                config.criterion.clone(),
                left.clone(),
                right.clone(),
                score,
            )?);
        }

        truth.user_group.insert(user.clone(), group);
        truth.user_weights.insert(user.clone(), weights);
        truth.user_theta.insert(user.clone(), theta);
        truth.user_archetype.insert(user, archetype);
    }

    Ok((ComparisonSet::from_valid(comparisons), features, truth))
}

/// Noise-free labels `classify(theta_u(right) - theta_u(left))`.
pub fn true_classes(truth: &GroundTruth, set: &ComparisonSet, tie_epsilon: f64) -> Result<Vec<Class>> {
    set.iter()
        .map(|c| {
            let diff = truth.theta(&c.user_id, &c.right_item)? - truth.theta(&c.user_id, &c.left_item)?;
            Ok(classify(diff, tie_epsilon))
        })
        .collect()
}
