//! Pairwise learning-to-rank with a linear scorer.
//!
//! An item's score for user `u` is `(w + offset_u) . x`, and a comparison is
//! predicted by the score difference `right - left`, so positive predictions
//! prefer the right item like the annotations do. Offsets are per-user
//! embeddings; without them every user shares `w`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Comparison, ComparisonSet, FeatureTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w: Vec<f64>,
    /// Empty when user embeddings are disabled.
    pub user_offsets: BTreeMap<String, Vec<f64>>,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        ModelParams {
            w: alloc::vec![0.0; dim],
            user_offsets: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.is_empty() {
            return Err(Error::ZeroDimension);
        }
        for v in core::iter::once(&self.w).chain(self.user_offsets.values()) {
            if v.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "model parameters",
                });
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(w + offset_user) . x`; users without an offset use the shared weights.
pub fn score(params: &ModelParams, user: &str, x: &[f64]) -> Result<f64> {
    params.check_dim(x)?;
    let shared = dot(&params.w, x);
    Ok(match params.user_offsets.get(user) {
        Some(offset) => shared + dot(offset, x),
        None => shared,
    })
}

/// `score(right) - score(left)`. Positive means the model prefers the right item.
pub fn predict_diff(params: &ModelParams, user: &str, left: &[f64], right: &[f64]) -> Result<f64> {
    Ok(score(params, user, right)? - score(params, user, left)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mse: f64,
    pub ranking: f64,
    pub bce: f64,
    pub contrastive: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mse: 1.0,
            ranking: 0.0,
            bce: 0.0,
            contrastive: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss_weights: LossWeights,
    pub ranking_margin: f64,
    pub contrastive_margin: f64,
    /// Targets with `|r| <= tie_epsilon` are ties and skip the hinge terms.
    pub tie_epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub use_user_embeddings: bool,
    pub embedding_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_weights: LossWeights::default(),
            ranking_margin: 0.1,
            contrastive_margin: 0.3,
            tie_epsilon: 0.05,
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            use_user_embeddings: false,
            embedding_l2: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.loss_weights;
        let weights = [w.mse, w.ranking, w.bce, w.contrastive];
        if weights.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        if !weights.iter().any(|x| *x > 0.0) {
            return Err(Error::InvalidConfig("at least one loss weight must be positive".into()));
        }
        if !(self.ranking_margin > 0.0 && self.contrastive_margin > 0.0) {
            return Err(Error::InvalidConfig("margins must be positive".into()));
        }
        if !(self.tie_epsilon >= 0.0) || !(self.embedding_l2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "tie_epsilon and embedding_l2 must be non-negative".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-element loss terms as functions of the predicted difference `d` and
/// target `r`, each paired with its derivative in `d`.
pub mod terms {
    fn sign(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    pub fn mse(d: f64, r: f64) -> (f64, f64) {
        ((d - r) * (d - r), 2.0 * (d - r))
    }

    /// `max(0, margin - sign(r) d)` for non-tie targets.
    pub fn ranking(d: f64, r: f64, margin: f64, tie_epsilon: f64) -> (f64, f64) {
        if r.abs() <= tie_epsilon {
            return (0.0, 0.0);
        }
        let slack = margin - sign(r) * d;
        if slack > 0.0 {
            (slack, -sign(r))
        } else {
            (0.0, 0.0)
        }
    }

    /// Logistic cross-entropy with soft label `p = (r + 1) / 2`.
    pub fn bce(d: f64, r: f64) -> (f64, f64) {
        let p = (r + 1.0) / 2.0;
        let softplus = d.max(0.0) + libm::log1p(libm::exp(-d.abs()));
        let sigmoid = 1.0 / (1.0 + libm::exp(-d));
        (softplus - p * d, sigmoid - p)
    }

    /// `max(0, margin - |d|)` for non-tie targets. At `d = 0` the push goes
    /// toward the target's sign.
    pub fn contrastive(d: f64, r: f64, margin: f64, tie_epsilon: f64) -> (f64, f64) {
        if r.abs() <= tie_epsilon {
            return (0.0, 0.0);
        }
        let slack = margin - d.abs();
        if slack > 0.0 {
            let direction = if d == 0.0 { sign(r) } else { sign(d) };
            (slack, -direction)
        } else {
            (0.0, 0.0)
        }
    }
}

/// Weighted sum of the enabled terms and its derivative in `d`.
fn element_loss(d: f64, r: f64, config: &TrainConfig) -> (f64, f64) {
    let w = &config.loss_weights;
    let mut value = 0.0;
    let mut slope = 0.0;
    let mut add = |weight: f64, (v, g): (f64, f64)| {
        if weight > 0.0 {
            value += weight * v;
            slope += weight * g;
        }
    };
    add(w.mse, terms::mse(d, r));
    add(
        w.ranking,
        terms::ranking(d, r, config.ranking_margin, config.tie_epsilon),
    );
    add(w.bce, terms::bce(d, r));
    add(
        w.contrastive,
        terms::contrastive(d, r, config.contrastive_margin, config.tie_epsilon),
    );
    (value, slope)
}

fn embedding_penalty(params: &ModelParams, config: &TrainConfig) -> f64 {
    if config.embedding_l2 == 0.0 {
        return 0.0;
    }
    config.embedding_l2
        * params
            .user_offsets
            .values()
            .map(|o| dot(o, o))
            .sum::<f64>()
}

/// One comparison with its features.
pub type BatchItem<'a> = (&'a Comparison, &'a [f64], &'a [f64]);

/// Mean weighted loss over the batch plus `embedding_l2 * sum ||offset||^2`.
pub fn loss(params: &ModelParams, batch: &[BatchItem<'_>], config: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let mut total = 0.0;
    for (c, left, right) in batch {
        let d = predict_diff(params, &c.user_id, left, right)?;
        total += element_loss(d, c.score, config).0;
    }
    Ok(total / batch.len() as f64 + embedding_penalty(params, config))
}

/// Analytic gradient of [`loss`]. Offsets are only differentiated for users
/// already present in `params.user_offsets`.
pub fn loss_gradient(
    params: &ModelParams,
    batch: &[BatchItem<'_>],
    config: &TrainConfig,
) -> Result<ModelParams> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    let dim = params.dim();
    let mut grad = ModelParams {
        w: alloc::vec![0.0; dim],
        user_offsets: params
            .user_offsets
            .iter()
            .map(|(u, o)| (u.clone(), o.iter().map(|x| 2.0 * config.embedding_l2 * x).collect()))
            .collect(),
    };
    let scale = 1.0 / batch.len() as f64;
    for (c, left, right) in batch {
        let d = predict_diff(params, &c.user_id, left, right)?;
        let slope = element_loss(d, c.score, config).1 * scale;
        if slope == 0.0 {
            continue;
        }
        for k in 0..dim {
            grad.w[k] += slope * (right[k] - left[k]);
        }
        if let Some(g) = grad.user_offsets.get_mut(&c.user_id) {
            for k in 0..dim {
                g[k] += slope * (right[k] - left[k]);
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Full training-set loss before training and after every epoch.
    pub loss_trace: Vec<f64>,
}

struct Example {
    user: Option<usize>,
    diff: Vec<f64>,
    target: f64,
}

/// Mini-batch gradient descent from the zero model. Batch order comes from a
/// ChaCha8 stream seeded with `config.seed`, so runs are bit-for-bit repeatable.
pub fn train(
    train_set: &ComparisonSet,
    features: &FeatureTable,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    let dim = features.dim();
    let users: Vec<&String> = train_set.users().iter().collect();
    let user_index: BTreeMap<&str, usize> = users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();

    let mut examples = Vec::with_capacity(train_set.len());
    for c in train_set {
        let left = features.require(&c.left_item)?;
        let right = features.require(&c.right_item)?;
        examples.push(Example {
            user: config
                .use_user_embeddings
                .then(|| user_index[c.user_id.as_str()]),
            diff: right.iter().zip(left).map(|(r, l)| r - l).collect(),
            target: c.score,
        });
    }

    let mut w = alloc::vec![0.0; dim];
    let mut offsets: Vec<Vec<f64>> = if config.use_user_embeddings {
        alloc::vec![alloc::vec![0.0; dim]; users.len()]
    } else {
        Vec::new()
    };

    let full_loss = |w: &[f64], offsets: &[Vec<f64>]| -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let data: f64 = examples
            .iter()
            .map(|e| element_loss(predicted(w, offsets, e), e.target, config).0)
            .sum::<f64>()
            / examples.len() as f64;
        let penalty: f64 = offsets.iter().map(|o| dot(o, o)).sum::<f64>() * config.embedding_l2;
        data + penalty
    };

    let mut loss_trace = Vec::with_capacity(config.epochs + 1);
    loss_trace.push(full_loss(&w, &offsets));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad_w = alloc::vec![0.0; dim];
    let mut grad_offsets = offsets.clone();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            for (g, o) in grad_offsets.iter_mut().zip(&offsets) {
                for (gk, ok) in g.iter_mut().zip(o) {
                    *gk = 2.0 * config.embedding_l2 * ok;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &examples[i];
                let d = predicted(&w, &offsets, e);
                let slope = element_loss(d, e.target, config).1 * scale;
                if slope == 0.0 {
                    continue;
                }
                for (g, x) in grad_w.iter_mut().zip(&e.diff) {
                    *g += slope * x;
                }
                if let Some(u) = e.user {
                    for (g, x) in grad_offsets[u].iter_mut().zip(&e.diff) {
                        *g += slope * x;
                    }
                }
            }
            for (p, g) in w.iter_mut().zip(&grad_w) {
                *p -= config.learning_rate * g;
            }
            for (o, g) in offsets.iter_mut().zip(&grad_offsets) {
                for (p, gk) in o.iter_mut().zip(g) {
                    *p -= config.learning_rate * gk;
                }
            }
        }
        let value = full_loss(&w, &offsets);
        if !value.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        loss_trace.push(value);
    }

    let user_offsets = if config.use_user_embeddings {
        users.into_iter().cloned().zip(offsets).collect()
    } else {
        BTreeMap::new()
    };
    Ok(TrainOutput {
        params: ModelParams { w, user_offsets },
        loss_trace,
    })
}

fn predicted(w: &[f64], offsets: &[Vec<f64>], e: &Example) -> f64 {
    let shared = dot(w, &e.diff);
    match e.user {
        Some(u) => shared + dot(&offsets[u], &e.diff),
        None => shared,
    }
}

/// Predicted difference for every comparison, in input order.
pub fn predict_all(
    params: &ModelParams,
    set: &ComparisonSet,
    features: &FeatureTable,
) -> Result<Vec<(Comparison, f64)>> {
    set.iter()
        .map(|c| {
            let left = features.require(&c.left_item)?;
            let right = features.require(&c.right_item)?;
            Ok((c.clone(), predict_diff(params, &c.user_id, left, right)?))
        })
        .collect()
}
