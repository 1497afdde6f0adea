//! Per-user evaluation and inequality metrics over per-user scores.
//!
//! Predictions and annotations are classified into left / tie / right with a
//! symmetric tie threshold. Per-user accuracy feeds three aggregates: the
//! max-min gap, the population standard deviation and the Gini coefficient
//! (relative mean absolute difference), plus the Lorenz curve.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::Comparison;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Class {
    Left,
    Tie,
    Right,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Left, Class::Tie, Class::Right];

    fn index(self) -> usize {
        match self {
            Class::Left => 0,
            Class::Tie => 1,
            Class::Right => 2,
        }
    }
}

/// Truth and prediction of one comparison after thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifiedOutcome {
    pub truth: Class,
    pub predicted: Class,
}

/// `Left` below `-tie_epsilon`, `Right` above `tie_epsilon`, `Tie` otherwise
/// (both boundaries count as ties).
pub fn classify(value: f64, tie_epsilon: f64) -> Class {
    if value < -tie_epsilon {
        Class::Left
    } else if value > tie_epsilon {
        Class::Right
    } else {
        Class::Tie
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Confusion {
    // [truth][predicted]
    counts: [[usize; 3]; 3],
}

impl Confusion {
    fn add(&mut self, outcome: ClassifiedOutcome) {
        self.counts[outcome.truth.index()][outcome.predicted.index()] += 1;
    }

    fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    fn accuracy(&self) -> f64 {
        let correct: usize = (0..3).map(|i| self.counts[i][i]).sum();
        correct as f64 / self.total() as f64
    }

    /// Unweighted mean of per-class recall over the truth classes present.
    fn macro_recall(&self) -> f64 {
        let mut sum = 0.0;
        let mut present = 0usize;
        for (i, row) in self.counts.iter().enumerate() {
            let support: usize = row.iter().sum();
            if support > 0 {
                sum += row[i] as f64 / support as f64;
                present += 1;
            }
        }
        if present == 0 {
            0.0
        } else {
            sum / present as f64
        }
    }
}

fn outcome(comparison: &Comparison, predicted: f64, tie_epsilon: f64) -> ClassifiedOutcome {
    ClassifiedOutcome {
        truth: classify(comparison.score, tie_epsilon),
        predicted: classify(predicted, tie_epsilon),
    }
}

/// Per-user accuracy and macro recall.
pub fn per_user_metrics(
    predictions: &[(Comparison, f64)],
    tie_epsilon: f64,
) -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>)> {
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions"));
    }
    let mut per_user: BTreeMap<&str, Confusion> = BTreeMap::new();
    for (c, p) in predictions {
        per_user
            .entry(c.user_id.as_str())
            .or_default()
            .add(outcome(c, *p, tie_epsilon));
    }
    let accuracy = per_user
        .iter()
        .map(|(u, m)| (String::from(*u), m.accuracy()))
        .collect();
    let recall = per_user
        .iter()
        .map(|(u, m)| (String::from(*u), m.macro_recall()))
        .collect();
    Ok((accuracy, recall))
}

fn values_of(values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("no users"));
    }
    Ok(values.values().copied().collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Largest difference between two users' values: `max - min`.
pub fn max_gap(values: &BTreeMap<String, f64>) -> Result<f64> {
    let v = values_of(values)?;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Population standard deviation `sqrt(sum (v_i - mean)^2 / N)`.
pub fn std_dev(values: &BTreeMap<String, f64>) -> Result<f64> {
    let v = values_of(values)?;
    let m = mean(&v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    Ok(libm::sqrt(var))
}

/// Gini coefficient `sum_{i,j} |v_i - v_j| / (2 N^2 mean)`, evaluated as the
/// full double sum.
pub fn gini(values: &BTreeMap<String, f64>) -> Result<f64> {
    let v = values_of(values)?;
    let n = v.len() as f64;
    let m = mean(&v);
    if m == 0.0 {
        return Err(Error::ZeroMean("gini"));
    }
    let mut total = 0.0;
    for a in &v {
        for b in &v {
            total += (a - b).abs();
        }
    }
    Ok(total / (2.0 * n * n * m))
}

/// Same quantity as [`gini`] via the sorted form
/// `sum_i (2i - N - 1) v_(i) / (N^2 mean)`, `O(N log N)`.
pub fn gini_sorted(values: &BTreeMap<String, f64>) -> Result<f64> {
    let mut v = values_of(values)?;
    let n = v.len() as f64;
    let m = mean(&v);
    if m == 0.0 {
        return Err(Error::ZeroMean("gini"));
    }
    v.sort_by(f64::total_cmp);
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    Ok(weighted / (n * n * m))
}

/// Points `(k/N, share of the k smallest values)`, starting at `(0, 0)`.
pub fn lorenz_curve(values: &BTreeMap<String, f64>) -> Result<Vec<(f64, f64)>> {
    let mut v = values_of(values)?;
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroMean("Lorenz curve"));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut points = Vec::with_capacity(v.len() + 1);
    points.push((0.0, 0.0));
    let mut cumulative = 0.0;
    for (k, x) in v.iter().enumerate() {
        cumulative += x;
        points.push(((k + 1) as f64 / n, cumulative / total));
    }
    // Pin the endpoint against rounding in the running sum.
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquityReport {
    pub per_user_accuracy: BTreeMap<String, f64>,
    pub per_user_recall: BTreeMap<String, f64>,
    /// Pooled over all comparisons, not averaged per user.
    pub overall_accuracy: f64,
    /// Macro recall of the pooled confusion matrix.
    pub overall_recall: f64,
    pub acc_max_gap: f64,
    pub acc_std: f64,
    pub recall_max_gap: f64,
    pub recall_std: f64,
    pub gini_accuracy: f64,
    /// Mean of the per-user accuracies.
    pub mean_accuracy: f64,
    pub n_users: usize,
    pub lorenz: Vec<(f64, f64)>,
}

pub fn build_report(predictions: &[(Comparison, f64)], tie_epsilon: f64) -> Result<EquityReport> {
    let (per_user_accuracy, per_user_recall) = per_user_metrics(predictions, tie_epsilon)?;
    let mut pooled = Confusion::default();
    for (c, p) in predictions {
        pooled.add(outcome(c, *p, tie_epsilon));
    }
    let accuracies: Vec<f64> = per_user_accuracy.values().copied().collect();
    Ok(EquityReport {
        overall_accuracy: pooled.accuracy(),
        overall_recall: pooled.macro_recall(),
        acc_max_gap: max_gap(&per_user_accuracy)?,
        acc_std: std_dev(&per_user_accuracy)?,
        recall_max_gap: max_gap(&per_user_recall)?,
        recall_std: std_dev(&per_user_recall)?,
        gini_accuracy: gini(&per_user_accuracy)?,
        mean_accuracy: mean(&accuracies),
        n_users: per_user_accuracy.len(),
        lorenz: lorenz_curve(&per_user_accuracy)?,
        per_user_accuracy,
        per_user_recall,
    })
}
