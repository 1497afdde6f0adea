//! Generalized Bradley-Terry fit of one user's latent item scores.
//!
//! A comparison score `r` in `[-1, 1]` between `left` and `right` is modelled
//! with density proportional to `exp(r * delta)` on `[-1, 1]`, where
//! `delta = theta(right) - theta(left)` (uniform root law). The partition
//! function is `Z(delta) = 2 sinh(delta) / delta` and the conditional mean is
//! `E[r | delta] = coth(delta) - 1/delta`.
//!
//! Scores are the maximum a posteriori estimate under an isotropic Gaussian
//! prior of weight `lambda`, which makes the objective strictly convex and
//! pins the translation freedom of the likelihood.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::ComparisonSet;
use crate::error::{Error, Result};

/// Below this `|delta|` the closed forms are replaced by their Taylor series.
const SERIES_CUTOFF: f64 = 1e-2;

/// `E[r | delta] = coth(delta) - 1/delta`, odd and strictly increasing with
/// range `(-1, 1)`.
pub fn expected_comparison(delta: f64) -> f64 {
    if delta.abs() < SERIES_CUTOFF {
        let d2 = delta * delta;
        delta / 3.0 - delta * d2 / 45.0
    } else {
        1.0 / libm::tanh(delta) - 1.0 / delta
    }
}

/// `log Z(delta) = log(2 sinh(delta) / delta)`, with `log Z(0) = log 2`.
pub fn log_partition(delta: f64) -> f64 {
    let a = delta.abs();
    if a < SERIES_CUTOFF {
        let a2 = a * a;
        core::f64::consts::LN_2 + a2 / 6.0 - a2 * a2 / 180.0
    } else {
        // 2 sinh(a) = e^a (1 - e^{-2a})
        a + libm::log1p(-libm::exp(-2.0 * a)) - libm::log(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtConfig {
    /// Weight of the L2 prior.
    pub lambda: f64,
    /// Stop once the gradient norm drops to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            lambda: 0.1,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Latent scores of one user. Items the user never compared are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualScores {
    pub user_id: String,
    pub theta: BTreeMap<String, f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// False when `max_iter` was reached or the line search stalled above `tol`.
    pub converged: bool,
}

/// Comparisons re-expressed over dense item indices.
struct Problem {
    items: Vec<String>,
    pairs: Vec<(usize, usize, f64)>,
    lambda: f64,
}

impl Problem {
    fn new(comparisons: &ComparisonSet, lambda: f64) -> Self {
        let items: Vec<String> = comparisons.items().iter().cloned().collect();
        let index: BTreeMap<&str, usize> = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let pairs = comparisons
            .iter()
            .map(|c| {
                (
                    index[c.left_item.as_str()],
                    index[c.right_item.as_str()],
                    c.score,
                )
            })
            .collect();
        Problem {
            items,
            pairs,
            lambda,
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let data: f64 = self
            .pairs
            .iter()
            .map(|&(l, r, s)| {
                let delta = theta[r] - theta[l];
                log_partition(delta) - s * delta
            })
            .sum();
        let prior: f64 = theta.iter().map(|t| t * t).sum();
        data + 0.5 * self.lambda * prior
    }

    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        for (g, t) in out.iter_mut().zip(theta) {
            *g = self.lambda * t;
        }
        for &(l, r, s) in &self.pairs {
            let e = expected_comparison(theta[r] - theta[l]) - s;
            out[r] += e;
            out[l] -= e;
        }
    }

    fn dense(&self, theta: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.items
            .iter()
            .map(|item| {
                theta
                    .get(item)
                    .copied()
                    .ok_or_else(|| Error::MissingItem(item.clone()))
            })
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Negative log posterior `sum [log Z(delta) - r delta] + (lambda/2) sum theta^2`.
///
/// The prior runs over the items that appear in `comparisons`.
pub fn gbt_objective(
    theta: &BTreeMap<String, f64>,
    comparisons: &ComparisonSet,
    lambda: f64,
) -> Result<f64> {
    let problem = Problem::new(comparisons, lambda);
    let dense = problem.dense(theta)?;
    Ok(problem.objective(&dense))
}

/// Analytic gradient of [`gbt_objective`], keyed by item.
pub fn gbt_gradient(
    theta: &BTreeMap<String, f64>,
    comparisons: &ComparisonSet,
    lambda: f64,
) -> Result<BTreeMap<String, f64>> {
    let problem = Problem::new(comparisons, lambda);
    let dense = problem.dense(theta)?;
    let mut grad = alloc::vec![0.0; dense.len()];
    problem.gradient(&dense, &mut grad);
    Ok(problem.items.into_iter().zip(grad).collect())
}

/// Fits one user's latent scores by gradient descent with a backtracking
/// line search. Trial steps start from the Barzilai-Borwein estimate and are
/// halved until the objective decreases.
pub fn fit_gbt(comparisons: &ComparisonSet, config: &GbtConfig) -> Result<IndividualScores> {
    config.validate()?;
    if comparisons.is_empty() {
        return Err(Error::Empty("user has no comparisons"));
    }
    if comparisons.users().len() != 1 {
        return Err(Error::InvalidConfig(alloc::format!(
            "fit_gbt expects one user, got {}",
            comparisons.users().len()
        )));
    }
    let user_id = comparisons.users().iter().next().cloned().unwrap_or_default();
    let problem = Problem::new(comparisons, config.lambda);
    let n = problem.items.len();

    let mut theta = alloc::vec![0.0; n];
    let mut grad = alloc::vec![0.0; n];
    let mut trial = alloc::vec![0.0; n];
    let mut trial_grad = alloc::vec![0.0; n];
    problem.gradient(&theta, &mut grad);
    let mut value = problem.objective(&theta);
    let mut grad_norm = norm(&grad);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut stalled = false;

    while grad_norm > config.tol && iterations < config.max_iter {
        iterations += 1;
        let g2 = grad_norm * grad_norm;
        let slack = 16.0 * f64::EPSILON * value.abs().max(1.0);
        let mut alpha = step;
        let accepted = loop {
            for ((t, x), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = x - alpha * g;
            }
            let trial_value = problem.objective(&trial);
            if !trial_value.is_finite() {
                return Err(Error::NonFinite {
                    context: "GBT objective",
                });
            }
            if trial_value <= value - 1e-4 * alpha * g2 {
                problem.gradient(&trial, &mut trial_grad);
                break Some(trial_value);
            }
            // Near the optimum the decrease falls below rounding noise of the
            // objective; accept when the gradient still shrinks.
            if trial_value <= value + slack {
                problem.gradient(&trial, &mut trial_grad);
                if norm(&trial_grad) < grad_norm {
                    break Some(trial_value);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-30 {
                break None;
            }
        };
        let Some(new_value) = accepted else {
            stalled = true;
            break;
        };

        // Barzilai-Borwein step for the next iteration.
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = trial[i] - theta[i];
            let y = trial_grad[i] - grad[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            alpha * 2.0
        };

        core::mem::swap(&mut theta, &mut trial);
        core::mem::swap(&mut grad, &mut trial_grad);
        value = new_value;
        grad_norm = norm(&grad);
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite {
                context: "GBT gradient",
            });
        }
    }

    Ok(IndividualScores {
        user_id,
        theta: problem.items.into_iter().zip(theta).collect(),
        lambda: config.lambda,
        iterations,
        gradient_norm: grad_norm,
        converged: grad_norm <= config.tol && !stalled,
    })
}

/// Fits every user of `comparisons` independently, in user-id order.
pub fn fit_all_users(
    comparisons: &ComparisonSet,
    config: &GbtConfig,
) -> Result<BTreeMap<String, IndividualScores>> {
    comparisons
        .users()
        .iter()
        .map(|u| Ok((u.clone(), fit_gbt(&comparisons.for_user(u), config)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Comparison;
    use alloc::vec;

    fn one_user(rows: &[(&str, &str, f64)]) -> ComparisonSet {
        ComparisonSet::new(
            rows.iter()
                .map(|&(l, r, s)| Comparison::new("u", "c", l, r, s).unwrap())
                .collect(),
        )
        .unwrap()
    }

    // Quadrature of E[r | delta] = int r e^{r delta} / int e^{r delta} over [-1, 1].
    fn expected_by_quadrature(delta: f64) -> f64 {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=n {
            let r = -1.0 + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let e = libm::exp(r * delta);
            num += w * r * e;
            den += w * e;
        }
        num / den
    }

    #[test]
    fn expected_comparison_values() {
        assert_eq!(expected_comparison(0.0), 0.0);
        // Frozen from Simpson quadrature of the uniform-root density.
        let oracle = expected_by_quadrature(3.0);
        assert!((oracle - 0.671_636).abs() < 1e-6);
        assert!((expected_comparison(3.0) - oracle).abs() < 1e-10);
        assert_eq!(expected_comparison(-3.0), -expected_comparison(3.0));
        for d in [1e-4, 5e-3, 0.0099, 0.0101, 0.5, 20.0, -7.0] {
            assert!(
                (expected_comparison(d) - expected_by_quadrature(d)).abs() < 1e-9,
                "delta = {d}"
            );
        }
        assert!(expected_comparison(800.0) < 1.0);
    }

    #[test]
    fn log_partition_matches_closed_form() {
        assert_eq!(log_partition(0.0), core::f64::consts::LN_2);
        for d in [0.009, 0.011, 0.7, -2.5, 30.0] {
            let direct = libm::log(2.0 * libm::sinh(d) / d);
            assert!((log_partition(d) - direct).abs() < 1e-12, "delta = {d}");
        }
        assert!(log_partition(1e4).is_finite());
    }

    #[test]
    fn objective_at_zero() {
        let set = one_user(&[("a", "b", 0.0)]);
        let theta: BTreeMap<_, _> = [("a".into(), 0.0), ("b".into(), 0.0)].into();
        assert!((gbt_objective(&theta, &set, 1.0).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);

        let set = one_user(&[("a", "b", 0.4), ("b", "c", -0.9), ("a", "c", 1.0)]);
        let theta: BTreeMap<_, _> = ["a", "b", "c"].iter().map(|s| (String::from(*s), 0.0)).collect();
        let v = gbt_objective(&theta, &set, 0.3).unwrap();
        assert!((v - 3.0 * core::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn objective_missing_item() {
        let set = one_user(&[("a", "b", 0.0)]);
        let theta: BTreeMap<_, _> = [("a".into(), 0.0)].into();
        assert_eq!(
            gbt_objective(&theta, &set, 1.0),
            Err(Error::MissingItem("b".into()))
        );
    }

    #[test]
    fn gradient_step_decreases_objective() {
        let set = one_user(&[("a", "b", 0.7), ("b", "c", -0.2), ("c", "a", 0.5)]);
        let theta: BTreeMap<String, f64> =
            [("a".into(), 0.3), ("b".into(), -0.1), ("c".into(), 0.8)].into();
        let grad = gbt_gradient(&theta, &set, 0.1).unwrap();
        let before = gbt_objective(&theta, &set, 0.1).unwrap();
        let stepped: BTreeMap<String, f64> = theta
            .iter()
            .map(|(k, v)| (k.clone(), v - 1e-3 * grad[k]))
            .collect();
        assert!(gbt_objective(&stepped, &set, 0.1).unwrap() < before);
    }

    #[test]
    fn symmetric_fit_for_tie() {
        let set = one_user(&[("a", "b", 0.0)]);
        let cfg = GbtConfig {
            lambda: 0.1,
            ..GbtConfig::default()
        };
        let fit = fit_gbt(&set, &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.theta["a"].abs() < 1e-12 && fit.theta["b"].abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_fit() {
        let set = one_user(&[("a", "b", 0.8)]);
        let fit = fit_gbt(&set, &GbtConfig::default()).unwrap();
        assert!(fit.converged);
        let (a, b) = (fit.theta["a"], fit.theta["b"]);
        assert!(b > 0.0 && a < 0.0);
        assert!((a + b).abs() < 1e-9);
        // Stationarity: E(b - a) - 0.8 + lambda * b = 0.
        assert!((expected_comparison(b - a) - 0.8 + 0.1 * b).abs() < 1e-8);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            fit_gbt(&ComparisonSet::default(), &GbtConfig::default()),
            Err(Error::Empty(_))
        ));
        let set = one_user(&[("a", "b", 0.1)]);
        let cfg = GbtConfig {
            lambda: 0.0,
            ..GbtConfig::default()
        };
        assert!(fit_gbt(&set, &cfg).is_err());
        let two = ComparisonSet::new(vec![
            Comparison::new("u", "c", "a", "b", 0.1).unwrap(),
            Comparison::new("v", "c", "a", "b", 0.1).unwrap(),
        ])
        .unwrap();
        assert!(fit_gbt(&two, &GbtConfig::default()).is_err());
    }

    #[test]
    fn max_iter_is_flagged() {
        let set = one_user(&[("a", "b", 0.9), ("b", "c", 0.9), ("a", "c", 0.2)]);
        let cfg = GbtConfig {
            max_iter: 1,
            ..GbtConfig::default()
        };
        let fit = fit_gbt(&set, &cfg).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(!fit.converged);
    }

    #[test]
    fn unseen_items_are_absent() {
        let set = one_user(&[("a", "b", 0.3)]);
        let fit = fit_gbt(&set, &GbtConfig::default()).unwrap();
        assert_eq!(fit.theta.len(), 2);
        assert!(!fit.theta.contains_key("z"));
    }
}
