//! Byzantine-resilient scalar aggregation.
//!
//! [`qr_med`] is the quadratically regularized median
//! `argmin_m (W/2)(m - default)^2 + sum_i |x_i - m|`. Adding or removing one
//! value moves it by at most `1/W`. [`br_mean`] recenters at that median and
//! averages the values clipped to a window of half-width `clip_radius`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResilienceParams {
    /// Resilience weight `W`. Larger is more resistant and more biased toward `default`.
    pub w: f64,
    /// Value returned for empty input and the point the median is pulled toward.
    pub default: f64,
    /// Half-width of the clipping window used by [`br_mean`].
    pub clip_radius: f64,
}

impl ResilienceParams {
    pub fn new(w: f64, default: f64, clip_radius: f64) -> Result<Self> {
        let params = ResilienceParams {
            w,
            default,
            clip_radius,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "resilience weight must be positive, got {}",
                self.w
            )));
        }
        if !(self.clip_radius > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "clip radius must be positive, got {}",
                self.clip_radius
            )));
        }
        if !self.default.is_finite() {
            return Err(Error::NonFinite {
                context: "resilience default",
            });
        }
        Ok(())
    }

    pub fn with_default(self, default: f64) -> Self {
        ResilienceParams { default, ..self }
    }

    pub fn with_clip_radius(self, clip_radius: f64) -> Self {
        ResilienceParams {
            clip_radius,
            ..self
        }
    }
}

impl Default for ResilienceParams {
    fn default() -> Self {
        ResilienceParams {
            w: 1.0,
            default: 0.0,
            clip_radius: 1.0,
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: "aggregation input",
        })
    }
}

/// Exact quadratically regularized median.
///
/// The objective's subgradient `W(m - d) + #{x < m} - #{x > m} + [-k, k]`
/// (with `k` values equal to `m`) is monotone, so the minimizer is found by
/// scanning the sorted values once: either it sits strictly between two
/// distinct values where the subgradient is a line, or on a value where the
/// subgradient interval contains zero.
pub fn qr_med(values: &[f64], params: &ResilienceParams) -> Result<f64> {
    check_finite(values)?;
    params.validate()?;
    if values.is_empty() {
        return Ok(params.default);
    }
    let w = params.w;
    let d = params.default;
    let n = values.len() as f64;

    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    // `below` counts values strictly less than the current open interval's upper end.
    let mut below = 0usize;
    let mut i = 0usize;
    loop {
        let lo = if below == 0 {
            f64::NEG_INFINITY
        } else {
            sorted[below - 1]
        };
        let hi = if i < sorted.len() {
            sorted[i]
        } else {
            f64::INFINITY
        };
        // Open interval (lo, hi): subgradient is W(m - d) + below - (n - below).
        let candidate = d - (2.0 * below as f64 - n) / w;
        if candidate > lo && candidate < hi {
            return Ok(candidate);
        }
        if i == sorted.len() {
            break;
        }
        // Point hi with multiplicity k.
        let mut j = i;
        while j < sorted.len() && sorted[j] == hi {
            j += 1;
        }
        let k = (j - i) as f64;
        let base = w * (hi - d) + below as f64 - (n - below as f64 - k);
        if base - k <= 0.0 && 0.0 <= base + k {
            return Ok(hi);
        }
        below = j;
        i = j;
    }
    // Unreachable for finite input: the subgradient runs from -inf to +inf.
    Err(Error::NonFinite {
        context: "regularized median",
    })
}

/// Clipped mean recentered at the regularized median:
/// `c + mean_i clip(x_i - c, -r, r)` with `c = qr_med(values)`.
pub fn br_mean(values: &[f64], params: &ResilienceParams) -> Result<f64> {
    let center = qr_med(values, params)?;
    if values.is_empty() {
        return Ok(params.default);
    }
    let r = params.clip_radius;
    let shift: f64 = values
        .iter()
        .map(|x| (x - center).clamp(-r, r))
        .sum::<f64>()
        / values.len() as f64;
    Ok(center + shift)
}

/// Plain arithmetic mean with the same empty-input contract as [`br_mean`].
/// Used as the non-resilient baseline.
pub fn plain_mean(values: &[f64], params: &ResilienceParams) -> Result<f64> {
    check_finite(values)?;
    if values.is_empty() {
        return Ok(params.default);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
