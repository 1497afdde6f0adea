use equirank_core::dataset::ComparisonSet;
use equirank_core::scaling::{mehestan_scale, minmax_scale, normalization_scale, per_criterion, MehestanConfig, ScalerTag};

use crate::error::Result;

/// Applies a scaler to each criterion separately.
pub fn apply_scaler(set: &ComparisonSet, scaler: ScalerTag, mehestan: &MehestanConfig) -> Result<ComparisonSet> {
    let scaled = match scaler {
        ScalerTag::None => set.clone(),
        ScalerTag::MinMax => per_criterion(set, |s| Ok(minmax_scale(s).set))?,
        ScalerTag::Normalization => per_criterion(set, |s| Ok(normalization_scale(s).set))?,
        ScalerTag::Mehestan => per_criterion(set, |s| Ok(mehestan_scale(s, mehestan)?.scaled.set))?,
    };
    Ok(scaled)
}
