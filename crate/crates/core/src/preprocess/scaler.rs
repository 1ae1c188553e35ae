use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clip bound applied after scaling.
pub const SCALE_CUTOFF: f64 = 4.0;

/// 5th/95th percentile boundaries of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub p5: f64,
    pub p95: f64,
}

impl Scaler {
    /// Fits on finite values; non-finite entries are ignored.
    pub fn fit(feature: &str, values: &[f64]) -> Result<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Err(Error::MissingFeature(feature.to_string()));
        }
        v.sort_by(f64::total_cmp);
        Ok(Self {
            p5: percentile_sorted(&v, 5.0),
            p95: percentile_sorted(&v, 95.0),
        })
    }

    /// `2 (x - p5) / (p95 - p5) - 1`, clipped to `[-4, 4]`; 0 for a
    /// degenerate range.
    pub fn apply(&self, x: f64) -> f64 {
        if self.p95 == self.p5 {
            return 0.0;
        }
        (2.0 * (x - self.p5) / (self.p95 - self.p5) - 1.0).clamp(-SCALE_CUTOFF, SCALE_CUTOFF)
    }

    /// Inverse of [`Scaler::apply`] on the unclipped range.
    pub fn invert(&self, s: f64) -> f64 {
        self.p5 + (s + 1.0) * (self.p95 - self.p5) / 2.0
    }
}

/// Percentile `q` in `[0, 100]` of ascending `sorted` data, linearly
/// interpolating between order statistics at rank `q/100 * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub type ScalerParams = BTreeMap<String, Scaler>;

/// Fits one scaler per feature from `(feature, values)` pairs.
pub fn fit_scalers<'a, I>(features: I) -> Result<ScalerParams>
where
    I: IntoIterator<Item = (&'a str, Vec<f64>)>,
{
    features
        .into_iter()
        .map(|(name, values)| Ok((name.to_string(), Scaler::fit(name, &values)?)))
        .collect()
}
