use super::records::Observation;
use crate::error::{Error, Result};

/// Hourly grid at hour ends `t = 1..=horizon`. Each grid point takes the last
/// observation at or before `t`; points before the first observation take the
/// first value. The mask is 1 where an observation exists at or before `t`.
pub fn resample_hourly(series: &[Observation], horizon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = series
        .first()
        .ok_or_else(|| Error::Data("cannot resample an empty series".into()))?;
    let mut values = Vec::with_capacity(horizon);
    let mut mask = Vec::with_capacity(horizon);
    let mut next = 0;
    let mut current = None;
    for h in 0..horizon {
        let t = (h + 1) as f64;
        while next < series.len() && series[next].hour <= t {
            current = Some(series[next].value);
            next += 1;
        }
        match current {
            Some(v) => {
                values.push(v);
                mask.push(1.0);
            }
            None => {
                values.push(first.value);
                mask.push(0.0);
            }
        }
    }
    Ok((values, mask))
}
