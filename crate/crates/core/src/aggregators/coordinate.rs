use crate::error::{Error, Result};
use crate::tensor::{self, common_dim, UpdateVector};

use super::AggregationResult;

/// Undefended reference: plain average of every update.
///
/// Each coordinate is summed in sorted order so the result does not depend
/// on client order.
pub fn mean(updates: &[UpdateVector]) -> Result<AggregationResult> {
    trimmed_mean(updates, 0.0)
}

/// Coordinate-wise trimmed mean: per coordinate, drop `floor(trim_frac * n)`
/// values from each end and average the rest.
pub fn trimmed_mean(updates: &[UpdateVector], trim_frac: f64) -> Result<AggregationResult> {
    let n = updates.len();
    let dim = common_dim(updates)?;
    if !(0.0..0.5).contains(&trim_frac) {
        return Err(Error::invalid(format!(
            "trim fraction {trim_frac} outside [0, 0.5)"
        )));
    }
    let cut = (trim_frac * n as f64).floor() as usize;
    if n <= 2 * cut {
        return Err(Error::invalid(format!(
            "trimming {cut} per side leaves nothing of {n} updates"
        )));
    }
    let kept = (n - 2 * cut) as f64;
    let mut column = vec![0.0; n];
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        for (slot, u) in column.iter_mut().zip(updates) {
            *slot = u[k];
        }
        column.sort_by(f64::total_cmp);
        out.push(column[cut..n - cut].iter().sum::<f64>() / kept);
    }
    Ok(AggregationResult::new(
        UpdateVector::from_vec_unchecked(out),
        (0..n).collect(),
    ))
}

pub fn coord_median_rule(updates: &[UpdateVector]) -> Result<AggregationResult> {
    let agg = tensor::coordinate_median(updates)?;
    Ok(AggregationResult::new(
        UpdateVector::from_vec_unchecked(agg),
        (0..updates.len()).collect(),
    ))
}
