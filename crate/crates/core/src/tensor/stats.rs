use crate::error::{Error, Result};

use super::vector::common_dim;

fn total_cmp_sort(values: &mut [f64]) {
    values.sort_by(f64::total_cmp);
}

/// Median of a nonempty slice. Even counts take the midpoint of the central pair.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of empty set"));
    }
    let mut sorted = values.to_vec();
    total_cmp_sort(&mut sorted);
    Ok(median_of_sorted(&sorted))
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Per-coordinate median across `vectors`.
pub fn coordinate_median<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let dim = common_dim(vectors)?;
    let mut column = vec![0.0; vectors.len()];
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        for (slot, v) in column.iter_mut().zip(vectors) {
            *slot = v.as_ref()[k];
        }
        total_cmp_sort(&mut column);
        out.push(median_of_sorted(&column));
    }
    Ok(out)
}

/// Nearest-rank quantile: the `ceil(q * m)`-th smallest value, with `q = 0`
/// mapping to the minimum.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of empty set"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    total_cmp_sort(&mut sorted);
    Ok(sorted[nearest_rank_index(sorted.len(), q)])
}

/// Zero-based index of the nearest-rank order statistic.
pub fn nearest_rank_index(m: usize, q: f64) -> usize {
    let rank = (q * m as f64).ceil() as usize;
    rank.clamp(1, m) - 1
}
