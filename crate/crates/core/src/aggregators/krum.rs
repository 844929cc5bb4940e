use crate::error::{Error, Result};
use crate::tensor::{self, common_dim, median_of_sorted, UpdateVector};

use super::AggregationResult;

/// Largest `f` the Krum family accepts for `n` clients: `floor((n - 3) / 2)`.
pub fn max_krum_f(n: usize) -> usize {
    n.saturating_sub(3) / 2
}

fn check_krum_f(n: usize, f: usize) -> Result<()> {
    if n < 2 * f + 3 {
        return Err(Error::TooFewClients {
            n,
            f,
            required: 2 * f + 3,
        });
    }
    Ok(())
}

/// Krum score of every client: the sum of its `n - f - 2` smallest squared
/// distances to the other clients.
pub fn krum_scores<V: AsRef<[f64]> + Sync>(points: &[V], f: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if n < f + 3 {
        return Err(Error::TooFewClients {
            n,
            f,
            required: f + 3,
        });
    }
    common_dim(points)?;
    let dist = tensor::pairwise_unchecked(points);
    Ok(scores_from_distances(&dist, n - f - 2))
}

/// Scores over a precomputed distance table, summing the `neighbors`
/// smallest off-diagonal entries of each row.
pub(crate) fn scores_from_distances(dist: &[Vec<f64>], neighbors: usize) -> Vec<f64> {
    let n = dist.len();
    let mut row = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist[i][j]));
            row.sort_by(f64::total_cmp);
            row.iter().take(neighbors).sum()
        })
        .collect()
}

/// Client indices ordered by ascending score, ties to the lowest index.
pub(crate) fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Mean of `updates[i]` over `members`, summed in the given order.
pub(crate) fn mean_in_order(updates: &[UpdateVector], members: &[usize]) -> UpdateVector {
    UpdateVector::from_vec_unchecked(tensor::mean_of(updates, members))
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Krum selection over an arbitrary neighbor count; used by the dispatcher
/// when it has already settled on an effective `f`.
pub(crate) fn krum_select(
    updates: &[UpdateVector],
    neighbors: usize,
    keep: usize,
) -> (Vec<usize>, Vec<f64>) {
    let dist = tensor::pairwise_unchecked(updates);
    let scores = scores_from_distances(&dist, neighbors);
    let mut order = rank_by_score(&scores);
    order.truncate(keep.clamp(1, updates.len()));
    (order, scores)
}

/// Single-winner Krum.
pub fn full_krum(updates: &[UpdateVector], f: usize) -> Result<AggregationResult> {
    multi_krum(updates, f, Some(1))
}

/// Average of the `m` lowest-score updates; `m` defaults to `n - f - 2`.
pub fn multi_krum(
    updates: &[UpdateVector],
    f: usize,
    m: Option<usize>,
) -> Result<AggregationResult> {
    let n = updates.len();
    common_dim(updates)?;
    check_krum_f(n, f)?;
    let keep = m.unwrap_or(n - f - 2);
    if keep == 0 || keep > n {
        return Err(Error::invalid(format!(
            "multi-krum m = {keep} outside [1, {n}]"
        )));
    }
    Ok(krum_result(updates, n - f - 2, keep))
}

pub(crate) fn krum_result(
    updates: &[UpdateVector],
    neighbors: usize,
    keep: usize,
) -> AggregationResult {
    let (chosen, scores) = krum_select(updates, neighbors, keep);
    let mut result = AggregationResult::new(mean_in_order(updates, &chosen), sorted(chosen));
    result.scores = Some(scores);
    result
}

/// Neighbor count used inside Bulyan's selection loop for `remaining` candidates.
pub(crate) fn bulyan_neighbors(remaining: usize, f: usize) -> usize {
    if remaining < 2 {
        return 0;
    }
    remaining.saturating_sub(f + 2).clamp(1, remaining - 1)
}

/// Bulyan: `theta = clamp(n - 2f, 1, n)` rounds of Krum selection, then per
/// coordinate the `theta - 2 beta` values nearest the median are averaged,
/// with `beta = min(f, floor((theta - 1) / 2))`.
///
/// The classical `n >= 4f + 3` requirement is relaxed by these clamps; the
/// relaxation is reported in the diagnostics.
pub fn bulyan(updates: &[UpdateVector], f: usize) -> Result<AggregationResult> {
    bulyan_with_beta(updates, f, None)
}

/// Bulyan with an optional override of the trim count `beta` (still capped at
/// `floor((theta - 1) / 2)`).
pub fn bulyan_with_beta(
    updates: &[UpdateVector],
    f: usize,
    beta: Option<usize>,
) -> Result<AggregationResult> {
    let n = updates.len();
    let dim = common_dim(updates)?;
    let theta = n.saturating_sub(2 * f).clamp(1, n);
    let beta = beta.unwrap_or(f).min((theta - 1) / 2);

    let dist = tensor::pairwise_unchecked(updates);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selection = Vec::with_capacity(theta);
    while selection.len() < theta {
        let k = bulyan_neighbors(remaining.len(), f);
        let sub: Vec<Vec<f64>> = remaining
            .iter()
            .map(|&i| remaining.iter().map(|&j| dist[i][j]).collect())
            .collect();
        let scores = scores_from_distances(&sub, k);
        // positions in `remaining` are in ascending client order, so the
        // position tie-break is the client-index tie-break
        let best = rank_by_score(&scores)[0];
        selection.push(remaining.remove(best));
    }

    let keep = theta - 2 * beta;
    let mut out = Vec::with_capacity(dim);
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(theta);
    let mut values: Vec<f64> = Vec::with_capacity(theta);
    for k in 0..dim {
        values.clear();
        values.extend(selection.iter().map(|&i| updates[i][k]));
        values.sort_by(f64::total_cmp);
        let med = median_of_sorted(&values);
        column.clear();
        column.extend(selection.iter().map(|&i| (updates[i][k], i)));
        column.sort_by(|a, b| {
            (a.0 - med)
                .abs()
                .total_cmp(&(b.0 - med).abs())
                .then(a.1.cmp(&b.1))
        });
        let mut kept: Vec<f64> = column[..keep].iter().map(|c| c.0).collect();
        kept.sort_by(f64::total_cmp);
        out.push(kept.iter().sum::<f64>() / keep as f64);
    }

    let mut result =
        AggregationResult::new(UpdateVector::from_vec_unchecked(out), sorted(selection));
    if n < 4 * f + 3 {
        result.diagnostics.events.push(format!(
            "bulyan relaxed: n = {n} < 4f + 3 = {}; theta = {theta}, beta = {beta}",
            4 * f + 3
        ));
    }
    Ok(result)
}
