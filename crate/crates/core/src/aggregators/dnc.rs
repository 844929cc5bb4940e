//! Single-round spectral filters in the divide-and-conquer family.
//!
//! Both work on the mean-centered stack of the round's updates. `dnc_pmf`
//! drops the clients with the largest projections on the top singular
//! direction; `dnc_cluster` runs 2-means in the top principal coordinates and
//! keeps the larger cluster.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{self, common_dim, dot, norm, pca_topk, Rng, UpdateVector};

use super::krum::mean_in_order;
use super::AggregationResult;

fn centered(updates: &[UpdateVector]) -> Vec<Vec<f64>> {
    let mu = tensor::mean(updates);
    updates
        .iter()
        .map(|u| u.iter().zip(&mu).map(|(a, b)| a - b).collect())
        .collect()
}

/// Top right singular vector of `rows` by power iteration on `X^T X`.
pub fn top_singular_direction(rows: &[Vec<f64>], iterations: usize, rng: &mut Rng) -> Vec<f64> {
    let dim = rows[0].len();
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let len = norm(&v);
    v.iter_mut().for_each(|x| *x /= len);
    for _ in 0..iterations {
        let mut next = vec![0.0; dim];
        for row in rows {
            tensor::axpy(dot(row, &v), row, &mut next);
        }
        let len = norm(&next);
        if len == 0.0 {
            break;
        }
        next.iter_mut().for_each(|x| *x /= len);
        v = next;
    }
    v
}

/// Removes the `ceil(filter_frac * f)` clients with the largest squared
/// projection on the top singular direction and averages the rest.
pub fn dnc_pmf(
    updates: &[UpdateVector],
    filter_frac: f64,
    f: usize,
    power_iterations: usize,
    rng: &mut Rng,
) -> Result<AggregationResult> {
    let n = updates.len();
    common_dim(updates)?;
    if !(filter_frac > 0.0 && filter_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "dnc filter fraction {filter_frac} outside (0, 1]"
        )));
    }
    let remove = (filter_frac * f as f64).ceil() as usize;
    if n <= remove {
        return Err(Error::TooFewClients {
            n,
            f,
            required: remove + 1,
        });
    }
    let rows = centered(updates);
    let v = top_singular_direction(&rows, power_iterations, rng);
    let scores: Vec<f64> = rows.iter().map(|r| dot(r, &v).powi(2)).collect();

    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = by_score[remove..].to_vec();
    // sum in ascending-score order so the aggregate ignores client order
    kept.reverse();
    let aggregate = mean_in_order(updates, &kept);
    kept.sort_unstable();
    let mut result = AggregationResult::new(aggregate, kept);
    result.scores = Some(scores);
    Ok(result)
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 50,
        }
    }
}

/// 2-means over `points`; returns the assignment (0 or 1) of the best restart.
pub fn two_means(points: &[Vec<f64>], params: KMeansParams, rng: &mut Rng) -> Vec<u8> {
    let n = points.len();
    let mut best: Option<(f64, Vec<u8>)> = None;
    for _ in 0..params.restarts.max(1) {
        let seeds = rng.sample_indices(n, 2);
        let mut centers = [points[seeds[0]].clone(), points[seeds[1]].clone()];
        let mut assign = vec![0u8; n];
        for _ in 0..params.max_iter.max(1) {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let d0 = tensor::sq_distance(p, &centers[0]);
                let d1 = tensor::sq_distance(p, &centers[1]);
                let a = u8::from(d1 < d0);
                if a != assign[i] {
                    assign[i] = a;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] as usize == c).collect();
                if !members.is_empty() {
                    *center = tensor::mean_of(points, &members);
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points
            .iter()
            .zip(&assign)
            .map(|(p, &a)| tensor::sq_distance(p, &centers[a as usize]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.map(|(_, a)| a).unwrap_or_else(|| vec![0; n])
}

/// Projects centered updates on the top `rank` principal directions, splits
/// them with 2-means, and averages the larger cluster. Equal-size clusters
/// resolve to the one holding the lowest client index.
pub fn dnc_cluster(
    updates: &[UpdateVector],
    rank: usize,
    params: KMeansParams,
    rng: &mut Rng,
) -> Result<AggregationResult> {
    let n = updates.len();
    common_dim(updates)?;
    if rank == 0 {
        return Err(Error::invalid("dnc rank must be positive"));
    }
    let rows = centered(updates);
    let basis = match pca_topk(&rows, rank) {
        Ok(b) if b.rank() > 0 => b,
        // one client, or every update identical: a single effective cluster
        _ => {
            let all: Vec<usize> = (0..n).collect();
            return Ok(AggregationResult::new(mean_in_order(updates, &all), all));
        }
    };
    let coords: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| basis.columns.iter().map(|u| dot(u, r)).collect())
        .collect();
    let assign = two_means(&coords, params, rng);
    let size1 = assign.iter().filter(|&&a| a == 1).count();
    let size0 = n - size1;
    let winner = match size0.cmp(&size1) {
        std::cmp::Ordering::Greater => 0,
        std::cmp::Ordering::Less => 1,
        std::cmp::Ordering::Equal => assign[0],
    };
    let members: Vec<usize> = (0..n).filter(|&i| assign[i] == winner).collect();
    let mut result = AggregationResult::new(mean_in_order(updates, &members), members);
    result.diagnostics.events.push(format!(
        "clusters {size0}/{size1}, projected rank {}",
        basis.rank()
    ));
    Ok(result)
}
