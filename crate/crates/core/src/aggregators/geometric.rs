use crate::error::Result;
use crate::tensor::{self, common_dim, norm, UpdateVector};

use super::AggregationResult;

/// Distance below which the iterate is treated as sitting on a data point.
const COINCIDENCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct WeiszfeldOutcome {
    pub point: Vec<f64>,
    /// Objective at the start point and after each accepted iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Stopped on a data point that satisfies the subgradient optimality test.
    pub exact_hit: bool,
}

/// Sum of Euclidean distances from `y` to every point.
pub fn sum_of_distances<V: AsRef<[f64]>>(points: &[V], y: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| tensor::sq_distance(p.as_ref(), y).sqrt())
        .sum()
}

/// Weiszfeld iteration with the Vardi-Zhang step at data points.
///
/// Starts from the coordinate-wise median and stops when the displacement
/// falls below `tol * (1 + ||y||)`, when the objective stops decreasing, or
/// after `max_iter` iterations.
pub fn weiszfeld<V: AsRef<[f64]>>(
    points: &[V],
    tol: f64,
    max_iter: usize,
) -> Result<WeiszfeldOutcome> {
    let dim = common_dim(points)?;
    let mut y = tensor::coordinate_median(points)?;
    let mut objective = sum_of_distances(points, &y);
    let mut trace = vec![objective];
    let mut converged = false;
    let mut exact_hit = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let mut weighted = vec![0.0; dim];
        let mut weight_sum = 0.0;
        let mut pull = vec![0.0; dim];
        let mut coincident = 0usize;
        for p in points {
            let p = p.as_ref();
            let dist = tensor::sq_distance(p, &y).sqrt();
            if dist <= COINCIDENCE {
                coincident += 1;
                continue;
            }
            let w = 1.0 / dist;
            weight_sum += w;
            for k in 0..dim {
                weighted[k] += w * p[k];
                pull[k] += w * (p[k] - y[k]);
            }
        }
        if weight_sum == 0.0 {
            // every point coincides with y
            converged = true;
            exact_hit = coincident > 0;
            break;
        }
        let target: Vec<f64> = weighted.iter().map(|v| v / weight_sum).collect();
        let next = if coincident > 0 {
            let r = norm(&pull);
            let eta = coincident as f64;
            if r <= eta {
                converged = true;
                exact_hit = true;
                break;
            }
            let keep = eta / r;
            target
                .iter()
                .zip(&y)
                .map(|(t, yk)| (1.0 - keep) * t + keep * yk)
                .collect()
        } else {
            target
        };

        let next_objective = sum_of_distances(points, &next);
        if next_objective > objective {
            // numerical floor reached
            converged = true;
            break;
        }
        let displacement = tensor::sq_distance(&next, &y).sqrt();
        y = next;
        objective = next_objective;
        trace.push(objective);
        iterations += 1;
        if displacement < tol * (1.0 + norm(&y)) {
            converged = true;
            break;
        }
    }

    Ok(WeiszfeldOutcome {
        point: y,
        objective_trace: trace,
        iterations,
        converged,
        exact_hit,
    })
}

pub fn geometric_median(
    updates: &[UpdateVector],
    tol: f64,
    max_iter: usize,
) -> Result<AggregationResult> {
    let out = weiszfeld(updates, tol, max_iter)?;
    let mut result = AggregationResult::new(
        UpdateVector::from_vec_unchecked(out.point),
        (0..updates.len()).collect(),
    );
    result.diagnostics.iterations = Some(out.iterations);
    result.diagnostics.converged = Some(out.converged);
    if !out.converged {
        result.diagnostics.events.push(format!(
            "weiszfeld hit max_iter={max_iter} without converging"
        ));
    }
    Ok(result)
}
