//! SpectralKrum: Krum selection in a subspace learned from past aggregates,
//! followed by an orthogonal-energy guard.
//!
//! Each round the rule rebuilds (or reuses) a PCA basis from a FIFO buffer of
//! its own previous outputs, projects the incoming updates onto it, runs
//! multi-Krum on the projections, drops selected clients whose residual
//! outside the subspace exceeds the calibrated threshold, and averages the
//! survivors in the original parameter space.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregators::krum::{rank_by_score, scores_from_distances};
use crate::aggregators::AggregationResult;
use crate::error::{Error, Result};
use crate::tensor::{
    self, common_dim, coordinate_median, norm, pca_topk, quantile, BufferMatrix, SubspaceModel,
    UpdateVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMode {
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralKrumConfig {
    /// PCA rank.
    pub r: usize,
    /// Buffer capacity.
    #[serde(rename = "B")]
    pub buffer_capacity: usize,
    pub centering: Centering,
    pub trim_mode: TrimMode,
    pub trim_frac: f64,
    pub q: f64,
    pub warmup_rounds: usize,
    pub pca_refresh_interval: usize,
    pub guard_min_kept: usize,
    pub f_byzantine: usize,
    /// Subtract the buffer center from incoming updates before projecting.
    pub center_before_project: bool,
    /// Krum selection size; `None` means `n - f - 2`.
    pub selection_size: Option<usize>,
}

impl Default for SpectralKrumConfig {
    fn default() -> Self {
        Self {
            r: 50,
            buffer_capacity: 50,
            centering: Centering::Mean,
            trim_mode: TrimMode::TwoSided,
            trim_frac: 0.1,
            q: 0.98,
            warmup_rounds: 3,
            pca_refresh_interval: 1,
            guard_min_kept: 1,
            f_byzantine: 2,
            center_before_project: false,
            selection_size: None,
        }
    }
}

impl SpectralKrumConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.r == 0 {
            return bad("spectral_krum.r must be positive".into());
        }
        if self.buffer_capacity == 0 {
            return bad("spectral_krum.B must be positive".into());
        }
        if !(0.0..0.5).contains(&self.trim_frac) {
            return bad(format!(
                "spectral_krum.trim_frac {} outside [0, 0.5)",
                self.trim_frac
            ));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return bad(format!("spectral_krum.q {} outside (0, 1]", self.q));
        }
        if self.pca_refresh_interval == 0 {
            return bad("spectral_krum.pca_refresh_interval must be positive".into());
        }
        if self.guard_min_kept == 0 {
            return bad("spectral_krum.guard_min_kept must be positive".into());
        }
        if self.selection_size == Some(0) {
            return bad("spectral_krum.selection_size must be positive".into());
        }
        Ok(())
    }
}

/// Which branch produced a round's aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    NoSubspace,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub phase: Phase,
    /// Krum selection `S`, in ascending score order.
    pub krum_selected: Vec<usize>,
    /// Guard survivors `G`, ascending client index.
    pub guard_kept: Vec<usize>,
    /// Orthogonal energy of every client; zeros outside the spectral phase.
    pub residuals: Vec<f64>,
    pub tau: Option<f64>,
    pub effective_rank: Option<usize>,
    /// `G` was refilled with the minimal-residual members of `S`.
    pub guard_fallback: bool,
    pub fallback_reason: Option<String>,
}

/// Two-sided norm trim of the centered buffer; returns surviving row
/// positions (oldest first).
fn trim_rows(centered: &[Vec<f64>], trim_frac: f64) -> Vec<usize> {
    let m = centered.len();
    let cut = (trim_frac * m as f64).floor() as usize;
    if m <= 2 * cut {
        return Vec::new();
    }
    let norms: Vec<f64> = centered.iter().map(|r| norm(r)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut kept = order[cut..m - cut].to_vec();
    kept.sort_unstable();
    kept
}

fn prepare(d: &[f64], center: &[f64], subtract: bool) -> Vec<f64> {
    if subtract {
        d.iter().zip(center).map(|(a, b)| a - b).collect()
    } else {
        d.to_vec()
    }
}

/// Builds the benign subspace from a buffer of past aggregates (oldest first).
///
/// Returns `None` for an empty buffer, when fewer than two rows survive the
/// norm trim, or when the surviving rows carry no variance.
pub fn build_subspace(rows: &[UpdateVector], config: &SpectralKrumConfig) -> Option<SubspaceModel> {
    if rows.is_empty() {
        return None;
    }
    let center = match config.centering {
        Centering::Mean => tensor::mean(rows),
        Centering::Median => coordinate_median(rows).ok()?,
    };
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&center).map(|(a, b)| a - b).collect())
        .collect();
    let kept = trim_rows(&centered, config.trim_frac);
    if kept.len() < 2 {
        return None;
    }
    let survivors: Vec<&[f64]> = kept.iter().map(|&i| centered[i].as_slice()).collect();
    let basis = pca_topk(&survivors, config.r).ok()?;
    if basis.rank() == 0 {
        return None;
    }
    let mut model = SubspaceModel {
        basis: basis.columns,
        center: UpdateVector::from_vec_unchecked(center),
        tau: 0.0,
    };
    let residuals: Vec<f64> = rows
        .iter()
        .map(|r| {
            let x = prepare(r, &model.center, config.center_before_project);
            norm(&model.residual_vector(&x))
        })
        .collect();
    model.tau = quantile(&residuals, config.q).ok()?;
    Some(model)
}

/// Outcome of the selection and guard stages against a fixed subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSelection {
    pub krum_selected: Vec<usize>,
    /// Survivors in aggregation order.
    pub guard_kept: Vec<usize>,
    pub residuals: Vec<f64>,
    pub guard_fallback: bool,
    pub degraded: bool,
}

/// Krum in spectral coordinates followed by the orthogonal-energy guard.
pub fn spectral_select(
    updates: &[UpdateVector],
    model: &SubspaceModel,
    f: usize,
    selection_size: Option<usize>,
    guard_min_kept: usize,
    center_before_project: bool,
) -> SpectralSelection {
    let n = updates.len();
    let (coords, residuals): (Vec<Vec<f64>>, Vec<f64>) = crate::par::map(updates, |d| {
        let x = prepare(d, &model.center, center_before_project);
        let z = model.project(&x);
        let lifted = model.lift(&z);
        let rho = tensor::sq_distance(&x, &lifted).sqrt();
        (z, rho)
    })
    .into_iter()
    .unzip();

    let nominal = n as isize - f as isize - 2;
    let degraded = nominal < 1;
    let neighbors = if n < 2 {
        0
    } else {
        (nominal.max(1) as usize).min(n - 1)
    };
    let k_sel = selection_size
        .unwrap_or(nominal.max(1) as usize)
        .clamp(1, n);

    let dist = tensor::pairwise_unchecked(&coords);
    let scores = scores_from_distances(&dist, neighbors);
    let mut selected = rank_by_score(&scores);
    selected.truncate(k_sel);

    let mut kept: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|&i| residuals[i] <= model.tau)
        .collect();
    let mut guard_fallback = false;
    if kept.len() < guard_min_kept {
        guard_fallback = true;
        let mut by_residual = selected.clone();
        by_residual.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]).then(a.cmp(&b)));
        by_residual.truncate(guard_min_kept.min(selected.len()));
        kept = by_residual;
    }

    SpectralSelection {
        krum_selected: selected,
        guard_kept: kept,
        residuals,
        guard_fallback,
        degraded,
    }
}

#[derive(Debug, Clone)]
struct CachedSubspace {
    built_for_round: usize,
    buffer_len: usize,
    model: Option<SubspaceModel>,
}

/// Stateful SpectralKrum rule. Owns the buffer of its own past outputs.
#[derive(Debug, Clone)]
pub struct SpectralKrumState {
    config: SpectralKrumConfig,
    buffer: BufferMatrix,
    round_counter: usize,
    cache: Option<CachedSubspace>,
}

impl SpectralKrumState {
    pub fn new(config: SpectralKrumConfig) -> Result<Self> {
        config.validate()?;
        let buffer = BufferMatrix::new(config.buffer_capacity)?;
        Ok(Self {
            config,
            buffer,
            round_counter: 0,
            cache: None,
        })
    }

    pub fn config(&self) -> &SpectralKrumConfig {
        &self.config
    }

    pub fn buffer(&self) -> &BufferMatrix {
        &self.buffer
    }

    pub fn round_counter(&self) -> usize {
        self.round_counter
    }

    /// Empties the buffer, zeroes the round counter and drops the cache.
    pub fn reset(&mut self) {
        self.buffer.clear();
        self.round_counter = 0;
        self.cache = None;
    }

    fn cache_is_fresh(&self) -> bool {
        match &self.cache {
            None => false,
            Some(c) => {
                let age = self.round_counter.saturating_sub(c.built_for_round);
                let crossed = (c.buffer_len < 2) != (self.buffer.len() < 2);
                age < self.config.pca_refresh_interval && !crossed
            }
        }
    }

    fn in_warmup(&self) -> bool {
        self.round_counter < self.config.warmup_rounds
    }

    /// The subspace the next call to [`aggregate_round`](Self::aggregate_round)
    /// will use, without mutating the state. `None` during warmup or when the
    /// buffer cannot support a subspace.
    pub fn current_view(&self) -> Option<SubspaceModel> {
        if self.in_warmup() {
            return None;
        }
        if self.cache_is_fresh() {
            return self.cache.as_ref().and_then(|c| c.model.clone());
        }
        build_subspace(&self.buffer.to_vec(), &self.config)
    }

    fn refresh_subspace(&mut self) -> u64 {
        if self.cache_is_fresh() {
            return 0;
        }
        let start = Instant::now();
        let model = build_subspace(&self.buffer.to_vec(), &self.config);
        let elapsed = start.elapsed().as_nanos().max(1) as u64;
        self.cache = Some(CachedSubspace {
            built_for_round: self.round_counter,
            buffer_len: self.buffer.len(),
            model,
        });
        elapsed
    }

    /// One aggregation round. The aggregate is appended to the buffer in every
    /// branch, warmup included.
    pub fn aggregate_round(&mut self, updates: &[UpdateVector]) -> Result<AggregationResult> {
        let n = updates.len();
        let dim = common_dim(updates)?;
        if let Some(first) = self.buffer.rows().next() {
            if first.dim() != dim {
                return Err(Error::DimensionMismatch {
                    index: 0,
                    expected: first.dim(),
                    found: dim,
                });
            }
        }

        let mut build_ns = None;
        let model = if self.in_warmup() {
            None
        } else {
            build_ns = Some(self.refresh_subspace());
            self.cache.as_ref().and_then(|c| c.model.clone())
        };

        let mut result = match model {
            None => {
                let reason = if self.in_warmup() {
                    "warmup"
                } else {
                    "subspace unavailable"
                };
                let agg = coordinate_median(updates)?;
                let all: Vec<usize> = (0..n).collect();
                let mut r =
                    AggregationResult::new(UpdateVector::from_vec_unchecked(agg), all.clone());
                r.diagnostics.spectral = Some(SpectralDiagnostics {
                    phase: if self.in_warmup() {
                        Phase::Warmup
                    } else {
                        Phase::NoSubspace
                    },
                    krum_selected: all.clone(),
                    guard_kept: all,
                    residuals: vec![0.0; n],
                    tau: None,
                    effective_rank: None,
                    guard_fallback: false,
                    fallback_reason: Some(reason.to_string()),
                });
                r
            }
            Some(model) => {
                let f = self.config.f_byzantine;
                let sel = spectral_select(
                    updates,
                    &model,
                    f,
                    self.config.selection_size,
                    self.config.guard_min_kept,
                    self.config.center_before_project,
                );
                let agg = crate::aggregators::krum::mean_in_order(updates, &sel.guard_kept);
                let mut kept = sel.guard_kept.clone();
                kept.sort_unstable();
                let mut r = AggregationResult::new(agg, kept.clone());
                if sel.degraded {
                    r.diagnostics.events.push(format!(
                        "n = {n} < f + 3 = {}: selection degraded to {}",
                        f + 3,
                        sel.krum_selected.len()
                    ));
                }
                if self.config.center_before_project {
                    r.diagnostics.events.push("center_before_project".into());
                }
                let rank = model.rank();
                if rank < self.config.r {
                    r.diagnostics
                        .events
                        .push(format!("rank clamped from {} to {rank}", self.config.r));
                }
                r.diagnostics.spectral = Some(SpectralDiagnostics {
                    phase: Phase::Spectral,
                    krum_selected: sel.krum_selected,
                    guard_kept: kept,
                    residuals: sel.residuals,
                    tau: Some(model.tau),
                    effective_rank: Some(rank),
                    guard_fallback: sel.guard_fallback,
                    fallback_reason: sel.guard_fallback.then(|| {
                        "guard kept too few; minimal-residual candidates retained".to_string()
                    }),
                });
                r
            }
        };
        result.subspace_build_ns = build_ns;

        self.buffer.push(result.aggregate.clone())?;
        self.round_counter += 1;
        Ok(result)
    }
}
