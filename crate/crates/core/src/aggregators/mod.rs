//! Aggregation rules behind one interface: `(updates, config, rng) -> result`.

mod coordinate;
mod dnc;
mod geometric;
pub(crate) mod krum;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralDiagnostics, SpectralKrumConfig, SpectralKrumState};
use crate::tensor::{common_dim, Rng, SubspaceModel, UpdateVector};

pub use coordinate::{coord_median_rule, mean, trimmed_mean};
pub use dnc::{dnc_cluster, dnc_pmf, top_singular_direction, two_means, KMeansParams};
pub use geometric::{geometric_median, sum_of_distances, weiszfeld, WeiszfeldOutcome};
pub use krum::{bulyan, full_krum, krum_scores, max_krum_f, multi_krum};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Notable events: clamps, relaxations, non-convergence.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub aggregate: UpdateVector,
    /// Clients whose updates entered the aggregate, ascending.
    pub selected_indices: Vec<usize>,
    pub scores: Option<Vec<f64>>,
    pub wall_time_ns: u64,
    /// Portion of `wall_time_ns` spent building the subspace (spectral rule only).
    pub subspace_build_ns: Option<u64>,
    pub diagnostics: Diagnostics,
}

impl AggregationResult {
    pub fn new(aggregate: UpdateVector, selected_indices: Vec<usize>) -> Self {
        Self {
            aggregate,
            selected_indices,
            scores: None,
            wall_time_ns: 0,
            subspace_build_ns: None,
            diagnostics: Diagnostics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub f_byzantine: usize,
    pub trim_frac: f64,
    /// Multi-Krum selection size; `None` means `n - f - 2`.
    pub multikrum_m: Option<usize>,
    /// Bulyan trim override; `None` means `f`. Always capped at `floor((theta - 1) / 2)`.
    pub bulyan_beta: Option<usize>,
    pub weiszfeld_tol: f64,
    pub weiszfeld_max_iter: usize,
    pub dnc_rank: usize,
    pub dnc_filter_frac: f64,
    pub dnc_power_iters: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            f_byzantine: 2,
            trim_frac: 0.2,
            multikrum_m: None,
            bulyan_beta: None,
            weiszfeld_tol: 1e-10,
            weiszfeld_max_iter: 1000,
            dnc_rank: 2,
            dnc_filter_frac: 1.0,
            dnc_power_iters: 100,
            kmeans_restarts: 10,
            kmeans_max_iter: 50,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim_frac) {
            return Err(Error::invalid(format!(
                "trim_frac {} outside [0, 0.5)",
                self.trim_frac
            )));
        }
        if self.multikrum_m == Some(0) {
            return Err(Error::invalid("multikrum_m must be positive"));
        }
        if !(self.weiszfeld_tol > 0.0) || self.weiszfeld_max_iter == 0 {
            return Err(Error::invalid(
                "weiszfeld_tol and weiszfeld_max_iter must be positive",
            ));
        }
        if self.dnc_rank == 0 {
            return Err(Error::invalid("dnc_rank must be positive"));
        }
        if !(self.dnc_filter_frac > 0.0 && self.dnc_filter_frac <= 1.0) {
            return Err(Error::invalid(format!(
                "dnc_filter_frac {} outside (0, 1]",
                self.dnc_filter_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Mean,
    TrimmedMean,
    CoordMedian,
    GeometricMedian,
    FullKrum,
    MultiKrum,
    Bulyan,
    DncPmf,
    DncCluster,
    SpectralKrum,
}

impl RuleKind {
    pub const ALL: [RuleKind; 10] = [
        RuleKind::TrimmedMean,
        RuleKind::CoordMedian,
        RuleKind::GeometricMedian,
        RuleKind::FullKrum,
        RuleKind::MultiKrum,
        RuleKind::Bulyan,
        RuleKind::DncPmf,
        RuleKind::DncCluster,
        RuleKind::SpectralKrum,
        RuleKind::Mean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Mean => "mean",
            RuleKind::TrimmedMean => "trimmed_mean",
            RuleKind::CoordMedian => "coord_median",
            RuleKind::GeometricMedian => "geometric_median",
            RuleKind::FullKrum => "full_krum",
            RuleKind::MultiKrum => "multi_krum",
            RuleKind::Bulyan => "bulyan",
            RuleKind::DncPmf => "dnc_pmf",
            RuleKind::DncCluster => "dnc_cluster",
            RuleKind::SpectralKrum => "spectral_krum",
        }
    }

    pub fn is_spectral(self) -> bool {
        self == RuleKind::SpectralKrum
    }

    pub fn is_krum_family(self) -> bool {
        matches!(
            self,
            RuleKind::FullKrum | RuleKind::MultiKrum | RuleKind::Bulyan | RuleKind::SpectralKrum
        )
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "rule",
                name: s.to_string(),
            })
    }
}

/// A configured rule, carrying state for the spectral rule.
#[derive(Debug, Clone)]
pub struct AggregatorRule {
    kind: RuleKind,
    config: RuleConfig,
    spectral: Option<SpectralKrumState>,
}

impl AggregatorRule {
    pub fn new(kind: RuleKind, config: RuleConfig, spectral: SpectralKrumConfig) -> Result<Self> {
        config.validate()?;
        let spectral = if kind.is_spectral() {
            Some(SpectralKrumState::new(spectral)?)
        } else {
            None
        };
        Ok(Self {
            kind,
            config,
            spectral,
        })
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn config(&self) -> &RuleConfig {
        &self.config
    }

    pub fn spectral_state(&self) -> Option<&SpectralKrumState> {
        self.spectral.as_ref()
    }

    /// Read-only snapshot of the subspace the next round would use.
    pub fn defense_view(&self) -> Option<SubspaceModel> {
        self.spectral.as_ref().and_then(|s| s.current_view())
    }

    pub fn reset(&mut self) {
        if let Some(s) = self.spectral.as_mut() {
            s.reset();
        }
    }

    /// Aggregates one round and records the elapsed wall time.
    ///
    /// Krum-family rules clamp `f` to `floor((n - 3) / 2)` so every rule is
    /// total down to a single client; clamps are logged in the diagnostics.
    pub fn aggregate(
        &mut self,
        updates: &[UpdateVector],
        rng: &mut Rng,
    ) -> Result<AggregationResult> {
        common_dim(updates)?;
        let start = Instant::now();
        let mut result = self.dispatch(updates, rng)?;
        result.wall_time_ns = start.elapsed().as_nanos().max(1) as u64;
        Ok(result)
    }

    fn dispatch(&mut self, updates: &[UpdateVector], rng: &mut Rng) -> Result<AggregationResult> {
        let n = updates.len();
        let cfg = &self.config;
        let f = cfg.f_byzantine;
        let mut events = Vec::new();
        let mut krum_f = || {
            let fe = f.min(max_krum_f(n));
            if fe != f {
                events.push(format!("f clamped from {f} to {fe} for n = {n}"));
            }
            fe
        };
        let mut result = match self.kind {
            RuleKind::Mean => mean(updates)?,
            RuleKind::TrimmedMean => trimmed_mean(updates, cfg.trim_frac)?,
            RuleKind::CoordMedian => coord_median_rule(updates)?,
            RuleKind::GeometricMedian => {
                geometric_median(updates, cfg.weiszfeld_tol, cfg.weiszfeld_max_iter)?
            }
            RuleKind::FullKrum => {
                let fe = krum_f();
                krum::krum_result(updates, n.saturating_sub(fe + 2), 1)
            }
            RuleKind::MultiKrum => {
                let fe = krum_f();
                let neighbors = n.saturating_sub(fe + 2);
                let keep = cfg.multikrum_m.unwrap_or(neighbors).clamp(1, n);
                krum::krum_result(updates, neighbors, keep)
            }
            RuleKind::Bulyan => krum::bulyan_with_beta(updates, f, cfg.bulyan_beta)?,
            RuleKind::DncPmf => {
                let mut fe = f;
                while fe > 0 && (cfg.dnc_filter_frac * fe as f64).ceil() as usize >= n {
                    fe -= 1;
                }
                if fe != f {
                    events.push(format!("f clamped from {f} to {fe} for n = {n}"));
                }
                dnc_pmf(updates, cfg.dnc_filter_frac, fe, cfg.dnc_power_iters, rng)?
            }
            RuleKind::DncCluster => dnc_cluster(
                updates,
                cfg.dnc_rank,
                KMeansParams {
                    restarts: cfg.kmeans_restarts,
                    max_iter: cfg.kmeans_max_iter,
                },
                rng,
            )?,
            RuleKind::SpectralKrum => self
                .spectral
                .as_mut()
                .expect("spectral rule owns its state")
                .aggregate_round(updates)?,
        };
        events.append(&mut result.diagnostics.events);
        result.diagnostics.events = events;
        Ok(result)
    }
}
