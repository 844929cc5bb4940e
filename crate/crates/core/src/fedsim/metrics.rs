use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::data::SyntheticDataset;
use super::model::ModelSpec;
use super::round::RoundRecord;

/// Run-level accuracy summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean of the per-round accuracies.
    pub auc: f64,
    pub best: f64,
    pub final_accuracy: f64,
    /// Mean backdoor ASR over rounds where it was measured.
    pub mean_asr: Option<f64>,
    pub rounds: usize,
}

pub fn compute_metrics(records: &[RoundRecord]) -> Result<RunSummary> {
    let last = records.last().ok_or(Error::Empty("no round records"))?;
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let asr: Vec<f64> = records.iter().filter_map(|r| r.asr).collect();
    Ok(RunSummary {
        auc: acc.iter().sum::<f64>() / acc.len() as f64,
        best: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_accuracy: last.accuracy,
        mean_asr: (!asr.is_empty()).then(|| asr.iter().sum::<f64>() / asr.len() as f64),
        rounds: records.len(),
    })
}

/// Fraction of `triggered` samples classified as `target_class`. The caller
/// is expected to have removed samples whose true class is the target.
pub fn attack_success_rate(
    spec: &ModelSpec,
    params: &[f64],
    triggered: &SyntheticDataset,
    target_class: usize,
) -> Result<f64> {
    if triggered.is_empty() {
        return Err(Error::Empty("no eligible triggered samples"));
    }
    let hits = (0..triggered.len())
        .filter(|&i| spec.predict(params, triggered.row(i)) == target_class)
        .count();
    Ok(hits as f64 / triggered.len() as f64)
}
