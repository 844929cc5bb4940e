//! Attack scenarios. Update-layer attacks rewrite the malicious clients'
//! submissions after honest local training; data-layer attacks corrupt their
//! local datasets before training and leave the resulting update alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::SyntheticDataset;
use crate::spectral::{build_subspace, SpectralKrumConfig};
use crate::tensor::{self, norm, Rng, SubspaceModel, UpdateVector};

/// Guard against division by zero when rescaling the orthogonal component.
const EPS_NUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    SignFlip,
    LabelFlip,
    MinMax,
    BufferDrift,
    AdaptiveSteer,
    SemanticBackdoor,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::AdaptiveSteer,
        AttackKind::BufferDrift,
        AttackKind::LabelFlip,
        AttackKind::MinMax,
        AttackKind::None,
        AttackKind::SemanticBackdoor,
        AttackKind::SignFlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::SignFlip => "sign_flip",
            AttackKind::LabelFlip => "label_flip",
            AttackKind::MinMax => "min_max",
            AttackKind::BufferDrift => "buffer_drift",
            AttackKind::AdaptiveSteer => "adaptive_steer",
            AttackKind::SemanticBackdoor => "semantic_backdoor",
        }
    }

    /// Attacks applied to the local dataset before training.
    pub fn is_data_layer(self) -> bool {
        matches!(self, AttackKind::LabelFlip | AttackKind::SemanticBackdoor)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "attack",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    /// Reads the defense's live subspace when it has one.
    Oracle,
    /// Rebuilds a subspace from the attacker's own history of global deltas.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignFlipParams {
    pub gamma: f64,
}

impl Default for SignFlipParams {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinMaxParams {
    pub c: f64,
}

impl Default for MinMaxParams {
    fn default() -> Self {
        Self { c: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferDriftParams {
    pub eps_max: f64,
    pub ramp_rounds: usize,
}

impl Default for BufferDriftParams {
    fn default() -> Self {
        Self {
            eps_max: 0.05,
            ramp_rounds: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveSteerParams {
    /// `v_adv = -scale * mean(benign updates of the malicious clients)`.
    pub scale: f64,
    /// Only shrink the orthogonal component when it exceeds `tau`.
    pub cap_only: bool,
    /// Sign-flip factor used in rounds without a subspace estimate.
    pub fallback_gamma: f64,
}

impl Default for AdaptiveSteerParams {
    fn default() -> Self {
        Self {
            scale: 1.0,
            cap_only: false,
            fallback_gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackdoorParams {
    /// Feature coordinates overwritten by the trigger.
    pub trigger_coords: Vec<usize>,
    pub trigger_value: f64,
    pub target_class: usize,
    pub poison_frac: f64,
}

impl Default for BackdoorParams {
    fn default() -> Self {
        Self {
            trigger_coords: vec![0, 1, 2],
            trigger_value: 3.0,
            target_class: 0,
            poison_frac: 0.5,
        }
    }
}

/// Per-kind parameter blocks plus the knowledge model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSettings {
    pub knowledge: Knowledge,
    pub sign_flip: SignFlipParams,
    pub min_max: MinMaxParams,
    pub buffer_drift: BufferDriftParams,
    pub adaptive_steer: AdaptiveSteerParams,
    pub semantic_backdoor: BackdoorParams,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            knowledge: Knowledge::Oracle,
            sign_flip: SignFlipParams::default(),
            min_max: MinMaxParams::default(),
            buffer_drift: BufferDriftParams::default(),
            adaptive_steer: AdaptiveSteerParams::default(),
            semantic_backdoor: BackdoorParams::default(),
        }
    }
}

/// An attack kind bound to validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    pub kind: AttackKind,
    pub settings: AttackSettings,
}

impl AttackScenario {
    pub fn new(kind: AttackKind, settings: AttackSettings) -> Result<Self> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        match kind {
            AttackKind::SignFlip => finite(settings.sign_flip.gamma, "sign_flip.gamma")?,
            AttackKind::MinMax => finite(settings.min_max.c, "min_max.c")?,
            AttackKind::BufferDrift => {
                finite(settings.buffer_drift.eps_max, "buffer_drift.eps_max")?
            }
            AttackKind::AdaptiveSteer => {
                finite(settings.adaptive_steer.scale, "adaptive_steer.scale")?;
                finite(
                    settings.adaptive_steer.fallback_gamma,
                    "adaptive_steer.fallback_gamma",
                )?;
            }
            AttackKind::SemanticBackdoor => {
                let b = &settings.semantic_backdoor;
                if !(0.0..=1.0).contains(&b.poison_frac) {
                    return Err(Error::invalid(
                        "semantic_backdoor.poison_frac outside [0, 1]",
                    ));
                }
                if b.trigger_coords.is_empty() {
                    return Err(Error::invalid("semantic_backdoor.trigger_coords is empty"));
                }
                finite(b.trigger_value, "semantic_backdoor.trigger_value")?;
            }
            AttackKind::None | AttackKind::LabelFlip => {}
        }
        Ok(Self { kind, settings })
    }

    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            settings: AttackSettings::default(),
        }
    }

    /// Whether this scenario wants the defense's live subspace.
    pub fn wants_defense_view(&self) -> bool {
        self.kind == AttackKind::AdaptiveSteer && self.settings.knowledge == Knowledge::Oracle
    }
}

/// What the malicious clients know in one round.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    /// Updates the malicious clients would have sent honestly.
    pub benign_updates: &'a [UpdateVector],
    /// Coordinate mean and standard deviation of the round's benign updates.
    pub honest_stats: Option<(&'a [f64], &'a [f64])>,
    pub defense_view: Option<&'a SubspaceModel>,
    pub round: usize,
    pub global_model: &'a [f64],
}

/// Attacker memory carried across rounds.
#[derive(Debug, Clone)]
pub struct AdversaryState {
    history: Vec<UpdateVector>,
    history_cap: usize,
    delta_sum: Vec<f64>,
    deltas_seen: usize,
    drift_direction: Option<Vec<f64>>,
    surrogate: SpectralKrumConfig,
}

impl AdversaryState {
    /// `surrogate` configures the subspace rebuilt in surrogate mode.
    pub fn new(surrogate: SpectralKrumConfig) -> Self {
        Self {
            history: Vec::new(),
            history_cap: surrogate.buffer_capacity,
            delta_sum: Vec::new(),
            deltas_seen: 0,
            drift_direction: None,
            surrogate,
        }
    }

    /// Records the global-model change broadcast at the end of a round.
    pub fn observe_global_delta(&mut self, delta: &UpdateVector) {
        if self.delta_sum.is_empty() {
            self.delta_sum = vec![0.0; delta.dim()];
        }
        tensor::axpy(1.0, delta, &mut self.delta_sum);
        self.deltas_seen += 1;
        if self.history.len() == self.history_cap {
            self.history.remove(0);
        }
        self.history.push(delta.clone());
    }

    pub fn surrogate_view(&self) -> Option<SubspaceModel> {
        build_subspace(&self.history, &self.surrogate)
    }

    /// Negated running mean of observed deltas, unit-normalized, fixed at first use.
    fn drift_direction(&mut self) -> Option<&[f64]> {
        if self.drift_direction.is_none() && self.deltas_seen > 0 {
            let mut v: Vec<f64> = self
                .delta_sum
                .iter()
                .map(|s| -s / self.deltas_seen as f64)
                .collect();
            let len = norm(&v);
            if len > 0.0 {
                v.iter_mut().for_each(|x| *x /= len);
                self.drift_direction = Some(v);
            }
        }
        self.drift_direction.as_deref()
    }
}

/// Malicious submissions for one round plus anything worth logging.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub updates: Vec<UpdateVector>,
    pub events: Vec<String>,
}

pub fn sign_flip(benign: &[UpdateVector], gamma: f64) -> Vec<UpdateVector> {
    benign.iter().map(|b| b.scaled(-gamma)).collect()
}

/// `mu - c * sigma`, coordinate-wise; every malicious client sends it.
pub fn min_max(mean: &[f64], std: &[f64], c: f64, count: usize) -> Vec<UpdateVector> {
    let v: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m - c * s).collect();
    vec![UpdateVector::from_vec_unchecked(v); count]
}

/// Linear ramp `eps_max * min(1, t / ramp_rounds)`.
pub fn drift_epsilon(round: usize, params: &BufferDriftParams) -> f64 {
    if params.ramp_rounds == 0 {
        return params.eps_max;
    }
    params.eps_max * (round as f64 / params.ramp_rounds as f64).min(1.0)
}

pub fn buffer_drift(benign: &[UpdateVector], direction: &[f64], epsilon: f64) -> Vec<UpdateVector> {
    benign
        .iter()
        .map(|b| {
            let mut v = b.as_slice().to_vec();
            tensor::axpy(epsilon, direction, &mut v);
            UpdateVector::from_vec_unchecked(v)
        })
        .collect()
}

/// Splits `v_adv` into its in-subspace part and an orthogonal part rescaled
/// to the threshold: `v_par + tau / (||v_perp|| + eps) * v_perp`.
pub fn steer_direction(v_adv: &[f64], model: &SubspaceModel, cap_only: bool) -> Vec<f64> {
    let v_par = model.lift(&model.project(v_adv));
    let v_perp: Vec<f64> = v_adv.iter().zip(&v_par).map(|(a, b)| a - b).collect();
    let perp_norm = norm(&v_perp);
    let factor = if cap_only && perp_norm <= model.tau {
        1.0
    } else {
        model.tau / (perp_norm + EPS_NUM)
    };
    v_par
        .iter()
        .zip(&v_perp)
        .map(|(p, o)| p + factor * o)
        .collect()
}

/// `y <- (y + 1) mod num_classes` for every sample.
pub fn label_flip(data: &SyntheticDataset) -> SyntheticDataset {
    let mut out = data.clone();
    for y in out.labels.iter_mut() {
        *y = (*y + 1) % data.num_classes;
    }
    out
}

/// Writes the trigger into `row`.
pub fn stamp_trigger(row: &mut [f64], params: &BackdoorParams) {
    for &k in &params.trigger_coords {
        if k < row.len() {
            row[k] = params.trigger_value;
        }
    }
}

/// Stamps the trigger onto `round(poison_frac * m)` seeded samples and
/// relabels them to the target class.
pub fn semantic_backdoor(
    data: &SyntheticDataset,
    params: &BackdoorParams,
    rng: &mut Rng,
) -> Result<SyntheticDataset> {
    if params.target_class >= data.num_classes {
        return Err(Error::invalid(format!(
            "target class {} outside {} classes",
            params.target_class, data.num_classes
        )));
    }
    if let Some(&k) = params
        .trigger_coords
        .iter()
        .find(|&&k| k >= data.num_features)
    {
        return Err(Error::invalid(format!(
            "trigger coordinate {k} outside feature range"
        )));
    }
    let mut out = data.clone();
    let count = (params.poison_frac * data.len() as f64).round() as usize;
    for i in rng.sample_indices(data.len(), count) {
        stamp_trigger(out.row_mut(i), params);
        out.labels[i] = params.target_class;
    }
    Ok(out)
}

/// Corrupts a malicious client's dataset for data-layer attacks; other kinds
/// return it unchanged.
pub fn corrupt_dataset(
    scenario: &AttackScenario,
    data: &SyntheticDataset,
    rng: &mut Rng,
) -> Result<SyntheticDataset> {
    match scenario.kind {
        AttackKind::LabelFlip => Ok(label_flip(data)),
        AttackKind::SemanticBackdoor => {
            semantic_backdoor(data, &scenario.settings.semantic_backdoor, rng)
        }
        _ => Ok(data.clone()),
    }
}

/// Final submissions for the malicious slots of one round.
pub fn apply_attack(
    scenario: &AttackScenario,
    ctx: &AttackContext<'_>,
    state: &mut AdversaryState,
) -> Result<AttackOutcome> {
    let benign = ctx.benign_updates;
    let count = benign.len();
    let mut events = Vec::new();
    if count == 0 {
        return Ok(AttackOutcome {
            updates: Vec::new(),
            events,
        });
    }
    let s = &scenario.settings;
    let updates = match scenario.kind {
        AttackKind::None | AttackKind::LabelFlip | AttackKind::SemanticBackdoor => benign.to_vec(),
        AttackKind::SignFlip => sign_flip(benign, s.sign_flip.gamma),
        AttackKind::MinMax => {
            let (mu, sigma) = ctx
                .honest_stats
                .ok_or_else(|| Error::invalid("min_max needs benign statistics"))?;
            min_max(mu, sigma, s.min_max.c, count)
        }
        AttackKind::BufferDrift => {
            let eps = drift_epsilon(ctx.round, &s.buffer_drift);
            match state.drift_direction() {
                Some(dir) => buffer_drift(benign, dir, eps),
                None => {
                    if eps != 0.0 {
                        events.push("buffer_drift: no observed deltas yet, sending benign".into());
                    }
                    benign.to_vec()
                }
            }
        }
        AttackKind::AdaptiveSteer => {
            let p = &s.adaptive_steer;
            let view = match (s.knowledge, ctx.defense_view) {
                (Knowledge::Oracle, Some(v)) => Some(v.clone()),
                _ => state.surrogate_view(),
            };
            match view {
                Some(model) => {
                    let mean = tensor::mean(benign);
                    let v_adv: Vec<f64> = mean.iter().map(|m| -p.scale * m).collect();
                    let d = steer_direction(&v_adv, &model, p.cap_only);
                    vec![UpdateVector::from_vec_unchecked(d); count]
                }
                None => {
                    events.push("adaptive_steer: no subspace estimate, sign_flip fallback".into());
                    sign_flip(benign, p.fallback_gamma)
                }
            }
        }
    };
    Ok(AttackOutcome { updates, events })
}
