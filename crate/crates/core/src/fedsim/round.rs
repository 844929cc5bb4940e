//! One federated round: sample, attack, train, aggregate, evaluate.
//!
//! All randomness is derived from the master seed by purpose:
//! `dataset`, `partition`, `model-init` once per federation, then
//! `sample[t]`, `malicious[t]`, `train[t, client]`, `poison[t, client]` and
//! `aggregate[t]` per round. Client sampling therefore depends only on the
//! seed and round, so every rule/attack pair sees the same client schedule.

use serde::{Deserialize, Serialize};

use crate::adversary::{self, AdversaryState, AttackContext, AttackScenario};
use crate::aggregators::AggregatorRule;
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::SpectralDiagnostics;
use crate::tensor::{self, derive_seed, Rng, UpdateVector};

use super::data::{generate_dataset, DatasetParams, SyntheticDataset};
use super::metrics::attack_success_rate;
use super::model::{Architecture, ModelSpec};
use super::partition::{dirichlet_partition, ClientPartition};
use super::train::{local_train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Total client population `N`.
    pub num_clients: usize,
    /// Clients sampled per round `n`.
    pub clients_per_round: usize,
    /// Malicious clients among the sampled ones, every round.
    pub attacker_count: usize,
    pub dirichlet_alpha: f64,
    pub architecture: Architecture,
    pub dataset: DatasetParams,
    pub train: TrainConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_clients: 100,
            clients_per_round: 10,
            attacker_count: 2,
            dirichlet_alpha: 0.1,
            architecture: Architecture::Mlp { hidden: 32 },
            dataset: DatasetParams::default(),
            train: TrainConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(Error::invalid(format!(
                "clients_per_round {} must be in 1..={}",
                self.clients_per_round, self.num_clients
            )));
        }
        if self.attacker_count > self.clients_per_round {
            return Err(Error::invalid(format!(
                "attacker_count {} exceeds clients_per_round {}",
                self.attacker_count, self.clients_per_round
            )));
        }
        if let Architecture::Mlp { hidden: 0 } = self.architecture {
            return Err(Error::invalid("mlp hidden width must be positive"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::invalid("dirichlet_alpha must be positive"));
        }
        Ok(())
    }
}

/// Data, partition and initial model for one master seed. Shared read-only by
/// every run cell with that seed.
#[derive(Debug, Clone)]
pub struct Federation {
    pub config: SimConfig,
    pub seed: u64,
    pub spec: ModelSpec,
    pub train: SyntheticDataset,
    pub test: SyntheticDataset,
    pub partition: ClientPartition,
    pub initial_model: Vec<f64>,
    clients: Vec<SyntheticDataset>,
}

impl Federation {
    pub fn new(config: &SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (train, test) = generate_dataset(&config.dataset, derive_seed(seed, "dataset", &[]))?;
        let mut prng = Rng::derive(seed, "partition", &[]);
        let partition = dirichlet_partition(
            &train.labels,
            config.num_clients,
            config.dirichlet_alpha,
            &mut prng,
        )?;
        let clients = partition
            .client_indices
            .iter()
            .map(|ix| train.subset(ix))
            .collect();
        let spec = ModelSpec {
            architecture: config.architecture,
            num_features: config.dataset.num_features,
            num_classes: config.dataset.num_classes,
        };
        let initial_model = spec.init(&mut Rng::derive(seed, "model-init", &[]));
        Ok(Self {
            config: config.clone(),
            seed,
            spec,
            train,
            test,
            partition,
            initial_model,
            clients,
        })
    }

    pub fn client_data(&self, client: usize) -> &SyntheticDataset {
        &self.clients[client]
    }

    /// Sampled client ids (ascending) and the malicious positions among them.
    pub fn sample_round(&self, round: usize) -> (Vec<usize>, Vec<usize>) {
        let c = &self.config;
        let t = round as u64;
        let mut sampled = Rng::derive(self.seed, "sample", &[t])
            .sample_indices(c.num_clients, c.clients_per_round);
        sampled.sort_unstable();
        let mut malicious = Rng::derive(self.seed, "malicious", &[t])
            .sample_indices(c.clients_per_round, c.attacker_count);
        malicious.sort_unstable();
        (sampled, malicious)
    }
}

/// Deterministic per-round log entry. Wall-clock timings live in
/// [`RoundTiming`] so that these records are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub seed: u64,
    pub rule: String,
    pub attack: String,
    pub sampled_clients: Vec<usize>,
    /// Positions in `sampled_clients` controlled by the adversary.
    pub malicious_slots: Vec<usize>,
    /// Positions whose updates entered the aggregate.
    pub selected_indices: Vec<usize>,
    /// Per-client orthogonal energies, `tau`, Krum and guard sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralDiagnostics>,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asr: Option<f64>,
    pub aggregate_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTiming {
    pub round: usize,
    pub wall_time_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace_build_ns: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub record: RoundRecord,
    pub timing: RoundTiming,
    /// Final submissions, indexed by position in `record.sampled_clients`.
    pub updates: Vec<UpdateVector>,
}

/// A training run of one rule against one attack scenario.
pub struct Simulation<'a> {
    fed: &'a Federation,
    rule: AggregatorRule,
    scenario: AttackScenario,
    adversary: AdversaryState,
    global: Vec<f64>,
    triggered_test: Option<SyntheticDataset>,
    round: usize,
}

impl<'a> Simulation<'a> {
    pub fn new(
        fed: &'a Federation,
        mut rule: AggregatorRule,
        scenario: AttackScenario,
    ) -> Result<Self> {
        rule.reset();
        let surrogate = rule
            .spectral_state()
            .map(|s| s.config().clone())
            .unwrap_or_default();
        let triggered_test = match scenario.kind {
            adversary::AttackKind::SemanticBackdoor => Some(triggered_set(
                &fed.test,
                &scenario.settings.semantic_backdoor,
            )?),
            _ => None,
        };
        Ok(Self {
            fed,
            rule,
            scenario,
            adversary: AdversaryState::new(surrogate),
            global: fed.initial_model.clone(),
            triggered_test,
            round: 0,
        })
    }

    pub fn global_model(&self) -> &[f64] {
        &self.global
    }

    pub fn rule(&self) -> &AggregatorRule {
        &self.rule
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn run_round(&mut self) -> Result<RoundOutput> {
        let fed = self.fed;
        let t = self.round;
        let (sampled, malicious) = fed.sample_round(t);
        let n = sampled.len();
        let is_malicious: Vec<bool> = (0..n)
            .map(|i| malicious.binary_search(&i).is_ok())
            .collect();

        let scenario = &self.scenario;
        let global = &self.global;
        let trained: Vec<Result<UpdateVector>> = par::map_range(n, |i| {
            let client = sampled[i];
            let ids = [t as u64, client as u64];
            let own = fed.client_data(client);
            let poisoned;
            let data = if is_malicious[i] && scenario.kind.is_data_layer() {
                poisoned = adversary::corrupt_dataset(
                    scenario,
                    own,
                    &mut Rng::derive(fed.seed, "poison", &ids),
                )?;
                &poisoned
            } else {
                own
            };
            local_train(
                &fed.spec,
                global,
                data,
                &fed.config.train,
                &mut Rng::derive(fed.seed, "train", &ids),
            )
        });
        let mut updates = trained.into_iter().collect::<Result<Vec<_>>>()?;

        let mut events = Vec::new();
        if !malicious.is_empty() && !scenario.kind.is_data_layer() {
            let benign: Vec<UpdateVector> = malicious.iter().map(|&i| updates[i].clone()).collect();
            let honest: Vec<&UpdateVector> = (0..n)
                .filter(|&i| !is_malicious[i])
                .map(|i| &updates[i])
                .collect();
            let stats_src: Vec<&[f64]> = if honest.is_empty() {
                updates.iter().map(|u| u.as_slice()).collect()
            } else {
                honest.iter().map(|u| u.as_slice()).collect()
            };
            let mu = tensor::mean(&stats_src);
            let sigma = tensor::coordinate_std(&stats_src, &mu);
            let view = if scenario.wants_defense_view() && self.rule.kind().is_spectral() {
                self.rule.defense_view()
            } else {
                None
            };
            let ctx = AttackContext {
                benign_updates: &benign,
                honest_stats: Some((&mu, &sigma)),
                defense_view: view.as_ref(),
                round: t,
                global_model: global,
            };
            let outcome = adversary::apply_attack(scenario, &ctx, &mut self.adversary)?;
            for (&slot, u) in malicious.iter().zip(outcome.updates) {
                updates[slot] = u;
            }
            events.extend(outcome.events);
        }

        let mut agg_rng = Rng::derive(fed.seed, "aggregate", &[t as u64]);
        let result = self.rule.aggregate(&updates, &mut agg_rng)?;
        if !result.aggregate.is_finite() {
            return Err(Error::NonFinite { coordinate: 0 });
        }
        tensor::axpy(1.0, &result.aggregate, &mut self.global);
        if self.global.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid(format!(
                "global model diverged at round {t}"
            )));
        }
        self.adversary.observe_global_delta(&result.aggregate);

        let accuracy = fed.spec.accuracy(&self.global, &fed.test);
        let asr = match &self.triggered_test {
            Some(set) => Some(attack_success_rate(
                &fed.spec,
                &self.global,
                set,
                scenario.settings.semantic_backdoor.target_class,
            )?),
            None => None,
        };
        events.extend(result.diagnostics.events.iter().cloned());

        let record = RoundRecord {
            round: t,
            seed: fed.seed,
            rule: self.rule.kind().name().to_string(),
            attack: scenario.kind.name().to_string(),
            sampled_clients: sampled,
            malicious_slots: malicious,
            selected_indices: result.selected_indices.clone(),
            spectral: result.diagnostics.spectral.clone(),
            accuracy,
            asr,
            aggregate_norm: result.aggregate.norm(),
            events,
        };
        let timing = RoundTiming {
            round: t,
            wall_time_ns: result.wall_time_ns,
            subspace_build_ns: result.subspace_build_ns,
        };
        self.round += 1;
        Ok(RoundOutput {
            record,
            timing,
            updates,
        })
    }

    /// Runs `rounds` rounds, returning every record and timing.
    pub fn run(&mut self, rounds: usize) -> Result<(Vec<RoundRecord>, Vec<RoundTiming>)> {
        let mut records = Vec::with_capacity(rounds);
        let mut timings = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let out = self.run_round()?;
            records.push(out.record);
            timings.push(out.timing);
        }
        Ok((records, timings))
    }
}

/// Trigger-stamped copies of the test samples whose class is not the target.
pub fn triggered_set(
    test: &SyntheticDataset,
    params: &adversary::BackdoorParams,
) -> Result<SyntheticDataset> {
    if params.target_class >= test.num_classes {
        return Err(Error::invalid("backdoor target class out of range"));
    }
    let eligible: Vec<usize> = (0..test.len())
        .filter(|&i| test.labels[i] != params.target_class)
        .collect();
    let mut set = test.subset(&eligible);
    for i in 0..set.len() {
        adversary::stamp_trigger(set.row_mut(i), params);
    }
    Ok(set)
}
