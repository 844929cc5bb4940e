use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{AttackKind, AttackScenario, AttackSettings};
use crate::aggregators::{AggregatorRule, RuleConfig, RuleKind};
use crate::error::{Error, Result};
use crate::fedsim::SimConfig;
use crate::spectral::SpectralKrumConfig;

/// Rules of the summary table, in table order. `mean` is available but not
/// part of the default grid.
pub const DEFAULT_RULES: [RuleKind; 9] = [
    RuleKind::Bulyan,
    RuleKind::CoordMedian,
    RuleKind::DncCluster,
    RuleKind::DncPmf,
    RuleKind::FullKrum,
    RuleKind::GeometricMedian,
    RuleKind::MultiKrum,
    RuleKind::SpectralKrum,
    RuleKind::TrimmedMean,
];

/// Everything needed to reproduce a run matrix. Parsed from TOML; every
/// field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub rules: Vec<RuleKind>,
    pub attacks: Vec<AttackKind>,
    /// The `f` the defenses assume; defaults to `sim.attacker_count`.
    pub f_assumed: Option<usize>,
    pub output_dir: PathBuf,
    pub sim: SimConfig,
    pub rule: RuleConfig,
    pub spectral_krum: SpectralKrumConfig,
    pub attack: AttackSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            rounds: 100,
            rules: DEFAULT_RULES.to_vec(),
            attacks: AttackKind::ALL.to_vec(),
            f_assumed: None,
            output_dir: PathBuf::from("results"),
            sim: SimConfig::default(),
            rule: RuleConfig::default(),
            spectral_krum: SpectralKrumConfig::default(),
            attack: AttackSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.rules.is_empty() || self.attacks.is_empty() {
            return Err(Error::Config("rules and attacks must be nonempty".into()));
        }
        if self.f_assumed() > self.sim.clients_per_round {
            return Err(Error::Config(format!(
                "f_assumed {} exceeds clients_per_round {}",
                self.f_assumed(),
                self.sim.clients_per_round
            )));
        }
        self.sim.validate().map_err(wrap)?;
        self.effective_rule_config().validate().map_err(wrap)?;
        self.effective_spectral_config().validate().map_err(wrap)?;
        for &kind in &self.attacks {
            self.scenario(kind).map_err(wrap)?;
        }
        Ok(())
    }

    pub fn f_assumed(&self) -> usize {
        self.f_assumed.unwrap_or(self.sim.attacker_count)
    }

    /// Baseline parameters with `f_byzantine` set to the assumed `f`.
    pub fn effective_rule_config(&self) -> RuleConfig {
        RuleConfig {
            f_byzantine: self.f_assumed(),
            ..self.rule.clone()
        }
    }

    pub fn effective_spectral_config(&self) -> SpectralKrumConfig {
        SpectralKrumConfig {
            f_byzantine: self.f_assumed(),
            ..self.spectral_krum.clone()
        }
    }

    /// A fresh rule instance (empty spectral buffer).
    pub fn rule_instance(&self, kind: RuleKind) -> Result<AggregatorRule> {
        AggregatorRule::new(
            kind,
            self.effective_rule_config(),
            self.effective_spectral_config(),
        )
    }

    pub fn scenario(&self, kind: AttackKind) -> Result<AttackScenario> {
        AttackScenario::new(kind, self.attack.clone())
    }

    /// SHA-256 of the canonical JSON form of every field that affects
    /// results (the output directory does not).
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Restricts the matrix to some rules and/or attacks.
///
/// Syntax: `rule=a|b,attack=c`; repeating a key also adds values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellFilter {
    pub rules: Option<Vec<RuleKind>>,
    pub attacks: Option<Vec<AttackKind>>,
}

impl CellFilter {
    pub fn parse(spec: &str) -> Result<Self> {
        let mut filter = CellFilter::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("filter term `{part}` is not key=value")))?;
            for value in values.split('|').map(str::trim) {
                match key.trim() {
                    "rule" => filter
                        .rules
                        .get_or_insert_with(Vec::new)
                        .push(value.parse()?),
                    "attack" => filter
                        .attacks
                        .get_or_insert_with(Vec::new)
                        .push(value.parse()?),
                    other => return Err(Error::Config(format!("unknown filter key `{other}`"))),
                }
            }
        }
        Ok(filter)
    }

    /// Keeps the config's order; errors if nothing survives.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(rules) = &self.rules {
            config.rules.retain(|r| rules.contains(r));
        }
        if let Some(attacks) = &self.attacks {
            config.attacks.retain(|a| attacks.contains(a));
        }
        if config.rules.is_empty() || config.attacks.is_empty() {
            return Err(Error::Config("filter removed every cell".into()));
        }
        Ok(())
    }
}
