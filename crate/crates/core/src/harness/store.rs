//! Run-matrix execution and the on-disk result store.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! cells/<rule>/<attack>/seed-<seed>/rounds.jsonl
//! cells/<rule>/<attack>/seed-<seed>/timings.jsonl
//! ```
//!
//! Both log files start with a [`CellHeader`] line followed by one JSON object
//! per round. `rounds.jsonl` is a pure function of (config, seed, cell);
//! wall-clock times go to `timings.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::AttackKind;
use crate::aggregators::RuleKind;
use crate::error::{Error, Result};
use crate::fedsim::{Federation, RoundRecord, RoundTiming, Simulation};
use crate::par;

use super::config::ExperimentConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunCell {
    pub rule: RuleKind,
    pub attack: AttackKind,
    pub seed: u64,
}

impl RunCell {
    pub fn relative_dir(&self) -> PathBuf {
        PathBuf::from("cells")
            .join(self.rule.name())
            .join(self.attack.name())
            .join(format!("seed-{}", self.seed))
    }
}

/// Rules × attacks × seeds, in config order (rule outermost).
pub fn expand_matrix(config: &ExperimentConfig) -> Result<Vec<RunCell>> {
    if config.rules.is_empty() || config.attacks.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config(
            "run matrix needs rules, attacks and seeds".into(),
        ));
    }
    let mut cells =
        Vec::with_capacity(config.rules.len() * config.attacks.len() * config.seeds.len());
    for &rule in &config.rules {
        for &attack in &config.attacks {
            for &seed in &config.seeds {
                cells.push(RunCell { rule, attack, seed });
            }
        }
    }
    Ok(cells)
}

/// First line of every log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellHeader {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub rule: RuleKind,
    pub attack: AttackKind,
    pub rounds: usize,
    pub version: String,
}

/// Everything logged for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLog {
    pub header: CellHeader,
    pub records: Vec<RoundRecord>,
    pub timings: Vec<RoundTiming>,
}

impl CellLog {
    pub fn cell(&self) -> RunCell {
        RunCell {
            rule: self.header.rule,
            attack: self.header.attack,
            seed: self.header.seed,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.header.rounds && self.timings.len() == self.header.rounds
    }
}

pub fn cell_header(cell: &RunCell, config: &ExperimentConfig) -> CellHeader {
    CellHeader {
        format: FORMAT_VERSION,
        config_hash: config.config_hash(),
        seed: cell.seed,
        rule: cell.rule,
        attack: cell.attack,
        rounds: config.rounds,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Runs `config.rounds` rounds of one cell with a fresh defense state.
pub fn run_cell(cell: &RunCell, config: &ExperimentConfig, fed: &Federation) -> Result<CellLog> {
    if fed.seed != cell.seed {
        return Err(Error::invalid("federation seed does not match the cell"));
    }
    let rule = config.rule_instance(cell.rule)?;
    let scenario = config.scenario(cell.attack)?;
    let mut sim = Simulation::new(fed, rule, scenario)?;
    let (records, timings) = sim.run(config.rounds)?;
    Ok(CellLog {
        header: cell_header(cell, config),
        records,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub cells: Vec<RunCell>,
}

/// Result directory handle.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cell_dir(&self, cell: &RunCell) -> PathBuf {
        self.root.join(cell.relative_dir())
    }

    /// Writes (or overwrites) both log files of a cell.
    pub fn write_cell(&self, log: &CellLog) -> Result<()> {
        let dir = self.cell_dir(&log.cell());
        fs::create_dir_all(&dir)?;
        write_jsonl(&dir.join("rounds.jsonl"), &log.header, &log.records)?;
        write_jsonl(&dir.join("timings.jsonl"), &log.header, &log.timings)?;
        Ok(())
    }

    pub fn load_cell(&self, cell: &RunCell) -> Result<CellLog> {
        let dir = self.cell_dir(cell);
        let (header, records) = read_jsonl::<RoundRecord>(&dir.join("rounds.jsonl"))?;
        let (theader, timings) = read_jsonl::<RoundTiming>(&dir.join("timings.jsonl"))?;
        if theader != header {
            return Err(Error::Config(format!(
                "{}: log headers disagree",
                dir.display()
            )));
        }
        Ok(CellLog {
            header,
            records,
            timings,
        })
    }

    /// Every cell found on disk, sorted by (rule, attack, seed). Does not
    /// consult the manifest, so summaries depend on the logs alone.
    pub fn load_all(&self) -> Result<Vec<CellLog>> {
        let cells_root = self.root.join("cells");
        if !cells_root.is_dir() {
            return Err(Error::Config(format!(
                "{} holds no cells",
                self.root.display()
            )));
        }
        let mut found = Vec::new();
        for rule in sorted_dirs(&cells_root)? {
            for attack in sorted_dirs(&rule)? {
                for seed_dir in sorted_dirs(&attack)? {
                    if seed_dir.join("rounds.jsonl").is_file() {
                        let (header, _) =
                            read_jsonl::<RoundRecord>(&seed_dir.join("rounds.jsonl"))?;
                        found.push(RunCell {
                            rule: header.rule,
                            attack: header.attack,
                            seed: header.seed,
                        });
                    }
                }
            }
        }
        found.sort();
        found.iter().map(|c| self.load_cell(c)).collect()
    }

    pub fn write_manifest(&self, config: &ExperimentConfig, cells: &[RunCell]) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let manifest = Manifest {
            format: FORMAT_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.config_hash(),
            config: config.clone(),
            cells: cells.to_vec(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.root.join("manifest.json"), text)?;
        Ok(())
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        let text = fs::read_to_string(self.root.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// A complete, matching log for `cell` already on disk.
    fn existing(&self, cell: &RunCell, config: &ExperimentConfig) -> Option<CellLog> {
        let log = self.load_cell(cell).ok()?;
        (log.header == cell_header(cell, config) && log.is_complete()).then_some(log)
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, header: &CellHeader, rows: &[T]) -> Result<()> {
    // write-then-rename so an interrupted run never leaves a truncated log
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        serde_json::to_writer(&mut w, header)?;
        w.write_all(b"\n")?;
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(CellHeader, Vec<T>)> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))??;
    let header: CellHeader = serde_json::from_str(&first)?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if !line.is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok((header, rows))
}

/// Options for [`run_matrix`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Skip cells whose complete logs already exist with the same header.
    pub resume: bool,
}

/// Runs every cell, writes logs and the manifest, and returns the logs in
/// matrix order.
pub fn run_matrix(
    config: &ExperimentConfig,
    store: &ResultStore,
    options: RunOptions,
) -> Result<Vec<CellLog>> {
    config.validate()?;
    let cells = expand_matrix(config)?;
    store.write_manifest(config, &cells)?;
    par::with_jobs(options.jobs, || {
        let feds: Vec<Result<Federation>> =
            par::map(&config.seeds, |&seed| Federation::new(&config.sim, seed));
        let feds: BTreeMap<u64, Federation> = config
            .seeds
            .iter()
            .copied()
            .zip(feds)
            .map(|(s, f)| f.map(|f| (s, f)))
            .collect::<Result<_>>()?;
        let logs: Vec<Result<CellLog>> = par::map(&cells, |cell| {
            if options.resume {
                if let Some(log) = store.existing(cell, config) {
                    return Ok(log);
                }
            }
            let log = run_cell(cell, config, &feds[&cell.seed])?;
            store.write_cell(&log)?;
            Ok(log)
        });
        logs.into_iter().collect()
    })
}
