use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spectral_fl::adversary::AttackKind;
use spectral_fl::aggregators::RuleKind;
use spectral_fl::harness::{
    expand_matrix, no_attack_band_violations, run_matrix, write_summaries, CellFilter,
    ExperimentConfig, ResultStore, RunOptions, DEFAULT_RULES,
};
use spectral_fl::Error;

/// Accuracy gap below the `mean` rule's no-attack final accuracy that
/// `summarize` reports as suspicious.
const NO_ATTACK_BAND: f64 = 0.15;

#[derive(Parser)]
#[command(
    name = "spectral-fl",
    version,
    about = "Byzantine-robust federated learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the run matrix and write logs plus summary tables.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run a single master seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict cells, e.g. `rule=spectral_krum|mean,attack=sign_flip`.
        #[arg(long)]
        filter: Option<String>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Keep complete logs from an earlier, identical run.
        #[arg(long)]
        resume: bool,
    },
    /// Regenerate summary tables from the round logs in an output directory.
    Summarize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        filter: Option<String>,
    },
    /// Parse and validate a config, printing the resolved form.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    ListRules,
    ListAttacks,
}

fn load_config(path: Option<&PathBuf>) -> spectral_fl::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(cli: Cli) -> spectral_fl::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            filter,
            jobs,
            resume,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(f) = filter {
                CellFilter::parse(&f)?.apply(&mut cfg)?;
            }
            cfg.validate()?;
            let cells = expand_matrix(&cfg)?.len();
            eprintln!(
                "running {cells} cells x {} rounds into {}",
                cfg.rounds,
                cfg.output_dir.display()
            );
            let store = ResultStore::new(&cfg.output_dir);
            let logs = run_matrix(&cfg, &store, RunOptions { jobs, resume })?;
            for path in write_summaries(store.root(), &logs)? {
                eprintln!("wrote {}", path.display());
            }
            print!(
                "{}",
                std::fs::read_to_string(store.root().join("summary/auc.csv"))?
            );
        }
        Command::Summarize {
            config,
            out,
            filter,
        } => {
            let root = match (out, config) {
                (Some(dir), _) => dir,
                (None, Some(p)) => ExperimentConfig::load(&p)?.output_dir,
                (None, None) => {
                    return Err(Error::Config("summarize needs --out or --config".into()))
                }
            };
            let store = ResultStore::new(&root);
            let mut logs = store.load_all()?;
            if let Some(f) = filter {
                let f = CellFilter::parse(&f)?;
                logs.retain(|l| {
                    f.rules.as_ref().is_none_or(|r| r.contains(&l.header.rule))
                        && f.attacks
                            .as_ref()
                            .is_none_or(|a| a.contains(&l.header.attack))
                });
            }
            if let Some(bad) = logs.iter().find(|l| !l.is_complete()) {
                eprintln!(
                    "warning: {} / {} / seed {} has {} of {} rounds",
                    bad.header.rule,
                    bad.header.attack,
                    bad.header.seed,
                    bad.records.len(),
                    bad.header.rounds
                );
            }
            for path in write_summaries(&root, &logs)? {
                eprintln!("wrote {}", path.display());
            }
            for (rule, acc) in no_attack_band_violations(&logs, NO_ATTACK_BAND)? {
                eprintln!(
                    "note: {rule} no-attack final accuracy {acc:.3} is more than {NO_ATTACK_BAND} below mean's"
                );
            }
            print!("{}", std::fs::read_to_string(root.join("summary/auc.csv"))?);
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("# config_hash = {}", cfg.config_hash());
            println!("# cells = {}", expand_matrix(&cfg)?.len());
            print!("{}", cfg.to_toml_string()?);
        }
        Command::ListRules => {
            for kind in RuleKind::ALL {
                let tag = if DEFAULT_RULES.contains(&kind) {
                    ""
                } else {
                    "  (not in default grid)"
                };
                println!("{kind}{tag}");
            }
        }
        Command::ListAttacks => {
            for kind in AttackKind::ALL {
                let layer = if kind.is_data_layer() {
                    "data"
                } else {
                    "update"
                };
                println!("{kind}\t{layer}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::UnknownName { .. })) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
