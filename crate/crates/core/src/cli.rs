//! `histloss` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::codec::{encode_target, BinGrid, EncodeConfig};
use crate::config::{Mode, RunConfig};
use crate::experiment::{ablate, echoed_dataset_hash, evaluate, train_run, TrendStatus};
use crate::model::ModelState;
use crate::toy::{
    dataset_hash, generate_dataset, load_dataset, save_dataset, split_indices, DatasetSpec,
    LjParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "histloss",
    version,
    about = "Histogram-loss energy regression on synthetic Lennard-Jones clusters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliMode {
    Baseline,
    Hlgauss,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Baseline => Mode::Baseline,
            CliMode::Hlgauss => Mode::HlGauss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Lennard-Jones dataset file
    Generate {
        /// Random seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of clusters
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        /// Minimum atoms per cluster
        #[arg(long, default_value_t = 2)]
        atoms_min: usize,
        /// Maximum atoms per cluster
        #[arg(long, default_value_t = 8)]
        atoms_max: usize,
        /// Output dataset file
        #[arg(long, default_value = "dataset.txt")]
        out: PathBuf,
    },
    /// Train one model and write metrics.csv and checkpoint.json
    Train {
        /// TOML run configuration [default: built-in defaults]
        #[arg(long)]
        config: Option<PathBuf>,
        /// Energy head [default: from config, hlgauss]
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        /// Histogram bin count [default: from config, 128]
        #[arg(long)]
        bins: Option<usize>,
        /// Gaussian sigma in bin widths [default: from config, 0.75]
        #[arg(long)]
        sigma_mult: Option<f64>,
        /// Dataset file [default: generated from the config's dataset section]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output directory
        #[arg(
            long,
            env = "HISTLOSS_OUT_DIR",
            hide_env_values = true,
            default_value = "runs"
        )]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint and report energy/force MAE
    Eval {
        /// Checkpoint written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file [default: regenerated from the checkpoint's config]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Dataset split to evaluate
        #[arg(long, value_enum, default_value_t = Split::Val)]
        split: Split,
        /// Output directory for the per-sample CSV
        #[arg(
            long,
            env = "HISTLOSS_OUT_DIR",
            hide_env_values = true,
            default_value = "runs"
        )]
        out_dir: PathBuf,
    },
    /// Sweep bin counts and sigma multipliers against the baseline
    Ablate {
        /// TOML run configuration [default: built-in defaults]
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated bin counts
        #[arg(long, value_delimiter = ',', default_value = "128,256")]
        bins: Vec<usize>,
        /// Comma-separated sigma multipliers
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.75,2.0")]
        sigma_mults: Vec<f64>,
        /// Dataset file [default: generated from the config's dataset section]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Parallel cells [default: available cores]
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory
        #[arg(
            long,
            env = "HISTLOSS_OUT_DIR",
            hide_env_values = true,
            default_value = "runs"
        )]
        out_dir: PathBuf,
    },
    /// Print the histogram encoding of one energy as CSV
    Encode {
        /// Energy to encode
        #[arg(long, allow_hyphen_values = true)]
        energy: f64,
        /// Lower grid edge
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        lo: f64,
        /// Upper grid edge
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        hi: f64,
        /// Bin count
        #[arg(long, default_value_t = 128)]
        bins: usize,
        /// Gaussian sigma in bin widths
        #[arg(long, default_value_t = 0.75)]
        sigma_mult: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

type CliResult = std::result::Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parse arguments from the process, run, and return the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if !path.is_file() {
        let hint = match what {
            "checkpoint" => "run `histloss train` first".to_string(),
            _ => format!(
                "create one with `histloss generate --out {}`",
                path.display()
            ),
        };
        return Err(usage(format!(
            "{what} {} does not exist; {hint}",
            path.display()
        )));
    }
    Ok(())
}

fn execute(cmd: Command) -> CliResult {
    match cmd {
        Command::Generate {
            seed,
            samples,
            atoms_min,
            atoms_max,
            out,
        } => {
            let spec = DatasetSpec {
                seed,
                samples,
                atoms_min,
                atoms_max,
                ..Default::default()
            };
            spec.validate().map_err(usage)?;
            let data = generate_dataset(&spec, &LjParams::default()).map_err(runtime)?;
            save_dataset(&out, &data).map_err(runtime)?;
            println!("wrote {} samples to {}", data.len(), out.display());
            Ok(())
        }
        Command::Train {
            config,
            mode,
            bins,
            sigma_mult,
            dataset,
            out_dir,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.run.mode = m.into();
            }
            if cfg.run.mode == Mode::Baseline {
                if bins.is_some() {
                    eprintln!("warning: --bins is ignored in baseline mode");
                }
                if sigma_mult.is_some() {
                    eprintln!("warning: --sigma-mult is ignored in baseline mode");
                }
            } else {
                if let Some(b) = bins {
                    cfg.grid.bins = b;
                }
                if let Some(s) = sigma_mult {
                    cfg.grid.sigma_multiplier = s;
                }
            }
            cfg.validate().map_err(usage)?;
            let data = match &dataset {
                Some(p) => {
                    require_file(p, "dataset")?;
                    Some(load_dataset(p).map_err(runtime)?)
                }
                None => None,
            };
            let out = train_run(&cfg, data.as_deref()).map_err(runtime)?;
            out.write_to(&out_dir).map_err(runtime)?;
            let last = out.metrics.rows.last().expect("final metrics row");
            println!(
                "{} run: {} steps, validation energy MAE {} eV/atom, force MAE {} eV/A",
                cfg.run.mode, last.step, out.validation.energy_mae, out.validation.force_mae
            );
            println!("outputs in {}", out_dir.display());
            Ok(())
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
            out_dir,
        } => {
            require_file(&checkpoint, "checkpoint")?;
            let (state, echo) = ModelState::load(&checkpoint).map_err(runtime)?;
            let data = match &dataset {
                Some(p) => {
                    require_file(p, "dataset")?;
                    load_dataset(p).map_err(runtime)?
                }
                None => {
                    let cfg = RunConfig::from_toml(&echo).map_err(runtime)?;
                    let data =
                        generate_dataset(&cfg.dataset, &LjParams::default()).map_err(runtime)?;
                    if let Some(want) = echoed_dataset_hash(&echo) {
                        if dataset_hash(&data) != want {
                            return Err(usage(
                                "checkpoint was trained on a dataset file; pass it with --dataset",
                            ));
                        }
                    }
                    data
                }
            };
            let (train, val) = split_indices(data.len());
            let range = match split {
                Split::Train => train,
                Split::Val => val,
                Split::All => 0..data.len(),
            };
            let ev = evaluate(&state, &data[range.clone()], range.start).map_err(runtime)?;
            println!("split: {split:?} ({} samples)", ev.records.len());
            println!("energy_mae: {}", ev.energy_mae);
            println!("force_mae: {}", ev.force_mae);
            for (s, e, f) in ev.by_stratum() {
                println!("species{s}: energy_mae={e} force_mae={f}");
            }
            if let Some(h) = ev.mean_entropy() {
                println!("mean_entropy: {h}");
            }
            std::fs::create_dir_all(&out_dir).map_err(runtime)?;
            let name = format!("eval_{}.csv", format!("{split:?}").to_lowercase());
            std::fs::write(out_dir.join(&name), ev.records_csv()).map_err(runtime)?;
            Ok(())
        }
        Command::Ablate {
            config,
            bins,
            sigma_mults,
            dataset,
            workers,
            out_dir,
        } => {
            let cfg = load_config(config.as_deref())?;
            cfg.validate().map_err(usage)?;
            if bins.iter().any(|b| *b < 2) || sigma_mults.iter().any(|s| !(*s > 0.0)) {
                return Err(usage("bin counts must be >= 2 and sigma multipliers > 0"));
            }
            let data = match &dataset {
                Some(p) => {
                    require_file(p, "dataset")?;
                    Some(load_dataset(p).map_err(runtime)?)
                }
                None => None,
            };
            let cells = 1 + bins.len() * sigma_mults.len();
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
                .min(cells);
            let ab =
                ablate(&cfg, &bins, &sigma_mults, workers, data.as_deref()).map_err(runtime)?;
            ab.write_to(&out_dir).map_err(runtime)?;
            for c in &ab.cells {
                match &c.outcome {
                    Ok(run) => println!(
                        "{}: energy_mae={} force_mae={}",
                        c.variant, run.validation.energy_mae, run.validation.force_mae
                    ),
                    Err(e) => eprintln!("{}: FAILED: {e}", c.variant),
                }
            }
            if bins.contains(&128) {
                let status = match ab.sigma_trend(128) {
                    TrendStatus::Pass => "pass",
                    TrendStatus::Warn => "warn",
                    TrendStatus::Unavailable => "n/a",
                };
                println!("sigma=0.75 lowest at 128 bins: {status}");
            }
            println!("overall rows are sample-weighted means over all validation samples");
            println!("wrote {}", out_dir.join("ablation.csv").display());
            Ok(())
        }
        Command::Encode {
            energy,
            lo,
            hi,
            bins,
            sigma_mult,
        } => {
            let grid = BinGrid::new(lo, hi, bins).map_err(usage)?;
            let enc = EncodeConfig::from_multiplier(sigma_mult, &grid).map_err(usage)?;
            let h = encode_target(energy, &enc, &grid).map_err(usage)?;
            if h.is_out_of_range() {
                eprintln!(
                    "warning: only {:.3} of the Gaussian mass lies inside the grid",
                    h.in_range_mass
                );
            }
            println!("bin,center,prob");
            for (i, (c, p)) in grid.centers().iter().zip(&h.probs).enumerate() {
                println!("{i},{c},{p}");
            }
            Ok(())
        }
    }
}
