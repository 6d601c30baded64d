//! `thepose` subcommands.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thepose_core::head::init_model;

use crate::checkpoint::{ensure_compatible, load_checkpoint, save_checkpoint};
use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, save_dataset};
use crate::error::{CliError, Result};
use crate::experiment::{self, Split, Sweep};
use crate::report::{graph_json, labeled_table, report_table, write_json, write_loss_csv};

/// Topology-guided hybrid graph fusion pose estimation at desk scale.
#[derive(Debug, Parser)]
#[command(name = "thepose", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepArg {
    Alpha1,
    Neighbors,
    Occlusion,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset split.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Train and write `checkpoint.bin` and `loss.csv` into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint; writes `report.json` and `report.txt`.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of each mask removed before inference; overrides eval.occlusion.
        #[arg(long)]
        occlusion: Option<f64>,
    },
    /// Check invariance, symmetry and cross-instance consistency of the prior.
    CheckPrior {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the neighbor graph of one sample as JSON.
    DumpGraph {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sample: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every layer's gradients.
    GradCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Retrain or re-evaluate over a parameter grid.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        sweep: SweepArg,
        /// Directory for `ablate.json` and `ablate.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Relative gradient error above which `grad-check` fails.
pub const GRAD_TOLERANCE: f64 = 1e-4;

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen { config, out: path, split } => {
            let config = ExperimentConfig::load(&config)?;
            let pool = experiment::worker_pool()?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let samples = experiment::generate(&config, split, &pool)?;
            save_dataset(&path, &samples)?;
            for (c, n) in experiment::category_counts(&samples) {
                say(out, &format!("{} {n}\n", c.name()))?;
            }
        }
        Command::Train { config, data, out: dir } => {
            let config = ExperimentConfig::load(&config)?;
            let samples = load_dataset(&data)?;
            if samples.is_empty() {
                return Err(CliError::Config("training set is empty".into()));
            }
            let pool = experiment::worker_pool()?;
            let last = config.train.steps - 1;
            let mut lines = Vec::new();
            let (store, trace) = experiment::train_model(&config, &samples, &pool, |r| {
                if r.step % 100 == 0 || r.step == last {
                    lines.push(format!("step {} lr {:.3e} loss {:.6}\n", r.step, r.lr, r.loss.total));
                }
            })?;
            for l in lines {
                say(out, &l)?;
            }
            ensure_dir(&dir)?;
            save_checkpoint(&dir.join("checkpoint.bin"), &store)?;
            write_loss_csv(&dir.join("loss.csv"), &trace)?;
        }
        Command::Eval { config, data, ckpt, out: dir, occlusion } => {
            let config = ExperimentConfig::load(&config)?;
            let samples = load_dataset(&data)?;
            let store = load_checkpoint(&ckpt)?;
            ensure_compatible(&store, &init_model(&config.model, config.model_seed))?;
            let pool = experiment::worker_pool()?;
            let fraction = occlusion.unwrap_or(config.eval.occlusion);
            let result = experiment::evaluate(&config, &samples, &store, fraction, &pool)?;
            let table = report_table(&result.report);
            ensure_dir(&dir)?;
            write_json(&dir.join("report.json"), &result.to_json())?;
            fs::write(dir.join("report.txt"), &table).map_err(|e| CliError::io(&dir.join("report.txt"), e))?;
            say(out, &table)?;
        }
        Command::CheckPrior { config } => {
            let config = ExperimentConfig::load(&config)?;
            let mut failed = Vec::new();
            for (c, r) in experiment::check_priors(&config)? {
                say(
                    out,
                    &format!(
                        "{} pose_max_diff {:e} symmetry_max_diff {:e} corresponding {:.4} unrelated {:.4} {}\n",
                        c.name(),
                        r.pose_max_diff,
                        r.symmetry_max_diff,
                        r.corresponding,
                        r.unrelated,
                        if r.passes() { "PASS" } else { "FAIL" }
                    ),
                )?;
                if !r.passes() {
                    failed.push(c.name());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::Numeric(format!("prior properties fail for {}", failed.join(","))));
            }
        }
        Command::DumpGraph { data, sample, alpha, k, out: path } => {
            let samples = load_dataset(&data)?;
            let s = samples.get(sample).ok_or_else(|| {
                CliError::Config(format!("sample {sample} out of range for {} samples", samples.len()))
            })?;
            let graph = experiment::sample_graph(s, k, alpha)?;
            let json = graph_json(&graph);
            match path {
                Some(p) => write_json(&p, &json)?,
                None => say(out, &format!("{json}\n"))?,
            }
        }
        Command::GradCheck { config } => {
            let config = ExperimentConfig::load(&config)?;
            let layers = experiment::grad_check(&config)?;
            let mut worst = 0.0f64;
            for (layer, err) in &layers {
                say(out, &format!("{layer} {err:e}\n"))?;
                worst = worst.max(*err);
            }
            if !(worst < GRAD_TOLERANCE) {
                return Err(CliError::Numeric(format!("gradient error {worst:e} exceeds {GRAD_TOLERANCE:e}")));
            }
        }
        Command::Ablate { config, sweep, out: dir } => {
            let config = ExperimentConfig::load(&config)?;
            let sweep = match sweep {
                SweepArg::Alpha1 => Sweep::Alpha1,
                SweepArg::Neighbors => Sweep::Neighbors,
                SweepArg::Occlusion => Sweep::Occlusion,
            };
            let pool = experiment::worker_pool()?;
            let rows = experiment::ablate(&config, sweep, &pool, |_| {})?;
            let labeled: Vec<(String, _)> = rows.iter().map(|(v, e)| (v.to_string(), &e.report.mean)).collect();
            let table = labeled_table(sweep.name(), &labeled);
            if let Some(dir) = dir {
                ensure_dir(&dir)?;
                write_json(&dir.join("ablate.json"), &experiment::sweep_json(sweep, &rows))?;
                fs::write(dir.join("ablate.txt"), &table).map_err(|e| CliError::io(&dir.join("ablate.txt"), e))?;
            }
            say(out, &table)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print one `error[kind]: message` line to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
                let _ = writeln!(err, "error[usage]: {}", first.trim_start_matches("error: "));
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.one_line());
            e.exit_code()
        }
    }
}
