use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use simlearn::data::write_image_dir;
use simlearn::experiment::{
    evaluate_to_dir, interpret_export, lambda_sweep, prepare_dataset, run_experiment,
    DatasetSource, ExperimentConfig,
};
use simlearn::train::checkpoint_load;
use simlearn::{Error, Result};

#[derive(Parser)]
#[command(name = "simlearn", version, about = "Simultaneous-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Fraction of the target training split to keep.
    #[arg(long)]
    reduce: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(r) = self.reduce {
            cfg.reduce = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured mode and seed.
    Train(Common),
    /// Sweep lambda for the simultaneous-learning model against the baseline.
    Sweep(Common),
    /// Evaluate a checkpoint on the target test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Layer correlation, auxiliary ranking and Grad-CAM exports.
    Interpret {
        #[command(flatten)]
        common: Common,
        /// Checkpoint of the target-only model.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Checkpoint of the simultaneous-learning model.
        #[arg(long)]
        sl: Option<PathBuf>,
    },
    /// Write the configured synthetic dataset as a PNG directory tree.
    Synth(Common),
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let summary = run_experiment(&common.load()?)?;
            for a in &summary.aggregates {
                println!(
                    "{:<14} test dacc {:.4} ± {:.4}  test acc {:.4} ± {:.4}  ({} runs)",
                    a.kind.label(),
                    a.test_dacc.mean,
                    a.test_dacc.std,
                    a.test_accuracy.mean,
                    a.test_accuracy.std,
                    a.runs
                );
            }
            println!("wrote {}", summary.output.join("summary.csv").display());
        }
        Command::Sweep(common) => {
            let s = lambda_sweep(&common.load()?)?;
            println!(
                "baseline val dacc {:.4} ± {:.4}",
                s.baseline_val.mean, s.baseline_val.std
            );
            for p in &s.points {
                println!(
                    "lambda {:<4} val dacc {:.4} ± {:.4}",
                    p.lambda, p.val_dacc.mean, p.val_dacc.std
                );
            }
            println!("best lambda {}", s.best_lambda);
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = common.load()?;
            let model = checkpoint_load(&checkpoint)?.model;
            let ds = prepare_dataset(&cfg, first_seed(&cfg))?;
            let r = evaluate_to_dir(&model, &ds, &cfg.output)?;
            println!(
                "accuracy {:.4}  dacc {:.4}  macro AUC {}  inter-group error {:.4}",
                r.accuracy,
                r.dacc,
                r.macro_auc.map_or("n/a".into(), |a| format!("{a:.4}")),
                r.inter_group_error_rate
            );
        }
        Command::Interpret { common, base, sl } => {
            let cfg = common.load()?;
            let load = |p: Option<PathBuf>| p.map(|p| checkpoint_load(&p).map(|c| c.model)).transpose();
            let (base, sl) = (load(base)?, load(sl)?);
            let ds = prepare_dataset(&cfg, first_seed(&cfg))?;
            let s = interpret_export(base.as_ref(), sl.as_ref(), &ds, &cfg.interpret, &cfg.output)?;
            for notice in &s.notices {
                println!("note: {notice}");
            }
            for (layer, kind, b, l) in &s.layer_correlation {
                let f = |v: &Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
                println!("layer {layer:>2} {kind:<10} base {}  sl {}", f(b), f(l));
            }
        }
        Command::Synth(common) => {
            let cfg = common.load()?;
            if !matches!(cfg.dataset, DatasetSource::Synthetic(_)) {
                return Err(Error::Config("synth needs a synthetic dataset source".into()));
            }
            let ds = prepare_dataset(&cfg, first_seed(&cfg))?;
            let n = write_image_dir(&ds, &cfg.output)?;
            println!("wrote {n} images under {}", cfg.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
