//! Sweeps lambda on a small synthetic problem and writes `sweep.csv`,
//! `sweep.svg` and per-run outputs under `runs/example_sweep`.

use std::path::PathBuf;

use simlearn::experiment::{lambda_sweep, ExperimentConfig};

const CONFIG: &str = r#"
version = 1
seeds = [0, 1]

[dataset]
source = "synthetic"
k = 4
m = 8
height = 12
width = 12
train_per_class = 20
val_per_class = 10
test_per_class = 10
aux_per_class = 40
aux_components = 1

[architecture]
height = 12
width = 12
conv_channels = [6, 8]
conv_strides = [1, 2]
n1 = 32
n2 = 32

[training]
learning_rate = 0.05
epochs = 40
batch_size = 16

[modes]
lambdas = [0.2, 0.4, 0.6, 0.8, 1.0]
"#;

fn main() -> simlearn::Result<()> {
    env_logger::init();
    let mut cfg = ExperimentConfig::from_toml(CONFIG)?;
    cfg.output = PathBuf::from("runs/example_sweep");
    let sweep = lambda_sweep(&cfg)?;
    println!(
        "baseline      val dacc {:.3} ± {:.3}",
        sweep.baseline_val.mean, sweep.baseline_val.std
    );
    for p in &sweep.points {
        let mark = if p.lambda == sweep.best_lambda { "  <- best" } else { "" };
        println!(
            "lambda {:<5}  val dacc {:.3} ± {:.3}{mark}",
            p.lambda, p.val_dacc.mean, p.val_dacc.std
        );
    }
    println!("outputs in {}", cfg.output.display());
    Ok(())
}
