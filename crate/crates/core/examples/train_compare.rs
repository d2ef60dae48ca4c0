//! Trains a target-only baseline and a simultaneous-learning model from the
//! same initial weights and compares them on the target test split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simlearn::data::{synth_generate, SynthConfig};
use simlearn::metrics::evaluate;
use simlearn::nn::{Architecture, Model};
use simlearn::train::{train, Mode, TrainConfig};
use simlearn::Hyperparameters;

fn main() -> simlearn::Result<()> {
    env_logger::init();
    let mut data = SynthConfig::new(6, 20);
    data.height = 16;
    data.width = 16;
    data.noise = 0.6;
    data.aux_per_class = 150;
    data.aux_components = 1;
    let ds = synth_generate(&data, 0)?;

    let arch = Architecture {
        height: 16,
        width: 16,
        channels: 1,
        conv_channels: vec![8, 16],
        kernel_size: 5,
        conv_strides: vec![1, 2],
        n1: 64,
        n2: 64,
        dropout: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let base = Model::init(arch.build(ds.layout.k)?, &mut rng)?;
    let multi = base.extend_multi_group(ds.layout.m, &mut rng)?;

    let config = TrainConfig {
        learning_rate: 0.05,
        epochs: 80,
        mode: Mode::Baseline,
        ..TrainConfig::default()
    };
    let baseline = train(base, &ds, config.clone())?;
    let sl = train(
        multi,
        &ds,
        TrainConfig {
            mode: Mode::Simultaneous,
            hyper: Hyperparameters::new(0.5, 1.0, 1.0)?,
            ..config
        },
    )?;

    for (name, outcome) in [("baseline", &baseline), ("simultaneous", &sl)] {
        let report = evaluate(&outcome.best_model, &ds.target_test)?;
        println!(
            "{name:<13} best epoch {:>3}  test dacc {:.3}  accuracy {:.3}  macro AUC {:.3}  inter-group error {:.3}",
            outcome.best_epoch,
            report.dacc,
            report.accuracy,
            report.macro_auc.unwrap_or(f64::NAN),
            report.inter_group_error_rate
        );
    }
    Ok(())
}
