//! Interrupts a run after a few epochs, saves a checkpoint, resumes from it
//! and checks that the result matches an uninterrupted run exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simlearn::data::{synth_generate, SynthConfig};
use simlearn::nn::{Architecture, Model};
use simlearn::train::{checkpoint_load, checkpoint_save, TrainConfig, Trainer};

fn main() -> simlearn::Result<()> {
    let mut data = SynthConfig::new(3, 4);
    data.height = 10;
    data.width = 10;
    data.train_per_class = 16;
    let ds = synth_generate(&data, 9)?;
    let arch = Architecture {
        height: 10,
        width: 10,
        channels: 1,
        conv_channels: vec![4],
        kernel_size: 3,
        conv_strides: vec![],
        n1: 16,
        n2: 16,
        dropout: Some(0.2),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = Model::init(arch.build(ds.layout.k)?, &mut rng)?.extend_multi_group(ds.layout.m, &mut rng)?;
    let config = TrainConfig {
        learning_rate: 0.05,
        epochs: 6,
        seed: 9,
        ..TrainConfig::default()
    };

    let straight = Trainer::new(model.clone(), &ds, config.clone())?.run()?;

    let mut first = Trainer::new(model, &ds, config.clone())?;
    let mut quiet = |_: &simlearn::train::StepInfo<'_>, _: &Model| Ok(());
    for _ in 0..3 {
        first.run_epoch(&mut quiet)?;
    }
    let path = std::env::temp_dir().join("simlearn_example.ckpt");
    checkpoint_save(&first.checkpoint(), &path)?;
    println!("saved {} after {} epochs", path.display(), first.epochs_done());

    let resumed = Trainer::resume(checkpoint_load(&path)?, &ds, config)?.run()?;
    let identical = resumed.final_model.params().bitwise_eq(straight.final_model.params());
    println!(
        "final loss straight {:.6}, resumed {:.6}, identical parameters: {identical}",
        straight.history.last().map_or(f64::NAN, |h| h.train_loss),
        resumed.history.last().map_or(f64::NAN, |h| h.train_loss)
    );
    Ok(())
}
