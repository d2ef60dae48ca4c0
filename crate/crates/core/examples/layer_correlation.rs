//! Layer Correlation of every spatial layer for an untrained network and
//! for the same network after a short simultaneous-learning run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simlearn::data::{synth_generate, SynthConfig};
use simlearn::experiment::spatial_layers;
use simlearn::interpret::{class_channel_vector, layer_correlation};
use simlearn::nn::{Architecture, Model};
use simlearn::train::{train, TrainConfig};

fn main() -> simlearn::Result<()> {
    let mut data = SynthConfig::new(5, 10);
    data.height = 12;
    data.width = 12;
    data.aux_components = 1;
    data.aux_per_class = 40;
    let ds = synth_generate(&data, 3)?;
    let arch = Architecture {
        height: 12,
        width: 12,
        channels: 1,
        conv_channels: vec![6, 10],
        kernel_size: 3,
        conv_strides: vec![1, 2],
        n1: 32,
        n2: 32,
        dropout: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let untrained = Model::init(arch.build(ds.layout.k)?, &mut rng)?.extend_multi_group(ds.layout.m, &mut rng)?;
    let config = TrainConfig {
        learning_rate: 0.05,
        epochs: 20,
        ..TrainConfig::default()
    };
    let trained = train(untrained.clone(), &ds, config)?.best_model;

    let layers = spatial_layers(&trained)?;
    let before = layer_correlation(&untrained, &ds.target_test, &layers)?;
    let after = layer_correlation(&trained, &ds.target_test, &layers)?;
    println!("layer  kind      untrained  trained");
    for (a, b) in before.layers.iter().zip(&after.layers) {
        println!("{:>5}  {:<8}  {:>9.4}  {:>7.4}", a.layer, a.kind, a.mean_abs, b.mean_abs);
    }

    let last = *layers.last().expect("network has spatial layers");
    let class0: Vec<_> = ds.target_test.iter().filter(|s| s.class_index == 0).cloned().collect();
    let v = class_channel_vector(&trained, &class0, last)?;
    println!("class 0 channel vector at layer {last}: {:.2?}", v.values);
    Ok(())
}
