//! Ranks the auxiliary classes that most excite the target outputs of a
//! trained multi-group model and writes Grad-CAM overlays for them to
//! `runs/example_gradcam`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simlearn::data::{synth_generate, SynthConfig};
use simlearn::interpret::{grad_cam, top_activating_aux};
use simlearn::nn::{Architecture, Model};
use simlearn::train::{train, TrainConfig};

fn main() -> simlearn::Result<()> {
    let mut data = SynthConfig::new(4, 8);
    data.height = 16;
    data.width = 16;
    data.noise = 0.3;
    data.aux_per_class = 30;
    let ds = synth_generate(&data, 5)?;
    let arch = Architecture {
        height: 16,
        width: 16,
        channels: 1,
        conv_channels: vec![6, 8],
        kernel_size: 3,
        conv_strides: vec![1, 1],
        n1: 32,
        n2: 32,
        dropout: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = Model::init(arch.build(ds.layout.k)?, &mut rng)?.extend_multi_group(ds.layout.m, &mut rng)?;
    let config = TrainConfig {
        learning_rate: 0.05,
        epochs: 60,
        ..TrainConfig::default()
    };
    let model = train(model, &ds, config)?.best_model;

    let out = Path::new("runs/example_gradcam");
    std::fs::create_dir_all(out).map_err(|e| simlearn::Error::InvalidState(e.to_string()))?;
    let targets: Vec<usize> = model.layout().target_range().collect();
    for (rank, class) in top_activating_aux(&model, &ds.aux_pool, 3, 2)?.iter().enumerate() {
        println!(
            "#{} {}  mean target mass {:.3} over {} images",
            rank + 1,
            ds.aux_names[class.class_index],
            class.score,
            class.samples
        );
        for inst in &class.instances {
            let image = &ds.aux_pool[inst.sample].features;
            let cam = grad_cam(&model, image, &targets)?;
            let name = format!("{}_{}", ds.aux_names[class.class_index], inst.sample);
            cam.save_overlay(image, &out.join(format!("{name}_overlay.png")))?;
            cam.save_pgm(&out.join(format!("{name}.pgm")))?;
            println!("    image {:>3}  target mass {:.3}  summed target logits {:+.3}", inst.sample, inst.score, cam.score);
        }
    }
    println!("heatmaps in {}", out.display());
    Ok(())
}
