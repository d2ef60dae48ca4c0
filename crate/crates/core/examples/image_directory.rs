//! Writes a synthetic dataset as PNG files and loads it back through the
//! directory loader.

use simlearn::data::{load_image_dir, synth_generate, write_image_dir, ImageDirConfig, SynthConfig};

fn main() -> simlearn::Result<()> {
    let mut data = SynthConfig::new(3, 2);
    data.height = 16;
    data.width = 16;
    let ds = synth_generate(&data, 4)?;
    let root = std::env::temp_dir().join("simlearn_example_images");
    let _ = std::fs::remove_dir_all(&root);
    let written = write_image_dir(&ds, &root)?;
    println!("wrote {written} PNG files under {}", root.display());

    let mut cfg = ImageDirConfig::new(&root);
    cfg.height = 16;
    cfg.width = 16;
    let loaded = load_image_dir(&cfg, 4)?;
    println!("target classes   {:?}", loaded.target_names);
    println!("auxiliary classes {:?}", loaded.aux_names);
    println!(
        "splits: {} train / {} val / {} test, {} auxiliary",
        loaded.target_train.len(),
        loaded.target_val.len(),
        loaded.target_test.len(),
        loaded.aux_pool.len()
    );
    Ok(())
}
