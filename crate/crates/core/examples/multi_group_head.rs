//! Widens a classifier head with an auxiliary group and counts the extra
//! parameters, then strips the group off again.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simlearn::nn::{Architecture, Model};

fn main() -> simlearn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // A small feature extractor with the head dimensions of a large
    // network: 512 penultimate units and 1000 auxiliary classes.
    let arch = Architecture {
        height: 8,
        width: 8,
        channels: 3,
        conv_channels: vec![4],
        kernel_size: 3,
        conv_strides: vec![],
        n1: 64,
        n2: 512,
        dropout: None,
    };
    let base = Model::init(arch.build(7)?, &mut rng)?;
    let multi = base.extend_multi_group(1000, &mut rng)?;
    let (before, after) = (base.params().total_count(), multi.params().total_count());
    println!("base model          {before:>9} parameters, {} outputs", base.spec().head_outputs());
    println!("multi-group model   {after:>9} parameters, {} outputs", multi.spec().head_outputs());
    println!("added               {:>9} = 1000 x (512 + 1)", after - before);

    let stripped = multi.strip_auxiliary_head()?;
    println!(
        "stripped model matches the base bit for bit: {}",
        stripped.params().bitwise_eq(base.params())
    );
    Ok(())
}
