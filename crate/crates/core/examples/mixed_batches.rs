//! Builds the half-target, half-auxiliary batches of one training epoch and
//! audits them.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simlearn::data::{compose_batch, epoch_plan, synth_generate, Provenance, SynthConfig};
use simlearn::Group;

fn main() -> simlearn::Result<()> {
    let mut cfg = SynthConfig::new(6, 20);
    cfg.height = 12;
    cfg.width = 12;
    let ds = synth_generate(&cfg, 1)?;
    let batch_size = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let plan = epoch_plan(ds.target_train.len(), batch_size / 2, true, &mut rng)?;
    println!(
        "{} target training images, {} auxiliary images, {} steps per epoch",
        ds.target_train.len(),
        ds.aux_pool.len(),
        plan.len()
    );
    for (step, ids) in plan.iter().enumerate() {
        let batch = compose_batch(ds.layout, &ds.target_train, ids, &ds.aux_pool, batch_size, &mut rng)?;
        let aux: Vec<&Provenance> = batch.provenance.iter().filter(|p| p.group == Group::Auxiliary).collect();
        let distinct: HashSet<usize> = aux.iter().map(|p| p.index).collect();
        if step < 3 || step + 1 == plan.len() {
            println!(
                "step {step:>2}: {} target + {} auxiliary, {} distinct auxiliary images",
                batch.count(Group::Target),
                batch.count(Group::Auxiliary),
                distinct.len()
            );
        } else if step == 3 {
            println!("...");
        }
    }
    Ok(())
}
