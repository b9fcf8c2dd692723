//! Scores level predictions with the metrical CRF: a regular hierarchy costs
//! nothing under hard constraints, and an inserted beat costs its penalty.
//!
//! cargo run --example crf_loss

use metrum::crf::{consistency_loss, unsupervised_loss};
use metrum::ingest::regular_levels;
use metrum::types::{CrfParams, LevelDistribution};

fn one_hot(levels: &[u8], layers: usize) -> Vec<LevelDistribution> {
    levels
        .iter()
        .map(|&l| LevelDistribution::one_hot(layers, l as usize))
        .collect()
}

fn main() -> metrum::Result<()> {
    let layers = 3;
    let regular = regular_levels(16, layers, 0);
    println!("regular levels: {regular:?}");

    let hard = CrfParams::hard(layers)?;
    let loss = unsupervised_loss(&hard, &one_hot(&regular, layers))?;
    println!(
        "hard constraints, regular input: loss {:.3}",
        loss.loss.abs()
    );

    // repeat one tatum after the first beat
    let mut inserted = regular[..2].to_vec();
    inserted.push(regular[1]);
    inserted.extend_from_slice(&regular[2..]);
    let soft = CrfParams::new(vec![4.0, 5.0, 6.0], vec![2.0, 3.0, 4.0])?;
    let loss = unsupervised_loss(&soft, &one_hot(&inserted, layers))?;
    println!("one level-1 insertion: loss {:.3} (w_ins = 2)", loss.loss);

    // a flat, uninformative prediction pays the entropy of the hierarchy
    let flat = vec![LevelDistribution::uniform(layers); 16];
    let loss = unsupervised_loss(&soft, &flat)?;
    println!("uniform prediction: loss {:.3}", loss.loss);

    let joint = consistency_loss(&soft, &one_hot(&regular, layers), &flat)?;
    println!(
        "regular track vs uniform track: consistency loss {:.3}",
        joint.loss
    );
    Ok(())
}
