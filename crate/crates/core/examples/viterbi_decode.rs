//! Decodes a noisy level prediction into the best metrical hierarchy and
//! prints it as a dot diagram.
//!
//! cargo run --example viterbi_decode

use metrum::cli::dot_diagram;
use metrum::crf::viterbi_decode;
use metrum::ingest::regular_levels;
use metrum::types::{CrfParams, LevelDistribution, LevelSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> metrum::Result<()> {
    let layers = 4;
    let truth = regular_levels(48, layers, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // the true level gets weight 1, every level gets up to 1.2 of noise
    let noisy: Vec<LevelDistribution> = truth
        .iter()
        .map(|&l| {
            let mut w: Vec<f64> = (0..=layers).map(|_| rng.gen_range(0.0..1.2)).collect();
            w[l as usize] += 1.0;
            LevelDistribution::from_weights(w)
        })
        .collect::<metrum::Result<_>>()?;
    let argmax: Vec<u8> = noisy.iter().map(|d| d.argmax() as u8).collect();
    let wrong = argmax.iter().zip(&truth).filter(|(a, b)| a != b).count();

    let decoded = viterbi_decode(&CrfParams::default_for(layers)?, &noisy)?;
    let errors = decoded
        .levels()
        .iter()
        .zip(&truth)
        .filter(|(a, b)| a != b)
        .count();
    println!("per-step argmax: {wrong} wrong steps");
    print!("{}", dot_diagram(&LevelSequence::new(argmax, layers)?, 64));
    println!("viterbi: {errors} wrong steps");
    print!("{}", dot_diagram(&decoded, 64));
    Ok(())
}
