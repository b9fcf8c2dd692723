//! Trains on a synthetic corpus, calibrates the offset on one held-out song
//! and reports measure-level and downbeat F1 on a test split.
//!
//! cargo run --release --example train_and_calibrate -- [train_songs] [epochs] [batch] [lambda]

use metrum::calibrate::calibrate_offset;
use metrum::crf::MEASURE_LEVEL;
use metrum::eval::{evaluate_corpus, EvalOptions};
use metrum::ingest::{generate_synthetic, SyntheticConfig};
use metrum::model::{predict, train_from, EmissionModel, ModelConfig, TrainConfig};
use metrum::types::CrfParams;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> metrum::Result<()> {
    env_logger::init();
    let train_songs: usize = arg(1, 200);
    let layers = 6;
    let corpus = generate_synthetic(&SyntheticConfig {
        num_layers: layers,
        num_songs: train_songs + 21,
        ..SyntheticConfig::default()
    })?;
    let (train, rest) = corpus.split_at(train_songs);
    let (calib, test) = rest.split_first().expect("held-out songs");

    let config = TrainConfig {
        epochs: arg(2, 10),
        batch: arg(3, 1),
        lambda_consistency: arg(4, 1.0),
        ..TrainConfig::default()
    };
    let params = CrfParams::default_for(layers)?;
    let rolls: Vec<_> = train.iter().map(|(r, _)| r.clone()).collect();
    let start = std::time::Instant::now();
    let model = EmissionModel::init(ModelConfig::new(layers), config.seed)?;
    let (model, _) = train_from(model, &rolls, &params, &config, |epoch, loss| {
        println!(
            "epoch {:>2}  loss {loss:.4}  ({:.0?})",
            epoch + 1,
            start.elapsed()
        );
    })?;

    let calibration = calibrate_offset(
        &params,
        &predict(&model, &calib.0)?,
        &calib.1,
        MEASURE_LEVEL,
    )?;
    println!(
        "calibration: offset {} (F1 {:.3})",
        calibration.offset, calibration.score
    );

    let test: Vec<_> = test
        .iter()
        .map(|(r, l)| (r.clone(), Some(l.clone())))
        .collect();
    let report = evaluate_corpus(
        &model,
        Some(&calibration),
        &test,
        &params,
        &EvalOptions::default(),
    )?;
    print!("{}", report.to_table());
    Ok(())
}
