//! Computes boundary and downbeat F1 for a prediction that is off by one
//! tatum, before and after offset calibration.
//!
//! cargo run --example evaluate

use metrum::calibrate::{apply_offset, calibrate_decoded};
use metrum::eval::{boundary_f1, downbeat_f1};
use metrum::ingest::regular_levels;
use metrum::types::LevelSequence;

fn main() -> metrum::Result<()> {
    let layers = 5;
    let truth = LevelSequence::new(regular_levels(128, layers, 0), layers)?;
    let late = LevelSequence::new(regular_levels(128, layers, 127), layers)?;
    for level in 1..=layers {
        let f = boundary_f1(&late, &truth, level)?;
        println!(
            "level {level}: P {:.3} R {:.3} F1 {:.3}",
            f.precision, f.recall, f.f1
        );
    }

    let calibration = calibrate_decoded(&late, &truth, 4)?;
    println!(
        "calibrated offset {} (F1 {:.3})",
        calibration.offset, calibration.score
    );
    let fixed = apply_offset(&late, calibration.offset)?;
    println!(
        "level 4 after calibration: F1 {:.3}",
        boundary_f1(&fixed, &truth, 4)?.f1
    );

    let downbeats =
        |l: &LevelSequence| -> Vec<bool> { l.levels().iter().map(|&x| x >= 4).collect() };
    println!(
        "downbeat F1 before {:.3}, after {:.3}",
        downbeat_f1(&downbeats(&late), &downbeats(&truth))?,
        downbeat_f1(&downbeats(&fixed), &downbeats(&truth))?
    );
    Ok(())
}
