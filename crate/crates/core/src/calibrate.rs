//! Global-offset calibration.
//!
//! A self-supervised model may place its boundaries a constant number of
//! tatums away from the annotated ones. One annotated song fixes that offset
//! for all later predictions.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::crf::{Crf, EMISSION_FLOOR};
use crate::error::{Error, Result};
use crate::eval::boundary_f1;
use crate::types::{CrfParams, LevelDistribution, LevelSequence};

/// Largest offset magnitude searched, in tatums.
pub const MAX_OFFSET: i64 = 32;

/// Minimum song length: every candidate offset must leave some overlap.
pub const MIN_CALIBRATION_STEPS: usize = 2 * MAX_OFFSET as usize + 1;

/// Offset to add to prediction indices, and the F1 it achieved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub offset: i64,
    pub score: f64,
}

/// Shifts every level `offset` steps later (earlier when negative); vacated
/// steps read level 0.
pub fn apply_offset(levels: &LevelSequence, offset: i64) -> Result<LevelSequence> {
    let n = levels.len() as i64;
    if offset.abs() > n {
        return Err(Error::Range {
            what: "offset",
            value: offset,
            min: -n,
            max: n,
        });
    }
    let src = levels.levels();
    let shifted = (0..n)
        .map(|i| {
            let j = i - offset;
            if (0..n).contains(&j) {
                src[j as usize]
            } else {
                0
            }
        })
        .collect();
    LevelSequence::new(shifted, levels.num_layers())
}

/// Shifts rows of a probability matrix; vacated rows are uniform.
pub fn shift_probabilities(probs: ArrayView2<'_, f64>, offset: i64) -> Array2<f64> {
    let (n, width) = probs.dim();
    let mut out = Array2::from_elem((n, width), 1.0 / width as f64);
    for i in 0..n as i64 {
        let j = i - offset;
        if (0..n as i64).contains(&j) {
            out.row_mut(i as usize).assign(&probs.row(j as usize));
        }
    }
    out
}

/// Boundary F1 at `max_level` of `decoded` shifted by `offset`, on the steps
/// where the shifted sequence is defined.
pub fn shifted_score(
    decoded: &LevelSequence,
    truth: &LevelSequence,
    offset: i64,
    max_level: usize,
) -> Result<f64> {
    let n = decoded.len() as i64;
    let shifted = apply_offset(decoded, offset)?;
    let lo = offset.max(0) as usize;
    let hi = (n + offset.min(0)) as usize;
    let pred = LevelSequence::new(shifted.levels()[lo..hi].to_vec(), decoded.num_layers())?;
    let gold = LevelSequence::new(truth.levels()[lo..hi].to_vec(), truth.num_layers())?;
    Ok(boundary_f1(&pred, &gold, max_level)?.f1)
}

/// Candidate offsets in preference order: 0, -1, 1, -2, 2, ...
fn candidates() -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=MAX_OFFSET).flat_map(|k| [-k, k]))
}

/// Best offset for an already decoded level sequence.
pub fn calibrate_decoded(
    decoded: &LevelSequence,
    truth: &LevelSequence,
    max_level: usize,
) -> Result<Calibration> {
    if decoded.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} steps, annotation {}",
            decoded.len(),
            truth.len()
        )));
    }
    if decoded.len() < MIN_CALIBRATION_STEPS {
        return Err(Error::InsufficientData {
            len: decoded.len(),
            needed: MIN_CALIBRATION_STEPS,
        });
    }
    if max_level > decoded.num_layers() {
        return Err(Error::Range {
            what: "level",
            value: max_level as i64,
            min: 0,
            max: decoded.num_layers() as i64,
        });
    }
    let mut best = Calibration {
        offset: 0,
        score: f64::NEG_INFINITY,
    };
    for offset in candidates() {
        let score = shifted_score(decoded, truth, offset, max_level)?;
        if score > best.score {
            best = Calibration { offset, score };
        }
    }
    Ok(best)
}

/// Decodes `pred` and finds the offset (within ±32) that best aligns its
/// level-`max_level` boundaries with `truth`. Ties prefer the smaller
/// magnitude, then the negative offset.
pub fn calibrate_offset(
    params: &CrfParams,
    pred: &[LevelDistribution],
    truth: &LevelSequence,
    max_level: usize,
) -> Result<Calibration> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} steps, annotation {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < MIN_CALIBRATION_STEPS {
        return Err(Error::InsufficientData {
            len: pred.len(),
            needed: MIN_CALIBRATION_STEPS,
        });
    }
    let probs = crate::crf::stack(pred, params.num_layers())?;
    let decoded = Crf::new(params.clone())?
        .with_floor(EMISSION_FLOOR)
        .decode(probs.view())?
        .levels;
    calibrate_decoded(&decoded, truth, max_level)
}
