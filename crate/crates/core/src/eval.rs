//! Boundary and downbeat metrics, and corpus-level evaluation.
//!
//! Boundaries are matched at exact tatum positions. Standard deviations are
//! population standard deviations over songs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibrate::{apply_offset, shift_probabilities, Calibration};
use crate::crf::{stack, subsample_to_measure_level, Crf, EMISSION_FLOOR, MEASURE_LEVEL};
use crate::error::{Error, Result};
use crate::model::{predict_matrix, to_distributions, EmissionModel};
use crate::types::{CrfParams, LevelDistribution, LevelSequence, PianoRoll};

/// Beat level in the tatum-rooted hierarchy.
pub const BEAT_LEVEL: usize = 2;

/// Default peak-picking threshold on `p_{>=4}`.
pub const DEFAULT_DOWNBEAT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn f1_from_counts(tp: usize, predicted: usize, actual: usize) -> F1Score {
    let precision = if predicted > 0 {
        tp as f64 / predicted as f64
    } else if actual == 0 {
        1.0
    } else {
        0.0
    };
    let recall = if actual > 0 {
        tp as f64 / actual as f64
    } else if predicted == 0 {
        1.0
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    F1Score {
        precision,
        recall,
        f1,
    }
}

/// F1 of level-`level` boundaries (positions with level >= `level`).
pub fn boundary_f1(pred: &LevelSequence, truth: &LevelSequence, level: usize) -> Result<F1Score> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} steps, annotation {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut tp = 0;
    let mut predicted = 0;
    let mut actual = 0;
    for (&p, &t) in pred.levels().iter().zip(truth.levels()) {
        let (p, t) = (p as usize >= level, t as usize >= level);
        predicted += p as usize;
        actual += t as usize;
        tp += (p && t) as usize;
    }
    Ok(f1_from_counts(tp, predicted, actual))
}

/// F1 of the positive (downbeat) class.
pub fn downbeat_f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predicted beats vs {} annotated",
            pred.len(),
            truth.len()
        )));
    }
    let tp = pred.iter().zip(truth).filter(|(p, t)| **p && **t).count();
    let predicted = pred.iter().filter(|p| **p).count();
    let actual = truth.iter().filter(|t| **t).count();
    Ok(f1_from_counts(tp, predicted, actual).f1)
}

/// Flags beat `b` as a downbeat when its `p_{>=4}` is the window maximum over
/// beats `b-2..=b+1` and exceeds `threshold`. Within a window, an equal
/// earlier value wins.
pub fn peak_pick_downbeats(
    p: &[LevelDistribution],
    beats: &[usize],
    threshold: f64,
) -> Result<Vec<bool>> {
    let values = beats
        .iter()
        .map(|&i| {
            p.get(i)
                .ok_or(Error::Range {
                    what: "beat position",
                    value: i as i64,
                    min: 0,
                    max: p.len() as i64 - 1,
                })
                .and_then(|d| d.cumulative(MEASURE_LEVEL))
        })
        .collect::<Result<Vec<f64>>>()?;
    let count = values.len();
    Ok((0..count)
        .map(|b| {
            let v = values[b];
            let lo = b.saturating_sub(2);
            let hi = (b + 1).min(count.saturating_sub(1));
            v > threshold && (lo..b).all(|k| values[k] < v) && (b + 1..=hi).all(|k| values[k] <= v)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Boundary F1 per level. Levels up to the measure are scored on the full
    /// tatum sequence; hypermetrical levels on the annotated downbeats.
    pub per_level: BTreeMap<usize, MeanStd>,
    pub downbeat: Option<MeanStd>,
    pub num_songs: usize,
    /// Songs skipped for lacking annotations.
    pub skipped: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>8}", "metric", "mean", "std");
        for (level, m) in &self.per_level {
            let _ = writeln!(
                out,
                "{:<10} {:>8.4} {:>8.4}",
                format!("level {level}"),
                m.mean,
                m.std
            );
        }
        if let Some(m) = &self.downbeat {
            let _ = writeln!(out, "{:<10} {:>8.4} {:>8.4}", "downbeat", m.mean, m.std);
        }
        let _ = writeln!(out, "songs: {} (skipped {})", self.num_songs, self.skipped);
        out
    }
}

/// Scores of one annotated song.
#[derive(Debug, Clone, PartialEq)]
pub struct SongScores {
    pub per_level: BTreeMap<usize, f64>,
    pub downbeat: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub downbeat_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            downbeat_threshold: DEFAULT_DOWNBEAT_THRESHOLD,
        }
    }
}

/// Scores one song's raw prediction matrix against its annotation.
pub fn score_song(
    probs: ndarray::ArrayView2<'_, f64>,
    truth: &LevelSequence,
    offset: i64,
    params: &CrfParams,
    options: &EvalOptions,
) -> Result<SongScores> {
    let layers = params.num_layers();
    if probs.nrows() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction has {} steps, annotation {}",
            probs.nrows(),
            truth.len()
        )));
    }
    let crf = Crf::new(params.clone())?.with_floor(EMISSION_FLOOR);
    let decoded = apply_offset(&crf.decode(probs)?.levels, offset)?;
    let mut per_level = BTreeMap::new();
    for level in 1..=layers.min(MEASURE_LEVEL) {
        per_level.insert(level, boundary_f1(&decoded, truth, level)?.f1);
    }

    let shifted = shift_probabilities(probs, offset);
    let dists = to_distributions(shifted.view());

    let mut downbeat = None;
    if layers >= MEASURE_LEVEL {
        let beats = truth.boundaries(BEAT_LEVEL);
        let flags = peak_pick_downbeats(&dists, &beats, options.downbeat_threshold)?;
        let gold: Vec<bool> = beats
            .iter()
            .map(|&i| truth.levels()[i] as usize >= MEASURE_LEVEL)
            .collect();
        downbeat = Some(downbeat_f1(&flags, &gold)?);
    }

    if layers > MEASURE_LEVEL {
        let downbeats = truth.boundaries(MEASURE_LEVEL);
        if !downbeats.is_empty() {
            let sub = subsample_to_measure_level(&dists, &downbeats)?;
            let hyper_params = params.levels_above(MEASURE_LEVEL)?;
            let hyper = Crf::new(hyper_params.clone())?.with_floor(EMISSION_FLOOR);
            let dec = hyper
                .decode(stack(&sub, hyper_params.num_layers())?.view())?
                .levels;
            let gold = LevelSequence::new(
                downbeats
                    .iter()
                    .map(|&i| truth.levels()[i].saturating_sub(MEASURE_LEVEL as u8))
                    .collect(),
                hyper_params.num_layers(),
            )?;
            for k in 1..=hyper_params.num_layers() {
                per_level.insert(MEASURE_LEVEL + k, boundary_f1(&dec, &gold, k)?.f1);
            }
        }
    }
    Ok(SongScores {
        per_level,
        downbeat,
    })
}

/// Mean and standard deviation of per-song scores.
pub fn aggregate(scores: &[SongScores], skipped: usize) -> EvalReport {
    let mut by_level: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut downbeats = Vec::new();
    for s in scores {
        for (&l, &v) in &s.per_level {
            by_level.entry(l).or_default().push(v);
        }
        downbeats.extend(s.downbeat);
    }
    EvalReport {
        per_level: by_level
            .into_iter()
            .filter_map(|(l, v)| MeanStd::of(&v).map(|m| (l, m)))
            .collect(),
        downbeat: MeanStd::of(&downbeats),
        num_songs: scores.len(),
        skipped,
    }
}

/// Predicts, decodes, calibrates and scores every annotated song.
pub fn evaluate_corpus(
    model: &EmissionModel,
    calibration: Option<&Calibration>,
    corpus: &[(PianoRoll, Option<LevelSequence>)],
    params: &CrfParams,
    options: &EvalOptions,
) -> Result<EvalReport> {
    use rayon::prelude::*;
    let offset = calibration.map(|c| c.offset).unwrap_or(0);
    let annotated: Vec<_> = corpus
        .iter()
        .filter_map(|(song, truth)| truth.as_ref().map(|t| (song, t)))
        .collect();
    let skipped = corpus.len() - annotated.len();
    if annotated.is_empty() {
        return Err(Error::Usage("no annotated songs to evaluate".into()));
    }
    let scores = annotated
        .par_iter()
        .map(|(song, truth)| {
            let probs = predict_matrix(model, song)?;
            score_song(probs.view(), truth, offset, params, options)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&scores, skipped))
}
