//! Domain types shared by every stage: piano rolls, level sequences,
//! per-step level distributions, CRF penalty parameters and CRF states.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of MIDI pitches on the piano-roll pitch axis.
pub const NUM_PITCHES: usize = 128;

/// Label of the tatum unit every roll is quantized to.
pub const TATUM_UNIT: &str = "sixteenth";

/// Tolerance for a [`LevelDistribution`] to count as normalized.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// State of one (step, pitch) cell of a track roll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum Cell {
    #[default]
    Silent = 0,
    Hold = 1,
    Onset = 2,
}

impl Cell {
    pub fn from_flag(flag: u8) -> Option<Cell> {
        match flag {
            0 => Some(Cell::Silent),
            1 => Some(Cell::Hold),
            2 => Some(Cell::Onset),
            _ => None,
        }
    }

    pub fn flag(self) -> u8 {
        self as u8
    }

    pub fn is_sounding(self) -> bool {
        self != Cell::Silent
    }
}

/// One track of a piano roll: an `N x 128` grid of [`Cell`]s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackRoll {
    name: String,
    num_steps: usize,
    cells: Vec<Cell>,
}

impl TrackRoll {
    /// An all-silent track.
    pub fn silent(name: impl Into<String>, num_steps: usize) -> Self {
        TrackRoll {
            name: name.into(),
            num_steps,
            cells: vec![Cell::Silent; num_steps * NUM_PITCHES],
        }
    }

    /// Builds a track from sparse `(step, pitch, cell)` entries and checks the hold invariant.
    pub fn from_entries(
        name: impl Into<String>,
        num_steps: usize,
        entries: impl IntoIterator<Item = (usize, usize, Cell)>,
    ) -> Result<Self> {
        let mut roll = TrackRoll::silent(name, num_steps);
        for (step, pitch, cell) in entries {
            if step >= num_steps {
                return Err(Error::Range {
                    what: "step",
                    value: step as i64,
                    min: 0,
                    max: num_steps as i64 - 1,
                });
            }
            if pitch >= NUM_PITCHES {
                return Err(Error::Range {
                    what: "pitch",
                    value: pitch as i64,
                    min: 0,
                    max: NUM_PITCHES as i64 - 1,
                });
            }
            roll.set(step, pitch, cell);
        }
        roll.validate()?;
        Ok(roll)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn get(&self, step: usize, pitch: usize) -> Cell {
        self.cells[step * NUM_PITCHES + pitch]
    }

    pub fn set(&mut self, step: usize, pitch: usize, cell: Cell) {
        self.cells[step * NUM_PITCHES + pitch] = cell;
    }

    /// The 128 cells of one step.
    pub fn step(&self, step: usize) -> &[Cell] {
        &self.cells[step * NUM_PITCHES..(step + 1) * NUM_PITCHES]
    }

    /// Non-silent cells in (step, pitch) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Cell)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_sounding())
            .map(|(k, &c)| (k / NUM_PITCHES, k % NUM_PITCHES, c))
    }

    pub fn onset_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Onset).count()
    }

    /// A hold cell must continue a sounding cell on the previous step.
    pub fn validate(&self) -> Result<()> {
        for step in 0..self.num_steps {
            for pitch in 0..NUM_PITCHES {
                if self.get(step, pitch) == Cell::Hold
                    && (step == 0 || !self.get(step - 1, pitch).is_sounding())
                {
                    return Err(Error::Invalid(format!(
                        "track `{}`: hold at step {step} pitch {pitch} does not continue a note",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Beat-aligned, sixteenth-note-quantized multi-track roll.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PianoRoll {
    tracks: Vec<TrackRoll>,
    num_steps: usize,
}

impl PianoRoll {
    pub fn new(num_steps: usize, tracks: Vec<TrackRoll>) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::Invalid("piano roll needs at least one step".into()));
        }
        if let Some(t) = tracks.iter().find(|t| t.num_steps() != num_steps) {
            return Err(Error::Shape(format!(
                "track `{}` has {} steps, roll has {num_steps}",
                t.name(),
                t.num_steps()
            )));
        }
        Ok(PianoRoll { tracks, num_steps })
    }

    pub fn tracks(&self) -> &[TrackRoll] {
        &self.tracks
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn tatum_unit(&self) -> &'static str {
        TATUM_UNIT
    }

    /// A roll with the given tracks only, in the given order.
    pub fn select_tracks(&self, indices: &[usize]) -> Result<PianoRoll> {
        let tracks = indices
            .iter()
            .map(|&i| {
                self.tracks.get(i).cloned().ok_or(Error::Range {
                    what: "track index",
                    value: i as i64,
                    min: 0,
                    max: self.tracks.len() as i64 - 1,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PianoRoll::new(self.num_steps, tracks)
    }
}

/// Per-step metrical boundary levels, each in `0..=num_layers`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelSequence {
    levels: Vec<u8>,
    num_layers: u8,
}

impl LevelSequence {
    pub fn new(levels: Vec<u8>, num_layers: usize) -> Result<Self> {
        let num_layers = check_layers(num_layers)?;
        if let Some((i, &l)) = levels.iter().enumerate().find(|(_, &l)| l > num_layers) {
            return Err(Error::Invalid(format!(
                "level {l} at step {i} exceeds {num_layers} layers"
            )));
        }
        Ok(LevelSequence { levels, num_layers })
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers as usize
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Positions whose level is at least `level`.
    pub fn boundaries(&self, level: usize) -> Vec<usize> {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize >= level)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn into_levels(self) -> Vec<u8> {
        self.levels
    }
}

/// Probability of each boundary level `0..=L` at one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LevelDistribution {
    probs: Vec<f64>,
}

impl LevelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Invalid(
                "a level distribution covers at least levels 0 and 1".into(),
            ));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Invalid(format!(
                "probabilities must be finite and non-negative: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::Invalid(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(LevelDistribution { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Invalid(format!("weights sum to {sum}")));
        }
        LevelDistribution::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(num_layers: usize) -> Self {
        let n = num_layers + 1;
        LevelDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(num_layers: usize, level: usize) -> Self {
        assert!(level <= num_layers, "level {level} > {num_layers}");
        let mut probs = vec![0.0; num_layers + 1];
        probs[level] = 1.0;
        LevelDistribution { probs }
    }

    pub(crate) fn from_normalized_unchecked(probs: Vec<f64>) -> Self {
        LevelDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_layers(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability that the step is a boundary of at least `level`.
    pub fn cumulative(&self, level: usize) -> Result<f64> {
        if level > self.num_layers() {
            return Err(Error::Range {
                what: "level",
                value: level as i64,
                min: 0,
                max: self.num_layers() as i64,
            });
        }
        Ok(self.probs[level..].iter().sum())
    }

    /// Most probable level; ties go to the lower level.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (l, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = l;
            }
        }
        best
    }
}

/// `p_{>=l}` for one distribution.
pub fn cumulative_prob(d: &LevelDistribution, level: usize) -> Result<f64> {
    d.cumulative(level)
}

/// Largest supported hierarchy depth; bounds the `2^L` state space.
pub const MAX_LAYERS: usize = 12;

fn check_layers(num_layers: usize) -> Result<u8> {
    if num_layers == 0 || num_layers > MAX_LAYERS {
        return Err(Error::Range {
            what: "num_layers",
            value: num_layers as i64,
            min: 1,
            max: MAX_LAYERS as i64,
        });
    }
    Ok(num_layers as u8)
}

/// Per-level insertion and deletion penalties of the regularity CRF.
///
/// Index `l - 1` holds the weights of level `l`. A weight of `f64::INFINITY`
/// turns that level's regularity into a hard constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    num_layers: usize,
    #[serde(with = "penalty_list")]
    w_del: Vec<f64>,
    #[serde(with = "penalty_list")]
    w_ins: Vec<f64>,
}

impl CrfParams {
    pub fn new(w_del: Vec<f64>, w_ins: Vec<f64>) -> Result<Self> {
        if w_del.len() != w_ins.len() {
            return Err(Error::Shape(format!(
                "{} deletion weights vs {} insertion weights",
                w_del.len(),
                w_ins.len()
            )));
        }
        let num_layers = check_layers(w_del.len())? as usize;
        for (l, (&d, &i)) in w_del.iter().zip(&w_ins).enumerate() {
            // negated form also rejects NaN
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(d > 0.0) || !(i > 0.0) {
                return Err(Error::Invalid(format!(
                    "penalties of level {} must be positive, got del={d} ins={i}",
                    l + 1
                )));
            }
        }
        Ok(CrfParams {
            num_layers,
            w_del,
            w_ins,
        })
    }

    /// Same insertion/deletion weight on every level.
    pub fn uniform(num_layers: usize, w_del: f64, w_ins: f64) -> Result<Self> {
        CrfParams::new(vec![w_del; num_layers], vec![w_ins; num_layers])
    }

    /// Strict binary regularity on every level.
    pub fn hard(num_layers: usize) -> Result<Self> {
        CrfParams::uniform(num_layers, f64::INFINITY, f64::INFINITY)
    }

    /// Training defaults: hard up to the measure (levels 1..=4), then
    /// deletion 15 and insertion 20 on the hypermetrical levels.
    pub fn default_for(num_layers: usize) -> Result<Self> {
        let (del, ins) = (1..=num_layers)
            .map(|l| {
                if l <= 4 {
                    (f64::INFINITY, f64::INFINITY)
                } else {
                    (15.0, 20.0)
                }
            })
            .unzip();
        CrfParams::new(del, ins)
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// Deletion penalty of level `l` (1-based).
    pub fn w_del(&self, level: usize) -> f64 {
        self.w_del[level - 1]
    }

    /// Insertion penalty of level `l` (1-based).
    pub fn w_ins(&self, level: usize) -> f64 {
        self.w_ins[level - 1]
    }

    /// `log A^(l)[from][to]`.
    pub fn log_potential(&self, level: usize, from: bool, to: bool) -> f64 {
        match (from, to) {
            (false, false) => -self.w_del(level),
            (true, true) => -self.w_ins(level),
            _ => 0.0,
        }
    }

    /// Parameters of levels `above+1..=L`, renumbered from 1.
    pub fn levels_above(&self, above: usize) -> Result<CrfParams> {
        if above >= self.num_layers {
            return Err(Error::Range {
                what: "level",
                value: above as i64,
                min: 0,
                max: self.num_layers as i64 - 1,
            });
        }
        CrfParams::new(self.w_del[above..].to_vec(), self.w_ins[above..].to_vec())
    }
}

/// Joint latent state: bit `l - 1` holds the level-`l` counter `z^(l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrfState {
    bits: u16,
    num_layers: u8,
}

impl CrfState {
    pub fn new(bits: u16, num_layers: usize) -> Result<Self> {
        let l = check_layers(num_layers)?;
        if (bits as u32) >> num_layers != 0 {
            return Err(Error::Invalid(format!(
                "state bits {bits:#b} exceed {num_layers} layers"
            )));
        }
        Ok(CrfState {
            bits,
            num_layers: l,
        })
    }

    /// From per-level counters `z^(1)..z^(L)`.
    pub fn from_counters(counters: &[u8]) -> Result<Self> {
        let bits = counters
            .iter()
            .enumerate()
            .fold(0u16, |acc, (i, &c)| acc | (((c != 0) as u16) << i));
        CrfState::new(bits, counters.len())
    }

    pub(crate) const fn from_raw(bits: u16, num_layers: usize) -> Self {
        CrfState {
            bits,
            num_layers: num_layers as u8,
        }
    }

    pub fn bits(self) -> u16 {
        self.bits
    }

    pub fn num_layers(self) -> usize {
        self.num_layers as usize
    }

    /// Counter `z^(l)` for `l` in `1..=L`.
    pub fn counter(self, level: usize) -> bool {
        (self.bits >> (level - 1)) & 1 == 1
    }

    pub fn boundary_level(self) -> usize {
        boundary_level(self)
    }
}

/// Highest level whose counters `z^(1..l)` are all zero.
pub fn boundary_level(z: CrfState) -> usize {
    (z.bits.trailing_zeros() as usize).min(z.num_layers())
}

mod penalty_list {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Penalty {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let list: Vec<Penalty> = values
            .iter()
            .map(|&v| {
                if v.is_infinite() {
                    Penalty::Named("inf".into())
                } else {
                    Penalty::Finite(v)
                }
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let list = Vec::<Penalty>::deserialize(d)?;
        list.into_iter()
            .map(|p| match p {
                Penalty::Finite(v) => Ok(v),
                Penalty::Named(s) if s == "inf" || s == "+inf" => Ok(f64::INFINITY),
                Penalty::Named(s) => Err(serde::de::Error::custom(format!(
                    "penalty must be a number or \"inf\", got {s:?}"
                ))),
            })
            .collect()
    }
}
