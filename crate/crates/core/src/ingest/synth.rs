//! Synthetic multi-track songs with known metrical structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crf::MEASURE_LEVEL;
use crate::error::{Error, Result};
use crate::model::derive_seed;
use crate::types::{Cell, LevelSequence, PianoRoll, TrackRoll, MAX_LAYERS};

const MEASURE_STEPS: usize = 1 << MEASURE_LEVEL;
const MAJOR_SCALE: [usize; 7] = [0, 2, 4, 5, 7, 9, 11];
const PROGRESSION_DEGREES: [usize; 4] = [0, 3, 4, 5];

/// Instrumentation of generated tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStyle {
    /// Tracks cycle through drums, bass, melody and chords.
    Ensemble,
    /// Every track is a monophonic melody.
    Melody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Drums,
    Bass,
    Melody,
    Chords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_layers: usize,
    pub num_songs: usize,
    pub steps_per_song: usize,
    pub tracks_per_song: usize,
    /// Onset probability by boundary level, `L + 1` entries; level-based
    /// defaults when absent.
    pub onset_density: Option<Vec<f64>>,
    /// Probability that a song contains one hypermeasure insertion or deletion.
    pub irregularity_rate: f64,
    pub style: TrackStyle,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_layers: 6,
            num_songs: 200,
            steps_per_song: 256,
            tracks_per_song: 3,
            onset_density: None,
            irregularity_rate: 0.0,
            style: TrackStyle::Ensemble,
            seed: 0,
        }
    }
}

/// Onset probabilities rising with boundary level.
pub fn default_density(num_layers: usize) -> Vec<f64> {
    const TABLE: [f64; 6] = [0.15, 0.3, 0.55, 0.75, 0.95, 1.0];
    (0..=num_layers)
        .map(|l| TABLE[l.min(TABLE.len() - 1)])
        .collect()
}

impl SyntheticConfig {
    pub fn densities(&self) -> Vec<f64> {
        self.onset_density
            .clone()
            .unwrap_or_else(|| default_density(self.num_layers))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_LAYERS).contains(&self.num_layers) {
            return Err(Error::Range {
                what: "num_layers",
                value: self.num_layers as i64,
                min: 1,
                max: MAX_LAYERS as i64,
            });
        }
        let d = self.densities();
        if d.len() != self.num_layers + 1 || d.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Invalid(format!(
                "onset_density needs {} values in [0, 1], got {d:?}",
                self.num_layers + 1
            )));
        }
        if !(0.0..=1.0).contains(&self.irregularity_rate) {
            return Err(Error::Invalid(format!(
                "irregularity_rate {} outside [0, 1]",
                self.irregularity_rate
            )));
        }
        if self.steps_per_song == 0 || self.tracks_per_song == 0 {
            return Err(Error::Invalid(
                "songs need at least one step and one track".into(),
            ));
        }
        Ok(())
    }
}

fn trailing_level(k: usize, cap: usize) -> u8 {
    if k == 0 {
        cap as u8
    } else {
        (k.trailing_zeros() as usize).min(cap) as u8
    }
}

/// Strictly regular levels of period `2^L`, starting `phase` steps into a cycle.
pub fn regular_levels(num_steps: usize, num_layers: usize, phase: usize) -> Vec<u8> {
    let period = 1usize << num_layers;
    (0..num_steps)
        .map(|i| trailing_level((i + phase) % period, num_layers))
        .collect()
}

/// Regular structure with one level-`4 + k` unit holding three (insert) or
/// one (delete) sub-units instead of two. Returns `None` when the song is
/// too short to show the change.
fn irregular_levels(
    rng: &mut ChaCha8Rng,
    num_steps: usize,
    num_layers: usize,
    phase: usize,
) -> Option<Vec<u8>> {
    let hyper = num_layers - MEASURE_LEVEL;
    let (measure_phase, step_phase) = (phase / MEASURE_STEPS, phase % MEASURE_STEPS);
    let visible = (num_steps + step_phase).div_ceil(MEASURE_STEPS);
    let spare = 1 << hyper;
    let mut h: Vec<u8> = (0..visible + 2 * spare)
        .map(|m| trailing_level((m + measure_phase) % spare, hyper))
        .collect();
    let k = rng.gen_range(1..=hyper);
    let unit = 1 << (k - 1);
    let eligible: Vec<usize> = (0..visible)
        .filter(|&m| h[m] as usize == k - 1 && m + unit <= h.len())
        .collect();
    let &m = eligible.choose(rng)?;
    if rng.gen_bool(0.5) {
        let copy = h[m..m + unit].to_vec();
        h.splice(m + unit..m + unit, copy);
    } else {
        h.drain(m..m + unit);
    }
    let levels = h
        .iter()
        .flat_map(|&top| {
            (0..MEASURE_STEPS).map(move |j| {
                if j == 0 {
                    MEASURE_LEVEL as u8 + top
                } else {
                    trailing_level(j, MEASURE_LEVEL)
                }
            })
        })
        .skip(step_phase)
        .take(num_steps)
        .collect::<Vec<u8>>();
    (levels.len() == num_steps).then_some(levels)
}

fn song_levels(rng: &mut ChaCha8Rng, config: &SyntheticConfig) -> Vec<u8> {
    let (n, layers) = (config.steps_per_song, config.num_layers);
    let phase = rng.gen_range(0..1usize << layers);
    let irregular = rng.gen_bool(config.irregularity_rate);
    if irregular && layers > MEASURE_LEVEL {
        if let Some(levels) = irregular_levels(rng, n, layers, phase) {
            return levels;
        }
    }
    regular_levels(n, layers, phase)
}

/// Chord root (pitch class) per step; changes at every boundary of level
/// `min(5, L)` or above.
fn harmony(rng: &mut ChaCha8Rng, levels: &[u8], num_layers: usize, key: usize) -> Vec<usize> {
    let change = (MEASURE_LEVEL + 1).min(num_layers) as u8;
    let mut root = key;
    levels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if i == 0 || l >= change {
                let degree = *PROGRESSION_DEGREES.choose(rng).expect("non-empty");
                root = key + MAJOR_SCALE[degree];
            }
            root
        })
        .collect()
}

fn add_note(roll: &mut TrackRoll, start: usize, end: usize, pitch: usize) {
    roll.set(start, pitch, Cell::Onset);
    for step in start + 1..end {
        if roll.get(step, pitch) == Cell::Silent {
            roll.set(step, pitch, Cell::Hold);
        }
    }
}

/// Steps since the most recent measure (or top-level) boundary.
fn measure_positions(levels: &[u8], num_layers: usize) -> Vec<usize> {
    let measure = MEASURE_LEVEL.min(num_layers) as u8;
    let mut since = 0;
    levels
        .iter()
        .map(|&l| {
            since = if l >= measure { 0 } else { since + 1 };
            since
        })
        .collect()
}

fn render_track(
    rng: &mut ChaCha8Rng,
    role: Role,
    name: String,
    levels: &[u8],
    num_layers: usize,
    roots: &[usize],
    density: &[f64],
) -> TrackRoll {
    let n = levels.len();
    let onsets: Vec<usize> = (0..n)
        .filter(|&i| rng.gen_bool(density[levels[i] as usize]))
        .collect();
    let motif: Vec<usize> = (0..MEASURE_STEPS).map(|_| rng.gen_range(0..7)).collect();
    let positions = measure_positions(levels, num_layers);
    let mut roll = TrackRoll::silent(name, n);
    for (k, &i) in onsets.iter().enumerate() {
        let next = onsets.get(k + 1).copied().unwrap_or(n);
        let root = roots[i];
        match role {
            Role::Drums => {
                let pitch = match levels[i] {
                    l if l as usize >= MEASURE_LEVEL => 36,
                    2 | 3 => 38,
                    _ => 42,
                };
                add_note(&mut roll, i, i + 1, pitch);
            }
            Role::Bass => add_note(&mut roll, i, next.min(i + 4), 36 + root),
            Role::Melody => {
                let degree = motif[positions[i] % MEASURE_STEPS];
                let pitch = 60 + root + MAJOR_SCALE[degree];
                add_note(&mut roll, i, next.min(i + 4), pitch.min(127));
            }
            Role::Chords => {
                for offset in [0, 4, 7] {
                    add_note(&mut roll, i, next.min(i + 8), 48 + root + offset);
                }
            }
        }
    }
    roll
}

fn generate_song(
    config: &SyntheticConfig,
    density: &[f64],
    index: usize,
) -> Result<(PianoRoll, LevelSequence)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x5EED, index as u64));
    let levels = song_levels(&mut rng, config);
    let key = rng.gen_range(0..12);
    let roots = harmony(&mut rng, &levels, config.num_layers, key);
    const CYCLE: [Role; 4] = [Role::Drums, Role::Bass, Role::Melody, Role::Chords];
    let tracks = (0..config.tracks_per_song)
        .map(|t| {
            let role = match config.style {
                TrackStyle::Ensemble => CYCLE[t % CYCLE.len()],
                TrackStyle::Melody => Role::Melody,
            };
            let name = format!("{}{t}", format!("{role:?}").to_lowercase());
            render_track(
                &mut rng,
                role,
                name,
                &levels,
                config.num_layers,
                &roots,
                density,
            )
        })
        .collect();
    let roll = PianoRoll::new(config.steps_per_song, tracks)?;
    Ok((roll, LevelSequence::new(levels, config.num_layers)?))
}

/// Generates `num_songs` annotated songs. Song `i` depends only on the seed
/// and `i`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<(PianoRoll, LevelSequence)>> {
    config.validate()?;
    let density = config.densities();
    (0..config.num_songs)
        .into_par_iter()
        .map(|i| generate_song(config, &density, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(songs: usize) -> SyntheticConfig {
        SyntheticConfig {
            num_songs: songs,
            steps_per_song: 128,
            ..SyntheticConfig::default()
        }
    }

    /// Between consecutive level-l boundaries lie exactly two level-(l-1) units.
    fn strictly_binary(levels: &LevelSequence) -> bool {
        (2..=levels.num_layers()).all(|l| {
            let upper = levels.boundaries(l);
            let lower = levels.boundaries(l - 1);
            upper
                .windows(2)
                .all(|w| lower.iter().filter(|&&i| i >= w[0] && i < w[1]).count() == 2)
        })
    }

    #[test]
    fn regular_corpus_is_binary_and_deterministic() {
        let a = generate_synthetic(&config(6)).unwrap();
        assert_eq!(a, generate_synthetic(&config(6)).unwrap());
        for (roll, levels) in &a {
            assert_eq!(roll.num_tracks(), 3);
            assert!(strictly_binary(levels));
        }
    }

    #[test]
    fn phase_zero_halves_counts() {
        let levels = LevelSequence::new(regular_levels(256, 6, 0), 6).unwrap();
        for l in 1..=6 {
            assert_eq!(
                levels.boundaries(l).len() * 2,
                levels.boundaries(l - 1).len()
            );
        }
    }

    #[test]
    fn saturated_density_fills_every_step() {
        let c = SyntheticConfig {
            onset_density: Some(vec![1.0; 7]),
            ..config(2)
        };
        for (roll, _) in generate_synthetic(&c).unwrap() {
            for t in roll.tracks() {
                assert!((0..roll.num_steps()).all(|i| t.step(i).contains(&Cell::Onset)));
            }
        }
    }

    #[test]
    fn irregular_songs_break_one_level() {
        let c = SyntheticConfig {
            irregularity_rate: 1.0,
            num_layers: 7,
            steps_per_song: 512,
            ..config(8)
        };
        let songs = generate_synthetic(&c).unwrap();
        assert!(songs.iter().any(|(_, l)| !strictly_binary(l)));
        for (_, l) in &songs {
            for level in 1..=MEASURE_LEVEL {
                let b = l.boundaries(level);
                assert!(b.windows(2).all(|w| w[1] - w[0] == 1 << level));
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_synthetic(&SyntheticConfig {
            onset_density: Some(vec![0.5; 3]),
            ..config(1)
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticConfig {
            num_layers: 0,
            ..config(1)
        })
        .is_err());
        assert!(generate_synthetic(&config(0)).unwrap().is_empty());
    }
}
