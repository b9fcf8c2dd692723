//! Sixteenth-note grid construction and quantization to piano rolls.

use super::smf::MidiSong;
use crate::error::{Error, Result};
use crate::types::{Cell, PianoRoll, TrackRoll};

/// Tick positions of consecutive sixteenth notes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TatumGrid {
    ticks: Vec<u64>,
}

impl TatumGrid {
    pub fn new(ticks: Vec<u64>) -> Result<Self> {
        if ticks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "grid ticks must be strictly increasing".into(),
            ));
        }
        Ok(TatumGrid { ticks })
    }

    pub fn ticks(&self) -> &[u64] {
        &self.ticks
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Index of the grid point nearest to `tick`; ties go to the earlier point.
    pub fn nearest(&self, tick: u64) -> Option<usize> {
        let next = self.ticks.partition_point(|&t| t < tick);
        match (next.checked_sub(1), self.ticks.get(next)) {
            (None, Some(_)) => Some(next),
            (Some(prev), None) => Some(prev),
            (Some(prev), Some(&after)) => {
                if after - tick < tick - self.ticks[prev] {
                    Some(next)
                } else {
                    Some(prev)
                }
            }
            (None, None) => None,
        }
    }

    /// Index of the last grid point strictly before `tick`.
    pub fn last_before(&self, tick: u64) -> Option<usize> {
        self.ticks.partition_point(|&t| t < tick).checked_sub(1)
    }
}

/// Grid points every quarter / 4 ticks on `[0, end_tick)`.
///
/// When the resolution is not divisible by four, point `k` sits at
/// `k * tpq / 4` rounded half up, so no point is more than half a tick from
/// its exact position and drift does not accumulate.
pub fn build_tatum_grid(song: &MidiSong, end_tick: u64) -> TatumGrid {
    grid_for_resolution(song.ticks_per_quarter as u64, end_tick)
}

pub(crate) fn grid_for_resolution(tpq: u64, end_tick: u64) -> TatumGrid {
    // exact position k*tpq/4 < end  <=>  k*tpq < 4*end
    let ticks = (0u64..)
        .take_while(|k| k * tpq < 4 * end_tick)
        .map(|k| (k * tpq + 2) / 4)
        .collect();
    TatumGrid { ticks }
}

/// Snaps every note onto `grid` and builds one roll per MIDI track with notes.
///
/// The onset cell gets [`Cell::Onset`]; the following cells up to the last
/// grid point before the note's end are held. Overlapping notes of one pitch
/// merge, keeping every onset.
pub fn quantize(song: &MidiSong, grid: &TatumGrid) -> Result<PianoRoll> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty tatum grid".into()));
    }
    let n = grid.len();
    let mut rolls: Vec<Option<TrackRoll>> = vec![None; song.num_tracks];
    for note in &song.notes {
        let Some(start) = grid.nearest(note.onset) else {
            continue;
        };
        let roll = rolls[note.track].get_or_insert_with(|| {
            let name = song
                .track_names
                .get(note.track)
                .cloned()
                .flatten()
                .unwrap_or_else(|| format!("track {}", note.track));
            TrackRoll::silent(name, n)
        });
        let pitch = note.pitch as usize;
        roll.set(start, pitch, Cell::Onset);
        if let Some(last) = grid.last_before(note.offset) {
            for step in start + 1..=last.min(n - 1) {
                if roll.get(step, pitch) == Cell::Silent {
                    roll.set(step, pitch, Cell::Hold);
                }
            }
        }
    }
    PianoRoll::new(n, rolls.into_iter().flatten().collect())
}
