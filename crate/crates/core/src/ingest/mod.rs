//! Getting music in: MIDI files, the JSON piano-roll format and synthetic songs.

mod grid;
mod json;
mod smf;
mod synth;

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{LevelSequence, PianoRoll};

pub use grid::{build_tatum_grid, quantize, TatumGrid};
pub use json::{load_pianoroll_json, save_pianoroll_json, PIANOROLL_VERSION};
pub use smf::{parse_smf, MidiSong, Note, TimeSignature, DEFAULT_TEMPO};
pub use synth::{default_density, generate_synthetic, regular_levels, SyntheticConfig, TrackStyle};

/// Parses and quantizes a MIDI file on a grid spanning all of its events.
pub fn midi_to_pianoroll(bytes: &[u8]) -> Result<PianoRoll> {
    let song = parse_smf(bytes)?;
    let grid = build_tatum_grid(&song, song.end_tick);
    quantize(&song, &grid)
}

/// Loads a `.mid`/`.midi` file or a piano-roll JSON document, by extension.
pub fn load_song(path: impl AsRef<Path>) -> Result<(PianoRoll, Option<LevelSequence>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("mid") | Some("midi") => Ok((midi_to_pianoroll(&bytes)?, None)),
        _ => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::schema("<document>", "not valid UTF-8"))?;
            load_pianoroll_json(&text)
        }
    }
}
