//! Parses a Standard MIDI File and quantizes it to a sixteenth-note piano roll.
//!
//! cargo run --example parse_midi -- [file.mid]
//!
//! Without an argument a built-in two-note file is used.

use metrum::ingest::{build_tatum_grid, parse_smf, quantize};

const TWO_NOTES: &[u8] = &[
    b'M', b'T', b'h', b'd', 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0, // format 0, 480 tpq
    b'M', b'T', b'r', b'k', 0, 0, 0, 22, 0x00, 0x90, 60, 100, // note on C4
    0x83, 0x60, 0x80, 60, 0, // +480 note off
    0x00, 0x90, 64, 80, // note on E4
    0x83, 0x60, 0x80, 64, 0, // +480 note off
    0x00, 0xFF, 0x2F, 0x00, // end of track
];

fn main() -> metrum::Result<()> {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(&path).map_err(|e| metrum::Error::io(&path, e))?,
        None => TWO_NOTES.to_vec(),
    };
    let song = parse_smf(&bytes)?;
    println!(
        "{} tracks, {} notes, {} ticks per quarter, end tick {}",
        song.num_tracks,
        song.notes.len(),
        song.ticks_per_quarter,
        song.end_tick
    );
    for (tick, micros) in &song.tempo_map {
        println!("tempo at {tick}: {:.1} bpm", 60e6 / *micros as f64);
    }
    for ts in &song.time_signatures {
        println!("meter at {}: {}/{}", ts.tick, ts.numerator, ts.denominator);
    }
    let roll = quantize(&song, &build_tatum_grid(&song, song.end_tick))?;
    for track in roll.tracks() {
        println!("track `{}`:", track.name());
        for (step, pitch, cell) in track.entries() {
            println!("  step {step:>3}  pitch {pitch:>3}  {cell:?}");
        }
    }
    Ok(())
}
