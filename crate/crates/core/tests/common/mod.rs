//! Hand-assembled Standard MIDI File fixtures and their expected contents.
#![allow(dead_code)]

use metrum::ingest::{MidiSong, Note, TimeSignature};

/// Format 0, 480 ticks per quarter, one track named "Piano": C4 for a
/// quarter, then E4 ended by a running-status note-on with velocity 0.
pub const FORMAT0_TWO_NOTES: &[u8] = &[
    b'M', b'T', b'h', b'd', 0x00, 0x00, 0x00, 0x06, // header chunk, length 6
    0x00, 0x00, 0x00, 0x01, 0x01, 0xE0, // format 0, 1 track, 480 tpq
    b'M', b'T', b'r', b'k', 0x00, 0x00, 0x00, 0x2D, // 45 bytes
    0x00, 0xFF, 0x03, 0x05, b'P', b'i', b'a', b'n', b'o', // name
    0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, // tempo 500000
    0x00, 0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08, // 4/4
    0x00, 0x90, 0x3C, 0x64, // t=0 C4 on, velocity 100
    0x83, 0x60, 0x80, 0x3C, 0x40, // t=480 C4 off
    0x00, 0x90, 0x40, 0x50, // t=480 E4 on, velocity 80
    0x83, 0x60, 0x40, 0x00, // t=960 running status, velocity 0
    0x00, 0xFF, 0x2F, 0x00, // end of track
];

/// Format 1, 96 ticks per quarter. A conductor track with two tempos and two
/// meters, and a bass track with overlapping notes of one pitch, running
/// status, a program change, a sysex and an unknown meta event.
pub const FORMAT1_CONDUCTOR: &[u8] = &[
    b'M', b'T', b'h', b'd', 0x00, 0x00, 0x00, 0x06, //
    0x00, 0x01, 0x00, 0x02, 0x00, 0x60, // format 1, 2 tracks, 96 tpq
    b'M', b'T', b'r', b'k', 0x00, 0x00, 0x00, 0x23, // 35 bytes
    0x00, 0xFF, 0x51, 0x03, 0x09, 0x27, 0xC0, // tempo 600000
    0x00, 0xFF, 0x58, 0x04, 0x03, 0x02, 0x18, 0x08, // 3/4
    0x83, 0x00, 0xFF, 0x51, 0x03, 0x06, 0x1A, 0x80, // t=384 tempo 400000
    0x00, 0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08, // t=384 4/4
    0x00, 0xFF, 0x2F, 0x00, //
    b'M', b'T', b'r', b'k', 0x00, 0x00, 0x00, 0x31, // 49 bytes
    0x00, 0xFF, 0x03, 0x04, b'B', b'a', b's', b's', // name
    0x00, 0xC1, 0x21, // program change, channel 1
    0x00, 0x91, 0x24, 0x64, // t=0 C2 on, velocity 100
    0x30, 0x24, 0x50, // t=48 running status: C2 on again, velocity 80
    0x30, 0x81, 0x24, 0x00, // t=96 C2 off: ends the first C2
    0x00, 0xF0, 0x03, 0x7E, 0x7F, 0xF7, // sysex, skipped
    0x30, 0x81, 0x24, 0x00, // t=144 C2 off: ends the second C2
    0x00, 0xFF, 0x7F, 0x02, 0x00, 0x01, // sequencer-specific meta, skipped
    0x60, 0x91, 0x2B, 0x70, // t=240 G2 on, velocity 112
    0x60, 0x2B, 0x00, // t=336 running status, velocity 0
    0x00, 0xFF, 0x2F, 0x00, //
];

/// Format 1, 480 ticks per quarter, an unknown chunk before the track, no
/// tempo or meter events, and a D4 that is never released.
pub const FORMAT1_UNTERMINATED: &[u8] = &[
    b'M', b'T', b'h', b'd', 0x00, 0x00, 0x00, 0x06, //
    0x00, 0x01, 0x00, 0x01, 0x01, 0xE0, // format 1, 1 track, 480 tpq
    b'X', b'F', b'I', b'H', 0x00, 0x00, 0x00, 0x04, 0x00, 0x01, 0x02, 0x03, // skipped
    b'M', b'T', b'r', b'k', 0x00, 0x00, 0x00, 0x13, // 19 bytes
    0x00, 0x90, 0x3C, 0x64, // t=0 C4 on
    0x81, 0x70, 0x90, 0x3E, 0x64, // t=240 D4 on
    0x81, 0x70, 0x80, 0x3C, 0x00, // t=480 C4 off
    0x83, 0x60, 0xFF, 0x2F, 0x00, // t=960 end of track
];

fn note(track: usize, channel: u8, pitch: u8, onset: u64, offset: u64, velocity: u8) -> Note {
    Note {
        track,
        channel,
        pitch,
        onset,
        offset,
        velocity,
    }
}

fn meter(tick: u64, numerator: u8, denominator: u32) -> TimeSignature {
    TimeSignature {
        tick,
        numerator,
        denominator,
    }
}

pub fn expected_format0() -> MidiSong {
    MidiSong {
        ticks_per_quarter: 480,
        num_tracks: 1,
        track_names: vec![Some("Piano".into())],
        notes: vec![note(0, 0, 60, 0, 480, 100), note(0, 0, 64, 480, 960, 80)],
        tempo_map: vec![(0, 500_000)],
        time_signatures: vec![meter(0, 4, 4)],
        end_tick: 960,
        unmatched_note_ons: 0,
    }
}

pub fn expected_conductor() -> MidiSong {
    MidiSong {
        ticks_per_quarter: 96,
        num_tracks: 2,
        track_names: vec![None, Some("Bass".into())],
        notes: vec![
            note(1, 1, 36, 0, 96, 100),
            note(1, 1, 36, 48, 144, 80),
            note(1, 1, 43, 240, 336, 112),
        ],
        tempo_map: vec![(0, 600_000), (384, 400_000)],
        time_signatures: vec![meter(0, 3, 4), meter(384, 4, 4)],
        end_tick: 384,
        unmatched_note_ons: 0,
    }
}

pub fn expected_unterminated() -> MidiSong {
    MidiSong {
        ticks_per_quarter: 480,
        num_tracks: 1,
        track_names: vec![None],
        notes: vec![note(0, 0, 60, 0, 480, 100), note(0, 0, 62, 240, 960, 100)],
        tempo_map: vec![(0, 500_000)],
        time_signatures: vec![meter(0, 4, 4)],
        end_tick: 960,
        unmatched_note_ons: 1,
    }
}

/// `FORMAT0_TWO_NOTES` with the track chunk cut 10 bytes short.
pub fn truncated_chunk() -> Vec<u8> {
    FORMAT0_TWO_NOTES[..FORMAT0_TWO_NOTES.len() - 10].to_vec()
}

/// `FORMAT0_TWO_NOTES` relabelled as format 2.
pub fn format2() -> Vec<u8> {
    let mut bytes = FORMAT0_TWO_NOTES.to_vec();
    bytes[9] = 2;
    bytes
}

/// `FORMAT0_TWO_NOTES` with SMPTE time division (-25 fps, 40 ticks per frame).
pub fn smpte() -> Vec<u8> {
    let mut bytes = FORMAT0_TWO_NOTES.to_vec();
    bytes[12] = 0xE7;
    bytes[13] = 0x28;
    bytes
}

/// A track whose first event is a data byte with no running status to reuse.
pub fn orphan_data_byte() -> Vec<u8> {
    let mut bytes = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x00\x60MTrk\x00\x00\x00\x07".to_vec();
    bytes.extend([0x00, 0x3C, 0x64, 0x00, 0xFF, 0x2F, 0x00]);
    bytes
}
