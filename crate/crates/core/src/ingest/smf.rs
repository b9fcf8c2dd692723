//! Standard MIDI File reader (formats 0 and 1, metrical time division).

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Tempo used when a file declares none: 120 bpm.
pub const DEFAULT_TEMPO: u32 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Note {
    pub track: usize,
    pub channel: u8,
    pub pitch: u8,
    pub onset: u64,
    pub offset: u64,
    pub velocity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSignature {
    pub tick: u64,
    pub numerator: u8,
    pub denominator: u32,
}

impl TimeSignature {
    /// Meters built from twos only, like 2/4, 4/4 or 8/8.
    pub fn is_binary(&self) -> bool {
        self.numerator.is_power_of_two() && self.denominator.is_power_of_two()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiSong {
    pub ticks_per_quarter: u16,
    pub num_tracks: usize,
    pub track_names: Vec<Option<String>>,
    /// Sorted by onset, then track, then pitch.
    pub notes: Vec<Note>,
    /// `(tick, microseconds per quarter)`, sorted, first entry at tick 0.
    pub tempo_map: Vec<(u64, u32)>,
    /// Sorted, first entry at tick 0.
    pub time_signatures: Vec<TimeSignature>,
    /// Tick of the last event in any track.
    pub end_tick: u64,
    /// Note-ons still open at their track's end and closed there.
    pub unmatched_note_ons: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn truncated(&self, what: &str) -> Error {
        Error::MidiParse {
            offset: self.pos,
            message: format!("truncated {what}"),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        if self.pos >= self.end {
            return Err(self.truncated(what));
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.end - self.pos < len {
            return Err(self.truncated(what));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity of at most four bytes.
    fn vlq(&mut self, what: &str) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8(what)?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::MidiParse {
            offset: start,
            message: format!("{what}: variable-length quantity longer than 4 bytes"),
        })
    }
}

#[derive(Default)]
struct TrackEvents {
    name: Option<String>,
    notes: Vec<Note>,
    tempos: Vec<(u64, u32)>,
    signatures: Vec<TimeSignature>,
    end_tick: u64,
    unmatched: usize,
}

type OpenNotes = HashMap<(u8, u8), VecDeque<(u64, u8)>>;

/// Ends the oldest open note of `key`; zero-length notes last one tick.
fn close_note(out: &mut TrackEvents, open: &mut OpenNotes, track: usize, key: (u8, u8), tick: u64) {
    if let Some((onset, velocity)) = open.get_mut(&key).and_then(|q| q.pop_front()) {
        out.notes.push(Note {
            track,
            channel: key.0,
            pitch: key.1,
            onset,
            offset: tick.max(onset + 1),
            velocity,
        });
    }
}

fn parse_track(bytes: &[u8], start: usize, end: usize, track: usize) -> Result<TrackEvents> {
    let mut r = Reader {
        bytes,
        pos: start,
        end,
    };
    let mut out = TrackEvents::default();
    let mut open = OpenNotes::new();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;

    while r.pos < r.end {
        tick += r.vlq("delta time")? as u64;
        let status_pos = r.pos;
        let first = r.u8("event")?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => {
                    return Err(Error::MidiParse {
                        offset: status_pos,
                        message: "data byte without running status".into(),
                    })
                }
            }
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8("meta type")?;
                let len = r.vlq("meta length")? as usize;
                let data = r.take(len, "meta event")?;
                match kind {
                    0x03 if out.name.is_none() => {
                        out.name = Some(String::from_utf8_lossy(data).into_owned());
                    }
                    0x51 if len == 3 => {
                        let tempo = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        out.tempos.push((tick, tempo));
                    }
                    0x58 if len >= 2 => {
                        if data[1] > 31 {
                            return Err(Error::MidiParse {
                                offset: status_pos,
                                message: format!("time signature denominator 2^{}", data[1]),
                            });
                        }
                        out.signatures.push(TimeSignature {
                            tick,
                            numerator: data[0],
                            denominator: 1 << data[1],
                        });
                    }
                    0x2f => {
                        r.pos = r.end;
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq("sysex length")? as usize;
                r.take(len, "sysex event")?;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data1 = match first_data {
                    Some(b) => b,
                    None => r.u8("channel event")?,
                };
                let two_bytes = !matches!(status & 0xf0, 0xc0 | 0xd0);
                let data2 = if two_bytes { r.u8("channel event")? } else { 0 };
                match status & 0xf0 {
                    0x90 if data2 > 0 => {
                        open.entry((channel, data1))
                            .or_default()
                            .push_back((tick, data2));
                    }
                    0x80 | 0x90 => close_note(&mut out, &mut open, track, (channel, data1), tick),
                    _ => {}
                }
            }
            _ => {
                return Err(Error::MidiParse {
                    offset: status_pos,
                    message: format!("unsupported status byte {status:#04x}"),
                })
            }
        }
    }
    out.end_tick = tick;
    let mut pending: Vec<(u8, u8)> = open
        .iter()
        .filter(|(_, q)| !q.is_empty())
        .map(|(k, _)| *k)
        .collect();
    pending.sort_unstable();
    for (channel, pitch) in pending {
        while open.get(&(channel, pitch)).is_some_and(|q| !q.is_empty()) {
            out.unmatched += 1;
            close_note(&mut out, &mut open, track, (channel, pitch), tick);
        }
    }
    Ok(out)
}

/// Parses a format 0 or 1 file with ticks-per-quarter time division.
///
/// Unknown chunks and events are skipped. A note-on with velocity 0 ends a
/// note; overlapping notes of one pitch and channel end first-in, first-out.
pub fn parse_smf(bytes: &[u8]) -> Result<MidiSong> {
    let mut r = Reader {
        bytes,
        pos: 0,
        end: bytes.len(),
    };
    if r.take(4, "header tag")? != b"MThd" {
        return Err(Error::MidiParse {
            offset: 0,
            message: "missing MThd header".into(),
        });
    }
    let header_len = r.u32("header length")? as usize;
    if header_len < 6 {
        return Err(Error::MidiParse {
            offset: 4,
            message: format!("header length {header_len} < 6"),
        });
    }
    let header_end = r.pos + header_len;
    let format = r.u16("header")?;
    let declared_tracks = r.u16("header")? as usize;
    let division = r.u16("header")?;
    if header_end > bytes.len() {
        return Err(Error::MidiParse {
            offset: bytes.len(),
            message: "truncated header".into(),
        });
    }
    r.pos = header_end;
    if format > 1 {
        return Err(Error::UnsupportedFormat(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(Error::UnsupportedFormat(
            "SMPTE or zero time division".into(),
        ));
    }

    let mut tracks = Vec::new();
    while r.pos < bytes.len() && tracks.len() < declared_tracks {
        let tag_pos = r.pos;
        let tag = r.take(4, "chunk tag")?;
        let len = r.u32("chunk length")? as usize;
        let start = r.pos;
        if bytes.len() - start < len {
            return Err(Error::MidiParse {
                offset: tag_pos,
                message: format!(
                    "chunk declares {len} bytes but only {} remain",
                    bytes.len() - start
                ),
            });
        }
        r.pos = start + len;
        if tag == b"MTrk" {
            tracks.push(parse_track(bytes, start, start + len, tracks.len())?);
        }
    }
    if tracks.len() < declared_tracks {
        return Err(Error::MidiParse {
            offset: bytes.len(),
            message: format!(
                "header declares {declared_tracks} tracks, found {}",
                tracks.len()
            ),
        });
    }

    let mut notes = Vec::new();
    let mut tempo_map = Vec::new();
    let mut time_signatures = Vec::new();
    let mut names = Vec::new();
    let mut end_tick = 0;
    let mut unmatched = 0;
    for t in tracks {
        notes.extend(t.notes);
        tempo_map.extend(t.tempos);
        time_signatures.extend(t.signatures);
        names.push(t.name);
        end_tick = end_tick.max(t.end_tick);
        unmatched += t.unmatched;
    }
    notes.sort_by_key(|n| (n.onset, n.track, n.pitch, n.channel, n.offset));
    tempo_map.sort_by_key(|&(tick, _)| tick);
    time_signatures.sort_by_key(|s| s.tick);
    if tempo_map.first().is_none_or(|&(tick, _)| tick > 0) {
        tempo_map.insert(0, (0, DEFAULT_TEMPO));
    }
    if time_signatures.first().is_none_or(|s| s.tick > 0) {
        time_signatures.insert(
            0,
            TimeSignature {
                tick: 0,
                numerator: 4,
                denominator: 4,
            },
        );
    }
    if unmatched > 0 {
        log::warn!("{unmatched} note-on events without note-off closed at track end");
    }
    for s in time_signatures.iter().filter(|s| !s.is_binary()) {
        log::warn!(
            "non-binary meter {}/{} at tick {}; the analysis assumes binary structure",
            s.numerator,
            s.denominator,
            s.tick
        );
    }
    end_tick = notes.iter().map(|n| n.offset).fold(end_tick, u64::max);
    Ok(MidiSong {
        ticks_per_quarter: division,
        num_tracks: names.len(),
        track_names: names,
        notes,
        tempo_map,
        time_signatures,
        end_tick,
        unmatched_note_ons: unmatched,
    })
}
