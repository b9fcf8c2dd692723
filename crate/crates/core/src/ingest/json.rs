//! Piano-roll JSON interchange, schema version 1.
//!
//! ```text
//! {"version": 1, "tatum": "sixteenth", "num_steps": N,
//!  "tracks": [{"name": str, "cells": [[step, pitch, flag], ...]}, ...],
//!  "levels": [N ints] (optional), "num_layers": L (optional)}
//! ```
//!
//! Only sounding cells are listed (flag 1 = hold, 2 = onset). `num_layers`
//! gives the depth of the `levels` annotation; when absent the largest level
//! present is used.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{Cell, LevelSequence, PianoRoll, TrackRoll, TATUM_UNIT};

pub const PIANOROLL_VERSION: u64 = 1;

#[derive(Serialize)]
struct TrackDoc<'a> {
    name: &'a str,
    cells: Vec<[usize; 3]>,
}

#[derive(Serialize)]
struct RollDoc<'a> {
    version: u64,
    tatum: &'a str,
    num_steps: usize,
    tracks: Vec<TrackDoc<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<&'a [u8]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_layers: Option<usize>,
}

/// Serializes a roll and its optional annotation.
pub fn save_pianoroll_json(roll: &PianoRoll, levels: Option<&LevelSequence>) -> Result<String> {
    if let Some(l) = levels {
        if l.len() != roll.num_steps() {
            return Err(Error::Shape(format!(
                "annotation has {} steps, roll {}",
                l.len(),
                roll.num_steps()
            )));
        }
    }
    let doc = RollDoc {
        version: PIANOROLL_VERSION,
        tatum: TATUM_UNIT,
        num_steps: roll.num_steps(),
        tracks: roll
            .tracks()
            .iter()
            .map(|t| TrackDoc {
                name: t.name(),
                cells: t
                    .entries()
                    .map(|(s, p, c)| [s, p, c.flag() as usize])
                    .collect(),
            })
            .collect(),
        levels: levels.map(|l| l.levels()),
        num_layers: levels.map(|l| l.num_layers()),
    };
    Ok(serde_json::to_string(&doc).expect("roll serializes"))
}

fn field<'a>(obj: &'a Value, name: &str, path: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::schema(path, "missing required field"))
}

fn as_index(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::schema(path, format!("expected a non-negative integer, found {v}")))
}

/// Parses a document produced by [`save_pianoroll_json`] or by hand.
pub fn load_pianoroll_json(text: &str) -> Result<(PianoRoll, Option<LevelSequence>)> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::schema("<document>", e.to_string()))?;
    if !doc.is_object() {
        return Err(Error::schema("<document>", "expected an object"));
    }
    let version = as_index(field(&doc, "version", "version")?, "version")? as u64;
    if version != PIANOROLL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: PIANOROLL_VERSION,
        });
    }
    if let Some(t) = doc.get("tatum") {
        if t.as_str() != Some(TATUM_UNIT) {
            return Err(Error::schema(
                "tatum",
                format!("expected \"{TATUM_UNIT}\", found {t}"),
            ));
        }
    }
    let num_steps = as_index(field(&doc, "num_steps", "num_steps")?, "num_steps")?;
    let tracks = field(&doc, "tracks", "tracks")?
        .as_array()
        .ok_or_else(|| Error::schema("tracks", "expected an array"))?;

    let mut rolls = Vec::with_capacity(tracks.len());
    for (t, track) in tracks.iter().enumerate() {
        let path = format!("tracks[{t}]");
        let name = field(track, "name", &format!("{path}.name"))?
            .as_str()
            .ok_or_else(|| Error::schema(format!("{path}.name"), "expected a string"))?;
        let cells = field(track, "cells", &format!("{path}.cells"))?
            .as_array()
            .ok_or_else(|| Error::schema(format!("{path}.cells"), "expected an array"))?;
        let mut entries = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            let cpath = format!("{path}.cells[{k}]");
            let triple = cell
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| Error::schema(&cpath, "expected [step, pitch, flag]"))?;
            let step = as_index(&triple[0], &cpath)?;
            let pitch = as_index(&triple[1], &cpath)?;
            let flag = as_index(&triple[2], &cpath)?;
            let cell = match flag {
                1 => Cell::Hold,
                2 => Cell::Onset,
                _ => {
                    return Err(Error::schema(
                        &cpath,
                        format!("flag must be 1 or 2, found {flag}"),
                    ))
                }
            };
            entries.push((step, pitch, cell));
        }
        rolls.push(
            TrackRoll::from_entries(name, num_steps, entries)
                .map_err(|e| Error::schema(&path, e.to_string()))?,
        );
    }
    let roll = PianoRoll::new(num_steps, rolls)?;

    let levels = match doc.get("levels") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let raw = v
                .as_array()
                .ok_or_else(|| Error::schema("levels", "expected an array"))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .filter(|&l| l <= u8::MAX as u64)
                        .map(|l| l as u8)
                        .ok_or_else(|| Error::schema("levels", format!("invalid level {x}")))
                })
                .collect::<Result<Vec<u8>>>()?;
            if raw.len() != num_steps {
                return Err(Error::schema(
                    "levels",
                    format!("expected {num_steps} entries, found {}", raw.len()),
                ));
            }
            let layers = match doc.get("num_layers") {
                Some(v) => as_index(v, "num_layers")?,
                None => raw.iter().copied().max().unwrap_or(1).max(1) as usize,
            };
            Some(
                LevelSequence::new(raw, layers)
                    .map_err(|e| Error::schema("levels", e.to_string()))?,
            )
        }
    };
    Ok((roll, levels))
}
