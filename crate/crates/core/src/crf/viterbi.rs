use ndarray::{Array2, ArrayView2};

use super::table::TransitionTable;
use crate::error::{Error, Result};
use crate::types::{CrfState, LevelSequence};

/// Highest-scoring state path and its log score.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub levels: LevelSequence,
    pub states: Vec<CrfState>,
    pub score: f64,
}

/// Max-product decoding.
///
/// Best suffix scores are computed right to left, then the path is traced left
/// to right. At the first step the state with the higher boundary level wins a
/// tie (then the smaller counter pattern); afterwards the move to the higher
/// boundary level wins. This makes the result the lexicographically preferred
/// optimum, independent of iteration details.
pub(crate) fn decode(
    table: &TransitionTable,
    log_emit: ArrayView2<'_, f64>,
) -> Result<ViterbiPath> {
    let (n, width) = log_emit.dim();
    if n == 0 {
        return Err(Error::Decode("empty observation sequence".into()));
    }
    if width != table.num_layers() + 1 {
        return Err(Error::Shape(format!(
            "observations cover {width} levels, CRF expects {}",
            table.num_layers() + 1
        )));
    }
    let layers = table.num_layers();
    let states = table.num_states();

    let mut suffix = Array2::from_elem((n, states), f64::NEG_INFINITY);
    for z in 0..states {
        suffix[[n - 1, z]] = log_emit[[n - 1, table.state_level(z)]];
    }
    for i in (0..n - 1).rev() {
        for z in 0..states {
            let best = table
                .outgoing(z)
                .iter()
                .map(|m| m.log_potential + suffix[[i + 1, m.to as usize]])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[[i, z]] = log_emit[[i, table.state_level(z)]] + best;
        }
    }

    let mut order: Vec<usize> = (0..states).collect();
    order.sort_by_key(|&z| (std::cmp::Reverse(table.state_level(z)), z));
    let mut start = order[0];
    for &z in &order[1..] {
        if suffix[[0, z]] > suffix[[0, start]] {
            start = z;
        }
    }
    let score = suffix[[0, start]];
    if score == f64::NEG_INFINITY || score.is_nan() {
        return Err(Error::Decode(
            "no state path has finite score (contradictory hard constraints)".into(),
        ));
    }

    let mut path = Vec::with_capacity(n);
    path.push(start);
    let mut z = start;
    for i in 0..n - 1 {
        let mut chosen = None;
        let mut best = f64::NEG_INFINITY;
        for m in table.outgoing(z).iter().rev() {
            let v = m.log_potential + suffix[[i + 1, m.to as usize]];
            if chosen.is_none() || v > best {
                best = v;
                chosen = Some(m.to as usize);
            }
        }
        z = chosen.ok_or_else(|| Error::Decode(format!("dead end at step {i}")))?;
        path.push(z);
    }

    let levels = path.iter().map(|&z| table.state_level(z) as u8).collect();
    Ok(ViterbiPath {
        levels: LevelSequence::new(levels, layers)?,
        states: path
            .into_iter()
            .map(|z| CrfState::from_raw(z as u16, layers))
            .collect(),
        score,
    })
}
