use crate::error::{Error, Result};
use crate::types::LevelDistribution;

/// Level of a measure (downbeat) boundary in the tatum-rooted hierarchy.
pub const MEASURE_LEVEL: usize = 4;

/// Restricts a tatum-level prediction to the given downbeat positions and
/// re-roots the hierarchy at the measure.
///
/// Old levels `0..=4` fold into new level 0; old level `4 + k` becomes new
/// level `k`. Each output distribution covers `L - 4` layers.
pub fn subsample_to_measure_level(
    p: &[LevelDistribution],
    downbeats: &[usize],
) -> Result<Vec<LevelDistribution>> {
    if downbeats.is_empty() {
        return Ok(Vec::new());
    }
    let layers = p.first().map(|d| d.num_layers()).unwrap_or(0);
    if layers <= MEASURE_LEVEL {
        return Err(Error::Range {
            what: "num_layers",
            value: layers as i64,
            min: MEASURE_LEVEL as i64 + 1,
            max: crate::types::MAX_LAYERS as i64,
        });
    }
    for w in downbeats.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Invalid(format!(
                "downbeat positions must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    let last = *downbeats.last().unwrap();
    if last >= p.len() {
        return Err(Error::Range {
            what: "downbeat position",
            value: last as i64,
            min: 0,
            max: p.len() as i64 - 1,
        });
    }
    Ok(downbeats
        .iter()
        .map(|&i| {
            let probs = p[i].probs();
            let mut out = Vec::with_capacity(layers - MEASURE_LEVEL + 1);
            out.push(probs[..=MEASURE_LEVEL].iter().sum());
            out.extend_from_slice(&probs[MEASURE_LEVEL + 1..]);
            LevelDistribution::from_normalized_unchecked(out)
        })
        .collect())
}
