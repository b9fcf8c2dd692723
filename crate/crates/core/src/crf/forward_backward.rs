//! Sum-product recursions over the joint state lattice, in log space.

use ndarray::{Array2, ArrayView2};

use super::table::TransitionTable;
use crate::error::{Error, Result};

/// `log(sum(exp(x)))` over a slice; `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log partition function and its sensitivity to every emission.
pub(crate) struct Partition {
    pub log_z: f64,
    /// `d log Z / d e_il` where `e_il` is the (linear) emission of level `l` at step `i`.
    pub emission_sensitivity: Array2<f64>,
}

/// Forward pass; row `i` holds log-weights of prefixes ending in each state
/// at step `i`, before the step-`i` emission is applied.
fn forward(table: &TransitionTable, log_emit: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n, _) = log_emit.dim();
    let states = table.num_states();
    let mut pre = Array2::from_elem((n, states), f64::NEG_INFINITY);
    let mut current = vec![0.0; states];
    let mut scratch = Vec::with_capacity(states);
    for i in 0..n {
        if i == 0 {
            pre.row_mut(0).fill(0.0);
        } else {
            let mut row = pre.row_mut(i);
            for (z, slot) in row.iter_mut().enumerate() {
                scratch.clear();
                scratch.extend(
                    table
                        .incoming(z)
                        .iter()
                        .map(|m| current[m.from as usize] + m.log_potential),
                );
                *slot = log_sum_exp(&scratch);
            }
        }
        let mut alive = false;
        for z in 0..states {
            current[z] = pre[[i, z]] + log_emit[[i, table.state_level(z)]];
            alive |= current[z] > f64::NEG_INFINITY;
        }
        if !alive {
            return Err(Error::Degenerate { step: i });
        }
    }
    Ok(pre)
}

fn final_log_z(table: &TransitionTable, pre: &Array2<f64>, log_emit: ArrayView2<'_, f64>) -> f64 {
    let last = pre.nrows() - 1;
    let terms: Vec<f64> = (0..table.num_states())
        .map(|z| pre[[last, z]] + log_emit[[last, table.state_level(z)]])
        .collect();
    log_sum_exp(&terms)
}

pub(crate) fn log_partition(table: &TransitionTable, log_emit: ArrayView2<'_, f64>) -> Result<f64> {
    check_width(table, log_emit)?;
    let pre = forward(table, log_emit)?;
    Ok(final_log_z(table, &pre, log_emit))
}

pub(crate) fn log_partition_with_sensitivity(
    table: &TransitionTable,
    log_emit: ArrayView2<'_, f64>,
) -> Result<Partition> {
    check_width(table, log_emit)?;
    let (n, width) = log_emit.dim();
    let states = table.num_states();
    let pre = forward(table, log_emit)?;
    let log_z = final_log_z(table, &pre, log_emit);

    let mut beta = Array2::from_elem((n, states), f64::NEG_INFINITY);
    beta.row_mut(n - 1).fill(0.0);
    let mut scratch = Vec::with_capacity(width);
    for i in (0..n.saturating_sub(1)).rev() {
        for z in 0..states {
            scratch.clear();
            scratch.extend(table.outgoing(z).iter().map(|m| {
                m.log_potential + log_emit[[i + 1, m.level as usize]] + beta[[i + 1, m.to as usize]]
            }));
            beta[[i, z]] = log_sum_exp(&scratch);
        }
    }

    let mut sensitivity = Array2::zeros((n, width));
    let mut max = vec![f64::NEG_INFINITY; width];
    let mut sum = vec![0.0; width];
    for i in 0..n {
        max.fill(f64::NEG_INFINITY);
        sum.fill(0.0);
        for z in 0..states {
            let v = pre[[i, z]] + beta[[i, z]];
            let l = table.state_level(z);
            if v > max[l] {
                max[l] = v;
            }
        }
        for z in 0..states {
            let l = table.state_level(z);
            if max[l] > f64::NEG_INFINITY {
                sum[l] += (pre[[i, z]] + beta[[i, z]] - max[l]).exp();
            }
        }
        for l in 0..width {
            if max[l] > f64::NEG_INFINITY {
                sensitivity[[i, l]] = (max[l] + sum[l].ln() - log_z).exp();
            }
        }
    }
    Ok(Partition {
        log_z,
        emission_sensitivity: sensitivity,
    })
}

fn check_width(table: &TransitionTable, log_emit: ArrayView2<'_, f64>) -> Result<()> {
    let (n, width) = log_emit.dim();
    if n == 0 {
        return Err(Error::Shape("empty observation sequence".into()));
    }
    if width != table.num_layers() + 1 {
        return Err(Error::Shape(format!(
            "observations cover {} levels, CRF expects {}",
            width,
            table.num_layers() + 1
        )));
    }
    Ok(())
}
