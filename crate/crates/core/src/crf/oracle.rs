//! Exhaustive-enumeration reference implementations used to check the
//! dynamic programs. Exponential in the sequence length; tiny inputs only.

use std::cmp::{Ordering, Reverse};

use ndarray::{Array2, ArrayView2};

use super::forward_backward::log_sum_exp;
use super::table::successor_state;
use crate::error::{Error, Result};
use crate::types::{boundary_level, CrfParams, CrfState, LevelDistribution, LevelSequence};

/// Upper bound on `(L+1)^N` accepted by the enumerators.
pub const MAX_ENUMERATION: f64 = 1e7;

/// Potential of a single transition, evaluated as the full per-level product:
/// `A^(l)` entries for the levels that may move, an equality indicator above.
fn product_log_potential(params: &CrfParams, prev: CrfState, next: CrfState) -> f64 {
    let moving = boundary_level(next) + 1;
    let mut total = 0.0;
    for l in 1..=params.num_layers() {
        let (a, b) = (prev.counter(l), next.counter(l));
        total += if l <= moving {
            match (a, b) {
                (false, false) => -params.w_del(l),
                (true, true) => -params.w_ins(l),
                _ => 0.0,
            }
        } else if a == b {
            0.0
        } else {
            f64::NEG_INFINITY
        };
    }
    total
}

fn check_size(layers: usize, n: usize) -> Result<()> {
    let count = ((layers + 1) as f64).powi(n as i32);
    if n == 0 {
        return Err(Error::Shape("empty observation sequence".into()));
    }
    if count > MAX_ENUMERATION {
        return Err(Error::Capacity(format!(
            "(L+1)^N = {count:e} exceeds the enumeration limit {MAX_ENUMERATION:e}"
        )));
    }
    Ok(())
}

/// Calls `visit(states, boundary_levels)` for every admissible start state and
/// every continuation of boundary levels.
fn for_each_path(layers: usize, n: usize, mut visit: impl FnMut(&[CrfState], &[usize])) {
    let mut levels = vec![0usize; n];
    let mut states = vec![CrfState::from_raw(0, layers); n];
    for start in 0..(1u16 << layers) {
        let z0 = CrfState::from_raw(start, layers);
        states[0] = z0;
        levels[0] = boundary_level(z0);
        levels[1..].fill(0);
        loop {
            for i in 1..n {
                states[i] = successor_state(states[i - 1], levels[i]);
            }
            visit(&states, &levels);
            // odometer over levels[1..]
            let mut k = n - 1;
            while k > 0 && levels[k] == layers {
                levels[k] = 0;
                k -= 1;
            }
            if k == 0 {
                break;
            }
            levels[k] += 1;
        }
    }
}

fn log_probs(probs: ArrayView2<'_, f64>) -> Array2<f64> {
    probs.mapv(f64::ln)
}

/// Negative log of the summed weight of every state path, by enumeration.
pub fn brute_force_loss(params: &CrfParams, p: &[LevelDistribution]) -> Result<f64> {
    brute_force_loss_raw(params, super::stack(p, params.num_layers())?.view())
}

/// As [`brute_force_loss`] on an `N x (L+1)` matrix of raw (unnormalized) emissions.
pub fn brute_force_loss_raw(params: &CrfParams, probs: ArrayView2<'_, f64>) -> Result<f64> {
    let (n, width) = probs.dim();
    let layers = params.num_layers();
    if width != layers + 1 {
        return Err(Error::Shape(format!("{width} levels vs {layers} layers")));
    }
    check_size(layers, n)?;
    let log_e = log_probs(probs);
    let mut terms = Vec::new();
    for_each_path(layers, n, |states, levels| {
        let mut w = log_e[[0, levels[0]]];
        for i in 1..n {
            w += product_log_potential(params, states[i - 1], states[i]) + log_e[[i, levels[i]]];
        }
        terms.push(w);
    });
    Ok(-log_sum_exp(&terms))
}

/// Best path by enumeration, with the decoder's tie-break.
///
/// The score is accumulated right to left in the same association order as
/// the decoder so that equal-scoring paths compare exactly equal.
pub fn brute_force_decode_raw(
    params: &CrfParams,
    probs: ArrayView2<'_, f64>,
) -> Result<(LevelSequence, f64)> {
    let (n, width) = probs.dim();
    let layers = params.num_layers();
    if width != layers + 1 {
        return Err(Error::Shape(format!("{width} levels vs {layers} layers")));
    }
    check_size(layers, n)?;
    let log_e = log_probs(probs);

    type Key = (Reverse<usize>, u16, Vec<Reverse<usize>>);
    let mut best: Option<(f64, Key, Vec<usize>)> = None;
    for_each_path(layers, n, |states, levels| {
        let mut s = log_e[[n - 1, levels[n - 1]]];
        for i in (0..n - 1).rev() {
            s = log_e[[i, levels[i]]]
                + (product_log_potential(params, states[i], states[i + 1]) + s);
        }
        if s == f64::NEG_INFINITY {
            return;
        }
        let key: Key = (
            Reverse(levels[0]),
            states[0].bits(),
            levels[1..].iter().map(|&l| Reverse(l)).collect(),
        );
        let better = match &best {
            None => true,
            Some((bs, bk, _)) => match s.partial_cmp(bs) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => key < *bk,
                _ => false,
            },
        };
        if better {
            best = Some((s, key, levels.to_vec()));
        }
    });
    let (score, _, levels) =
        best.ok_or_else(|| Error::Decode("no state path has finite score".into()))?;
    let seq = LevelSequence::new(levels.into_iter().map(|l| l as u8).collect(), layers)?;
    Ok((seq, score))
}
