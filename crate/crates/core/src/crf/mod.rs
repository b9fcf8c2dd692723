//! The metrical-regularity CRF.
//!
//! A latent state holds one binary counter per hierarchy level. Each step
//! emits the boundary level of its state, and the transition potential
//! factorizes over the levels that are allowed to move at that step. The
//! negative log of the unnormalized likelihood of a predicted level
//! distribution sequence serves as a self-supervised training loss; its
//! two-observation variant ties the predictions of two tracks together.

mod forward_backward;
pub mod oracle;
mod subsample;
mod table;
mod viterbi;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::types::{CrfParams, LevelDistribution, LevelSequence};

pub use forward_backward::log_sum_exp;
pub use oracle::{brute_force_decode_raw, brute_force_loss, brute_force_loss_raw};
pub use subsample::{subsample_to_measure_level, MEASURE_LEVEL};
pub use table::{
    build_transition_table, successor_state, transition_log_potential, TransitionTable,
};
pub use viterbi::ViterbiPath;

/// Emission clamp used on the training and decoding paths.
pub const EMISSION_FLOOR: f64 = 1e-12;

/// Loss value and `d loss / d p_il`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfLossResult {
    pub loss: f64,
    pub grad: Array2<f64>,
}

/// Two-track loss value and gradients with respect to each input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyLossResult {
    pub loss: f64,
    pub grad_first: Array2<f64>,
    pub grad_second: Array2<f64>,
}

/// A CRF ready for inference: parameters, transition table and emission floor.
#[derive(Debug, Clone)]
pub struct Crf {
    params: CrfParams,
    table: TransitionTable,
    floor: f64,
}

impl Crf {
    /// Exact CRF, no emission clamping.
    pub fn new(params: CrfParams) -> Result<Self> {
        let table = TransitionTable::new(&params)?;
        Ok(Crf {
            params,
            table,
            floor: 0.0,
        })
    }

    /// Clamps emissions to at least `floor` before taking logs.
    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn params(&self) -> &CrfParams {
        &self.params
    }

    pub fn table(&self) -> &TransitionTable {
        &self.table
    }

    pub fn num_layers(&self) -> usize {
        self.params.num_layers()
    }

    fn log_emissions(&self, probs: ArrayView2<'_, f64>) -> Array2<f64> {
        let floor = self.floor;
        probs.mapv(|p| p.max(floor).ln())
    }

    fn active(&self, p: f64) -> f64 {
        if p >= self.floor {
            1.0
        } else {
            0.0
        }
    }

    /// Loss value only; `+inf` when no path has positive weight.
    pub fn loss_value(&self, probs: ArrayView2<'_, f64>) -> Result<f64> {
        match forward_backward::log_partition(&self.table, self.log_emissions(probs).view()) {
            Ok(log_z) => Ok(-log_z),
            Err(Error::Degenerate { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Loss and gradient on an `N x (L+1)` matrix of per-step level probabilities.
    pub fn loss(&self, probs: ArrayView2<'_, f64>) -> Result<CrfLossResult> {
        let part = forward_backward::log_partition_with_sensitivity(
            &self.table,
            self.log_emissions(probs).view(),
        )?;
        let mut grad = part.emission_sensitivity;
        Zip::from(&mut grad)
            .and(&probs)
            .for_each(|g, &p| *g = -*g * self.active(p));
        Ok(CrfLossResult {
            loss: -part.log_z,
            grad,
        })
    }

    fn joint_log_emissions(
        &self,
        first: ArrayView2<'_, f64>,
        second: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        if first.dim() != second.dim() {
            return Err(Error::Shape(format!(
                "track predictions differ in shape: {:?} vs {:?}",
                first.dim(),
                second.dim()
            )));
        }
        Ok(self.log_emissions(first) + self.log_emissions(second))
    }

    pub fn consistency_value(
        &self,
        first: ArrayView2<'_, f64>,
        second: ArrayView2<'_, f64>,
    ) -> Result<f64> {
        let joint = self.joint_log_emissions(first, second)?;
        match forward_backward::log_partition(&self.table, joint.view()) {
            Ok(log_z) => Ok(-log_z),
            Err(Error::Degenerate { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Loss where one state path must emit both observation sequences.
    pub fn consistency(
        &self,
        first: ArrayView2<'_, f64>,
        second: ArrayView2<'_, f64>,
    ) -> Result<ConsistencyLossResult> {
        let joint = self.joint_log_emissions(first, second)?;
        let part = forward_backward::log_partition_with_sensitivity(&self.table, joint.view())?;
        let floor = self.floor;
        let mut grad_first = Array2::zeros(first.dim());
        let mut grad_second = Array2::zeros(first.dim());
        Zip::from(&mut grad_first)
            .and(&mut grad_second)
            .and(&part.emission_sensitivity)
            .and(&first)
            .and(&second)
            .for_each(|g1, g2, &s, &a, &b| {
                *g1 = -s * b.max(floor) * self.active(a);
                *g2 = -s * a.max(floor) * self.active(b);
            });
        Ok(ConsistencyLossResult {
            loss: -part.log_z,
            grad_first,
            grad_second,
        })
    }

    pub fn decode(&self, probs: ArrayView2<'_, f64>) -> Result<ViterbiPath> {
        viterbi::decode(&self.table, self.log_emissions(probs).view())
    }
}

/// Stacks distributions into an `N x (L+1)` matrix.
pub fn stack(p: &[LevelDistribution], num_layers: usize) -> Result<Array2<f64>> {
    let width = num_layers + 1;
    let mut out = Array2::zeros((p.len(), width));
    for (i, d) in p.iter().enumerate() {
        if d.probs().len() != width {
            return Err(Error::Shape(format!(
                "step {i} covers {} levels, expected {width}",
                d.probs().len()
            )));
        }
        out.row_mut(i)
            .iter_mut()
            .zip(d.probs())
            .for_each(|(o, &v)| *o = v);
    }
    Ok(out)
}

/// Negative log unnormalized likelihood of `p` and its gradient.
pub fn unsupervised_loss(params: &CrfParams, p: &[LevelDistribution]) -> Result<CrfLossResult> {
    Crf::new(params.clone())?.loss(stack(p, params.num_layers())?.view())
}

/// Loss with emissions `p1_il * p2_il` and gradients for both inputs.
pub fn consistency_loss(
    params: &CrfParams,
    p1: &[LevelDistribution],
    p2: &[LevelDistribution],
) -> Result<ConsistencyLossResult> {
    if p1.len() != p2.len() {
        return Err(Error::Shape(format!(
            "sequence lengths differ: {} vs {}",
            p1.len(),
            p2.len()
        )));
    }
    let layers = params.num_layers();
    Crf::new(params.clone())?.consistency(stack(p1, layers)?.view(), stack(p2, layers)?.view())
}

/// Boundary levels of the best state path.
pub fn viterbi_decode(params: &CrfParams, p: &[LevelDistribution]) -> Result<LevelSequence> {
    Ok(Crf::new(params.clone())?
        .decode(stack(p, params.num_layers())?.view())?
        .levels)
}
