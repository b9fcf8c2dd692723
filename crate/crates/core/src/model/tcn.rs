use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::types::{Cell, TrackRoll, NUM_PITCHES};

/// Input channels per step: one onset flag and one sounding flag per pitch.
pub const INPUT_CHANNELS: usize = 2 * NUM_PITCHES;

/// Taps per dilated convolution.
pub const KERNEL_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hierarchy depth `L`; the head predicts levels `0..=L`.
    pub num_layers: usize,
    /// Hidden channel width.
    pub channels: usize,
    /// Number of dilated blocks; block `d` has dilation `2^d`.
    pub depth: usize,
}

impl ModelConfig {
    pub fn new(num_layers: usize) -> Self {
        ModelConfig {
            num_layers,
            channels: 32,
            depth: 6,
        }
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    /// Span of input steps that influence one output step.
    pub fn receptive_field(&self) -> usize {
        1 + (KERNEL_SIZE - 1) * ((1usize << self.depth) - 1)
    }

    pub fn head_width(&self) -> usize {
        self.num_layers + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_layers > crate::types::MAX_LAYERS {
            return Err(Error::Invalid(format!("num_layers {}", self.num_layers)));
        }
        if self.channels == 0 || self.depth == 0 || self.depth > 16 {
            return Err(Error::Invalid(format!(
                "channels {} / depth {} must be positive (depth <= 16)",
                self.channels, self.depth
            )));
        }
        Ok(())
    }
}

/// One dilated convolution; `weight` is stored tap-major as `(3, C_out, C_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub dilation: usize,
}

impl ConvBlock {
    fn in_channels(&self) -> usize {
        self.weight.dim().2
    }

    fn out_channels(&self) -> usize {
        self.weight.dim().1
    }

    fn residual(&self) -> bool {
        self.in_channels() == self.out_channels()
    }

    /// Rows `lo..hi` of the output read rows `lo+offset..hi+offset` of the input.
    fn tap_range(&self, tap: usize, n: usize) -> Option<(usize, usize, isize)> {
        let offset = (tap as isize - 1) * self.dilation as isize;
        let lo = (-offset).max(0) as usize;
        let hi = (n as isize - offset.max(0)).max(0) as usize;
        (lo < hi).then_some((lo, hi, offset))
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = x.nrows();
        let mut out = Array2::from_shape_fn((n, self.out_channels()), |(_, c)| self.bias[c]);
        for tap in 0..KERNEL_SIZE {
            if let Some((lo, hi, off)) = self.tap_range(tap, n) {
                let src = x.slice(s![
                    (lo as isize + off) as usize..(hi as isize + off) as usize,
                    ..
                ]);
                let w = self.weight.index_axis(Axis(0), tap);
                let mut dst = out.slice_mut(s![lo..hi, ..]);
                general_mat_mul(1.0, &src, &w.t(), 1.0, &mut dst);
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient when asked.
    fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        g_out: ArrayView2<'_, f64>,
        grad: &mut ConvBlock,
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let n = x.nrows();
        grad.bias += &g_out.sum_axis(Axis(0));
        let mut g_in = want_input.then(|| Array2::zeros(x.dim()));
        for tap in 0..KERNEL_SIZE {
            if let Some((lo, hi, off)) = self.tap_range(tap, n) {
                let src_rows = (lo as isize + off) as usize..(hi as isize + off) as usize;
                let src = x.slice(s![src_rows.clone(), ..]);
                let g = g_out.slice(s![lo..hi, ..]);
                let mut gw = grad.weight.index_axis_mut(Axis(0), tap);
                general_mat_mul(1.0, &g.t(), &src, 1.0, &mut gw);
                if let Some(gi) = g_in.as_mut() {
                    let w = self.weight.index_axis(Axis(0), tap);
                    let mut dst = gi.slice_mut(s![src_rows, ..]);
                    general_mat_mul(1.0, &g, &w, 1.0, &mut dst);
                }
            }
        }
        g_in
    }
}

/// Dilated temporal convolution stack with a per-step linear head producing
/// `L + 1` level logits and one pooling confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionModel {
    config: ModelConfig,
    pub(crate) blocks: Vec<ConvBlock>,
    pub(crate) head_weight: Array2<f64>,
    pub(crate) head_bias: Array1<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct Tape {
    /// Input of each block, then the final hidden activation.
    hidden: Vec<Array2<f64>>,
    /// Pre-activation of each block.
    pre: Vec<Array2<f64>>,
}

impl EmissionModel {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = (0..config.depth)
            .map(|d| {
                let c_in = if d == 0 {
                    INPUT_CHANNELS
                } else {
                    config.channels
                };
                ConvBlock {
                    weight: Array3::zeros((KERNEL_SIZE, config.channels, c_in)),
                    bias: Array1::zeros(config.channels),
                    dilation: 1 << d,
                }
            })
            .collect();
        Ok(EmissionModel {
            config,
            blocks,
            head_weight: Array2::zeros((config.head_width(), config.channels)),
            head_bias: Array1::zeros(config.head_width()),
        })
    }

    /// Uniform initialization in `±1/sqrt(fan_in)`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = EmissionModel::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut model.blocks {
            let bound = 1.0 / ((block.in_channels() * KERNEL_SIZE) as f64).sqrt();
            block.weight.mapv_inplace(|_| rng.gen_range(-bound..bound));
            block.bias.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        let bound = 1.0 / (config.channels as f64).sqrt();
        model
            .head_weight
            .mapv_inplace(|_| rng.gen_range(-bound..bound));
        model
            .head_bias
            .mapv_inplace(|_| rng.gen_range(-bound..bound));
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[ConvBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ConvBlock] {
        &mut self.blocks
    }

    pub fn head_weight(&self) -> &Array2<f64> {
        &self.head_weight
    }

    pub fn head_weight_mut(&mut self) -> &mut Array2<f64> {
        &mut self.head_weight
    }

    pub fn head_bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.head_bias
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        EmissionModel::zeros(self.config).expect("config already validated")
    }

    /// Names and shapes of every tensor in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (d, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{d}.weight"), b.weight.shape().to_vec()));
            out.push((format!("block{d}.bias"), b.bias.shape().to_vec()));
        }
        out.push(("head.weight".into(), self.head_weight.shape().to_vec()));
        out.push(("head.bias".into(), self.head_bias.shape().to_vec()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub(crate) fn forward_tape(&self, input: Array2<f64>) -> (Tape, Array2<f64>) {
        let mut hidden = Vec::with_capacity(self.blocks.len() + 1);
        let mut pre = Vec::with_capacity(self.blocks.len());
        hidden.push(input);
        for block in &self.blocks {
            let h = hidden.last().unwrap();
            let z = block.forward(h.view());
            let mut next = z.mapv(|v| v.max(0.0));
            if block.residual() {
                next += h;
            }
            pre.push(z);
            hidden.push(next);
        }
        let last = hidden.last().unwrap();
        let mut head = Array2::from_shape_fn((last.nrows(), self.config.head_width()), |(_, c)| {
            self.head_bias[c]
        });
        general_mat_mul(1.0, last, &self.head_weight.t(), 1.0, &mut head);
        (Tape { hidden, pre }, head)
    }

    /// Gradient of all parameters given the gradient of the head output.
    pub(crate) fn backward(&self, tape: &Tape, g_head: ArrayView2<'_, f64>) -> EmissionModel {
        let mut grad = self.zeros_like();
        let last = tape.hidden.last().unwrap();
        general_mat_mul(1.0, &g_head.t(), last, 0.0, &mut grad.head_weight);
        grad.head_bias = g_head.sum_axis(Axis(0));
        let mut g_h = g_head.dot(&self.head_weight);
        for d in (0..self.blocks.len()).rev() {
            let block = &self.blocks[d];
            let mut g_pre = g_h.clone();
            ndarray::Zip::from(&mut g_pre)
                .and(&tape.pre[d])
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
            let g_in = block.backward(
                tape.hidden[d].view(),
                g_pre.view(),
                &mut grad.blocks[d],
                d > 0,
            );
            if d > 0 {
                let mut g_in = g_in.unwrap();
                if block.residual() {
                    g_in += &g_h;
                }
                g_h = g_in;
            }
        }
        grad
    }

    /// Level logits (`N x (L+1)`) and confidences (`N`) for one track.
    pub fn track_forward(&self, track: &TrackRoll) -> (Array2<f64>, Array1<f64>) {
        let (_, head) = self.forward_tape(encode_track(track));
        split_head(head, self.config.num_layers)
    }
}

pub(crate) fn split_head(head: Array2<f64>, layers: usize) -> (Array2<f64>, Array1<f64>) {
    let logits = head.slice(s![.., ..=layers]).to_owned();
    let confidence = head.column(layers + 1).to_owned();
    (logits, confidence)
}

/// `N x 256` input: onset flags in channels `0..128`, sounding flags in `128..256`.
pub fn encode_track(track: &TrackRoll) -> Array2<f64> {
    let n = track.num_steps();
    let mut x = Array2::zeros((n, INPUT_CHANNELS));
    for i in 0..n {
        for (q, &cell) in track.step(i).iter().enumerate() {
            if cell == Cell::Onset {
                x[[i, q]] = 1.0;
            }
            if cell.is_sounding() {
                x[[i, NUM_PITCHES + q]] = 1.0;
            }
        }
    }
    x
}

/// Convenience for callers holding only a roll track.
pub fn track_forward(model: &EmissionModel, track: &TrackRoll) -> (Array2<f64>, Array1<f64>) {
    model.track_forward(track)
}

impl Parameters for EmissionModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.push(b.weight.as_slice().expect("standard layout"));
            out.push(b.bias.as_slice().expect("standard layout"));
        }
        out.push(self.head_weight.as_slice().expect("standard layout"));
        out.push(self.head_bias.as_slice().expect("standard layout"));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push(b.weight.as_slice_mut().expect("standard layout"));
            out.push(b.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_weight.as_slice_mut().expect("standard layout"));
        out.push(self.head_bias.as_slice_mut().expect("standard layout"));
        out
    }
}
