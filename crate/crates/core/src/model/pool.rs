use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::types::LevelDistribution;

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Forward values of the confidence-weighted track pooling.
pub(crate) struct Pooled {
    /// Pooled distribution per step, `N x (L+1)`.
    pub probs: Array2<f64>,
    /// Per-track softmax of the level logits.
    pub track_probs: Vec<Array2<f64>>,
    /// Track weights per step, `N x T`; rows sum to 1.
    pub weights: Array2<f64>,
}

pub(crate) fn pool_forward(logits: &[Array2<f64>], confidence: &[Array1<f64>]) -> Result<Pooled> {
    if logits.is_empty() {
        return Err(Error::Shape("pooling needs at least one track".into()));
    }
    if logits.len() != confidence.len() {
        return Err(Error::Shape(format!(
            "{} logit tracks vs {} confidence tracks",
            logits.len(),
            confidence.len()
        )));
    }
    let dim = logits[0].dim();
    for (t, (l, c)) in logits.iter().zip(confidence).enumerate() {
        if l.dim() != dim || c.len() != dim.0 {
            return Err(Error::Shape(format!(
                "track {t}: logits {:?} / confidence {} vs {:?}",
                l.dim(),
                c.len(),
                dim
            )));
        }
    }
    let n = dim.0;
    let tracks = logits.len();
    let mut conf = Array2::zeros((n, tracks));
    for (t, c) in confidence.iter().enumerate() {
        conf.column_mut(t).assign(c);
    }
    let weights = softmax_rows(conf.view());
    let track_probs: Vec<Array2<f64>> = logits.iter().map(|l| softmax_rows(l.view())).collect();
    let mut probs = Array2::zeros(dim);
    for (t, q) in track_probs.iter().enumerate() {
        let w = weights.column(t);
        probs += &(q * &w.insert_axis(Axis(1)));
    }
    Ok(Pooled {
        probs,
        track_probs,
        weights,
    })
}

/// Back-propagates through pooling and the per-track softmaxes.
///
/// `g_probs` is the gradient with respect to the pooled distribution and
/// `g_track_probs[t]` any additional gradient reaching track `t`'s own
/// distribution directly. Returns gradients of the logits and confidences.
pub(crate) fn pool_backward(
    pooled: &Pooled,
    g_probs: ArrayView2<'_, f64>,
    g_track_probs: &[Option<Array2<f64>>],
) -> (Vec<Array2<f64>>, Vec<Array1<f64>>) {
    let tracks = pooled.track_probs.len();
    let n = g_probs.nrows();
    // d loss / d weight_t at each step
    let mut g_weights = Array2::zeros((n, tracks));
    for (t, q) in pooled.track_probs.iter().enumerate() {
        let dots = (q * &g_probs).sum_axis(Axis(1));
        g_weights.column_mut(t).assign(&dots);
    }
    let mut g_conf = Vec::with_capacity(tracks);
    let mut g_logits = Vec::with_capacity(tracks);
    for t in 0..tracks {
        let w = pooled.weights.column(t);
        let mut gc = Array1::zeros(n);
        for i in 0..n {
            let mean: f64 = pooled
                .weights
                .row(i)
                .iter()
                .zip(g_weights.row(i))
                .map(|(a, g)| a * g)
                .sum();
            gc[i] = w[i] * (g_weights[[i, t]] - mean);
        }
        g_conf.push(gc);

        let mut g_q = &g_probs * &w.insert_axis(Axis(1));
        if let Some(extra) = &g_track_probs[t] {
            g_q += extra;
        }
        g_logits.push(softmax_backward(pooled.track_probs[t].view(), g_q.view()));
    }
    (g_logits, g_conf)
}

fn softmax_backward(q: ArrayView2<'_, f64>, g_q: ArrayView2<'_, f64>) -> Array2<f64> {
    let inner = (&q * &g_q).sum_axis(Axis(1));
    let mut out = g_q.to_owned();
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(inner.iter()) {
        row -= *s;
    }
    out * q
}

/// Confidence-weighted mixture of per-track level distributions.
pub fn pool_tracks(
    logits: &[Array2<f64>],
    confidence: &[Array1<f64>],
) -> Result<Vec<LevelDistribution>> {
    Ok(to_distributions(
        pool_forward(logits, confidence)?.probs.view(),
    ))
}

pub(crate) fn to_distributions(probs: ArrayView2<'_, f64>) -> Vec<LevelDistribution> {
    probs
        .axis_iter(Axis(0))
        .map(|row: ArrayView1<'_, f64>| LevelDistribution::from_normalized_unchecked(row.to_vec()))
        .collect()
}
