use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::pool::{pool_backward, pool_forward, to_distributions};
use super::tcn::{encode_track, split_head};
use super::{adam_step, AdamState, EmissionModel, ModelConfig, Parameters, TrainConfig};
use crate::crf::{Crf, EMISSION_FLOOR};
use crate::error::{Error, Result};
use crate::types::{CrfParams, LevelDistribution, PianoRoll};

/// Pooled level probabilities for a song, `N x (L+1)`.
pub fn predict_matrix(model: &EmissionModel, song: &PianoRoll) -> Result<Array2<f64>> {
    if song.num_tracks() == 0 {
        return Err(Error::Shape("song has no tracks".into()));
    }
    let (logits, conf): (Vec<_>, Vec<_>) =
        song.tracks().iter().map(|t| model.track_forward(t)).unzip();
    Ok(pool_forward(&logits, &conf)?.probs)
}

/// Per-step level distributions for a song.
pub fn predict(model: &EmissionModel, song: &PianoRoll) -> Result<Vec<LevelDistribution>> {
    Ok(to_distributions(predict_matrix(model, song)?.view()))
}

/// Loss of one song and the gradient of every model parameter.
#[derive(Debug, Clone)]
pub struct SongLoss {
    pub loss: f64,
    pub unsupervised: f64,
    pub consistency: Option<f64>,
    pub grads: EmissionModel,
}

/// `L1(pooled) + lambda * mean over pairs of L2(track a, track b)` and its gradients.
///
/// The consistency term is skipped when `lambda` is zero, the song has a
/// single track, or `pairs` is empty. `crf` should carry an emission floor.
pub fn loss_and_gradients(
    model: &EmissionModel,
    song: &PianoRoll,
    crf: &Crf,
    lambda: f64,
    pairs: &[(usize, usize)],
) -> Result<SongLoss> {
    let tracks = song.num_tracks();
    if tracks == 0 {
        return Err(Error::Shape("song has no tracks".into()));
    }
    if crf.num_layers() != model.config().num_layers {
        return Err(Error::Shape(format!(
            "model predicts {} layers, CRF has {}",
            model.config().num_layers,
            crf.num_layers()
        )));
    }
    let layers = model.config().num_layers;
    let mut tapes = Vec::with_capacity(tracks);
    let mut logits = Vec::with_capacity(tracks);
    let mut conf = Vec::with_capacity(tracks);
    for track in song.tracks() {
        let (tape, head) = model.forward_tape(encode_track(track));
        let (h, a) = split_head(head, layers);
        tapes.push(tape);
        logits.push(h);
        conf.push(a);
    }
    let pooled = pool_forward(&logits, &conf)?;
    let l1 = crf.loss(pooled.probs.view())?;
    let mut loss = l1.loss;

    let mut extra: Vec<Option<Array2<f64>>> = vec![None; tracks];
    let mut consistency = None;
    if lambda > 0.0 && tracks >= 2 && !pairs.is_empty() {
        let scale = lambda / pairs.len() as f64;
        let mut total = 0.0;
        for &(a, b) in pairs {
            if a >= tracks || b >= tracks {
                return Err(Error::Range {
                    what: "track index",
                    value: a.max(b) as i64,
                    min: 0,
                    max: tracks as i64 - 1,
                });
            }
            let c = crf.consistency(pooled.track_probs[a].view(), pooled.track_probs[b].view())?;
            total += c.loss;
            for (t, g) in [(a, c.grad_first), (b, c.grad_second)] {
                let g = g * scale;
                match &mut extra[t] {
                    Some(acc) => *acc += &g,
                    slot => *slot = Some(g),
                }
            }
        }
        let mean = total / pairs.len() as f64;
        loss += lambda * mean;
        consistency = Some(mean);
    }

    let (g_logits, g_conf) = pool_backward(&pooled, l1.grad.view(), &extra);
    let mut grads = model.zeros_like();
    for t in 0..tracks {
        let n = g_logits[t].nrows();
        let mut g_head = Array2::zeros((n, layers + 2));
        g_head.slice_mut(s![.., ..=layers]).assign(&g_logits[t]);
        g_head.column_mut(layers + 1).assign(&g_conf[t]);
        let g = model.backward(&tapes[t], g_head.view());
        accumulate(&mut grads, &g, 1.0);
    }
    Ok(SongLoss {
        loss,
        unsupervised: l1.loss,
        consistency,
        grads,
    })
}

fn accumulate(acc: &mut EmissionModel, g: &EmissionModel, scale: f64) {
    for (a, b) in acc.tensors_mut().into_iter().zip(g.tensors()) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += scale * y;
        }
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    /// Mean per-step loss over all songs, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mixes a seed with stream identifiers (SplitMix64 finalizer).
pub(crate) fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_pair(tracks: usize, rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
    if tracks < 2 {
        return None;
    }
    let a = rng.gen_range(0..tracks);
    let mut b = rng.gen_range(0..tracks - 1);
    if b >= a {
        b += 1;
    }
    Some((a, b))
}

/// Trains a freshly initialized model.
///
/// Songs are shuffled each epoch; each song contributes its loss divided by
/// its length, and one random track pair per song and epoch feeds the
/// consistency term. Gradients of a batch are computed in parallel and summed
/// in song order, so results do not depend on the thread count.
pub fn train(
    dataset: &[PianoRoll],
    params: &CrfParams,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<(EmissionModel, TrainReport)> {
    let model = EmissionModel::init(model_config, config.seed)?;
    train_from(model, dataset, params, config, |_, _| {})
}

/// Continues training `model`; `on_epoch(epoch, mean_loss)` runs after each epoch.
pub fn train_from(
    mut model: EmissionModel,
    dataset: &[PianoRoll],
    params: &CrfParams,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(EmissionModel, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let crf = Crf::new(params.clone())?.with_floor(EMISSION_FLOOR);
    let adam = config.adam();
    let mut state = AdamState::new(&model);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            1,
            epoch as u64,
        )));
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch) {
            let results: Vec<Result<SongLoss>> = batch
                .par_iter()
                .map(|&idx| {
                    let song = &dataset[idx];
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        config.seed,
                        2 + epoch as u64,
                        idx as u64,
                    ));
                    let pairs: Vec<_> = sample_pair(song.num_tracks(), &mut rng)
                        .into_iter()
                        .collect();
                    loss_and_gradients(&model, song, &crf, config.lambda_consistency, &pairs)
                })
                .collect();
            let mut grads = model.zeros_like();
            for (r, &idx) in results.into_iter().zip(batch) {
                let r = r?;
                let n = dataset[idx].num_steps() as f64;
                epoch_total += r.loss / n;
                accumulate(&mut grads, &r.grads, 1.0 / (n * batch.len() as f64));
            }
            adam_step(&mut model, &mut state, &grads, &adam)?;
        }
        let mean = epoch_total / dataset.len() as f64;
        log::info!("epoch {} mean loss {:.6}", epoch + 1, mean);
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok((model, TrainReport { epoch_losses }))
}
