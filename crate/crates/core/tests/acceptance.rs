//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs without the default harness so each criterion prints exactly one
//! PASS/FAIL line with its measured value.

mod common;

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use metrum::calibrate::{calibrate_offset, shift_probabilities};
use metrum::crf::{
    brute_force_decode_raw, brute_force_loss_raw, Crf, EMISSION_FLOOR, MEASURE_LEVEL,
};
use metrum::eval::{evaluate_corpus, EvalOptions, EvalReport};
use metrum::ingest::{generate_synthetic, parse_smf, regular_levels, SyntheticConfig, TrackStyle};
use metrum::model::{
    loss_and_gradients, predict, train_from, EmissionModel, ModelConfig, Parameters, TrainConfig,
};
use metrum::types::{Cell, CrfParams, LevelDistribution, LevelSequence, PianoRoll, TrackRoll};
use metrum::Error;

type Outcome = Result<String, String>;

/// Name, check, and whether a failure fails the run.
type Criterion = (&'static str, fn() -> Outcome, bool);

fn random_params(rng: &mut ChaCha8Rng, layers: usize) -> CrfParams {
    let mut w = || {
        if rng.gen_bool(0.3) {
            f64::INFINITY
        } else {
            rng.gen_range(0.1..10.0)
        }
    };
    let del = (0..layers).map(|_| w()).collect();
    let ins = (0..layers).map(|_| w()).collect();
    CrfParams::new(del, ins).unwrap()
}

/// Random rows summing to one; some entries zero, some rows exactly tied.
fn random_probs(rng: &mut ChaCha8Rng, n: usize, layers: usize, coarse: bool) -> Array2<f64> {
    let width = layers + 1;
    let mut p = Array2::zeros((n, width));
    for mut row in p.rows_mut() {
        loop {
            for v in row.iter_mut() {
                *v = if coarse {
                    rng.gen_range(0..3) as f64
                } else if rng.gen_bool(0.15) {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                };
            }
            let total: f64 = row.sum();
            if total > 0.0 {
                row.mapv_inplace(|v| v / total);
                break;
            }
        }
    }
    p
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let instances = 600;
    for k in 0..instances {
        let layers = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=6);
        let params = random_params(&mut rng, layers);
        let p = random_probs(&mut rng, n, layers, false);
        let fast = Crf::new(params.clone())
            .unwrap()
            .loss_value(p.view())
            .unwrap();
        let brute = brute_force_loss_raw(&params, p.view()).unwrap();
        if fast.is_infinite() || brute.is_infinite() {
            if fast != brute {
                return Err(format!(
                    "instance {k}: forward {fast} vs enumeration {brute}"
                ));
            }
            continue;
        }
        let rel = (fast - brute).abs() / brute.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-9 {
            return Err(format!(
                "instance {k}: forward {fast} vs enumeration {brute}"
            ));
        }
    }
    Ok(format!(
        "{instances} instances, max relative error {worst:.2e}"
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let instances = 300;
    let mut ties = 0;
    for k in 0..instances {
        let layers = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=6);
        let params = random_params(&mut rng, layers);
        let coarse = k % 2 == 0;
        let p = random_probs(&mut rng, n, layers, coarse);
        ties += coarse as usize;
        let decoded = Crf::new(params.clone()).unwrap().decode(p.view());
        match (decoded, brute_force_decode_raw(&params, p.view())) {
            (Ok(path), Ok((levels, score))) => {
                if (path.score - score).abs() > 1e-9 * score.abs().max(1.0) {
                    return Err(format!("instance {k}: score {} vs {score}", path.score));
                }
                if path.levels != levels {
                    return Err(format!(
                        "instance {k}: {:?} vs {:?}",
                        path.levels.levels(),
                        levels.levels()
                    ));
                }
            }
            (Err(Error::Decode(_)), Err(Error::Decode(_))) => {}
            (a, b) => return Err(format!("instance {k}: {a:?} vs {b:?}")),
        }
    }
    Ok(format!(
        "{instances} instances ({ties} with coarse tie-prone emissions)"
    ))
}

fn close(analytic: f64, numeric: f64, rel: f64, abs: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()) + abs
}

/// Rounding error of a central difference of a loss of size `value` with step `h`.
fn fd_noise(value: f64, h: f64) -> f64 {
    64.0 * f64::EPSILON * value.abs().max(1.0) / h
}

fn crf_gradient_check(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut checked = 0;
    for k in 0..20 {
        let layers = 3;
        let params = if k % 2 == 0 {
            CrfParams::uniform(layers, rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)).unwrap()
        } else {
            random_params(rng, layers)
        };
        let n = 8;
        let crf = Crf::new(params).unwrap();
        let p = random_probs(rng, n, layers, false);
        let q = random_probs(rng, n, layers, false);
        let Ok(single) = crf.loss(p.view()) else {
            continue;
        };
        let Ok(joint) = crf.consistency(p.view(), q.view()) else {
            continue;
        };
        for ((i, l), &v) in p.indexed_iter() {
            if v < 1e-3 {
                continue;
            }
            let h = 1e-5 * v;
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[[i, l]] += h;
            minus[[i, l]] -= h;
            let fd = (crf.loss_value(plus.view()).unwrap() - crf.loss_value(minus.view()).unwrap())
                / (2.0 * h);
            let noise = fd_noise(single.loss, h);
            if !close(single.grad[[i, l]], fd, 1e-4, noise) {
                return Err(format!("dL1/dp[{i},{l}]: {} vs {fd}", single.grad[[i, l]]));
            }
            let fd = (crf.consistency_value(plus.view(), q.view()).unwrap()
                - crf.consistency_value(minus.view(), q.view()).unwrap())
                / (2.0 * h);
            if !close(joint.grad_first[[i, l]], fd, 1e-4, fd_noise(joint.loss, h)) {
                return Err(format!(
                    "dL2/dp1[{i},{l}]: {} vs {fd}",
                    joint.grad_first[[i, l]]
                ));
            }
            checked += 2;
        }
        for ((i, l), &v) in q.indexed_iter() {
            if v < 1e-3 {
                continue;
            }
            let h = 1e-5 * v;
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[[i, l]] += h;
            minus[[i, l]] -= h;
            let fd = (crf.consistency_value(p.view(), plus.view()).unwrap()
                - crf.consistency_value(p.view(), minus.view()).unwrap())
                / (2.0 * h);
            if !close(joint.grad_second[[i, l]], fd, 1e-4, fd_noise(joint.loss, h)) {
                return Err(format!(
                    "dL2/dp2[{i},{l}]: {} vs {fd}",
                    joint.grad_second[[i, l]]
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn random_song(rng: &mut ChaCha8Rng, n: usize, tracks: usize) -> PianoRoll {
    let rolls = (0..tracks)
        .map(|t| {
            let mut entries = Vec::new();
            for i in 0..n {
                if rng.gen_bool(0.4) {
                    let pitch = rng.gen_range(36..84);
                    entries.push((i, pitch, Cell::Onset));
                    if i + 1 < n && rng.gen_bool(0.5) {
                        entries.push((i + 1, pitch, Cell::Hold));
                    }
                }
            }
            TrackRoll::from_entries(format!("t{t}"), n, entries).unwrap()
        })
        .collect();
    PianoRoll::new(n, rolls).unwrap()
}

fn model_gradient_check(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let config = ModelConfig::new(3).with_channels(4).with_depth(2);
    let model = EmissionModel::init(config, 11).unwrap();
    let song = random_song(rng, 16, 2);
    let crf = Crf::new(CrfParams::uniform(3, 2.0, 3.0).unwrap())
        .unwrap()
        .with_floor(EMISSION_FLOOR);
    let pairs = [(0, 1)];
    let analytic = loss_and_gradients(&model, &song, &crf, 1.0, &pairs).unwrap();
    let grads: Vec<Vec<f64>> = analytic
        .grads
        .tensors()
        .iter()
        .map(|t| t.to_vec())
        .collect();
    let loss_at = |m: &EmissionModel| {
        loss_and_gradients(m, &song, &crf, 1.0, &pairs)
            .unwrap()
            .loss
    };
    let names = model.tensor_layout();
    let mut checked = 0;
    let mut probe = model.clone();
    for (t, grad) in grads.iter().enumerate() {
        for (j, &g) in grad.iter().enumerate() {
            let orig = probe.tensors()[t][j];
            let h = 1e-4;
            probe.tensors_mut()[t][j] = orig + h;
            let up = loss_at(&probe);
            probe.tensors_mut()[t][j] = orig - h;
            let down = loss_at(&probe);
            probe.tensors_mut()[t][j] = orig;
            let fd = (up - down) / (2.0 * h);
            if !close(g, fd, 1e-3, 1e-7) {
                return Err(format!(
                    "{}[{j}]: analytic {} vs numeric {fd}",
                    names[t].0, grad[j]
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let crf = crf_gradient_check(&mut rng)?;
    let model = model_gradient_check(&mut rng)?;
    Ok(format!("{crf} CRF partials, {model} model parameters"))
}

fn one_hot_matrix(levels: &[u8], layers: usize) -> Array2<f64> {
    let mut p = Array2::zeros((levels.len(), layers + 1));
    for (i, &l) in levels.iter().enumerate() {
        p[[i, l as usize]] = 1.0;
    }
    p
}

fn criterion_4() -> Outcome {
    let mut cases = 0;
    for layers in 1..=3usize {
        let crf = Crf::new(CrfParams::hard(layers).unwrap()).unwrap();
        let period = 1usize << layers;
        let max_k = if layers == 3 { 1 } else { 2 };
        for k in 1..=max_k {
            let n = period * k;
            let expected: Vec<Vec<u8>> = (0..period)
                .map(|ph| regular_levels(n, layers, ph))
                .collect();
            let mut zeros = Vec::new();
            let mut levels = vec![0u8; n];
            loop {
                let loss = crf
                    .loss_value(one_hot_matrix(&levels, layers).view())
                    .unwrap();
                if loss == 0.0 {
                    zeros.push(levels.clone());
                } else if loss < 0.0 {
                    return Err(format!("negative loss {loss} for {levels:?}"));
                }
                cases += 1;
                let mut pos = 0;
                while pos < n && levels[pos] as usize == layers {
                    levels[pos] = 0;
                    pos += 1;
                }
                if pos == n {
                    break;
                }
                levels[pos] += 1;
            }
            let mut want = expected.clone();
            want.sort();
            zeros.sort();
            if zeros != want {
                return Err(format!(
                    "L={layers} N={n}: zero-loss set {zeros:?}, expected {want:?}"
                ));
            }
        }
    }

    let mut insertions = 0;
    for layers in 1..=3usize {
        let w_del: Vec<f64> = (1..=layers).map(|l| 1.5 + l as f64).collect();
        let w_ins: Vec<f64> = (1..=layers).map(|l| 4.25 + 2.0 * l as f64).collect();
        let params = CrfParams::new(w_del, w_ins.clone()).unwrap();
        let crf = Crf::new(params.clone()).unwrap();
        for level in 1..=layers {
            let base = regular_levels(2 << layers, layers, 0);
            let unit = 1usize << (level - 1);
            // the second level-(l-1) unit of the first level-l unit, repeated
            let start = unit;
            let mut levels = base[..start + unit].to_vec();
            levels.extend_from_slice(&base[start..start + unit]);
            levels.extend_from_slice(&base[start + unit..]);
            let p = one_hot_matrix(&levels, layers);
            let loss = crf.loss_value(p.view()).unwrap();
            if (loss - w_ins[level - 1]).abs() > 1e-9 {
                return Err(format!(
                    "L={layers} level-{level} insertion: loss {loss}, w_ins {}",
                    w_ins[level - 1]
                ));
            }
            if levels.len() <= 8 || layers < 3 {
                let brute = brute_force_loss_raw(&params, p.view()).unwrap();
                if (brute - loss).abs() > 1e-9 {
                    return Err(format!("enumeration disagrees: {brute} vs {loss}"));
                }
            }
            insertions += 1;
        }
    }
    Ok(format!(
        "{cases} one-hot sequences enumerated, {insertions} insertion cases"
    ))
}

fn synthetic(style: TrackStyle, songs: usize) -> Vec<(PianoRoll, LevelSequence)> {
    generate_synthetic(&SyntheticConfig {
        num_layers: 6,
        num_songs: songs,
        steps_per_song: 256,
        tracks_per_song: 3,
        irregularity_rate: 0.0,
        style,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

/// Trains on the first 200 songs, calibrates on song 200, evaluates the rest.
fn train_calibrate_evaluate(
    corpus: &[(PianoRoll, LevelSequence)],
    config: &TrainConfig,
) -> metrum::Result<(EvalReport, i64)> {
    let layers = 6;
    let params = CrfParams::default_for(layers)?;
    let (train, rest) = corpus.split_at(200);
    let (calib, test) = rest.split_first().expect("held-out songs");
    let rolls: Vec<PianoRoll> = train.iter().map(|(r, _)| r.clone()).collect();
    let model = EmissionModel::init(ModelConfig::new(layers), config.seed)?;
    let (model, _) = train_from(model, &rolls, &params, config, |_, _| {})?;
    let calibration = calibrate_offset(
        &params,
        &predict(&model, &calib.0)?,
        &calib.1,
        MEASURE_LEVEL,
    )?;
    let test: Vec<_> = test
        .iter()
        .map(|(r, l)| (r.clone(), Some(l.clone())))
        .collect();
    let report = evaluate_corpus(
        &model,
        Some(&calibration),
        &test,
        &params,
        &EvalOptions::default(),
    )?;
    Ok((report, calibration.offset))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let corpus = synthetic(TrackStyle::Ensemble, 221);
    let (report, offset) =
        train_calibrate_evaluate(&corpus, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let measure = report.per_level[&MEASURE_LEVEL].mean;
    let downbeat = report.downbeat.map(|d| d.mean).unwrap_or(0.0);
    let summary = format!(
        "measure F1 {measure:.4}, downbeat F1 {downbeat:.4}, offset {offset}, {:.0?}",
        start.elapsed()
    );
    if measure >= 0.90 && downbeat >= 0.90 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn criterion_6() -> Outcome {
    let corpus = synthetic(TrackStyle::Melody, 221);
    let mut means = [0.0; 2];
    for (slot, lambda) in [(0, 1.0), (1, 0.0)] {
        let mut total = 0.0;
        for seed in 0..3 {
            let config = TrainConfig {
                lambda_consistency: lambda,
                seed,
                ..TrainConfig::default()
            };
            let (report, _) =
                train_calibrate_evaluate(&corpus, &config).map_err(|e| e.to_string())?;
            total += report.per_level[&5].mean;
        }
        means[slot] = total / 3.0;
    }
    let summary = format!(
        "level-5 F1 lambda=1 {:.4} vs lambda=0 {:.4}",
        means[0], means[1]
    );
    if means[0] >= means[1] {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn criterion_7() -> Outcome {
    let layers = 6;
    let params = CrfParams::default_for(layers).unwrap();
    for phase in [0, 5, 37] {
        let truth = LevelSequence::new(regular_levels(256, layers, phase), layers).unwrap();
        let perfect = one_hot_matrix(truth.levels(), layers);
        for s in -5i64..=5 {
            let shifted = shift_probabilities(perfect.view(), s);
            let p: Vec<LevelDistribution> = shifted
                .rows()
                .into_iter()
                .map(|r| LevelDistribution::new(r.to_vec()).unwrap())
                .collect();
            let c =
                calibrate_offset(&params, &p, &truth, MEASURE_LEVEL).map_err(|e| e.to_string())?;
            if c.offset != -s || c.score != 1.0 {
                return Err(format!(
                    "phase {phase} shift {s}: got offset {} score {}",
                    c.offset, c.score
                ));
            }
        }
    }
    Ok("shifts -5..=5 recovered exactly at 3 phases".into())
}

fn criterion_8() -> Outcome {
    let fixtures = [
        (
            "format 0",
            common::FORMAT0_TWO_NOTES,
            common::expected_format0(),
        ),
        (
            "conductor",
            common::FORMAT1_CONDUCTOR,
            common::expected_conductor(),
        ),
        (
            "unterminated",
            common::FORMAT1_UNTERMINATED,
            common::expected_unterminated(),
        ),
    ];
    for (name, bytes, expected) in fixtures {
        let song = parse_smf(bytes).map_err(|e| format!("{name}: {e}"))?;
        if song != expected {
            return Err(format!("{name}: parsed {song:?}"));
        }
    }
    let truncated = common::truncated_chunk();
    match parse_smf(&truncated) {
        Err(Error::MidiParse { offset: 14, .. }) => {}
        other => return Err(format!("truncated chunk: {other:?}")),
    }
    for (name, bytes) in [("format 2", common::format2()), ("SMPTE", common::smpte())] {
        if !matches!(parse_smf(&bytes), Err(Error::UnsupportedFormat(_))) {
            return Err(format!("{name} accepted"));
        }
    }
    match parse_smf(&common::orphan_data_byte()) {
        Err(Error::MidiParse { offset: 23, .. }) => {}
        other => return Err(format!("orphan data byte: {other:?}")),
    }
    if !matches!(
        parse_smf(b"RIFF0000"),
        Err(Error::MidiParse { offset: 0, .. })
    ) {
        return Err("missing header accepted".into());
    }
    Ok("3 fixtures exact, 4 malformed inputs rejected with the right category".into())
}

fn criterion_9() -> Outcome {
    let run = || -> metrum::Result<(Vec<u8>, Vec<u8>)> {
        let dir = tempfile::tempdir().map_err(|e| Error::Io {
            path: "tempdir".into(),
            source: e,
        })?;
        let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
        let common = ["--seed", "7", "--levels", "6"];
        let call = |args: &[&str]| {
            let mut all = vec!["metrum"];
            all.extend_from_slice(args);
            all.extend_from_slice(&common);
            metrum::cli::run(all)
        };
        call(&[
            "synth",
            "--out",
            &p("corpus"),
            "--songs",
            "12",
            "--steps",
            "128",
        ])?;
        call(&[
            "train",
            "--corpus",
            &p("corpus"),
            "--out",
            &p("model.json"),
            "--epochs",
            "2",
        ])?;
        call(&[
            "eval",
            "--checkpoint",
            &p("model.json"),
            "--corpus",
            &p("corpus"),
            "--out",
            &p("report.json"),
        ])?;
        let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
        Ok((read("report.json"), read("model.json")))
    };
    let (report_a, model_a) = run().map_err(|e| e.to_string())?;
    let (report_b, model_b) = run().map_err(|e| e.to_string())?;
    if report_a != report_b || model_a != model_b {
        return Err("outputs differ between runs".into());
    }
    Ok(format!(
        "report ({} bytes) and checkpoint identical across runs",
        report_a.len()
    ))
}

fn main() {
    // The trend check has no absolute target: its FAIL line is reported but
    // does not change the exit status.
    let criteria: [Criterion; 9] = [
        ("1 CRF loss matches enumeration", criterion_1, true),
        ("2 Viterbi matches enumeration", criterion_2, true),
        ("3 gradients match finite differences", criterion_3, true),
        (
            "4 regularity fixed points and insertion penalty",
            criterion_4,
            true,
        ),
        (
            "5 self-supervised recovery after calibration",
            criterion_5,
            true,
        ),
        (
            "6 consistency loss does not hurt level 5",
            criterion_6,
            false,
        ),
        (
            "7 calibration recovers artificial shifts",
            criterion_7,
            true,
        ),
        ("8 SMF fixtures", criterion_8, true),
        ("9 end-to-end determinism", criterion_9, true),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check, required) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                let note = if required { "" } else { " (advisory)" };
                failed += required as usize;
                println!("FAIL criterion {name}{note}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
