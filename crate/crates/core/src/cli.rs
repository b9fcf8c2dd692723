//! Command-line front end: `synth`, `train`, `calibrate`, `decode`, `eval`.
//!
//! Settings resolve as command-line flags, then the TOML file given with
//! `--config`, then defaults. Outputs are written to a temporary file and
//! renamed into place.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::calibrate_offset;
use crate::crf::{Crf, EMISSION_FLOOR, MEASURE_LEVEL};
use crate::error::{Error, Result};
use crate::eval::{evaluate_corpus, EvalOptions, DEFAULT_DOWNBEAT_THRESHOLD};
use crate::ingest::{
    generate_synthetic, load_song, save_pianoroll_json, SyntheticConfig, TrackStyle,
};
use crate::model::checkpoint::StoredCalibration;
use crate::model::{
    predict_matrix, train_from, Checkpoint, EmissionModel, ModelConfig, TrainConfig,
};
use crate::types::{CrfParams, LevelSequence, PianoRoll};

/// Hierarchy depth used when neither flag nor config sets one.
pub const DEFAULT_LEVELS: usize = 8;

#[derive(Debug, Parser)]
#[command(
    name = "metrum",
    version,
    about = "Self-supervised hierarchical metrical analysis"
)]
pub struct Cli {
    /// Global random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `seed`, `levels` and `[synth]`, `[train]`, `[model]`,
    /// `[crf]`, `[eval]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (directory for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of hierarchy layers L.
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an annotated synthetic corpus.
    Synth(SynthArgs),
    /// Train an emission model on a corpus directory.
    Train(TrainArgs),
    /// Fit the global offset on one annotated song.
    Calibrate(CalibrateArgs),
    /// Analyze one MIDI or piano-roll JSON file.
    Decode(DecodeArgs),
    /// Score a checkpoint on an annotated corpus.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    songs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    irregularity: Option<f64>,
    #[arg(long, value_parser = parse_style)]
    style: Option<TrackStyle>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of piano-roll JSON files.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the inter-track consistency loss.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Annotated piano-roll JSON file.
    #[arg(long)]
    song: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// `.mid`/`.midi` file or piano-roll JSON.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Peak-picking threshold for downbeats.
    #[arg(long)]
    threshold: Option<f64>,
}

fn parse_style(s: &str) -> std::result::Result<TrackStyle, String> {
    match s {
        "ensemble" => Ok(TrackStyle::Ensemble),
        "melody" => Ok(TrackStyle::Melody),
        _ => Err(format!("unknown style `{s}` (ensemble, melody)")),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ModelSection {
    channels: Option<usize>,
    depth: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct EvalSection {
    downbeat_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            downbeat_threshold: DEFAULT_DOWNBEAT_THRESHOLD,
        }
    }
}

/// Contents of a `--config` file. `seed` and `levels` override the
/// per-section fields of the same meaning.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    levels: Option<usize>,
    synth: SyntheticConfig,
    train: TrainConfig,
    model: ModelSection,
    crf: Option<CrfParams>,
    eval: EvalSection,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub levels: usize,
    pub synth: SyntheticConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub crf: CrfParams,
    pub downbeat_threshold: f64,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| Error::Schema {
                field: path.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let levels = cli.levels.or(file.levels).unwrap_or(DEFAULT_LEVELS);

    let mut synth = file.synth;
    synth.seed = seed;
    synth.num_layers = levels;
    let mut train = file.train;
    train.seed = seed;
    let mut model = ModelConfig::new(levels);
    if let Some(c) = file.model.channels {
        model = model.with_channels(c);
    }
    if let Some(d) = file.model.depth {
        model = model.with_depth(d);
    }
    let mut downbeat_threshold = file.eval.downbeat_threshold;

    match &cli.command {
        Command::Synth(a) => {
            set(&mut synth.num_songs, a.songs);
            set(&mut synth.steps_per_song, a.steps);
            set(&mut synth.tracks_per_song, a.tracks);
            set(&mut synth.irregularity_rate, a.irregularity);
            set(&mut synth.style, a.style);
        }
        Command::Train(a) => {
            set(&mut train.epochs, a.epochs);
            set(&mut train.learning_rate, a.lr);
            set(&mut train.lambda_consistency, a.lambda);
            set(&mut train.batch, a.batch);
            if let Some(c) = a.channels {
                model = model.with_channels(c);
            }
            if let Some(d) = a.depth {
                model = model.with_depth(d);
            }
        }
        Command::Eval(a) => set(&mut downbeat_threshold, a.threshold),
        Command::Calibrate(_) | Command::Decode(_) => {}
    }

    let crf = match file.crf {
        Some(p) => {
            let layers = p.num_layers();
            CrfParams::new(
                (1..=layers).map(|l| p.w_del(l)).collect(),
                (1..=layers).map(|l| p.w_ins(l)).collect(),
            )?
        }
        None => CrfParams::default_for(levels)?,
    };
    if crf.num_layers() != levels {
        return Err(Error::Usage(format!(
            "[crf] has {} levels but --levels is {levels}",
            crf.num_layers()
        )));
    }
    synth.validate()?;
    train.validate()?;
    model.validate()?;
    Ok(RunConfig {
        seed,
        levels,
        synth,
        train,
        model,
        crf,
        downbeat_threshold,
    })
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Usage("--out is required for this command".into()))
}

fn song_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Piano-roll JSON files of a corpus directory in file-name order.
pub fn load_corpus(dir: &Path) -> Result<Vec<(PathBuf, PianoRoll, Option<LevelSequence>)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json && path.file_name().is_some_and(|n| n != MANIFEST) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let (roll, levels) = load_song(&p)?;
            Ok((p, roll, levels))
        })
        .collect()
}

const MANIFEST: &str = "manifest.json";

fn cmd_synth(cli: &Cli, config: &RunConfig) -> Result<()> {
    let dir = required_out(cli)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let songs = generate_synthetic(&config.synth)?;
    let mut names = Vec::with_capacity(songs.len());
    for (i, (roll, levels)) in songs.iter().enumerate() {
        let name = format!("song_{i:04}.json");
        write_atomic(
            &dir.join(&name),
            save_pianoroll_json(roll, Some(levels))?.as_bytes(),
        )?;
        names.push(name);
    }
    let resolved = serde_json::to_string(&config.synth).expect("config serializes");
    let manifest = serde_json::json!({
        "seed": config.seed,
        "config_sha256": hex::encode(Sha256::digest(resolved.as_bytes())),
        "config": config.synth,
        "songs": names,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST), text.as_bytes())?;
    log::info!("wrote {} songs to {}", songs.len(), dir.display());
    Ok(())
}

fn cmd_train(cli: &Cli, config: &RunConfig, args: &TrainArgs) -> Result<()> {
    let out = required_out(cli)?;
    let corpus = load_corpus(&args.corpus)?;
    if corpus.is_empty() {
        return Err(Error::Usage(format!(
            "corpus {} contains no piano-roll files",
            args.corpus.display()
        )));
    }
    let rolls: Vec<PianoRoll> = corpus.into_iter().map(|(_, r, _)| r).collect();
    let model = EmissionModel::init(config.model, config.seed)?;
    let (model, report) = train_from(model, &rolls, &config.crf, &config.train, |_, _| {})?;
    let checkpoint = Checkpoint {
        model,
        crf_params: config.crf.clone(),
        train_config: config.train.clone(),
        loss_log: report.epoch_losses,
        calibration: None,
    };
    write_atomic(out, checkpoint.to_json().as_bytes())
}

fn cmd_calibrate(cli: &Cli, args: &CalibrateArgs) -> Result<()> {
    let mut checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (roll, levels) = load_song(&args.song)?;
    let truth = levels.ok_or_else(|| {
        Error::Usage(format!(
            "{} carries no level annotation",
            args.song.display()
        ))
    })?;
    let probs = predict_matrix(&checkpoint.model, &roll)?;
    let dists = crate::model::to_distributions(probs.view());
    let max_level = MEASURE_LEVEL.min(checkpoint.crf_params.num_layers());
    let c = calibrate_offset(&checkpoint.crf_params, &dists, &truth, max_level)?;
    log::info!("calibrated offset {} (F1 {:.4})", c.offset, c.score);
    checkpoint.calibration = Some(StoredCalibration {
        offset: c.offset,
        score: c.score,
        song: song_id(&args.song),
    });
    let out = cli.out.as_deref().unwrap_or(&args.checkpoint);
    write_atomic(out, checkpoint.to_json().as_bytes())
}

/// Stacked dots per step: a level-`l` boundary gets `l + 1` dots.
pub fn dot_diagram(levels: &LevelSequence, width: usize) -> String {
    let mut out = String::new();
    let raw = levels.levels();
    for (block, chunk) in raw.chunks(width.max(1)).enumerate() {
        if block > 0 {
            out.push('\n');
        }
        for row in (0..=levels.num_layers()).rev() {
            let line: String = chunk
                .iter()
                .map(|&l| if l as usize >= row { '.' } else { ' ' })
                .collect();
            let _ = writeln!(out, "{}", line.trim_end());
        }
    }
    out
}

#[derive(Serialize)]
struct Analysis {
    num_steps: usize,
    num_layers: usize,
    offset: i64,
    probabilities: Vec<Vec<f64>>,
    levels: Vec<u8>,
    dot_diagram: String,
}

fn cmd_decode(cli: &Cli, args: &DecodeArgs) -> Result<()> {
    let out = required_out(cli)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let (roll, _) = load_song(&args.input)?;
    let probs = predict_matrix(&checkpoint.model, &roll)?;
    let crf = Crf::new(checkpoint.crf_params.clone())?.with_floor(EMISSION_FLOOR);
    let offset = checkpoint.calibration.as_ref().map_or(0, |c| c.offset);
    let levels = crate::calibrate::apply_offset(&crf.decode(probs.view())?.levels, offset)?;
    let analysis = Analysis {
        num_steps: roll.num_steps(),
        num_layers: levels.num_layers(),
        offset,
        probabilities: probs.outer_iter().map(|r| r.to_vec()).collect(),
        dot_diagram: dot_diagram(&levels, 64),
        levels: levels.into_levels(),
    };
    let text = serde_json::to_string_pretty(&analysis).expect("analysis serializes");
    write_atomic(out, text.as_bytes())
}

fn cmd_eval(cli: &Cli, config: &RunConfig, args: &EvalArgs) -> Result<()> {
    let out = required_out(cli)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let corpus: Vec<_> = load_corpus(&args.corpus)?
        .into_iter()
        .map(|(_, r, l)| (r, l))
        .collect();
    let calibration = checkpoint.calibration.as_ref().map(|c| c.calibration());
    let options = EvalOptions {
        downbeat_threshold: config.downbeat_threshold,
    };
    let report = evaluate_corpus(
        &checkpoint.model,
        calibration.as_ref(),
        &corpus,
        &checkpoint.crf_params,
        &options,
    )?;
    write_atomic(out, report.to_json().as_bytes())?;
    write_atomic(&out.with_extension("txt"), report.to_table().as_bytes())?;
    print!("{}", report.to_table());
    Ok(())
}

/// Runs one invocation and returns its result; `args` includes the program name.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            Error::Usage(String::new())
        }
        _ => Error::Usage(
            e.to_string()
                .trim_start_matches("error: ")
                .trim_end()
                .to_string(),
        ),
    })?;
    if let Some(k) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .is_err()
        {
            log::debug!("thread pool already initialized");
        }
    }
    let config = resolve(&cli)?;
    log::info!(
        "resolved config: {}",
        serde_json::to_string(&config).expect("config serializes")
    );
    match &cli.command {
        Command::Synth(_) => cmd_synth(&cli, &config),
        Command::Train(a) => cmd_train(&cli, &config, a),
        Command::Calibrate(a) => cmd_calibrate(&cli, a),
        Command::Decode(a) => cmd_decode(&cli, a),
        Command::Eval(a) => cmd_eval(&cli, &config, a),
    }
}

/// Process entry point: runs and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(Error::Usage(msg)) if msg.is_empty() => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
