//! Generates annotated synthetic songs and writes them as piano-roll JSON.
//!
//! cargo run --example synthetic_corpus -- [out_dir] [songs]

use metrum::ingest::{
    generate_synthetic, load_pianoroll_json, save_pianoroll_json, SyntheticConfig,
};

fn main() -> metrum::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic".into());
    let songs = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(4);
    let config = SyntheticConfig {
        num_songs: songs,
        irregularity_rate: 0.25,
        ..SyntheticConfig::default()
    };
    std::fs::create_dir_all(&out).map_err(|e| metrum::Error::io(&out, e))?;
    for (i, (roll, levels)) in generate_synthetic(&config)?.iter().enumerate() {
        let text = save_pianoroll_json(roll, Some(levels))?;
        let path = format!("{out}/song_{i:04}.json");
        std::fs::write(&path, &text).map_err(|e| metrum::Error::io(&path, e))?;
        let (back, _) = load_pianoroll_json(&text)?;
        let onsets: usize = back.tracks().iter().map(|t| t.onset_count()).sum();
        let measures = levels.boundaries(4).len();
        println!(
            "{path}: {} steps, {} tracks, {onsets} onsets, {measures} measures",
            roll.num_steps(),
            roll.num_tracks()
        );
    }
    Ok(())
}
