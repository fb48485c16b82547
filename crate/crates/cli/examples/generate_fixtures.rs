//! Regenerates the bundled demo fixtures under `crates/cli/fixtures/`.
//! The corpus is synthetic but shaped like a real dump: class-marker
//! keywords over noise text, CVE citations, prices, and matching NVD/EPSS
//! side files.
//!
//! Usage: cargo run -p cvemine-cli --example generate_fixtures

use std::fs;
use std::path::PathBuf;

use cvemine::synth::{generate, SynthParams};

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir)?;

    let params = SynthParams { n_threads: 200, seed: 20230228, ..SynthParams::default() };
    let corpus = generate(&params);

    fs::write(dir.join("corpus.jsonl"), corpus.corpus_jsonl())?;
    fs::write(dir.join("labels.csv"), corpus.labels_csv())?;
    fs::write(dir.join("nvd.jsonl"), corpus.nvd_jsonl())?;
    fs::write(dir.join("epss.csv"), corpus.epss_csv())?;

    // Externally reported comparison series; stored as data, never
    // recomputed. The delay median is 95.5 (decimal point).
    fs::write(
        dir.join("overlay_prices.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "label": "external market",
            "min": 100.0,
            "median": 2000.0,
            "max": 8000.0
        }))? + "\n",
    )?;
    fs::write(
        dir.join("overlay_delays.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "label": "external market",
            "min": 1.0,
            "median": 95.5,
            "max": 2610.0
        }))? + "\n",
    )?;

    fs::write(
        dir.join("config.toml"),
        r#"# Demo pipeline configuration. Paths resolve relative to this file.
corpus = "corpus.jsonl"
labels = "labels.csv"
nvd = "nvd.jsonl"
epss = "epss.csv"
price_overlay = "overlay_prices.json"
delay_overlay = "overlay_delays.json"
out_dir = "demo_out"

featurization = "tfidf"
model = "forest"
seed = 1162
test_fraction = 0.25
cv_folds = 5
run_grid_search = true
alert_threshold = 0.5

[grid]
max_depth = [16, 0]   # 0 means unlimited
max_features = [64]
min_samples_split = [2]
max_leaf_nodes = [0]
n_trees = [60]
"#,
    )?;

    println!("fixtures written to {}", dir.display());
    Ok(())
}
