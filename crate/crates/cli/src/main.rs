use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cvemine_cli::config::{Featurization, PipelineConfig};
use cvemine_cli::pipeline::Pipeline;
use cvemine_cli::{classify_new, read_alerts};

#[derive(Parser)]
#[command(
    name = "cvemine",
    about = "Mine forum dumps for CVE-citing threads, classify exploit maturity, and report risk analytics",
    version
)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Override the corpus dump path.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Override the labels CSV path.
    #[arg(long, global = true)]
    labels: Option<PathBuf>,

    /// Override the NVD mirror path.
    #[arg(long, global = true)]
    nvd: Option<PathBuf>,

    /// Override the EPSS feed path.
    #[arg(long, global = true)]
    epss: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the featurization (bow | tfidf | doc2vec).
    #[arg(long, global = true)]
    featurization: Option<String>,

    /// Override the model kind (tree | forest).
    #[arg(long, global = true)]
    model: Option<String>,

    /// Override the alert threshold.
    #[arg(long, global = true)]
    alert_threshold: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the corpus dump and assemble threads.
    Ingest,
    /// Extract CVE and price mentions; select citing threads.
    Extract,
    /// Join mentions with the NVD mirror and EPSS feed.
    Enrich,
    /// Build the featurizer and featurize citing threads.
    Featurize,
    /// Attach gold labels to citing threads.
    Label {
        /// Also write weak-label suggestions (advisory, never merged).
        #[arg(long)]
        suggest: bool,
    },
    /// Produce the stratified train/test split and CV folds.
    Split,
    /// Cross-validated hyperparameter search.
    GridSearch,
    /// Train the classifier on the training partition.
    Train,
    /// Evaluate on the held-out partition (three-class and one-vs-rest).
    Evaluate,
    /// Produce the analytics reports (CDFs, score boxplots, keywords).
    Report,
    /// Run the whole pipeline.
    Run,
    /// Classify new threads and raise exploitation alerts.
    Classify {
        /// Posts file (same schema as the corpus dump).
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the alert log.
    Alerts,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &cli.out_dir {
        cfg.out_dir = p.clone();
    }
    if let Some(p) = &cli.corpus {
        cfg.corpus = p.clone();
    }
    if let Some(p) = &cli.labels {
        cfg.labels = p.clone();
    }
    if let Some(p) = &cli.nvd {
        cfg.nvd = p.clone();
    }
    if let Some(p) = &cli.epss {
        cfg.epss = p.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(f) = &cli.featurization {
        cfg.featurization = match f.as_str() {
            "bow" => Featurization::Bow,
            "tfidf" => Featurization::Tfidf,
            "doc2vec" => Featurization::Doc2vec,
            other => anyhow::bail!("unknown featurization {other:?}"),
        };
    }
    if let Some(m) = &cli.model {
        cfg.model = match m.as_str() {
            "tree" => cvemine::models::ModelKind::Tree,
            "forest" => cvemine::models::ModelKind::Forest,
            other => anyhow::bail!("unknown model kind {other:?}"),
        };
    }
    if let Some(t) = cli.alert_threshold {
        cfg.alert_threshold = t;
    }
    Ok(cfg)
}

fn print_statuses(statuses: &[cvemine_cli::StageStatus]) {
    for status in statuses {
        println!("{}", status.describe());
    }
}

fn suggest_weak_labels(pipeline: &Pipeline) -> Result<()> {
    use cvemine_cli::artifacts::{read_lines, read_threads};
    let cfg = &pipeline.cfg;
    let rules = match &cfg.rule_table {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read rule table {}", path.display()))?;
            cvemine::dataset::RuleTable::from_json(&raw)?
        }
        None => cvemine::dataset::RuleTable::default(),
    };
    let threads = read_threads(&cfg.out_dir.join("threads.jsonl"))?;
    let citing: std::collections::BTreeSet<String> =
        read_lines(&cfg.out_dir.join("citing_threads.txt"))?.into_iter().collect();
    let mut w = csv::Writer::from_path(cfg.out_dir.join("weak_labels.csv"))?;
    w.write_record(["thread_id", "suggested_label", "fired_rules"])?;
    for thread in threads.iter().filter(|t| citing.contains(&t.thread_id)) {
        let (label, fired) = cvemine::dataset::weak_label(thread, &rules);
        let fired_str =
            fired.iter().map(|f| f.phrase.clone()).collect::<Vec<_>>().join("; ");
        w.write_record([
            thread.thread_id.as_str(),
            label.map(|l| l.name()).unwrap_or(""),
            &fired_str,
        ])?;
    }
    w.flush()?;
    println!("weak-label suggestions written to weak_labels.csv");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Ingest => print_statuses(&Pipeline::new(cfg)?.run_until("ingest", false)?),
        Command::Extract => print_statuses(&Pipeline::new(cfg)?.run_until("extract", false)?),
        Command::Enrich => print_statuses(&Pipeline::new(cfg)?.run_until("enrich", false)?),
        Command::Featurize => print_statuses(&Pipeline::new(cfg)?.run_until("featurize", false)?),
        Command::Label { suggest } => {
            let pipeline = Pipeline::new(cfg)?;
            print_statuses(&pipeline.run_until("label", false)?);
            if *suggest {
                suggest_weak_labels(&pipeline)?;
            }
        }
        Command::Split => print_statuses(&Pipeline::new(cfg)?.run_until("split", false)?),
        Command::GridSearch => {
            print_statuses(&Pipeline::new(cfg)?.run_until("grid-search", true)?)
        }
        Command::Train => print_statuses(&Pipeline::new(cfg)?.run_until("train", false)?),
        Command::Evaluate => print_statuses(&Pipeline::new(cfg)?.run_until("evaluate", false)?),
        Command::Report => print_statuses(&Pipeline::new(cfg)?.run_until("report", false)?),
        Command::Run => print_statuses(&Pipeline::new(cfg)?.run_all()?),
        Command::Classify { input } => {
            let outcome = classify_new(&cfg, input)?;
            let classified =
                outcome.predictions.iter().filter(|p| p.status == "classified").count();
            let skipped = outcome.predictions.len() - classified;
            println!(
                "classified {classified} threads ({skipped} not in scope); {} alerts ({} new)",
                outcome.alerts.len(),
                outcome.appended
            );
        }
        Command::Alerts => {
            for alert in read_alerts(&cfg.out_dir.join("alerts.log"))? {
                println!("{}", serde_json::to_string(&alert)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
