//! On-disk artifact formats shared between pipeline stages. Everything is
//! written in a deterministic order so identical runs produce identical
//! bytes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use cvemine::corpus::{Post, Thread};
use cvemine::enrich::ScoredMention;
use cvemine::textfeat::{
    bow_vector, infer_doc_embedding, tfidf_vector, EmbeddingModel, SparseVector, Vocabulary,
};
use serde::{Deserialize, Serialize};

use crate::config::Featurization;

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    read_jsonl(path)
}

pub fn read_threads(path: &Path) -> Result<Vec<Thread>> {
    read_jsonl(path)
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect())
}

fn opt_f64(field: &str) -> Option<f64> {
    if field.is_empty() {
        None
    } else {
        field.parse().ok()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scored_csv(path: &Path, scored: &[ScoredMention]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cve_id", "post_id", "thread_id", "cvss_v2", "cvss_v31", "epss"])?;
    for s in scored {
        w.write_record([
            s.cve_id.as_str(),
            s.post_id.as_str(),
            s.thread_id.as_str(),
            &fmt_opt(s.cvss_v2),
            &fmt_opt(s.cvss_v31),
            &fmt_opt(s.epss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scored_csv(path: &Path) -> Result<Vec<ScoredMention>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(ScoredMention {
            cve_id: rec[0].to_string(),
            post_id: rec[1].to_string(),
            thread_id: rec[2].to_string(),
            cvss_v2: opt_f64(&rec[3]),
            cvss_v31: opt_f64(&rec[4]),
            epss: opt_f64(&rec[5]),
        });
    }
    Ok(out)
}

pub fn read_delays_csv(path: &Path) -> Result<Vec<cvemine::enrich::DelayRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(cvemine::enrich::DelayRecord {
            cve_id: rec[0].to_string(),
            post_id: rec[1].to_string(),
            post_age_days: rec[2].parse()?,
        });
    }
    Ok(out)
}

pub fn read_prices_csv(path: &Path) -> Result<Vec<cvemine::extract::PriceMention>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(cvemine::extract::PriceMention {
            amount: rec[0].parse()?,
            post_id: rec[1].to_string(),
            context: rec[2].to_string(),
        });
    }
    Ok(out)
}

/// The fitted featurization artifact: a vocabulary with a weighting, or a
/// trained embedding model.
pub enum Featurizer {
    Bow(Vocabulary),
    Tfidf(Vocabulary),
    Embedding(EmbeddingModel),
}

#[derive(Serialize, Deserialize)]
struct FeaturizerFile {
    encoding: String,
    payload: serde_json::Value,
}

impl Featurizer {
    pub fn encoding(&self) -> Featurization {
        match self {
            Featurizer::Bow(_) => Featurization::Bow,
            Featurizer::Tfidf(_) => Featurization::Tfidf,
            Featurizer::Embedding(_) => Featurization::Doc2vec,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Featurizer::Bow(v) | Featurizer::Tfidf(v) => v.len(),
            Featurizer::Embedding(m) => m.params.dim,
        }
    }

    /// Content hash binding models to this featurizer.
    pub fn fingerprint(&self) -> String {
        match self {
            Featurizer::Bow(v) => format!("bow-{}", v.fingerprint()),
            Featurizer::Tfidf(v) => format!("tfidf-{}", v.fingerprint()),
            Featurizer::Embedding(m) => format!("doc2vec-{}", m.fingerprint()),
        }
    }

    /// Featurize one document for prediction.
    pub fn vectorize(&self, document: &str) -> SparseVector {
        match self {
            Featurizer::Bow(v) => bow_vector(document, v),
            Featurizer::Tfidf(v) => tfidf_vector(document, v),
            Featurizer::Embedding(m) => {
                SparseVector::from_dense(&infer_doc_embedding(m, document))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (encoding, payload) = match self {
            Featurizer::Bow(v) => ("bow", v.to_json()),
            Featurizer::Tfidf(v) => ("tfidf", v.to_json()),
            Featurizer::Embedding(m) => ("doc2vec", m.to_json()),
        };
        let file = FeaturizerFile {
            encoding: encoding.to_string(),
            payload: serde_json::from_str(&payload)?,
        };
        std::fs::write(path, serde_json::to_string(&file)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Featurizer> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let file: FeaturizerFile = serde_json::from_str(&raw)?;
        let payload = file.payload.to_string();
        Ok(match file.encoding.as_str() {
            "bow" => Featurizer::Bow(Vocabulary::from_json(&payload)?),
            "tfidf" => Featurizer::Tfidf(Vocabulary::from_json(&payload)?),
            "doc2vec" => Featurizer::Embedding(EmbeddingModel::from_json(&payload)?),
            other => bail!("unknown featurizer encoding {other:?}"),
        })
    }
}

/// Sparse feature rows keyed by thread id.
pub fn write_features_csv(
    path: &Path,
    encoding: &str,
    fingerprint: &str,
    dim: usize,
    rows: &[(String, SparseVector)],
) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# encoding={encoding} dim={dim} fingerprint={fingerprint}")?;
    writeln!(f, "thread_id,features")?;
    for (id, vector) in rows {
        writeln!(f, "{id},{}", vector.to_sparse_text())?;
    }
    f.flush()?;
    Ok(())
}

pub struct FeaturesFile {
    pub encoding: String,
    pub dim: usize,
    pub fingerprint: String,
    pub rows: Vec<(String, SparseVector)>,
}

pub fn read_features_csv(path: &Path) -> Result<FeaturesFile> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .with_context(|| format!("{} is empty", path.display()))?;
    let mut encoding = String::new();
    let mut dim = 0usize;
    let mut fingerprint = String::new();
    for part in header.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = part.split_once('=') {
            match k {
                "encoding" => encoding = v.to_string(),
                "dim" => dim = v.parse()?,
                "fingerprint" => fingerprint = v.to_string(),
                _ => {}
            }
        }
    }
    let mut rows = Vec::new();
    for line in lines.iter().skip(2) {
        let (id, features) = line
            .split_once(',')
            .with_context(|| format!("bad feature row {line:?}"))?;
        rows.push((id.to_string(), SparseVector::from_sparse_text(dim, features)?));
    }
    Ok(FeaturesFile { encoding, dim, fingerprint, rows })
}

/// Read `thread_id,partition,fold` rows.
pub fn read_split_csv(path: &Path) -> Result<Vec<(String, String, Option<usize>)>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let fold = if rec[2].is_empty() { None } else { Some(rec[2].parse()?) };
        out.push((rec[0].to_string(), rec[1].to_string(), fold));
    }
    Ok(out)
}

/// Partition map from split rows.
pub fn partition_sets(rows: &[(String, String, Option<usize>)]) -> HashMap<String, String> {
    rows.iter().map(|(id, part, _)| (id.clone(), part.clone())).collect()
}
