//! Thread featurization: tokenization, n-grams, vocabulary construction,
//! bag-of-words and TF-IDF vectors, and trained document embeddings.

mod embedding;
mod stopwords;

pub use embedding::{
    cosine_similarity, infer_doc_embedding, negative_sampling_gradients,
    negative_sampling_loss, train_doc_embeddings, EmbeddingModel, EmbeddingParams,
};
pub use stopwords::{is_stop_word, STOP_WORDS, STOP_WORDS_VERSION};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VOCABULARY_SCHEMA_VERSION: u32 = 1;

/// Sorted sparse vector over a fixed feature space of `dim` columns.
/// Absent indices read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Build from parallel lists; indices must be strictly ascending, within
    /// `[0, dim)`, with nonzero finite values.
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid("indices/values length mismatch"));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid("indices must be strictly ascending"));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::invalid(format!("index {last} outside [0,{dim})")));
            }
        }
        if values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::invalid("values must be nonzero and finite"));
        }
        Ok(SparseVector { dim, indices, values })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector { dim, indices: Vec::new(), values: Vec::new() }
    }

    /// Dense-to-sparse; exact zeros are dropped.
    pub fn from_dense(row: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, v) in row.iter().enumerate() {
            if *v != 0.0 {
                indices.push(i);
                values.push(*v);
            }
        }
        SparseVector { dim: row.len(), indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// `index:value` pairs joined by spaces, the sparse text export format.
    pub fn to_sparse_text(&self) -> String {
        self.iter()
            .map(|(i, v)| format!("{i}:{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_sparse_text(dim: usize, text: &str) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for pair in text.split_whitespace() {
            let (i, v) = pair
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad sparse pair {pair:?}")))?;
            indices.push(i.parse::<usize>().map_err(|e| Error::invalid(e.to_string()))?);
            values.push(v.parse::<f64>().map_err(|e| Error::invalid(e.to_string()))?);
        }
        SparseVector::new(dim, indices, values)
    }
}

/// Row-major collection of sparse vectors over one feature space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<SparseVector>,
    pub n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<SparseVector>, n_cols: usize) -> Result<Self> {
        if rows.iter().any(|r| r.dim() != n_cols) {
            return Err(Error::invalid("row dimension mismatch"));
        }
        Ok(FeatureMatrix { rows, n_cols })
    }

    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::invalid("ragged dense rows"));
        }
        Ok(FeatureMatrix {
            rows: rows.iter().map(|r| SparseVector::from_dense(r)).collect(),
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.rows[row].get(col)
    }
}

/// Lowercase, strip punctuation, drop stop words. Tokens are maximal
/// alphanumeric runs.
pub fn tokenize(document: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in document.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            if !is_stop_word(&current) {
                tokens.push(std::mem::take(&mut current));
            } else {
                current.clear();
            }
        }
    }
    if !current.is_empty() && !is_stop_word(&current) {
        tokens.push(current);
    }
    tokens
}

/// Contiguous n-grams joined by single spaces: all 1-grams in document
/// order, then all 2-grams, and so on.
pub fn ngrams(tokens: &[String], nmin: usize, nmax: usize) -> Result<Vec<String>> {
    if nmin < 1 || nmin > nmax {
        return Err(Error::invalid(format!("invalid n-gram range {nmin}..={nmax}")));
    }
    let mut grams = Vec::new();
    for n in nmin..=nmax {
        if n > tokens.len() {
            break;
        }
        for window in tokens.windows(n) {
            grams.push(window.join(" "));
        }
    }
    Ok(grams)
}

/// Vocabulary pruning parameters. Defaults follow the reference protocol:
/// top 30,000 grams that occur at least 5 times in the corpus and in at
/// most 90% of documents, with 1- to 3-grams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabParams {
    pub max_vocab: usize,
    pub min_count: u64,
    pub max_doc_fraction: f64,
    pub ngram_min: usize,
    pub ngram_max: usize,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            max_vocab: 30_000,
            min_count: 5,
            max_doc_fraction: 0.90,
            ngram_min: 1,
            ngram_max: 3,
        }
    }
}

/// Gram-to-column mapping with the document frequencies needed for TF-IDF.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_index: HashMap<String, usize>,
    doc_freq: Vec<u64>,
    corpus_freq: Vec<u64>,
    pub params: VocabParams,
    pub total_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    schema_version: u32,
    stop_words_version: u32,
    params: VocabParams,
    total_docs: usize,
    /// `(gram, doc_freq, corpus_freq)` in index order.
    entries: Vec<(String, u64, u64)>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, gram: &str) -> Option<usize> {
        self.token_to_index.get(gram).copied()
    }

    pub fn gram(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn grams(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, index: usize) -> u64 {
        self.doc_freq[index]
    }

    pub fn corpus_freq(&self, index: usize) -> u64 {
        self.corpus_freq[index]
    }

    pub fn to_json(&self) -> String {
        let file = VocabularyFile {
            schema_version: VOCABULARY_SCHEMA_VERSION,
            stop_words_version: STOP_WORDS_VERSION,
            params: self.params.clone(),
            total_docs: self.total_docs,
            entries: self
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), self.doc_freq[i], self.corpus_freq[i]))
                .collect(),
        };
        serde_json::to_string(&file).expect("vocabulary serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: VocabularyFile =
            serde_json::from_str(json).map_err(|e| Error::Decode(e.to_string()))?;
        if file.schema_version != VOCABULARY_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: VOCABULARY_SCHEMA_VERSION,
                found: file.schema_version,
            });
        }
        let mut token_to_index = HashMap::with_capacity(file.entries.len());
        let mut tokens = Vec::with_capacity(file.entries.len());
        let mut doc_freq = Vec::with_capacity(file.entries.len());
        let mut corpus_freq = Vec::with_capacity(file.entries.len());
        for (i, (gram, df, cf)) in file.entries.into_iter().enumerate() {
            token_to_index.insert(gram.clone(), i);
            tokens.push(gram);
            doc_freq.push(df);
            corpus_freq.push(cf);
        }
        Ok(Vocabulary {
            tokens,
            token_to_index,
            doc_freq,
            corpus_freq,
            params: file.params,
            total_docs: file.total_docs,
        })
    }

    /// Stable content hash of the serialized vocabulary, used to bind models
    /// to the feature space they were trained on.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

fn doc_gram_counts(document: &str, params: &VocabParams) -> BTreeMap<String, u64> {
    let tokens = tokenize(document);
    let grams = ngrams(&tokens, params.ngram_min, params.ngram_max)
        .expect("params validated by caller");
    let mut counts = BTreeMap::new();
    for g in grams {
        *counts.entry(g).or_insert(0u64) += 1;
    }
    counts
}

/// Build a vocabulary over thread documents.
///
/// Grams below `min_count` total occurrences, or present in more than
/// `max_doc_fraction` of documents, are removed. Survivors rank by corpus
/// frequency (ties lexicographic) and are truncated to `max_vocab`. An
/// all-filtered corpus yields a valid empty vocabulary; callers should warn.
pub fn build_vocabulary(documents: &[String], params: &VocabParams) -> Result<Vocabulary> {
    if documents.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from zero documents"));
    }
    if params.ngram_min < 1 || params.ngram_min > params.ngram_max {
        return Err(Error::invalid("invalid n-gram range"));
    }

    let mut corpus_freq: BTreeMap<String, u64> = BTreeMap::new();
    let mut doc_freq: BTreeMap<String, u64> = BTreeMap::new();
    for doc in documents {
        for (gram, count) in doc_gram_counts(doc, params) {
            *corpus_freq.entry(gram.clone()).or_insert(0) += count;
            *doc_freq.entry(gram).or_insert(0) += 1;
        }
    }

    let total_docs = documents.len();
    let mut kept: Vec<(&String, u64)> = corpus_freq
        .iter()
        .filter(|(gram, cf)| {
            **cf >= params.min_count
                && (doc_freq[*gram] as f64 / total_docs as f64) <= params.max_doc_fraction
        })
        .map(|(gram, cf)| (gram, *cf))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(params.max_vocab);

    let mut tokens = Vec::with_capacity(kept.len());
    let mut token_to_index = HashMap::with_capacity(kept.len());
    let mut df = Vec::with_capacity(kept.len());
    let mut cf = Vec::with_capacity(kept.len());
    for (i, (gram, count)) in kept.into_iter().enumerate() {
        token_to_index.insert(gram.clone(), i);
        df.push(doc_freq[gram]);
        cf.push(count);
        tokens.push(gram.clone());
    }
    Ok(Vocabulary {
        tokens,
        token_to_index,
        doc_freq: df,
        corpus_freq: cf,
        params: params.clone(),
        total_docs,
    })
}

fn in_vocab_counts(document: &str, vocab: &Vocabulary) -> BTreeMap<usize, u64> {
    let mut counts = BTreeMap::new();
    for (gram, count) in doc_gram_counts(document, &vocab.params) {
        if let Some(idx) = vocab.index_of(&gram) {
            *counts.entry(idx).or_insert(0) += count;
        }
    }
    counts
}

/// Raw in-vocabulary gram counts.
pub fn bow_vector(document: &str, vocab: &Vocabulary) -> SparseVector {
    let counts = in_vocab_counts(document, vocab);
    let indices: Vec<usize> = counts.keys().copied().collect();
    let values: Vec<f64> = counts.values().map(|c| *c as f64).collect();
    SparseVector::new(vocab.len(), indices, values).expect("counts are positive and sorted")
}

/// Smoothed TF-IDF: `count * (ln((1 + N) / (1 + df)) + 1)`, L2-normalized.
pub fn tfidf_vector(document: &str, vocab: &Vocabulary) -> SparseVector {
    let counts = in_vocab_counts(document, vocab);
    if counts.is_empty() {
        return SparseVector::empty(vocab.len());
    }
    let n = vocab.total_docs as f64;
    let mut indices = Vec::with_capacity(counts.len());
    let mut values = Vec::with_capacity(counts.len());
    for (idx, count) in counts {
        let idf = ((1.0 + n) / (1.0 + vocab.doc_freq(idx) as f64)).ln() + 1.0;
        indices.push(idx);
        values.push(count as f64 * idf);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    SparseVector::new(vocab.len(), indices, values).expect("tfidf values are positive and sorted")
}

/// Which sparse weighting to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureWeighting {
    Bow,
    Tfidf,
}

pub fn featurize_corpus(
    documents: &[String],
    vocab: &Vocabulary,
    weighting: FeatureWeighting,
) -> FeatureMatrix {
    let rows = documents
        .iter()
        .map(|doc| match weighting {
            FeatureWeighting::Bow => bow_vector(doc, vocab),
            FeatureWeighting::Tfidf => tfidf_vector(doc, vocab),
        })
        .collect();
    FeatureMatrix { rows, n_cols: vocab.len() }
}
