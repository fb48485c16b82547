//! Document embeddings: distributed bag-of-words training with negative
//! sampling. Window-free: each token of a document is predicted from the
//! document vector alone.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize;
use crate::error::{Error, Result};

pub const EMBEDDING_SCHEMA_VERSION: u32 = 1;

/// Training configuration. `dim` defaults to a desk-scale 100; larger spaces
/// (e.g. 5000) are supported through the same field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negative_samples: usize,
    pub min_count: u64,
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dim: 100,
            epochs: 50,
            learning_rate: 0.05,
            negative_samples: 5,
            min_count: 1,
            infer_epochs: 50,
            seed: 1,
        }
    }
}

/// Trained embedding space: one vector per training document plus output
/// word vectors, kept for inference on unseen documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub params: EmbeddingParams,
    pub words: Vec<String>,
    pub word_counts: Vec<u64>,
    pub doc_vectors: Vec<Vec<f64>>,
    pub word_vectors: Vec<Vec<f64>>,
    /// Mean negative-sampling loss per epoch, in training order.
    pub epoch_losses: Vec<f64>,
    #[serde(skip)]
    word_to_index: HashMap<String, usize>,
    #[serde(skip)]
    noise_cdf: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // -softplus(-x), stable on both tails.
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss for one (document, target word) pair:
/// `-ln σ(d·t) - Σ ln σ(-d·n_k)`.
pub fn negative_sampling_loss(doc: &[f64], target: &[f64], negatives: &[&[f64]]) -> f64 {
    let mut loss = -log_sigmoid(dot(doc, target));
    for neg in negatives {
        loss -= log_sigmoid(-dot(doc, neg));
    }
    loss
}

/// Analytic gradients of [`negative_sampling_loss`] with respect to the
/// document vector, the target vector, and each negative vector.
pub fn negative_sampling_gradients(
    doc: &[f64],
    target: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let g_pos = sigmoid(dot(doc, target)) - 1.0;
    let mut grad_doc: Vec<f64> = target.iter().map(|t| g_pos * t).collect();
    let grad_target: Vec<f64> = doc.iter().map(|d| g_pos * d).collect();
    let mut grad_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let g = sigmoid(dot(doc, neg));
        for (gd, n) in grad_doc.iter_mut().zip(neg.iter()) {
            *gd += g * n;
        }
        grad_negs.push(doc.iter().map(|d| g * d).collect());
    }
    (grad_doc, grad_target, grad_negs)
}

fn build_noise_cdf(counts: &[u64]) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(counts.len());
    let mut acc = 0.0;
    for c in counts {
        acc += (*c as f64).powf(0.75);
        cdf.push(acc);
    }
    cdf
}

fn sample_noise(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cdf.last().expect("nonempty vocabulary");
    let x = rng.gen::<f64>() * total;
    cdf.partition_point(|&v| v <= x).min(cdf.len() - 1)
}

fn init_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..dim).map(|_| rng.gen_range(-half..half)).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct SgdStep<'a> {
    cdf: &'a [f64],
    k: usize,
    lr: f64,
}

/// One negative-sampling update of `doc_vec` (and, when `train_words` is
/// set, of the word vectors). Returns the pre-update loss.
fn ns_update(
    doc_vec: &mut [f64],
    word_vectors: &mut [Vec<f64>],
    target: usize,
    step: &SgdStep,
    rng: &mut ChaCha8Rng,
    train_words: bool,
) -> f64 {
    let mut neg_ids = Vec::with_capacity(step.k);
    for _ in 0..step.k {
        let n = sample_noise(step.cdf, rng);
        if n != target {
            neg_ids.push(n);
        }
    }
    let negatives: Vec<&[f64]> = neg_ids.iter().map(|&n| word_vectors[n].as_slice()).collect();
    let loss = negative_sampling_loss(doc_vec, &word_vectors[target], &negatives);
    let (grad_doc, grad_target, grad_negs) =
        negative_sampling_gradients(doc_vec, &word_vectors[target], &negatives);
    drop(negatives);

    for (v, g) in doc_vec.iter_mut().zip(&grad_doc) {
        *v -= step.lr * g;
    }
    if train_words {
        for (v, g) in word_vectors[target].iter_mut().zip(&grad_target) {
            *v -= step.lr * g;
        }
        for (&n, grad) in neg_ids.iter().zip(&grad_negs) {
            for (v, g) in word_vectors[n].iter_mut().zip(grad) {
                *v -= step.lr * g;
            }
        }
    }
    loss
}

/// Train document vectors over a corpus. Deterministic given
/// `params.seed`; single-threaded by design so replays are bit-identical.
pub fn train_doc_embeddings(documents: &[String], params: &EmbeddingParams) -> Result<EmbeddingModel> {
    if params.dim < 2 {
        return Err(Error::invalid(format!("embedding dim {} < 2", params.dim)));
    }
    if documents.is_empty() {
        return Err(Error::invalid("cannot train embeddings on an empty corpus"));
    }

    // Word vocabulary over the whole corpus.
    let tokenized: Vec<Vec<String>> = documents.iter().map(|d| tokenize(d)).collect();
    let mut counts: HashMap<String, u64> = HashMap::new();
    for tokens in &tokenized {
        for t in tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    let mut words: Vec<String> = counts
        .iter()
        .filter(|(_, c)| **c >= params.min_count)
        .map(|(w, _)| w.clone())
        .collect();
    words.sort();
    if words.is_empty() {
        return Err(Error::invalid("corpus has no trainable tokens"));
    }
    let word_to_index: HashMap<String, usize> =
        words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let word_counts: Vec<u64> = words.iter().map(|w| counts[w]).collect();

    let doc_token_ids: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|tokens| tokens.iter().filter_map(|t| word_to_index.get(t).copied()).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut doc_vectors: Vec<Vec<f64>> =
        (0..documents.len()).map(|_| init_vector(params.dim, &mut rng)).collect();
    let mut word_vectors: Vec<Vec<f64>> = vec![vec![0.0; params.dim]; words.len()];
    let noise_cdf = build_noise_cdf(&word_counts);

    let tokens_per_epoch: usize = doc_token_ids.iter().map(|t| t.len()).sum();
    let total_steps = (params.epochs * tokens_per_epoch).max(1) as f64;
    let mut step_count = 0usize;
    let mut epoch_losses = Vec::with_capacity(params.epochs);

    // Negatives are drawn with common random numbers: the draws for a given
    // (document, position) are identical across epochs, so per-epoch losses
    // are comparable and the descent curve is not masked by resampling noise.
    let neg_master = crate::seeding::derive_seed(params.seed, 0x9e9);

    for _ in 0..params.epochs {
        let mut epoch_loss = 0.0;
        let mut n_updates = 0usize;
        for (d, token_ids) in doc_token_ids.iter().enumerate() {
            for (i, &target) in token_ids.iter().enumerate() {
                let lr = params.learning_rate * (1.0 - step_count as f64 / total_steps).max(1e-4);
                let step = SgdStep { cdf: &noise_cdf, k: params.negative_samples, lr };
                let mut neg_rng = ChaCha8Rng::seed_from_u64(crate::seeding::derive_seed(
                    neg_master,
                    ((d as u64) << 32) | i as u64,
                ));
                epoch_loss += ns_update(
                    &mut doc_vectors[d],
                    &mut word_vectors,
                    target,
                    &step,
                    &mut neg_rng,
                    true,
                );
                n_updates += 1;
                step_count += 1;
            }
        }
        epoch_losses.push(if n_updates > 0 { epoch_loss / n_updates as f64 } else { 0.0 });
    }

    Ok(EmbeddingModel {
        params: params.clone(),
        words,
        word_counts,
        doc_vectors,
        word_vectors,
        epoch_losses,
        word_to_index,
        noise_cdf,
    })
}

/// Embed an unseen document with frozen word vectors. Deterministic: the
/// RNG is seeded from the model seed and the document's known tokens, so
/// repeated calls return identical vectors. Documents with no known tokens
/// embed to the zero vector.
pub fn infer_doc_embedding(model: &EmbeddingModel, document: &str) -> Vec<f64> {
    let token_ids: Vec<usize> = tokenize(document)
        .iter()
        .filter_map(|t| model.word_to_index.get(t).copied())
        .collect();
    if token_ids.is_empty() {
        return vec![0.0; model.params.dim];
    }

    let mut hash_input = Vec::new();
    for id in &token_ids {
        hash_input.extend_from_slice(&id.to_le_bytes());
    }
    let seed = model.params.seed ^ fnv1a(&hash_input);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Zero init keeps the inferred vector inside the span of the word
    // vectors; every gradient is a combination of them.
    let mut vec = vec![0.0; model.params.dim];
    let mut word_vectors = model.word_vectors.clone();

    let total_steps = (model.params.infer_epochs * token_ids.len()).max(1) as f64;
    let mut step_count = 0usize;
    for _ in 0..model.params.infer_epochs {
        for &target in &token_ids {
            let lr = model.params.learning_rate
                * (1.0 - step_count as f64 / total_steps).max(1e-4);
            let step = SgdStep { cdf: &model.noise_cdf, k: model.params.negative_samples, lr };
            ns_update(&mut vec, &mut word_vectors, target, &step, &mut rng, false);
            step_count += 1;
        }
    }
    vec
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    schema_version: u32,
    #[serde(flatten)]
    model: EmbeddingModel,
}

impl EmbeddingModel {
    pub fn to_json(&self) -> String {
        let file = EmbeddingFile { schema_version: EMBEDDING_SCHEMA_VERSION, model: self.clone() };
        serde_json::to_string(&file).expect("embedding serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: EmbeddingFile =
            serde_json::from_str(json).map_err(|e| Error::Decode(e.to_string()))?;
        if file.schema_version != EMBEDDING_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: EMBEDDING_SCHEMA_VERSION,
                found: file.schema_version,
            });
        }
        let mut model = file.model;
        model.word_to_index = model
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        model.noise_cdf = build_noise_cdf(&model.word_counts);
        Ok(model)
    }

    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// 5-epoch moving average of the training loss.
    pub fn smoothed_losses(&self, window: usize) -> Vec<f64> {
        if self.epoch_losses.len() < window {
            return Vec::new();
        }
        self.epoch_losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus() -> Vec<String> {
        let mut docs = Vec::new();
        for i in 0..10 {
            // Distinct vocabulary per document.
            let words: Vec<String> = (0..5).map(|j| format!("word{i}x{j}")).collect();
            let mut doc = Vec::new();
            for _ in 0..4 {
                doc.extend(words.iter().cloned());
            }
            docs.push(doc.join(" "));
        }
        docs
    }

    fn fifty_doc_corpus() -> Vec<String> {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let vocab: Vec<String> = (0..30).map(|i| format!("tok{i}")).collect();
        let mut docs: Vec<String> = (0..48)
            .map(|_| {
                (0..rng.gen_range(8..20))
                    .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        // Two duplicated documents.
        let dup = "tok1 tok2 tok3 tok1 tok2 tok3 tok4 tok5 tok4 tok5".to_string();
        docs.push(dup.clone());
        docs.push(dup);
        docs
    }

    fn small_params(dim: usize, epochs: usize) -> EmbeddingParams {
        EmbeddingParams { dim, epochs, ..EmbeddingParams::default() }
    }

// temporary probe appended as a test
    #[test]
    fn rejects_dim_below_two() {
        let err = train_doc_embeddings(&["a b".to_string()], &small_params(1, 5));
        assert!(err.is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let docs = tiny_corpus();
        let params = small_params(8, 5);
        let a = train_doc_embeddings(&docs, &params).unwrap();
        let b = train_doc_embeddings(&docs, &params).unwrap();
        assert_eq!(a.doc_vectors, b.doc_vectors);
        assert_eq!(a.word_vectors, b.word_vectors);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 4;
        let mut rand_vec = || -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let doc = rand_vec();
        let target = rand_vec();
        let negs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec()).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();

        let (grad_doc, grad_target, grad_negs) =
            negative_sampling_gradients(&doc, &target, &neg_refs);

        let h = 1e-5;
        let check = |analytic: f64, mut eval: Box<dyn FnMut(f64) -> f64>| {
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic - fd).abs() / denom < 1e-4,
                "analytic {analytic} vs fd {fd}"
            );
        };

        for i in 0..dim {
            let (d, t, n) = (doc.clone(), target.clone(), negs.clone());
            check(
                grad_doc[i],
                Box::new(move |eps| {
                    let mut d2 = d.clone();
                    d2[i] += eps;
                    let refs: Vec<&[f64]> = n.iter().map(|x| x.as_slice()).collect();
                    negative_sampling_loss(&d2, &t, &refs)
                }),
            );
            let (d, t, n) = (doc.clone(), target.clone(), negs.clone());
            check(
                grad_target[i],
                Box::new(move |eps| {
                    let mut t2 = t.clone();
                    t2[i] += eps;
                    let refs: Vec<&[f64]> = n.iter().map(|x| x.as_slice()).collect();
                    negative_sampling_loss(&d, &t2, &refs)
                }),
            );
            for k in 0..negs.len() {
                let (d, t, n) = (doc.clone(), target.clone(), negs.clone());
                check(
                    grad_negs[k][i],
                    Box::new(move |eps| {
                        let mut n2 = n.clone();
                        n2[k][i] += eps;
                        let refs: Vec<&[f64]> = n2.iter().map(|x| x.as_slice()).collect();
                        negative_sampling_loss(&d, &t, &refs)
                    }),
                );
            }
        }
    }

    #[test]
    fn smoothed_loss_is_non_increasing() {
        let docs = fifty_doc_corpus();
        let model = train_doc_embeddings(&docs, &small_params(16, 50)).unwrap();
        let smoothed = model.smoothed_losses(5);
        assert!(!smoothed.is_empty());
        for pair in smoothed.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "smoothed loss increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn duplicated_documents_rank_among_most_similar_pairs() {
        let docs = fifty_doc_corpus();
        let model = train_doc_embeddings(&docs, &small_params(16, 40)).unwrap();
        let n = docs.len();
        let dup_sim = cosine_similarity(&model.doc_vectors[n - 1], &model.doc_vectors[n - 2]);
        let mut sims = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                sims.push(cosine_similarity(&model.doc_vectors[i], &model.doc_vectors[j]));
            }
        }
        sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let cutoff = sims[(sims.len() as f64 * 0.05).ceil() as usize - 1];
        assert!(dup_sim >= cutoff, "dup pair {dup_sim} below top-5% cutoff {cutoff}");
    }

    #[test]
    fn inference_is_self_consistent_on_training_document() {
        let docs = tiny_corpus();
        let params = EmbeddingParams {
            dim: 8,
            epochs: 600,
            learning_rate: 0.025,
            negative_samples: 10,
            infer_epochs: 300,
            ..EmbeddingParams::default()
        };
        let model = train_doc_embeddings(&docs, &params).unwrap();
        let inferred = infer_doc_embedding(&model, &docs[0]);
        let sim = cosine_similarity(&inferred, &model.doc_vectors[0]);
        assert!(sim > 0.9, "cosine {sim}");
    }

    #[test]
    fn inference_handles_empty_and_repeats() {
        let docs = tiny_corpus();
        let model = train_doc_embeddings(&docs, &small_params(8, 5)).unwrap();
        assert_eq!(infer_doc_embedding(&model, ""), vec![0.0; 8]);
        assert_eq!(infer_doc_embedding(&model, "totally unseen tokens"), vec![0.0; 8]);
        let a = infer_doc_embedding(&model, &docs[1]);
        let b = infer_doc_embedding(&model, &docs[1]);
        assert_eq!(a, b);
    }

    #[test]
    fn model_round_trips_through_json() {
        let docs = tiny_corpus();
        let model = train_doc_embeddings(&docs, &small_params(8, 5)).unwrap();
        let back = EmbeddingModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back.doc_vectors, model.doc_vectors);
        assert_eq!(back.fingerprint(), model.fingerprint());
        // Inference still works after reload (rebuilt lookup tables).
        assert_eq!(
            infer_doc_embedding(&back, &docs[0]),
            infer_doc_embedding(&model, &docs[0])
        );
    }
}
