//! Mine forum dumps for CVE-citing threads, classify their exploit
//! maturity (proof-of-concept, weaponization, exploitation), and report
//! price, delay, and risk analytics.
//!
//! The pipeline shape: ingest a dump into per-thread documents, extract CVE
//! and price mentions, enrich mentions with NVD/EPSS data, featurize thread
//! documents (bag-of-words, TF-IDF, or trained document embeddings), attach
//! labels, and train tree or forest classifiers whose predictions drive
//! exploitation alerts.

pub mod analytics;
pub mod corpus;
pub mod dataset;
pub mod enrich;
pub mod error;
pub mod eval;
pub mod extract;
pub mod models;
pub(crate) mod seeding;
pub mod synth;
pub mod textfeat;

pub use error::{Error, Result};

/// Re-export of the seed derivation helper for downstream orchestration.
pub mod seed {
    pub use crate::seeding::derive_seed;
}
