//! Versioned model persistence. Model files embed a fingerprint of the
//! feature space they were trained on; prediction against a different
//! featurizer is refused.

use serde::{Deserialize, Serialize};

use super::forest::ForestModel;
use super::tree::DecisionTreeModel;
use super::Prediction;
use crate::error::{Error, Result};
use crate::textfeat::SparseVector;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Identity of the feature space a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub encoding: String,
    pub n_features: usize,
    pub fingerprint: String,
}

impl FeatureSpace {
    pub fn ensure_matches(&self, featurizer_fingerprint: &str) -> Result<()> {
        if self.fingerprint != featurizer_fingerprint {
            return Err(Error::FeatureSpaceMismatch {
                expected: self.fingerprint.clone(),
                got: featurizer_fingerprint.to_string(),
            });
        }
        Ok(())
    }
}

/// Either classifier behind one prediction interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierModel {
    Tree(DecisionTreeModel),
    Forest(ForestModel),
}

impl ClassifierModel {
    pub fn predict(&self, x: &SparseVector) -> Result<Prediction> {
        match self {
            ClassifierModel::Tree(t) => t.predict(x),
            ClassifierModel::Forest(f) => f.predict(x),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ClassifierModel::Tree(t) => t.n_classes,
            ClassifierModel::Forest(f) => f.n_classes(),
        }
    }
}

/// A model plus everything needed to use it safely later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistedModel {
    pub feature_space: FeatureSpace,
    pub class_names: Vec<String>,
    pub model: ClassifierModel,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    #[serde(flatten)]
    payload: PersistedModel,
}

pub fn serialize_model(model: &PersistedModel) -> String {
    let file = ModelFile { schema_version: MODEL_SCHEMA_VERSION, payload: model.clone() };
    serde_json::to_string(&file).expect("model serialization cannot fail")
}

pub fn deserialize_model(json: &str) -> Result<PersistedModel> {
    let file: ModelFile = serde_json::from_str(json).map_err(|e| Error::Decode(e.to_string()))?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: MODEL_SCHEMA_VERSION,
            found: file.schema_version,
        });
    }
    Ok(file.payload)
}
