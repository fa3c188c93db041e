//! Interchange types shared by the text and network classifiers: dense
//! per-document feature rows, prediction records, and the probability
//! helpers both classifier heads use so their numerics match exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense feature vectors keyed by document id; every row has the same width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix { dim, rows: BTreeMap::new() }
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, row: Vec<f64>) -> Result<()> {
        let doc_id = doc_id.into();
        if row.len() != self.dim {
            return Err(Error::Validation(format!(
                "feature row for document '{doc_id}' has width {}, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.rows.insert(doc_id, row);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&[f64]> {
        self.rows.get(doc_id).map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in ascending document-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(id, row)| (id.as_str(), row.as_slice()))
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }
}

/// FNV-1a over the width, document ids, and exact row bits, in ascending
/// document-id order. Any single-bit feature change alters the digest, so
/// iteration traces can record whether shared features actually moved.
pub fn feature_digest(matrix: &FeatureMatrix) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&(matrix.dim() as u64).to_le_bytes());
    for (id, row) in matrix.iter() {
        eat(id.as_bytes());
        eat(&[0xff]);
        for x in row {
            eat(&x.to_bits().to_le_bytes());
        }
    }
    h
}

/// Which embedding table a text model reads when producing features:
/// the label-agnostic initial table or the current trained one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedStage {
    PreFinetune,
    PostFinetune,
}

/// One classification decision: the argmax class, its probability, and the
/// full distribution over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

/// Numerically stable in-place softmax (max-shifted).
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in logits.iter_mut() {
        *x /= sum;
    }
}

/// Turn a probability vector into a [`Prediction`]; ties go to the lowest
/// class index.
pub fn prediction_from_probabilities(probabilities: Vec<f64>) -> Prediction {
    let mut class = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > probabilities[class] {
            class = i;
        }
    }
    let confidence = probabilities[class];
    Prediction { class, confidence, probabilities }
}
