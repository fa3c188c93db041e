//! Text classification behind a pluggable contract.
//!
//! [`TextModel`] is the interface the co-training loop talks to: fit on
//! labeled documents, predict class probabilities, and emit per-document
//! feature vectors at two stages — `pre_finetune` (label-agnostic initial
//! state) and `post_finetune` (current trained state). [`DefaultTextModel`]
//! is a lightweight trainable implementation: mean-of-token-embeddings into
//! an affine classifier head. [`ExternalEmbeddingModel`] adapts fixed
//! per-document vectors from a TSV file (so embeddings from any external
//! encoder can be plugged in) and trains only the classifier head.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::features::{
    prediction_from_probabilities, softmax_in_place, EmbedStage, FeatureMatrix, Prediction,
};
use crate::optim::{Adam, AdamConfig};
use crate::phrases::PhraseVocabulary;
use crate::tokenize::{attribute_token, tokenize};

pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Reserved for implementations that draw randomness during training;
    /// the default full-batch model is deterministic without it.
    pub rng_seed: u64,
}

impl Default for TextTrainConfig {
    fn default() -> Self {
        TextTrainConfig { epochs: 200, learning_rate: 0.05, rng_seed: 0 }
    }
}

/// The contract between the orchestrator and any text classifier.
/// Class indices follow the LabelSpace ordering; implementations never see
/// label strings.
pub trait TextModel {
    /// Fit on (document, class index) pairs.
    fn train(&mut self, examples: &[(&Document, usize)], config: &TextTrainConfig) -> Result<()>;

    /// Normalized class-probability predictions, one per input document.
    fn predict(&self, docs: &[&Document]) -> Result<Vec<Prediction>>;

    /// Per-document feature vectors of width [`TextModel::embedding_dim`].
    fn embed(&self, docs: &[&Document], stage: EmbedStage) -> Result<FeatureMatrix>;

    fn embedding_dim(&self) -> usize;

    fn n_classes(&self) -> usize;

    fn to_checkpoint_json(&self) -> Result<String>;
}

// ===== Vocabulary =====

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyData {
    tokens: Vec<String>,
    phrases: Vec<Vec<String>>,
}

/// Token inventory of the default model: unigrams at or above a count
/// threshold, phrase strings, attribute tokens, and the shared unknown
/// token. Indices are assigned by lexicographic order of the token string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    tokens: Vec<String>,
    /// Multi-token phrase sequences for greedy longest-first matching.
    phrases: Vec<Vec<String>>,
    index: HashMap<String, usize>,
    by_first: HashMap<String, Vec<usize>>,
    unk: usize,
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData { tokens: v.tokens, phrases: v.phrases }
    }
}

impl TryFrom<VocabularyData> for Vocabulary {
    type Error = Error;

    fn try_from(data: VocabularyData) -> Result<Self> {
        for pair in data.tokens.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Validation(
                    "vocabulary tokens must be sorted and unique".into(),
                ));
            }
        }
        Vocabulary::from_parts(data.tokens, data.phrases)
    }
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, phrases: Vec<Vec<String>>) -> Result<Self> {
        let index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let unk = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::Validation(format!("vocabulary lacks '{UNK_TOKEN}'")))?;
        // Group multi-token phrases by first token, longest first, so the
        // encoder can match greedily.
        let mut ordered: Vec<usize> = (0..phrases.len()).collect();
        ordered.sort_by(|&a, &b| {
            phrases[b].len().cmp(&phrases[a].len()).then_with(|| phrases[a].cmp(&phrases[b]))
        });
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        for i in ordered {
            if phrases[i].len() >= 2 {
                by_first.entry(phrases[i][0].clone()).or_default().push(i);
            }
        }
        Ok(Vocabulary { tokens, phrases, index, by_first, unk })
    }

    /// Build from a corpus: unigrams whose total occurrence count reaches
    /// `min_count`, every phrase string, every attribute token, plus the
    /// unknown token.
    pub fn build(corpus: &Corpus, phrases: &PhraseVocabulary, min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Parameter("min_count must be at least 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus.iter() {
            for tok in tokenize(&doc.text) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut set: BTreeSet<String> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .map(|(t, _)| t)
            .collect();
        for p in phrases.phrases() {
            set.insert(p.joined());
        }
        for doc in corpus.iter() {
            for (f, v) in &doc.attributes {
                set.insert(attribute_token(f, v));
            }
        }
        set.insert(UNK_TOKEN.to_string());
        let phrase_seqs: Vec<Vec<String>> =
            phrases.phrases().iter().map(|p| p.tokens.clone()).collect();
        Vocabulary::from_parts(set.into_iter().collect(), phrase_seqs)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.unk
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token indices for a document: text tokens with phrases matched
    /// greedily longest-first (a matched span becomes one phrase token),
    /// followed by one token per attribute in field order. Anything outside
    /// the vocabulary maps to the unknown index.
    pub fn encode_document(&self, doc: &Document) -> Vec<usize> {
        let toks = tokenize(&doc.text);
        let mut out = Vec::with_capacity(toks.len() + doc.attributes.len());
        let mut i = 0;
        while i < toks.len() {
            let mut advanced = 0;
            if let Some(candidates) = self.by_first.get(&toks[i]) {
                for &pi in candidates {
                    let seq = &self.phrases[pi];
                    if i + seq.len() <= toks.len() && toks[i..i + seq.len()] == seq[..] {
                        out.push(self.index_of(&seq.join(" ")).unwrap_or(self.unk));
                        advanced = seq.len();
                        break;
                    }
                }
            }
            if advanced == 0 {
                out.push(self.index_of(&toks[i]).unwrap_or(self.unk));
                advanced = 1;
            }
            i += advanced;
        }
        for (f, v) in &doc.attributes {
            out.push(self.index_of(&attribute_token(f, v)).unwrap_or(self.unk));
        }
        out
    }
}

/// Free-function form of [`Vocabulary::build`].
pub fn build_vocab(
    corpus: &Corpus,
    phrases: &PhraseVocabulary,
    min_count: usize,
) -> Result<Vocabulary> {
    Vocabulary::build(corpus, phrases, min_count)
}

// ===== Default model =====

const DEFAULT_KIND: &str = "default_text_model";
const EXTERNAL_KIND: &str = "external_embedding_model";
const CHECKPOINT_VERSION: u32 = 1;

/// Mean-of-token-embeddings classifier. The embedding table drawn at
/// construction is kept frozen as the `pre_finetune` view; training updates
/// a working copy (the `post_finetune` view) together with the classifier
/// head. The head starts at zero, so an untrained model predicts the
/// uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultTextModel {
    vocab: Vocabulary,
    dim: usize,
    n_classes: usize,
    rng_seed: u64,
    init_table: Vec<f64>,
    /// Flat trainable parameters: `[table (vocab x dim), wc (classes x dim),
    /// bc (classes)]`.
    params: Vec<f64>,
}

impl DefaultTextModel {
    /// Embedding rows are drawn uniform in `+-sqrt(3/dim)` (unit expected
    /// squared norm), row-major from the seeded generator; classifier
    /// weights and biases start at zero.
    pub fn new(vocab: Vocabulary, n_classes: usize, dim: usize, rng_seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {n_classes}")));
        }
        if dim == 0 {
            return Err(Error::Parameter("embedding dimension must be at least 1".into()));
        }
        let table_len = vocab.len() * dim;
        let mut params = vec![0.0; table_len + n_classes * dim + n_classes];
        let bound = (3.0 / dim as f64).sqrt();
        let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
        for p in &mut params[..table_len] {
            *p = rng.random_range(-bound..=bound);
        }
        let init_table = params[..table_len].to_vec();
        Ok(DefaultTextModel { vocab, dim, n_classes, rng_seed, init_table, params })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Parameter(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn table_len(&self) -> usize {
        self.vocab.len() * self.dim
    }

    /// Token index -> occurrence count; insensitive to token order.
    fn doc_counts(&self, doc: &Document) -> (BTreeMap<usize, usize>, usize) {
        let indices = self.vocab.encode_document(doc);
        let total = indices.len();
        let mut counts = BTreeMap::new();
        for idx in indices {
            *counts.entry(idx).or_insert(0) += 1;
        }
        (counts, total)
    }

    /// Mean of token embedding rows from `table`; the zero vector for a
    /// document with no tokens. Accumulation runs over ascending vocabulary
    /// indices with count weights, so any token ordering gives bitwise
    /// identical output.
    fn doc_vector(&self, doc: &Document, table: &[f64]) -> Vec<f64> {
        let (counts, total) = self.doc_counts(doc);
        let mut v = vec![0.0; self.dim];
        if total == 0 {
            return v;
        }
        for (idx, count) in counts {
            let row = &table[idx * self.dim..(idx + 1) * self.dim];
            let c = count as f64;
            for (a, r) in v.iter_mut().zip(row) {
                *a += c * r;
            }
        }
        let inv = 1.0 / total as f64;
        for a in &mut v {
            *a *= inv;
        }
        v
    }

    fn head(&self) -> (&[f64], &[f64]) {
        let t = self.table_len();
        let wc_end = t + self.n_classes * self.dim;
        (&self.params[t..wc_end], &self.params[wc_end..])
    }

    fn probabilities(&self, doc: &Document) -> Vec<f64> {
        let v = self.doc_vector(doc, &self.params[..self.table_len()]);
        let (wc, bc) = self.head();
        let mut logits: Vec<f64> = (0..self.n_classes)
            .map(|c| {
                bc[c] + wc[c * self.dim..(c + 1) * self.dim]
                    .iter()
                    .zip(&v)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut logits);
        logits
    }

    /// Mean cross-entropy over the examples and its gradient with respect
    /// to the flat parameter vector.
    pub fn loss_and_grad(&self, examples: &[(&Document, usize)]) -> Result<(f64, Vec<f64>)> {
        if examples.is_empty() {
            return Err(Error::Parameter("loss requires a non-empty example set".into()));
        }
        for (doc, class) in examples {
            if *class >= self.n_classes {
                return Err(Error::Validation(format!(
                    "class index {class} out of range for {} classes (document '{}')",
                    self.n_classes, doc.id
                )));
            }
        }
        let t = self.table_len();
        let wc_end = t + self.n_classes * self.dim;
        let mut grad = vec![0.0; self.params.len()];
        let inv_batch = 1.0 / examples.len() as f64;
        let mut loss = 0.0;
        for (doc, target) in examples {
            let (counts, total) = self.doc_counts(doc);
            let v = self.doc_vector(doc, &self.params[..t]);
            let (wc, bc) = self.head();
            let mut p: Vec<f64> = (0..self.n_classes)
                .map(|c| {
                    bc[c] + wc[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(&v)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
                })
                .collect();
            softmax_in_place(&mut p);
            loss -= p[*target].max(f64::MIN_POSITIVE).ln();

            let mut dlogits = p;
            dlogits[*target] -= 1.0;
            for d in &mut dlogits {
                *d *= inv_batch;
            }
            // Head gradients.
            for (c, d) in dlogits.iter().enumerate() {
                if *d != 0.0 {
                    let row = &mut grad[t + c * self.dim..t + (c + 1) * self.dim];
                    for (g, x) in row.iter_mut().zip(&v) {
                        *g += d * x;
                    }
                }
                grad[wc_end + c] += d;
            }
            // Back into the mean vector, then into each token row.
            if total > 0 {
                let (wc, _) = self.head();
                let mut gv = vec![0.0; self.dim];
                for (c, d) in dlogits.iter().enumerate() {
                    if *d != 0.0 {
                        for (g, w) in gv.iter_mut().zip(&wc[c * self.dim..(c + 1) * self.dim]) {
                            *g += d * w;
                        }
                    }
                }
                for (idx, count) in counts {
                    let scale = count as f64 / total as f64;
                    let row = &mut grad[idx * self.dim..(idx + 1) * self.dim];
                    for (g, x) in row.iter_mut().zip(&gv) {
                        *g += scale * x;
                    }
                }
            }
        }
        Ok((loss * inv_batch, grad))
    }
}

impl TextModel for DefaultTextModel {
    /// Full-batch Adam for `config.epochs` steps; deterministic without
    /// randomness, so `config.rng_seed` is unused here.
    fn train(&mut self, examples: &[(&Document, usize)], config: &TextTrainConfig) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::Training("training requires at least one example".into()));
        }
        let mut adam = Adam::new(
            self.params.len(),
            AdamConfig::with_learning_rate(config.learning_rate),
        )?;
        for epoch in 0..config.epochs {
            let (loss, grad) = self.loss_and_grad(examples)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss became non-finite at epoch {epoch}; try a smaller learning rate than {}",
                    config.learning_rate
                )));
            }
            adam.step(&mut self.params, &grad);
        }
        Ok(())
    }

    fn predict(&self, docs: &[&Document]) -> Result<Vec<Prediction>> {
        Ok(docs
            .iter()
            .map(|doc| prediction_from_probabilities(self.probabilities(doc)))
            .collect())
    }

    fn embed(&self, docs: &[&Document], stage: EmbedStage) -> Result<FeatureMatrix> {
        let table = match stage {
            EmbedStage::PreFinetune => &self.init_table,
            EmbedStage::PostFinetune => &self.params[..self.table_len()],
        };
        let mut out = FeatureMatrix::new(self.dim);
        for doc in docs {
            out.insert(doc.id.clone(), self.doc_vector(doc, table))?;
        }
        Ok(out)
    }

    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn to_checkpoint_json(&self) -> Result<String> {
        let ck = DefaultCheckpoint {
            kind: DEFAULT_KIND.into(),
            version: CHECKPOINT_VERSION,
            dim: self.dim,
            n_classes: self.n_classes,
            rng_seed: self.rng_seed,
            vocab: self.vocab.clone(),
            init_table: self.init_table.clone(),
            params: self.params.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DefaultCheckpoint {
    kind: String,
    version: u32,
    dim: usize,
    n_classes: usize,
    rng_seed: u64,
    vocab: Vocabulary,
    init_table: Vec<f64>,
    params: Vec<f64>,
}

impl DefaultTextModel {
    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let ck: DefaultCheckpoint = serde_json::from_str(json)?;
        check_checkpoint_header(&ck.kind, DEFAULT_KIND, ck.version)?;
        let expected = ck.vocab.len() * ck.dim + ck.n_classes * ck.dim + ck.n_classes;
        if ck.params.len() != expected || ck.init_table.len() != ck.vocab.len() * ck.dim {
            return Err(Error::Validation(format!(
                "checkpoint parameter sizes do not match a {}x{} table with {} classes",
                ck.vocab.len(),
                ck.dim,
                ck.n_classes
            )));
        }
        Ok(DefaultTextModel {
            vocab: ck.vocab,
            dim: ck.dim,
            n_classes: ck.n_classes,
            rng_seed: ck.rng_seed,
            init_table: ck.init_table,
            params: ck.params,
        })
    }
}

fn check_checkpoint_header(kind: &str, expected: &str, version: u32) -> Result<()> {
    if kind != expected {
        return Err(Error::Validation(format!("checkpoint kind '{kind}' is not '{expected}'")));
    }
    if version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!("unsupported checkpoint version {version}")));
    }
    Ok(())
}

// ===== External-embedding adapter =====

/// Fixed per-document vectors from an external encoder; only the classifier
/// head trains. Both embed stages return the same stored vectors, since the
/// external embeddings never change.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmbeddingModel {
    dim: usize,
    n_classes: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    /// Flat `[wc (classes x dim), bc (classes)]`, zero-initialized.
    params: Vec<f64>,
}

/// Parse a `doc_id<TAB>v1<TAB>v2...` file; every row must have the same
/// number of values.
pub fn load_embedding_tsv(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message,
        };
        let mut fields = line.split('\t');
        let id = fields.next().expect("split yields at least one field").to_string();
        if id.is_empty() {
            return Err(parse_err("empty document id".into()));
        }
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("invalid value '{f}'"))))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(parse_err(format!("document '{id}' has no embedding values")));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(format!(
                    "document '{id}' has {} values, expected {d}",
                    values.len()
                )));
            }
            _ => {}
        }
        if out.insert(id.clone(), values).is_some() {
            return Err(parse_err(format!("duplicate document id '{id}'")));
        }
    }
    Ok(out)
}

impl ExternalEmbeddingModel {
    pub fn new(vectors: BTreeMap<String, Vec<f64>>, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {n_classes}")));
        }
        let dim = match vectors.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::Validation("embedding file holds no vectors".into())),
        };
        for (id, v) in &vectors {
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "embedding for document '{id}' has width {}, expected {dim}",
                    v.len()
                )));
            }
        }
        let params = vec![0.0; n_classes * dim + n_classes];
        Ok(ExternalEmbeddingModel { dim, n_classes, vectors, params })
    }

    pub fn from_tsv(path: impl AsRef<Path>, n_classes: usize) -> Result<Self> {
        Self::new(load_embedding_tsv(path)?, n_classes)
    }

    fn vector(&self, doc: &Document) -> Result<&[f64]> {
        self.vectors
            .get(&doc.id)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Validation(format!("no external embedding for document '{}'", doc.id))
            })
    }

    fn probabilities(&self, v: &[f64]) -> Vec<f64> {
        let bc_off = self.n_classes * self.dim;
        let mut logits: Vec<f64> = (0..self.n_classes)
            .map(|c| {
                self.params[bc_off + c]
                    + self.params[c * self.dim..(c + 1) * self.dim]
                        .iter()
                        .zip(v)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut logits);
        logits
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let ck: ExternalCheckpoint = serde_json::from_str(json)?;
        check_checkpoint_header(&ck.kind, EXTERNAL_KIND, ck.version)?;
        let model = ExternalEmbeddingModel::new(ck.vectors, ck.n_classes)?;
        if ck.params.len() != model.params.len() || ck.dim != model.dim {
            return Err(Error::Validation(
                "checkpoint parameter sizes do not match its vectors".into(),
            ));
        }
        Ok(ExternalEmbeddingModel { params: ck.params, ..model })
    }
}

impl TextModel for ExternalEmbeddingModel {
    fn train(&mut self, examples: &[(&Document, usize)], config: &TextTrainConfig) -> Result<()> {
        if examples.is_empty() {
            return Err(Error::Training("training requires at least one example".into()));
        }
        for (doc, class) in examples {
            self.vector(doc)?;
            if *class >= self.n_classes {
                return Err(Error::Validation(format!(
                    "class index {class} out of range for {} classes (document '{}')",
                    self.n_classes, doc.id
                )));
            }
        }
        let mut adam = Adam::new(
            self.params.len(),
            AdamConfig::with_learning_rate(config.learning_rate),
        )?;
        let inv_batch = 1.0 / examples.len() as f64;
        let bc_off = self.n_classes * self.dim;
        for epoch in 0..config.epochs {
            let mut grad = vec![0.0; self.params.len()];
            let mut loss = 0.0;
            for (doc, target) in examples {
                let v = self.vector(doc)?;
                let p = self.probabilities(v);
                loss -= p[*target].max(f64::MIN_POSITIVE).ln();
                let mut dlogits = p;
                dlogits[*target] -= 1.0;
                for (c, d) in dlogits.iter().enumerate() {
                    let d = d * inv_batch;
                    if d != 0.0 {
                        let row = &mut grad[c * self.dim..(c + 1) * self.dim];
                        for (g, x) in row.iter_mut().zip(v) {
                            *g += d * x;
                        }
                    }
                    grad[bc_off + c] += d;
                }
            }
            loss *= inv_batch;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss became non-finite at epoch {epoch}; try a smaller learning rate than {}",
                    config.learning_rate
                )));
            }
            adam.step(&mut self.params, &grad);
        }
        Ok(())
    }

    fn predict(&self, docs: &[&Document]) -> Result<Vec<Prediction>> {
        docs.iter()
            .map(|doc| {
                let v = self.vector(doc)?;
                Ok(prediction_from_probabilities(self.probabilities(v)))
            })
            .collect()
    }

    fn embed(&self, docs: &[&Document], _stage: EmbedStage) -> Result<FeatureMatrix> {
        let mut out = FeatureMatrix::new(self.dim);
        for doc in docs {
            out.insert(doc.id.clone(), self.vector(doc)?.to_vec())?;
        }
        Ok(out)
    }

    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn to_checkpoint_json(&self) -> Result<String> {
        let ck = ExternalCheckpoint {
            kind: EXTERNAL_KIND.into(),
            version: CHECKPOINT_VERSION,
            dim: self.dim,
            n_classes: self.n_classes,
            vectors: self.vectors.clone(),
            params: self.params.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ExternalCheckpoint {
    kind: String,
    version: u32,
    dim: usize,
    n_classes: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    params: Vec<f64>,
}

/// Load any text-model checkpoint by inspecting its `kind` field.
pub fn load_text_model_json(json: &str) -> Result<Box<dyn TextModel>> {
    #[derive(Deserialize)]
    struct KindProbe {
        kind: String,
    }
    let probe: KindProbe = serde_json::from_str(json)?;
    match probe.kind.as_str() {
        DEFAULT_KIND => Ok(Box::new(DefaultTextModel::from_checkpoint_json(json)?)),
        EXTERNAL_KIND => Ok(Box::new(ExternalEmbeddingModel::from_checkpoint_json(json)?)),
        other => Err(Error::Validation(format!("unknown text model kind '{other}'"))),
    }
}

/// Contract conformance checks any [`TextModel`] implementation must pass:
/// normalized probability outputs, stable embedding width at both stages,
/// and bitwise-deterministic repeated prediction/embedding.
pub fn check_text_model_contract(model: &dyn TextModel, docs: &[&Document]) -> Result<()> {
    if docs.is_empty() {
        return Err(Error::Parameter("contract check needs at least one document".into()));
    }
    let first = model.predict(docs)?;
    for (doc, p) in docs.iter().zip(&first) {
        if p.probabilities.len() != model.n_classes() {
            return Err(Error::Validation(format!(
                "prediction for '{}' has {} probabilities, expected {}",
                doc.id,
                p.probabilities.len(),
                model.n_classes()
            )));
        }
        let sum: f64 = p.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || p.probabilities.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation(format!(
                "prediction for '{}' is not a normalized distribution (sum {sum})",
                doc.id
            )));
        }
        if p.confidence.to_bits() != p.probabilities[p.class].to_bits() {
            return Err(Error::Validation(format!(
                "prediction for '{}' has confidence inconsistent with its class",
                doc.id
            )));
        }
    }
    let second = model.predict(docs)?;
    for (doc, (a, b)) in docs.iter().zip(first.iter().zip(&second)) {
        let same = a.class == b.class
            && a.probabilities.len() == b.probabilities.len()
            && a.probabilities
                .iter()
                .zip(&b.probabilities)
                .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            return Err(Error::Validation(format!(
                "repeated prediction for '{}' differs",
                doc.id
            )));
        }
    }
    for stage in [EmbedStage::PreFinetune, EmbedStage::PostFinetune] {
        let m1 = model.embed(docs, stage)?;
        let m2 = model.embed(docs, stage)?;
        if m1.dim() != model.embedding_dim() {
            return Err(Error::Validation(format!(
                "embed width {} differs from embedding_dim {}",
                m1.dim(),
                model.embedding_dim()
            )));
        }
        for doc in docs {
            let (a, b) = match (m1.get(&doc.id), m2.get(&doc.id)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Validation(format!(
                        "embed omitted document '{}'",
                        doc.id
                    )));
                }
            };
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()) {
                return Err(Error::Validation(format!(
                    "repeated embedding for '{}' differs",
                    doc.id
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::phrases::mine_phrases;

    fn doc(id: &str, text: &str, attrs: &[(&str, &str)]) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            gold_label: None,
        }
    }

    fn empty_vocab_corpus() -> Corpus {
        Corpus::new(vec![]).unwrap()
    }

    #[test]
    fn empty_corpus_vocabulary_is_only_unk() {
        let v =
            build_vocab(&empty_vocab_corpus(), &PhraseVocabulary::default(), 1).unwrap();
        assert_eq!(v.tokens(), &[UNK_TOKEN.to_string()]);
        assert_eq!(v.unk_index(), 0);
    }

    #[test]
    fn min_count_filters_unigrams() {
        let corpus = Corpus::new(vec![doc("d1", "a a b", &[])]).unwrap();
        let v = build_vocab(&corpus, &PhraseVocabulary::default(), 2).unwrap();
        assert!(v.index_of("a").is_some());
        assert!(v.index_of("b").is_none());
        assert!(build_vocab(&corpus, &PhraseVocabulary::default(), 0).is_err());
    }

    #[test]
    fn vocabulary_matches_brute_force_counter() {
        let corpus = Corpus::new(vec![
            doc("d1", "salt pepper salt market", &[("brand", "Acme")]),
            doc("d2", "salt pepper deal", &[("brand", "Acme"), ("size", "XL")]),
            doc("d3", "pepper market pepper", &[]),
            doc("d4", "one off words", &[]),
        ])
        .unwrap();
        let phrases = mine_phrases(&corpus, 2, 2).unwrap();
        let v = build_vocab(&corpus, &phrases, 2).unwrap();

        // Independent recount with plain hash maps.
        let mut counts: HashMap<String, usize> = HashMap::new();
        for d in corpus.iter() {
            for t in tokenize(&d.text) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut expected: BTreeSet<String> =
            counts.into_iter().filter(|(_, c)| *c >= 2).map(|(t, _)| t).collect();
        for p in phrases.phrases() {
            expected.insert(p.joined());
        }
        expected.insert("brand=acme".into());
        expected.insert("size=xl".into());
        expected.insert(UNK_TOKEN.into());
        let expected: Vec<String> = expected.into_iter().collect();
        assert_eq!(v.tokens(), expected.as_slice());
        // Indices are positions in the sorted list.
        for (i, t) in expected.iter().enumerate() {
            assert_eq!(v.index_of(t), Some(i));
        }
    }

    #[test]
    fn greedy_longest_first_phrase_matching() {
        let corpus = Corpus::new(vec![
            doc("d1", "salt pepper mix salt pepper", &[]),
            doc("d2", "salt pepper mix again", &[]),
            doc("d3", "salt pepper only", &[]),
        ])
        .unwrap();
        // Mined: "salt pepper" (df 3) and "salt pepper mix" (df 2); the
        // bigram survives maximality because its frequency is strictly
        // higher. With max_len 3 the trigram wins at position 0.
        let phrases = mine_phrases(&corpus, 2, 3).unwrap();
        let v = build_vocab(&corpus, &phrases, 2).unwrap();
        let d = doc("q", "salt pepper mix salt pepper salt", &[("brand", "X")]);
        let ids = v.encode_document(&d);
        let by_token: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(
            by_token,
            vec!["salt pepper mix", "salt pepper", "salt", UNK_TOKEN],
            "trigram first, then bigram, lone unigram, unknown attribute"
        );
    }

    fn tiny_model() -> (DefaultTextModel, Vec<Document>) {
        let docs = vec![
            doc("d1", "alpha alpha omega", &[("kind", "a")]),
            doc("d2", "beta beta omega", &[("kind", "b")]),
        ];
        let corpus = Corpus::new(docs.clone()).unwrap();
        let v = build_vocab(&corpus, &PhraseVocabulary::default(), 1).unwrap();
        (DefaultTextModel::new(v, 2, 8, 7).unwrap(), docs)
    }

    #[test]
    fn fresh_model_predicts_uniform() {
        let (model, docs) = tiny_model();
        let refs: Vec<&Document> = docs.iter().collect();
        for p in model.predict(&refs).unwrap() {
            for v in &p.probabilities {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
        // An empty document plus empty attributes -> zero vector -> the
        // head bias (zero here) decides: still uniform, never a crash.
        let empty = doc("e", "", &[("kind", "a")]);
        let p = model.predict(&[&empty]).unwrap().remove(0);
        assert!((p.probabilities[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn separable_instance_reaches_full_accuracy_and_is_deterministic() {
        let (model0, docs) = tiny_model();
        let train = |mut m: DefaultTextModel| {
            let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
            m.train(&examples, &TextTrainConfig { epochs: 150, learning_rate: 0.05, rng_seed: 0 })
                .unwrap();
            m
        };
        let m1 = train(model0.clone());
        let m2 = train(model0.clone());
        let refs: Vec<&Document> = docs.iter().collect();
        let preds = m1.predict(&refs).unwrap();
        assert_eq!(preds[0].class, 0);
        assert_eq!(preds[1].class, 1);
        assert!(preds[0].confidence > 0.9);
        for (a, b) in m1.parameters().iter().zip(m2.parameters()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_learning_rate_and_zero_epochs_leave_model() {
        let (model, docs) = tiny_model();
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        let mut frozen = model.clone();
        frozen
            .train(&examples, &TextTrainConfig { epochs: 10, learning_rate: 0.0, rng_seed: 0 })
            .unwrap();
        for (a, b) in model.parameters().iter().zip(frozen.parameters()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut zero_epochs = model.clone();
        zero_epochs
            .train(&examples, &TextTrainConfig { epochs: 0, learning_rate: 0.5, rng_seed: 0 })
            .unwrap();
        assert_eq!(model.parameters(), zero_epochs.parameters());
    }

    #[test]
    fn embeddings_are_means_of_rows() {
        let (model, _) = tiny_model();
        let v = model.vocabulary();
        let dim = model.embedding_dim();
        let table = &model.parameters()[..v.len() * dim];

        let empty = doc("e", "", &[]);
        let m = model.embed(&[&empty], EmbedStage::PostFinetune).unwrap();
        assert_eq!(m.get("e").unwrap(), vec![0.0; dim].as_slice());

        let single = doc("s", "alpha", &[]);
        let m = model.embed(&[&single], EmbedStage::PostFinetune).unwrap();
        let idx = v.index_of("alpha").unwrap();
        let row = &table[idx * dim..(idx + 1) * dim];
        for (a, b) in m.get("s").unwrap().iter().zip(row) {
            assert_eq!(a.to_bits(), b.to_bits(), "mean of one row is the row");
        }

        // Direct recomputation oracle for a multi-token document.
        let multi = doc("m", "alpha alpha beta", &[]);
        let got = model.embed(&[&multi], EmbedStage::PostFinetune).unwrap();
        let ia = v.index_of("alpha").unwrap();
        let ib = v.index_of("beta").unwrap();
        for c in 0..dim {
            let expected =
                (2.0 * table[ia * dim + c] + table[ib * dim + c]) / 3.0;
            assert!((got.get("m").unwrap()[c] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn pre_stage_is_frozen_and_post_stage_moves() {
        let (mut model, docs) = tiny_model();
        let refs: Vec<&Document> = docs.iter().collect();
        let pre_before = model.embed(&refs, EmbedStage::PreFinetune).unwrap();
        let post_before = model.embed(&refs, EmbedStage::PostFinetune).unwrap();
        // Untrained: the working table still equals the initial table.
        assert_eq!(
            crate::features::feature_digest(&pre_before),
            crate::features::feature_digest(&post_before)
        );
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        model
            .train(&examples, &TextTrainConfig { epochs: 50, learning_rate: 0.05, rng_seed: 0 })
            .unwrap();
        let pre_after = model.embed(&refs, EmbedStage::PreFinetune).unwrap();
        let post_after = model.embed(&refs, EmbedStage::PostFinetune).unwrap();
        assert_eq!(
            crate::features::feature_digest(&pre_before),
            crate::features::feature_digest(&pre_after),
            "pre-stage embeddings are label-agnostic and frozen"
        );
        assert_ne!(
            crate::features::feature_digest(&post_before),
            crate::features::feature_digest(&post_after),
            "post-stage embeddings reflect training"
        );
    }

    #[test]
    fn bag_of_tokens_order_invariance() {
        let (model, _) = tiny_model();
        let a = doc("p", "alpha beta omega", &[]);
        let b = doc("p", "omega alpha beta", &[]);
        let pa = model.predict(&[&a]).unwrap().remove(0);
        let pb = model.predict(&[&b]).unwrap().remove(0);
        for (x, y) in pa.probabilities.iter().zip(&pb.probabilities) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let ea = model.embed(&[&a], EmbedStage::PostFinetune).unwrap();
        let eb = model.embed(&[&b], EmbedStage::PostFinetune).unwrap();
        for (x, y) in ea.get("p").unwrap().iter().zip(eb.get("p").unwrap()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn stripping_attributes_never_crashes() {
        let (mut model, docs) = tiny_model();
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        model
            .train(&examples, &TextTrainConfig { epochs: 20, learning_rate: 0.05, rng_seed: 0 })
            .unwrap();
        let stripped = doc("x", "alpha alpha omega", &[]);
        let p = model.predict(&[&stripped]).unwrap().remove(0);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, docs) = tiny_model();
        // Make the head nonzero so classifier gradients are exercised.
        let mut model = model;
        let mut params = model.parameters().to_vec();
        let n = params.len();
        for (i, p) in params[n - 2 * 8 - 2..].iter_mut().enumerate() {
            *p = 0.05 * ((i % 7) as f64 - 3.0);
        }
        model.set_parameters(params).unwrap();
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        let (_, analytic) = model.loss_and_grad(&examples).unwrap();
        let base = model.parameters().to_vec();
        let step = 1e-3;
        let mut probe = model.clone();
        let mut max_rel: f64 = 0.0;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += step;
            probe.set_parameters(plus).unwrap();
            let (lp, _) = probe.loss_and_grad(&examples).unwrap();
            let mut minus = base.clone();
            minus[i] -= step;
            probe.set_parameters(minus).unwrap();
            let (lm, _) = probe.loss_and_grad(&examples).unwrap();
            let fd = (lp - lm) / (2.0 * step);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max((analytic[i] - fd).abs() / denom);
        }
        assert!(max_rel <= 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn checkpoint_roundtrips_bitwise_and_dispatches_by_kind() {
        let (mut model, docs) = tiny_model();
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        model
            .train(&examples, &TextTrainConfig { epochs: 30, learning_rate: 0.05, rng_seed: 0 })
            .unwrap();
        let json = model.to_checkpoint_json().unwrap();
        let back = load_text_model_json(&json).unwrap();
        assert_eq!(back.embedding_dim(), model.embedding_dim());
        assert_eq!(back.n_classes(), 2);
        let refs: Vec<&Document> = docs.iter().collect();
        let pa = model.predict(&refs).unwrap();
        let pb = back.predict(&refs).unwrap();
        for (a, b) in pa.iter().zip(&pb) {
            assert_eq!(a.class, b.class);
            assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
        }
        let ea = model.embed(&refs, EmbedStage::PreFinetune).unwrap();
        let eb = back.embed(&refs, EmbedStage::PreFinetune).unwrap();
        assert_eq!(
            crate::features::feature_digest(&ea),
            crate::features::feature_digest(&eb)
        );

        let unknown = json.replace(DEFAULT_KIND, "mystery_model");
        assert!(load_text_model_json(&unknown).is_err());
    }

    #[test]
    fn external_model_trains_head_only_and_names_missing_docs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        std::fs::write(&path, "d1\t1.0\t0.0\nd2\t0.0\t1.0\nd3\t0.9\t0.1\n").unwrap();
        let mut model = ExternalEmbeddingModel::from_tsv(&path, 2).unwrap();
        assert_eq!(model.embedding_dim(), 2);
        let docs =
            vec![doc("d1", "ignored text", &[]), doc("d2", "",  &[("k", "v")]), doc("d3", "x", &[])];
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        model
            .train(&examples, &TextTrainConfig { epochs: 200, learning_rate: 0.1, rng_seed: 0 })
            .unwrap();
        let refs: Vec<&Document> = docs.iter().collect();
        let preds = model.predict(&refs).unwrap();
        assert_eq!(preds[0].class, 0);
        assert_eq!(preds[1].class, 1);
        assert_eq!(preds[2].class, 0, "d3 sits next to d1");

        // The stored vectors are what embed returns at both stages.
        let e = model.embed(&refs, EmbedStage::PostFinetune).unwrap();
        assert_eq!(e.get("d1").unwrap(), &[1.0, 0.0][..]);

        let ghost = doc("ghost", "zzz", &[]);
        let err = model.predict(&[&ghost]).unwrap_err();
        assert!(err.to_string().contains("ghost"));

        let json = model.to_checkpoint_json().unwrap();
        let back = load_text_model_json(&json).unwrap();
        let pb = back.predict(&refs).unwrap();
        assert_eq!(pb[2].class, 0);
    }

    #[test]
    fn malformed_embedding_files_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "d1\t1.0\t2.0\nd2\t3.0\n").unwrap();
        let err = load_embedding_tsv(&path).unwrap_err();
        assert!(err.to_string().contains("bad.tsv:2"), "got: {err}");

        std::fs::write(&path, "d1\t1.0\nd1\t2.0\n").unwrap();
        let err = load_embedding_tsv(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {err}");

        std::fs::write(&path, "d1\tnot_a_number\n").unwrap();
        assert!(load_embedding_tsv(&path).is_err());
    }

    #[test]
    fn contract_suite_passes_for_both_implementations() {
        let (mut model, docs) = tiny_model();
        let refs: Vec<&Document> = docs.iter().collect();
        check_text_model_contract(&model, &refs).unwrap();
        let examples: Vec<(&Document, usize)> = vec![(&docs[0], 0), (&docs[1], 1)];
        model
            .train(&examples, &TextTrainConfig { epochs: 20, learning_rate: 0.05, rng_seed: 0 })
            .unwrap();
        check_text_model_contract(&model, &refs).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        std::fs::write(&path, "d1\t0.5\t0.5\nd2\t0.1\t0.9\n").unwrap();
        let external = ExternalEmbeddingModel::from_tsv(&path, 2).unwrap();
        check_text_model_contract(&external, &refs).unwrap();
        assert!(check_text_model_contract(&external, &[]).is_err());
    }
}
