//! Joint training loop: the text classifier and the network classifier
//! alternately label the unlabeled documents for each other.
//!
//! Each iteration trains both models on the current pseudo-label pool,
//! collects confidence-filtered top-M predictions from each on the
//! unlabeled documents, optionally refreshes the network classifier's
//! input features from the freshly trained text model (feature sharing),
//! and rebuilds the pool as seeds plus both prediction sets. The loop
//! stops when the pool's document-to-label mapping repeats or the
//! iteration cap is reached.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, LabelSpace, SeedSet};
use crate::error::{Error, Result};
use crate::features::{feature_digest, EmbedStage, FeatureMatrix, Prediction};
use crate::gnn::{GnnConfig, NetworkClassifier, NodeFeatures};
use crate::network::TextRichNetwork;
use crate::ppr::{load_or_build_neighbor_table, NeighborTable, PprParams};
use crate::text::{TextModel, TextTrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelSource {
    Seed,
    Text,
    Gnn,
    /// Both models proposed the same label for the document.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    /// Class index into the label space.
    pub class: usize,
    pub confidence: f64,
    pub source: PseudoLabelSource,
}

/// The training set of one iteration: every seed document plus the pooled
/// confident predictions. Each document appears at most once; seed entries
/// carry confidence 1 and are never overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelPool {
    entries: BTreeMap<String, PoolEntry>,
    pub iteration: usize,
}

impl PseudoLabelPool {
    pub fn from_seeds(seeds: &SeedSet, labels: &LabelSpace) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (doc_id, label_id) in seeds.entries() {
            let class = labels.require_index(label_id)?;
            entries.insert(
                doc_id.clone(),
                PoolEntry { class, confidence: 1.0, source: PseudoLabelSource::Seed },
            );
        }
        Ok(PseudoLabelPool { entries, iteration: 0 })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&PoolEntry> {
        self.entries.get(doc_id)
    }

    /// Entries in ascending document-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &PoolEntry)> {
        self.entries.iter()
    }

    /// The document-to-class mapping, ignoring confidence and source; the
    /// stopping rule compares consecutive pools by this map.
    pub fn label_map(&self) -> BTreeMap<String, usize> {
        self.entries.iter().map(|(d, e)| (d.clone(), e.class)).collect()
    }

    pub fn count_by_source(&self, source: PseudoLabelSource) -> usize {
        self.entries.values().filter(|e| e.source == source).count()
    }
}

/// How many survivors to keep per predicted class after threshold
/// filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRule {
    /// Keep at most this many per class.
    TopM(usize),
    /// Keep the top fraction (0, 1] of each class's survivors, at least one.
    TopPercent(f64),
}

impl PoolRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            PoolRule::TopM(m) if *m >= 1 => Ok(()),
            PoolRule::TopM(m) => Err(Error::Parameter(format!("top_m must be at least 1, got {m}"))),
            PoolRule::TopPercent(p) if *p > 0.0 && *p <= 1.0 => Ok(()),
            PoolRule::TopPercent(p) => {
                Err(Error::Parameter(format!("top percent must be in (0, 1], got {p}")))
            }
        }
    }

    fn cap(&self, class_survivors: usize) -> usize {
        match self {
            PoolRule::TopM(m) => *m,
            PoolRule::TopPercent(p) => ((p * class_survivors as f64).ceil() as usize).max(1),
        }
    }
}

/// One confident prediction that survived filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub doc_id: String,
    pub class: usize,
    pub confidence: f64,
}

/// Drop predictions below the confidence threshold or in `exclude`, then
/// keep the strongest survivors per predicted class (ties broken by
/// ascending document id). The result is sorted by document id.
pub fn confident_predictions(
    predictions: &[(String, Prediction)],
    threshold: f64,
    rule: PoolRule,
    exclude: &BTreeSet<String>,
) -> Result<Vec<PseudoLabel>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "confidence threshold must be in (0, 1), got {threshold}"
        )));
    }
    rule.validate()?;
    let mut by_class: BTreeMap<usize, Vec<(&String, f64)>> = BTreeMap::new();
    for (doc_id, pred) in predictions {
        if pred.confidence >= threshold && !exclude.contains(doc_id) {
            by_class.entry(pred.class).or_default().push((doc_id, pred.confidence));
        }
    }
    let mut out = Vec::new();
    for (class, mut survivors) in by_class {
        survivors.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        survivors.truncate(rule.cap(survivors.len()));
        for (doc_id, confidence) in survivors {
            out.push(PseudoLabel { doc_id: doc_id.clone(), class, confidence });
        }
    }
    out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(out)
}

/// Rebuild the pool as seeds plus both prediction sets. A document both
/// models agree on is kept once with the higher confidence and source
/// `both`; on disagreement the higher confidence wins and an exact
/// confidence tie drops the document (feeding contradictory labels to both
/// trainers is strictly harmful). Seeds always win. Returns the pool and
/// the number of documents dropped by tie conflicts.
pub fn merge_pools(
    seeds: &SeedSet,
    labels: &LabelSpace,
    t1: &[PseudoLabel],
    t2: &[PseudoLabel],
) -> Result<(PseudoLabelPool, usize)> {
    let mut entries: BTreeMap<String, PoolEntry> = BTreeMap::new();
    for p in t1 {
        entries.insert(
            p.doc_id.clone(),
            PoolEntry { class: p.class, confidence: p.confidence, source: PseudoLabelSource::Text },
        );
    }
    let mut dropped = 0;
    for p in t2 {
        match entries.get_mut(&p.doc_id) {
            None => {
                entries.insert(
                    p.doc_id.clone(),
                    PoolEntry {
                        class: p.class,
                        confidence: p.confidence,
                        source: PseudoLabelSource::Gnn,
                    },
                );
            }
            Some(existing) if existing.class == p.class => {
                existing.confidence = existing.confidence.max(p.confidence);
                existing.source = PseudoLabelSource::Both;
            }
            Some(existing) => {
                if p.confidence > existing.confidence {
                    *existing = PoolEntry {
                        class: p.class,
                        confidence: p.confidence,
                        source: PseudoLabelSource::Gnn,
                    };
                } else if p.confidence == existing.confidence {
                    entries.remove(&p.doc_id);
                    dropped += 1;
                }
            }
        }
    }
    for (doc_id, label_id) in seeds.entries() {
        let class = labels.require_index(label_id)?;
        entries.insert(
            doc_id.clone(),
            PoolEntry { class, confidence: 1.0, source: PseudoLabelSource::Seed },
        );
    }
    Ok((PseudoLabelPool { entries, iteration: 0 }, dropped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoTrainConfig {
    pub confidence_threshold: f64,
    pub top_m_per_class: usize,
    /// When set, replaces the top-M rule with a top-fraction rule.
    pub top_percent: Option<f64>,
    pub max_iterations: usize,
    /// Refresh the network classifier's input features from the trained
    /// text model after each iteration.
    pub feature_sharing: bool,
    /// Continue training the previous iteration's models instead of
    /// re-initializing them (incremental mode).
    pub warm_start: bool,
    pub text: TextTrainConfig,
    pub gnn: GnnConfig,
    pub ppr: PprParams,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        CoTrainConfig {
            confidence_threshold: 0.9,
            top_m_per_class: 50,
            top_percent: None,
            max_iterations: 5,
            feature_sharing: true,
            warm_start: false,
            text: TextTrainConfig::default(),
            gnn: GnnConfig::default(),
            ppr: PprParams::default(),
        }
    }
}

impl CoTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "confidence threshold must be in (0, 1), got {}",
                self.confidence_threshold
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        self.pool_rule().validate()?;
        self.gnn.validate()?;
        self.ppr.validate()?;
        Ok(())
    }

    pub fn pool_rule(&self) -> PoolRule {
        match self.top_percent {
            Some(p) => PoolRule::TopPercent(p),
            None => PoolRule::TopM(self.top_m_per_class),
        }
    }
}

/// Optional facilities for one training run.
#[derive(Default)]
pub struct TrainEnvironment<'a> {
    /// Reuse an existing neighbor table instead of computing one.
    pub neighbor_table: Option<&'a NeighborTable>,
    /// Where to cache a freshly computed neighbor table.
    pub cache_dir: Option<&'a Path>,
    /// Per-iteration checkpoints and the trace file land here.
    pub run_dir: Option<&'a Path>,
    /// Labeled development documents; scored by the text model each
    /// iteration for the trace.
    pub dev: Option<&'a Corpus>,
}

/// One line of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Merged pool size after this iteration.
    pub pool_size: usize,
    pub seed_count: usize,
    pub text_count: usize,
    pub gnn_count: usize,
    pub both_count: usize,
    /// Confident predictions from each source before merging.
    pub text_confident: usize,
    pub gnn_confident: usize,
    /// Documents dropped because the two sources tied with different labels.
    pub dropped_conflicts: usize,
    /// Digest of the feature matrix the network classifier trained on.
    pub feature_digest: u64,
    pub text_train_seconds: f64,
    pub gnn_train_seconds: f64,
    pub dev_micro_f1: Option<f64>,
    /// Set on the final record: why the loop ended.
    pub stopped: Option<StopReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PoolUnchanged,
    MaxIterations,
}

pub struct JointTrainOutcome {
    /// The deployment classifier for new documents.
    pub text_model: Box<dyn TextModel>,
    pub gnn_model: NetworkClassifier,
    pub pool: PseudoLabelPool,
    pub trace: Vec<IterationRecord>,
}

impl std::fmt::Debug for JointTrainOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JointTrainOutcome")
            .field("pool", &self.pool)
            .field("trace", &self.trace)
            .finish_non_exhaustive()
    }
}

/// Builds a fresh text model from an iteration-indexed seed.
pub type TextModelFactory<'a> = dyn Fn(u64) -> Result<Box<dyn TextModel>> + 'a;

/// Write one JSON object per iteration record.
pub fn write_trace_jsonl(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_jsonl(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn dev_micro_f1(model: &dyn TextModel, dev: &Corpus, labels: &LabelSpace) -> Result<Option<f64>> {
    let mut gold = Vec::new();
    let mut docs = Vec::new();
    for doc in dev.iter() {
        if let Some(label_id) = &doc.gold_label {
            gold.push(labels.require_index(label_id)?);
            docs.push(doc);
        }
    }
    if docs.is_empty() {
        return Ok(None);
    }
    let preds = model.predict(&docs)?;
    let correct = preds.iter().zip(&gold).filter(|(p, g)| p.class == **g).count();
    Ok(Some(correct as f64 / docs.len() as f64))
}

/// Sanity checks on a freshly merged pool; violations are internal errors.
fn check_pool_invariants(
    pool: &PseudoLabelPool,
    seeds: &SeedSet,
    labels: &LabelSpace,
    threshold: f64,
    rule: PoolRule,
) -> Result<()> {
    for (doc_id, label_id) in seeds.entries() {
        let class = labels.require_index(label_id)?;
        match pool.get(doc_id) {
            Some(e)
                if e.class == class
                    && e.confidence == 1.0
                    && e.source == PseudoLabelSource::Seed => {}
            _ => {
                return Err(Error::Validation(format!(
                    "internal: seed document '{doc_id}' missing or altered in the pool"
                )));
            }
        }
    }
    let mut per_class_source: BTreeMap<(usize, bool), usize> = BTreeMap::new();
    for (doc_id, e) in pool.iter() {
        if e.source == PseudoLabelSource::Seed {
            continue;
        }
        if !(e.confidence >= threshold && e.confidence <= 1.0) {
            return Err(Error::Validation(format!(
                "internal: pooled document '{doc_id}' has confidence {} below threshold {threshold}",
                e.confidence
            )));
        }
        if matches!(e.source, PseudoLabelSource::Text | PseudoLabelSource::Both) {
            *per_class_source.entry((e.class, false)).or_insert(0) += 1;
        }
        if matches!(e.source, PseudoLabelSource::Gnn | PseudoLabelSource::Both) {
            *per_class_source.entry((e.class, true)).or_insert(0) += 1;
        }
    }
    if let PoolRule::TopM(m) = rule {
        for ((class, from_gnn), count) in per_class_source {
            if count > m {
                return Err(Error::Validation(format!(
                    "internal: class {class} holds {count} pseudo labels from {} (cap {m})",
                    if from_gnn { "the network classifier" } else { "the text classifier" }
                )));
            }
        }
    }
    Ok(())
}

pub fn run_joint_training(
    corpus: &Corpus,
    network: &TextRichNetwork,
    labels: &LabelSpace,
    seeds: &SeedSet,
    config: &CoTrainConfig,
    make_text_model: &TextModelFactory<'_>,
    env: &TrainEnvironment<'_>,
) -> Result<JointTrainOutcome> {
    config.validate()?;
    seeds.validate(corpus, labels)?;
    if labels.len() < 2 {
        return Err(Error::Parameter("need at least 2 classes".into()));
    }
    for doc in corpus.iter() {
        network.require_textual_node(&doc.id)?;
    }

    let built_table;
    let table: &NeighborTable = match env.neighbor_table {
        Some(t) => t,
        None => {
            let (t, _) = load_or_build_neighbor_table(network, &config.ppr, env.cache_dir)?;
            built_table = t;
            &built_table
        }
    };

    let all_docs: Vec<&Document> = corpus.iter().collect();
    let seed_docs: BTreeSet<String> = seeds.entries().keys().cloned().collect();
    // The unlabeled prediction set: every corpus document that is not a
    // seed. Held-out documents must simply not be in this corpus.
    let unlabeled: Vec<&Document> =
        all_docs.iter().copied().filter(|d| !seed_docs.contains(&d.id)).collect();
    let unlabeled_nodes: Vec<crate::network::NodeId> = unlabeled
        .iter()
        .map(|d| network.require_textual_node(&d.id))
        .collect::<Result<_>>()?;

    // Label-agnostic initial features from a reference model at the base
    // seed; per-iteration models use iteration-indexed seeds.
    let reference = make_text_model(config.text.rng_seed)?;
    if reference.n_classes() != labels.len() {
        return Err(Error::Parameter(format!(
            "text model factory produced {} classes for a {}-class label space",
            reference.n_classes(),
            labels.len()
        )));
    }
    let mut features: FeatureMatrix = reference.embed(&all_docs, EmbedStage::PreFinetune)?;
    drop(reference);

    let mut pool = PseudoLabelPool::from_seeds(seeds, labels)?;
    let mut prev_map: Option<BTreeMap<String, usize>> = None;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut text_model: Option<Box<dyn TextModel>> = None;
    let mut gnn_model: Option<NetworkClassifier> = None;
    let mut trace_writer = match env.run_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("trace.jsonl"))?))
        }
        None => None,
    };

    for iteration in 1..=config.max_iterations {
        let ctx = format!("iteration {iteration}");
        let wrap = |e: Error| e.with_context(&ctx);

        // Training examples from the current pool, ascending doc id.
        let mut text_examples: Vec<(&Document, usize)> = Vec::with_capacity(pool.len());
        let mut gnn_examples: Vec<(crate::network::NodeId, usize)> =
            Vec::with_capacity(pool.len());
        for (doc_id, entry) in pool.iter() {
            let doc = corpus.require(doc_id).map_err(wrap)?;
            text_examples.push((doc, entry.class));
            gnn_examples.push((network.require_textual_node(doc_id).map_err(wrap)?, entry.class));
        }

        // Fresh models with iteration-indexed seeds, unless warm-starting.
        let mut text = match (config.warm_start, text_model.take()) {
            (true, Some(m)) => m,
            _ => make_text_model(config.text.rng_seed.wrapping_add(iteration as u64))
                .map_err(wrap)?,
        };
        let mut gnn = match (config.warm_start, gnn_model.take()) {
            (true, Some(m)) => m,
            _ => {
                let mut gnn_config = config.gnn.clone();
                gnn_config.rng_seed = config.gnn.rng_seed.wrapping_add(iteration as u64);
                NetworkClassifier::new(features.dim(), labels.len(), gnn_config).map_err(wrap)?
            }
        };

        let started = Instant::now();
        text.train(&text_examples, &config.text).map_err(wrap)?;
        let text_train_seconds = started.elapsed().as_secs_f64();

        let node_features = NodeFeatures::from_matrix(network, &features).map_err(wrap)?;
        let gnn_feature_digest = feature_digest(&features);
        let started = Instant::now();
        gnn.train(&gnn_examples, table, &node_features).map_err(wrap)?;
        let gnn_train_seconds = started.elapsed().as_secs_f64();

        // Confident predictions on the unlabeled documents only.
        let text_predictions: Vec<(String, Prediction)> = unlabeled
            .iter()
            .map(|d| d.id.clone())
            .zip(text.predict(&unlabeled).map_err(wrap)?)
            .collect();
        let gnn_predictions: Vec<(String, Prediction)> = unlabeled
            .iter()
            .map(|d| d.id.clone())
            .zip(gnn.predict(&unlabeled_nodes, table, &node_features).map_err(wrap)?)
            .collect();
        let t1 = confident_predictions(
            &text_predictions,
            config.confidence_threshold,
            config.pool_rule(),
            &seed_docs,
        )
        .map_err(wrap)?;
        let t2 = confident_predictions(
            &gnn_predictions,
            config.confidence_threshold,
            config.pool_rule(),
            &seed_docs,
        )
        .map_err(wrap)?;

        if config.feature_sharing {
            features = text.embed(&all_docs, EmbedStage::PostFinetune).map_err(wrap)?;
        }

        let (merged, dropped_conflicts) = merge_pools(seeds, labels, &t1, &t2).map_err(wrap)?;
        let mut merged = merged;
        merged.iteration = iteration;
        check_pool_invariants(
            &merged,
            seeds,
            labels,
            config.confidence_threshold,
            config.pool_rule(),
        )
        .map_err(wrap)?;

        let dev_f1 = match env.dev {
            Some(dev) => dev_micro_f1(text.as_ref(), dev, labels).map_err(wrap)?,
            None => None,
        };

        let new_map = merged.label_map();
        let stopped = if prev_map.as_ref() == Some(&new_map) {
            Some(StopReason::PoolUnchanged)
        } else if iteration == config.max_iterations {
            Some(StopReason::MaxIterations)
        } else {
            None
        };

        let record = IterationRecord {
            iteration,
            pool_size: merged.len(),
            seed_count: merged.count_by_source(PseudoLabelSource::Seed),
            text_count: merged.count_by_source(PseudoLabelSource::Text),
            gnn_count: merged.count_by_source(PseudoLabelSource::Gnn),
            both_count: merged.count_by_source(PseudoLabelSource::Both),
            text_confident: t1.len(),
            gnn_confident: t2.len(),
            dropped_conflicts,
            feature_digest: gnn_feature_digest,
            text_train_seconds,
            gnn_train_seconds,
            dev_micro_f1: dev_f1,
            stopped,
        };
        if let Some(w) = &mut trace_writer {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        if let Some(dir) = env.run_dir {
            std::fs::write(
                dir.join(format!("text-iter-{iteration}.json")),
                text.to_checkpoint_json().map_err(wrap)?,
            )?;
            std::fs::write(
                dir.join(format!("gnn-iter-{iteration}.json")),
                gnn.to_checkpoint_json().map_err(wrap)?,
            )?;
        }
        trace.push(record);

        pool = merged;
        prev_map = Some(new_map);
        text_model = Some(text);
        gnn_model = Some(gnn);
        if trace.last().and_then(|r| r.stopped).is_some() {
            break;
        }
    }

    Ok(JointTrainOutcome {
        text_model: text_model.expect("max_iterations >= 1 guarantees one iteration"),
        gnn_model: gnn_model.expect("max_iterations >= 1 guarantees one iteration"),
        pool,
        trace,
    })
}
