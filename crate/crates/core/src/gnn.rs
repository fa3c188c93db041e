//! Attention classifier over score-weighted node neighborhoods.
//!
//! Per node `u` with input features `x_u`, a two-layer transform produces
//! `h_u = act(W2 act(W1 x_u + b1) + b2)`. For a source `i` with neighborhood
//! `N(i)` (textual nodes with walk scores `P_ij`), attention weights are
//! `alpha_ij = sigmoid((Wq h_i) . (Wk h_j))` and the aggregate is
//! `z_i = act(sum_j alpha_ij * P_ij * h_j)`, classified by a softmax head
//! `Wc z_i + bc`. Scores enter raw by default; an option renormalizes each
//! neighborhood's scores to sum to one.
//!
//! All parameters live in one flat vector in the order
//! `[W1, b1, W2, b2, Wq, Wk, Wc, bc]` (matrices row-major), so the analytic
//! gradient can be checked coordinate-by-coordinate against finite
//! differences. Neighbor aggregation always runs in ascending node-id order,
//! making every output invariant to the order neighborhoods are listed in.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{prediction_from_probabilities, softmax_in_place, FeatureMatrix, Prediction};
use crate::network::{NodeId, TextRichNetwork};
use crate::optim::{Adam, AdamConfig};
use crate::ppr::NeighborTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// max(0, x); derivative taken as 0 at the kink.
    Rectifier,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Rectifier => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnConfig {
    pub hidden_dim: usize,
    pub activation: Activation,
    /// When set, each neighborhood's scores are divided by their sum before
    /// weighting; raw scores are used otherwise.
    pub renormalize_scores: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds both the parameter initialization (stream 0) and the batch
    /// shuffling during training (stream 1).
    pub rng_seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            hidden_dim: 64,
            activation: Activation::Rectifier,
            renormalize_scores: false,
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 64,
            rng_seed: 0,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Parameter("hidden_dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        AdamConfig::with_learning_rate(self.learning_rate).validate()
    }
}

/// Per-node feature rows addressed by node id, resolved from a
/// document-keyed [`FeatureMatrix`] against a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    dim: usize,
    rows: HashMap<NodeId, Vec<f64>>,
}

impl NodeFeatures {
    pub fn new(dim: usize) -> Self {
        NodeFeatures { dim, rows: HashMap::new() }
    }

    pub fn insert(&mut self, node: NodeId, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Validation(format!(
                "feature row for node {node} has width {}, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.rows.insert(node, row);
        Ok(())
    }

    /// Resolve each document row to its textual node. Documents unknown to
    /// the network are an error.
    pub fn from_matrix(net: &TextRichNetwork, matrix: &FeatureMatrix) -> Result<Self> {
        let mut out = NodeFeatures::new(matrix.dim());
        for (doc_id, row) in matrix.iter() {
            let node = net.require_textual_node(doc_id)?;
            out.rows.insert(node, row.to_vec());
        }
        Ok(out)
    }

    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.rows.get(&node).map(Vec::as_slice)
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
}

/// Offsets of each parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    input: usize,
    hidden: usize,
    classes: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wq: usize,
    wk: usize,
    wc: usize,
    bc: usize,
    total: usize,
}

impl Layout {
    fn new(input: usize, hidden: usize, classes: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + hidden * input;
        let w2 = b1 + hidden;
        let b2 = w2 + hidden * hidden;
        let wq = b2 + hidden;
        let wk = wq + hidden * hidden;
        let wc = wk + hidden * hidden;
        let bc = wc + classes * hidden;
        let total = bc + classes;
        Layout { input, hidden, classes, w1, b1, w2, b2, wq, wk, wc, bc, total }
    }
}

fn matvec_into(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        *o = w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// out += W^T g
fn add_matvec_transpose(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr != 0.0 {
            for (c, wv) in w[r * cols..(r + 1) * cols].iter().enumerate() {
                out[c] += wv * gr;
            }
        }
    }
}

/// gw += g x^T
fn add_outer(gw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (r, gr) in g.iter().enumerate() {
        if *gr != 0.0 {
            for (c, xv) in x.iter().enumerate() {
                gw[r * cols + c] += gr * xv;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the transform computes for one node, cached per batch.
struct NodeCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h: Vec<f64>,
    k: Vec<f64>,
}

/// Forward state for one source, kept for the backward pass.
struct SourceForward {
    neighbors: Vec<(NodeId, f64)>,
    alphas: Vec<f64>,
    q: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub batches_run: usize,
    /// Mean batch loss over the final epoch; `None` when `epochs` is 0.
    pub final_loss: Option<f64>,
}

/// The neighborhood attention classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkClassifier {
    config: GnnConfig,
    input_dim: usize,
    n_classes: usize,
    layout: Layout,
    params: Vec<f64>,
}

impl NetworkClassifier {
    /// Initialize with uniform Xavier weights (`+-sqrt(6 / (fan_in +
    /// fan_out))`) drawn in block order `W1, W2, Wq, Wk, Wc`; biases start
    /// at zero.
    pub fn new(input_dim: usize, n_classes: usize, config: GnnConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Parameter("input feature width must be at least 1".into()));
        }
        if n_classes < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        let layout = Layout::new(input_dim, config.hidden_dim, n_classes);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha20Rng::seed_from_u64(config.rng_seed);
        let h = config.hidden_dim;
        let blocks: [(usize, usize, usize, usize); 5] = [
            (layout.w1, h * input_dim, input_dim, h),
            (layout.w2, h * h, h, h),
            (layout.wq, h * h, h, h),
            (layout.wk, h * h, h, h),
            (layout.wc, n_classes * h, h, n_classes),
        ];
        for (offset, len, fan_in, fan_out) in blocks {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[offset..offset + len] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(NetworkClassifier { config, input_dim, n_classes, layout, params })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(Error::Parameter(format!(
                "expected {} parameters, got {}",
                self.layout.total,
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn transform_node(&self, x: &[f64]) -> NodeCache {
        let l = &self.layout;
        let act = self.config.activation;
        let mut a1 = vec![0.0; l.hidden];
        matvec_into(&self.params[l.w1..l.b1], l.hidden, l.input, x, &mut a1);
        for (v, b) in a1.iter_mut().zip(&self.params[l.b1..l.w2]) {
            *v += b;
        }
        let h1: Vec<f64> = a1.iter().map(|&v| act.apply(v)).collect();
        let mut a2 = vec![0.0; l.hidden];
        matvec_into(&self.params[l.w2..l.b2], l.hidden, l.hidden, &h1, &mut a2);
        for (v, b) in a2.iter_mut().zip(&self.params[l.b2..l.wq]) {
            *v += b;
        }
        let h: Vec<f64> = a2.iter().map(|&v| act.apply(v)).collect();
        let mut k = vec![0.0; l.hidden];
        matvec_into(&self.params[l.wk..l.wc], l.hidden, l.hidden, &h, &mut k);
        NodeCache { x: x.to_vec(), a1, h1, a2, h, k }
    }

    /// Cache transforms for every node a batch touches, keyed by node id.
    fn batch_caches(
        &self,
        sources: &[NodeId],
        table: &NeighborTable,
        feats: &NodeFeatures,
    ) -> Result<(Vec<NodeId>, HashMap<NodeId, usize>, Vec<NodeCache>)> {
        if feats.dim() != self.input_dim {
            return Err(Error::Validation(format!(
                "feature width {} does not match model input width {}",
                feats.dim(),
                self.input_dim
            )));
        }
        let mut wanted: BTreeSet<NodeId> = BTreeSet::new();
        for &s in sources {
            wanted.insert(s);
            let row = table
                .neighborhood(s)
                .ok_or_else(|| Error::Validation(format!("no neighborhood for node {s}")))?;
            wanted.extend(row.iter().map(|&(v, _)| v));
        }
        let nodes: Vec<NodeId> = wanted.into_iter().collect();
        let mut caches = Vec::with_capacity(nodes.len());
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, &u) in nodes.iter().enumerate() {
            let x = feats
                .get(u)
                .ok_or_else(|| Error::Validation(format!("no feature row for node {u}")))?;
            caches.push(self.transform_node(x));
            index.insert(u, i);
        }
        Ok((nodes, index, caches))
    }

    /// Forward one source given the batch caches. Neighbors are visited in
    /// ascending node-id order.
    fn forward_source(
        &self,
        source: NodeId,
        table: &NeighborTable,
        index: &HashMap<NodeId, usize>,
        caches: &[NodeCache],
    ) -> SourceForward {
        let l = &self.layout;
        let act = self.config.activation;
        let mut neighbors: Vec<(NodeId, f64)> =
            table.neighborhood(source).expect("checked in batch_caches").to_vec();
        neighbors.sort_unstable_by_key(|&(v, _)| v);
        if self.config.renormalize_scores {
            let total: f64 = neighbors.iter().map(|&(_, p)| p).sum();
            if total > 0.0 {
                for (_, p) in &mut neighbors {
                    *p /= total;
                }
            }
        }
        let hi = &caches[index[&source]].h;
        let mut q = vec![0.0; l.hidden];
        matvec_into(&self.params[l.wq..l.wk], l.hidden, l.hidden, hi, &mut q);
        let mut s = vec![0.0; l.hidden];
        let mut alphas = Vec::with_capacity(neighbors.len());
        for &(v, p) in &neighbors {
            let cache = &caches[index[&v]];
            let alpha = sigmoid(dot(&q, &cache.k));
            alphas.push(alpha);
            let coef = alpha * p;
            for (sv, hv) in s.iter_mut().zip(&cache.h) {
                *sv += coef * hv;
            }
        }
        let z: Vec<f64> = s.iter().map(|&v| act.apply(v)).collect();
        let mut logits = vec![0.0; l.classes];
        matvec_into(&self.params[l.wc..l.bc], l.classes, l.hidden, &z, &mut logits);
        for (v, b) in logits.iter_mut().zip(&self.params[l.bc..l.total]) {
            *v += b;
        }
        softmax_in_place(&mut logits);
        SourceForward { neighbors, alphas, q, s, z, probabilities: logits }
    }

    /// Attention weights the model assigns to one source's neighbors, in
    /// ascending node-id order — a diagnostic for inspecting what the
    /// aggregation attends to. Every weight lies strictly inside (0, 1).
    pub fn attention_weights(
        &self,
        source: NodeId,
        table: &NeighborTable,
        feats: &NodeFeatures,
    ) -> Result<Vec<(NodeId, f64)>> {
        let (_, index, caches) = self.batch_caches(&[source], table, feats)?;
        let fwd = self.forward_source(source, table, &index, &caches);
        Ok(fwd.neighbors.iter().map(|&(v, _)| v).zip(fwd.alphas.iter().copied()).collect())
    }

    pub fn predict(
        &self,
        sources: &[NodeId],
        table: &NeighborTable,
        feats: &NodeFeatures,
    ) -> Result<Vec<Prediction>> {
        let (_, index, caches) = self.batch_caches(sources, table, feats)?;
        Ok(sources
            .iter()
            .map(|&s| {
                let fwd = self.forward_source(s, table, &index, &caches);
                prediction_from_probabilities(fwd.probabilities)
            })
            .collect())
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// the flat parameter vector.
    pub fn loss_and_grad(
        &self,
        examples: &[(NodeId, usize)],
        table: &NeighborTable,
        feats: &NodeFeatures,
    ) -> Result<(f64, Vec<f64>)> {
        if examples.is_empty() {
            return Err(Error::Parameter("loss requires a non-empty batch".into()));
        }
        for &(node, class) in examples {
            if class >= self.n_classes {
                return Err(Error::Validation(format!(
                    "class index {class} out of range for {} classes (node {node})",
                    self.n_classes
                )));
            }
        }
        let sources: Vec<NodeId> = examples.iter().map(|&(n, _)| n).collect();
        let (nodes, index, caches) = self.batch_caches(&sources, table, feats)?;
        let l = &self.layout;
        let act = self.config.activation;
        let inv_batch = 1.0 / examples.len() as f64;

        let mut grad = vec![0.0; l.total];
        let mut g_h = vec![vec![0.0; l.hidden]; nodes.len()];
        let mut loss = 0.0;

        for &(source, target) in examples {
            let fwd = self.forward_source(source, table, &index, &caches);
            loss -= fwd.probabilities[target].max(f64::MIN_POSITIVE).ln();

            // d loss / d logits for the mean cross-entropy.
            let mut dlogits = fwd.probabilities.clone();
            dlogits[target] -= 1.0;
            for v in &mut dlogits {
                *v *= inv_batch;
            }

            add_outer(&mut grad[l.wc..l.bc], l.hidden, &dlogits, &fwd.z);
            for (gb, dv) in grad[l.bc..l.total].iter_mut().zip(&dlogits) {
                *gb += dv;
            }
            let mut g_z = vec![0.0; l.hidden];
            add_matvec_transpose(
                &self.params[l.wc..l.bc],
                l.classes,
                l.hidden,
                &dlogits,
                &mut g_z,
            );
            let g_s: Vec<f64> = g_z
                .iter()
                .zip(&fwd.s)
                .map(|(g, pre)| g * act.derivative(*pre))
                .collect();

            let src_idx = index[&source];
            let mut g_q = vec![0.0; l.hidden];
            for (ni, &(v, p)) in fwd.neighbors.iter().enumerate() {
                let nidx = index[&v];
                let cache = &caches[nidx];
                let alpha = fwd.alphas[ni];
                let coef = alpha * p;
                // z-sum path into h_j.
                for (gh, gs) in g_h[nidx].iter_mut().zip(&g_s) {
                    *gh += coef * gs;
                }
                // Attention path.
                let g_alpha = dot(&g_s, &cache.h) * p;
                let g_u = g_alpha * alpha * (1.0 - alpha);
                if g_u != 0.0 {
                    for (gq, kv) in g_q.iter_mut().zip(&cache.k) {
                        *gq += g_u * kv;
                    }
                    // k_j = Wk h_j.
                    let g_k: Vec<f64> = fwd.q.iter().map(|qv| g_u * qv).collect();
                    add_outer(&mut grad[l.wk..l.wc], l.hidden, &g_k, &cache.h);
                    add_matvec_transpose(
                        &self.params[l.wk..l.wc],
                        l.hidden,
                        l.hidden,
                        &g_k,
                        &mut g_h[nidx],
                    );
                }
            }
            // q = Wq h_i.
            add_outer(&mut grad[l.wq..l.wk], l.hidden, &g_q, &caches[src_idx].h);
            add_matvec_transpose(
                &self.params[l.wq..l.wk],
                l.hidden,
                l.hidden,
                &g_q,
                &mut g_h[src_idx],
            );
        }

        // Back through the shared two-layer transform, once per unique node,
        // in ascending node-id order.
        for (i, cache) in caches.iter().enumerate() {
            let g_a2: Vec<f64> = g_h[i]
                .iter()
                .zip(&cache.a2)
                .map(|(g, pre)| g * act.derivative(*pre))
                .collect();
            if g_a2.iter().all(|&v| v == 0.0) {
                continue;
            }
            add_outer(&mut grad[l.w2..l.b2], l.hidden, &g_a2, &cache.h1);
            for (gb, gv) in grad[l.b2..l.wq].iter_mut().zip(&g_a2) {
                *gb += gv;
            }
            let mut g_h1 = vec![0.0; l.hidden];
            add_matvec_transpose(&self.params[l.w2..l.b2], l.hidden, l.hidden, &g_a2, &mut g_h1);
            let g_a1: Vec<f64> = g_h1
                .iter()
                .zip(&cache.a1)
                .map(|(g, pre)| g * act.derivative(*pre))
                .collect();
            add_outer(&mut grad[l.w1..l.b1], l.input, &g_a1, &cache.x);
            for (gb, gv) in grad[l.b1..l.w2].iter_mut().zip(&g_a1) {
                *gb += gv;
            }
        }

        Ok((loss * inv_batch, grad))
    }

    /// Smallest |pre-activation| any rectifier sees on this batch, or
    /// infinity for the identity activation. Finite-difference gradient
    /// checks are only trustworthy when this margin safely exceeds the
    /// perturbation's reach.
    pub fn kink_margin(
        &self,
        examples: &[(NodeId, usize)],
        table: &NeighborTable,
        feats: &NodeFeatures,
    ) -> Result<f64> {
        if self.config.activation == Activation::Identity {
            return Ok(f64::INFINITY);
        }
        let sources: Vec<NodeId> = examples.iter().map(|&(n, _)| n).collect();
        let (_, index, caches) = self.batch_caches(&sources, table, feats)?;
        let mut margin = f64::INFINITY;
        for cache in &caches {
            for v in cache.a1.iter().chain(&cache.a2) {
                margin = margin.min(v.abs());
            }
        }
        for &s in &sources {
            let fwd = self.forward_source(s, table, &index, &caches);
            for v in &fwd.s {
                margin = margin.min(v.abs());
            }
        }
        Ok(margin)
    }

    /// Adam training on shuffled mini-batches. Shuffling draws from stream 1
    /// of the seeded generator so it is independent of the initialization
    /// draws; repeated runs from the same seed are bitwise identical.
    pub fn train(
        &mut self,
        examples: &[(NodeId, usize)],
        table: &NeighborTable,
        feats: &NodeFeatures,
    ) -> Result<TrainReport> {
        use rand::seq::SliceRandom;
        if examples.is_empty() {
            return Err(Error::Training("training requires at least one example".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.config.rng_seed);
        rng.set_stream(1);
        let mut adam =
            Adam::new(self.layout.total, AdamConfig::with_learning_rate(self.config.learning_rate))?;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut batches_run = 0;
        let mut final_loss = None;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut epoch_batches = 0;
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<(NodeId, usize)> = chunk.iter().map(|&i| examples[i]).collect();
                let (loss, grad) = self.loss_and_grad(&batch, table, feats)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "loss became non-finite at epoch {epoch}; try a smaller learning rate \
                         than {}",
                        self.config.learning_rate
                    )));
                }
                adam.step(&mut self.params, &grad);
                epoch_loss += loss;
                epoch_batches += 1;
            }
            batches_run += epoch_batches;
            final_loss = Some(epoch_loss / epoch_batches as f64);
        }
        Ok(TrainReport { epochs_run: self.config.epochs, batches_run, final_loss })
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let ck = GnnCheckpoint {
            kind: CHECKPOINT_KIND.into(),
            version: CHECKPOINT_VERSION,
            config: self.config,
            input_dim: self.input_dim,
            n_classes: self.n_classes,
            params: self.params.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let ck: GnnCheckpoint = serde_json::from_str(json)?;
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Validation(format!(
                "checkpoint kind '{}' is not '{CHECKPOINT_KIND}'",
                ck.kind
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        ck.config.validate()?;
        let layout = Layout::new(ck.input_dim, ck.config.hidden_dim, ck.n_classes);
        if ck.params.len() != layout.total {
            return Err(Error::Validation(format!(
                "checkpoint has {} parameters, layout needs {}",
                ck.params.len(),
                layout.total
            )));
        }
        Ok(NetworkClassifier {
            config: ck.config,
            input_dim: ck.input_dim,
            n_classes: ck.n_classes,
            layout,
            params: ck.params,
        })
    }
}

const CHECKPOINT_KIND: &str = "network_classifier";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GnnCheckpoint {
    kind: String,
    version: u32,
    config: GnnConfig,
    input_dim: usize,
    n_classes: usize,
    params: Vec<f64>,
}
