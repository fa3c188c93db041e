//! Personalized PageRank by residual push, top-K textual neighborhood
//! extraction, and a cached per-document neighbor table.
//!
//! The push solver maintains an estimate `p` and residual `r` with the
//! invariant `p + (1-beta) * (I - beta * W D^-1)^-1 r = pi_exact`, pushing
//! nodes whose residual exceeds a threshold times their weighted degree.
//! Thresholds descend through the phase sequence `epsilon * 2^j` for
//! `j = J..0` (`J` minimal with `epsilon * 2^J >= 1`). Because halving
//! `epsilon` extends that sequence by exactly one final phase and the solver
//! is otherwise deterministic (ascending-id seeding, FIFO queue, CSR-order
//! pushes), a run at `epsilon / 2` replays the run at `epsilon` bit for bit
//! and then refines it: accuracy is monotone in `epsilon` by construction.
//!
//! Exit guarantees, checked by tests against a dense solver:
//! * `r[u] <= epsilon * degree(u)` for every node;
//! * `p` underestimates the exact score entrywise, hence
//!   `||p - pi_exact||_1 = 1 - sum(p) <= epsilon * volume`.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, TextRichNetwork};

/// Random-walk view of an undirected weighted graph in CSR form. Nodes with
/// no incident edges receive a unit self-loop so every column of the walk
/// matrix is stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStructure {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    weights: Vec<f64>,
    degree: Vec<f64>,
    volume: f64,
}

impl TransitionStructure {
    /// Build from an explicit undirected edge list over nodes `0..n`.
    /// Self-loops contribute their weight to the degree once.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Parameter(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Parameter(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            adj[u as usize].push((v, w));
            if u != v {
                adj[v as usize].push((u, w));
            }
        }
        Ok(Self::from_adjacency(adj))
    }

    pub fn from_network(net: &TextRichNetwork) -> Self {
        let n = net.node_count();
        let mut adj: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
        for e in net.edges() {
            adj[e.u as usize].push((e.v, e.weight));
            adj[e.v as usize].push((e.u, e.weight));
        }
        Self::from_adjacency(adj)
    }

    fn from_adjacency(mut adj: Vec<Vec<(NodeId, f64)>>) -> Self {
        for (u, row) in adj.iter_mut().enumerate() {
            if row.is_empty() {
                row.push((u as NodeId, 1.0));
            }
            row.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut degree = Vec::with_capacity(n);
        let mut volume = 0.0;
        offsets.push(0);
        for row in &adj {
            let mut d = 0.0;
            for &(v, w) in row {
                targets.push(v);
                weights.push(w);
                d += w;
            }
            degree.push(d);
            volume += d;
            offsets.push(targets.len());
        }
        TransitionStructure { offsets, targets, weights, degree, volume }
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    pub fn degree(&self, u: NodeId) -> f64 {
        self.degree[u as usize]
    }

    /// Sum of weighted degrees (each undirected edge counted from both ends).
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn neighbors(&self, u: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let lo = self.offsets[u as usize];
        let hi = self.offsets[u as usize + 1];
        self.targets[lo..hi].iter().copied().zip(self.weights[lo..hi].iter().copied())
    }
}

/// Result of one push solve from a single source.
#[derive(Debug, Clone, PartialEq)]
pub struct PprOutcome {
    /// Score estimate per node; underestimates the exact distribution.
    pub scores: Vec<f64>,
    /// Residual per node at exit; each entry is at most `epsilon * degree`.
    pub residual: Vec<f64>,
    /// Distinct nodes that ever held residual mass.
    pub touched: usize,
    /// Number of push operations performed.
    pub pushes: usize,
}

impl PprOutcome {
    /// Certified upper bound on the L1 error: the residual mass not yet
    /// converted into score.
    pub fn l1_error_bound(&self) -> f64 {
        1.0 - self.scores.iter().sum::<f64>()
    }
}

fn check_walk_params(beta: f64, epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) || !beta.is_finite() {
        return Err(Error::Parameter(format!(
            "walk restart weight beta must satisfy 0 <= beta < 1, got {beta}"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Parameter(format!("push tolerance epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Approximate the personalized PageRank distribution of `source` by
/// residual push with phased thresholds. See the module docs for the exit
/// guarantees and the determinism/refinement contract.
pub fn ppr_push(
    t: &TransitionStructure,
    source: NodeId,
    beta: f64,
    epsilon: f64,
) -> Result<PprOutcome> {
    check_walk_params(beta, epsilon)?;
    let n = t.node_count();
    if source as usize >= n {
        return Err(Error::Parameter(format!("source node {source} out of range for {n} nodes")));
    }

    let mut p = vec![0.0f64; n];
    let mut r = vec![0.0f64; n];
    r[source as usize] = 1.0;
    let mut touched_flag = vec![false; n];
    touched_flag[source as usize] = true;
    let mut touched: Vec<NodeId> = vec![source];
    let mut pushes = 0usize;

    // Phase thresholds epsilon * 2^J .. epsilon, built by exact doubling.
    let mut thresholds = vec![epsilon];
    while *thresholds.last().unwrap() < 1.0 {
        let next = thresholds.last().unwrap() * 2.0;
        thresholds.push(next);
    }
    thresholds.reverse();

    let mut queue: VecDeque<NodeId> = VecDeque::new();
    let mut in_queue = vec![false; n];

    for &theta in &thresholds {
        // Seed the phase in ascending node-id order for determinism.
        let mut seed: Vec<NodeId> =
            touched.iter().copied().filter(|&u| r[u as usize] > theta * t.degree(u)).collect();
        seed.sort_unstable();
        for u in seed {
            in_queue[u as usize] = true;
            queue.push_back(u);
        }
        while let Some(u) = queue.pop_front() {
            in_queue[u as usize] = false;
            let ru = r[u as usize];
            if ru <= theta * t.degree(u) {
                continue;
            }
            p[u as usize] += (1.0 - beta) * ru;
            r[u as usize] = 0.0;
            pushes += 1;
            if beta == 0.0 {
                continue;
            }
            let scale = beta * ru / t.degree(u);
            for (v, w) in t.neighbors(u) {
                let vi = v as usize;
                r[vi] += scale * w;
                if !touched_flag[vi] {
                    touched_flag[vi] = true;
                    touched.push(v);
                }
                if r[vi] > theta * t.degree(v) && !in_queue[vi] {
                    in_queue[vi] = true;
                    queue.push_back(v);
                }
            }
        }
    }

    Ok(PprOutcome { scores: p, residual: r, touched: touched.len(), pushes })
}

/// Keep the `k` highest-scoring textual nodes with strictly positive score,
/// ties broken by ascending node id. The source itself is eligible.
pub fn topk_textual(net: &TextRichNetwork, scores: &[f64], k: usize) -> Vec<(NodeId, f64)> {
    let mut ranked: Vec<(NodeId, f64)> = net
        .textual_content()
        .keys()
        .map(|&u| (u, scores[u as usize]))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    ranked.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1).expect("scores are finite").then(a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    ranked
}

/// Parameters of the neighborhood computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprParams {
    /// Walk continuation probability (restart weight is `1 - beta`).
    pub beta: f64,
    /// Push tolerance.
    pub epsilon: f64,
    /// Neighborhood size cap.
    pub top_k: usize,
}

impl Default for PprParams {
    fn default() -> Self {
        PprParams { beta: 0.85, epsilon: 1e-4, top_k: 50 }
    }
}

impl PprParams {
    pub fn validate(&self) -> Result<()> {
        check_walk_params(self.beta, self.epsilon)?;
        if self.top_k == 0 {
            return Err(Error::Parameter("neighborhood size top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Top-K textual neighborhood per textual source node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborTable {
    entries: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl NeighborTable {
    /// Build a table directly from per-source neighbor rows — for importing
    /// neighborhoods computed by an external tool or constructing synthetic
    /// instances. Scores must be finite and non-negative; each row is
    /// re-sorted (descending score, ties by ascending id) to restore the
    /// table's ordering invariant.
    pub fn from_rows(
        rows: impl IntoIterator<Item = (NodeId, Vec<(NodeId, f64)>)>,
    ) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (source, mut row) in rows {
            for &(v, s) in &row {
                if !s.is_finite() || s < 0.0 {
                    return Err(Error::Validation(format!(
                        "neighbor {v} of source {source} has invalid score {s}"
                    )));
                }
            }
            row.sort_unstable_by(|a, b| {
                b.1.partial_cmp(&a.1).expect("scores are finite").then(a.0.cmp(&b.0))
            });
            if entries.insert(source, row).is_some() {
                return Err(Error::Validation(format!("duplicate source id {source}")));
            }
        }
        Ok(NeighborTable { entries })
    }

    pub fn neighborhood(&self, source: NodeId) -> Option<&[(NodeId, f64)]> {
        self.entries.get(&source).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &[(NodeId, f64)])> {
        self.entries.iter().map(|(&s, row)| (s, row.as_slice()))
    }

    /// One line per source: the source id followed by alternating
    /// neighbor-id and score fields, tab-separated. Scores print in
    /// shortest round-trip form, so reloading is bitwise exact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (source, row) in &self.entries {
            write!(out, "{source}")?;
            for (v, s) in row {
                write!(out, "\t{v}\t{s}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = BTreeMap::new();
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
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() % 2 == 0 {
                return Err(parse_err(
                    "expected a source id followed by neighbor/score pairs".into(),
                ));
            }
            let source: NodeId = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("invalid source id '{}'", fields[0])))?;
            let mut row = Vec::with_capacity((fields.len() - 1) / 2);
            for pair in fields[1..].chunks(2) {
                let v: NodeId = pair[0]
                    .parse()
                    .map_err(|_| parse_err(format!("invalid neighbor id '{}'", pair[0])))?;
                let s: f64 = pair[1]
                    .parse()
                    .map_err(|_| parse_err(format!("invalid score '{}'", pair[1])))?;
                row.push((v, s));
            }
            if entries.insert(source, row).is_some() {
                return Err(parse_err(format!("duplicate source id {source}")));
            }
        }
        Ok(NeighborTable { entries })
    }

    /// Cache file name for a given network and parameter setting. Parameters
    /// enter through their exact bit patterns, so any change invalidates.
    pub fn cache_file_name(network_hash: &str, params: &PprParams) -> String {
        format!(
            "neighbors-{}-b{:016x}-e{:016x}-k{}.tsv",
            network_hash,
            params.beta.to_bits(),
            params.epsilon.to_bits(),
            params.top_k
        )
    }
}

/// Compute the neighbor table for every textual node, in parallel over
/// sources. Output is independent of thread scheduling: each source's solve
/// is self-contained and rows are keyed by node id.
pub fn build_neighbor_table(net: &TextRichNetwork, params: &PprParams) -> Result<NeighborTable> {
    params.validate()?;
    let t = TransitionStructure::from_network(net);
    let sources = net.textual_nodes();
    let rows: Result<Vec<(NodeId, Vec<(NodeId, f64)>)>> = sources
        .par_iter()
        .map(|&s| {
            let out = ppr_push(&t, s, params.beta, params.epsilon)?;
            Ok((s, topk_textual(net, &out.scores, params.top_k)))
        })
        .collect();
    Ok(NeighborTable { entries: rows?.into_iter().collect() })
}

/// Load the neighbor table from `cache_dir` when a file for this exact
/// network and parameter setting exists; otherwise build and, if a cache
/// directory is given, save it. A corrupt cache file is reported as a parse
/// error rather than silently rebuilt.
pub fn load_or_build_neighbor_table(
    net: &TextRichNetwork,
    params: &PprParams,
    cache_dir: Option<&Path>,
) -> Result<(NeighborTable, Option<PathBuf>)> {
    params.validate()?;
    let cache_path = cache_dir
        .map(|dir| dir.join(NeighborTable::cache_file_name(&net.content_hash(), params)));
    if let Some(path) = &cache_path {
        if path.exists() {
            return Ok((NeighborTable::load(path)?, cache_path));
        }
    }
    let table = build_neighbor_table(net, params)?;
    if let Some(path) = &cache_path {
        std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
        table.save(path)?;
    }
    Ok((table, cache_path))
}
