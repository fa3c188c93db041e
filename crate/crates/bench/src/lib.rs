//! Shared fixture builders for the criterion benchmarks: a random sparse
//! transition structure for the walk-propagation benchmark, and a realistic
//! planted network/classifier setup for the attention benchmarks.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tricat_core::{
    build_network, build_neighbor_table, generate_synthetic, mine_phrases, Corpus, FeatureMatrix,
    GnnConfig, LabelSpace, NeighborTable, NetworkClassifier, NodeFeatures, NodeId, PprParams,
    SynthSpec, TextRichNetwork, TransitionStructure,
};

/// A connected-ish random graph with roughly `avg_degree` edges per node,
/// unit weights, no duplicate pairs.
pub fn random_transition(n: u32, avg_degree: usize, seed: u64) -> TransitionStructure {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    // A ring keeps every node reachable.
    for u in 0..n {
        let v = (u + 1) % n;
        pairs.insert((u.min(v), u.max(v)));
    }
    let target = n as usize * avg_degree / 2;
    while pairs.len() < target {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            pairs.insert((u.min(v), u.max(v)));
        }
    }
    let edges: Vec<(NodeId, NodeId, f64)> =
        pairs.into_iter().map(|(u, v)| (u, v, 1.0)).collect();
    TransitionStructure::from_edges(n as usize, &edges).expect("valid random graph")
}

pub fn synthetic_corpus() -> (Corpus, LabelSpace) {
    generate_synthetic(&SynthSpec {
        n_classes: 3,
        docs_per_class: 40,
        rng_seed: 9,
        ..SynthSpec::default()
    })
    .expect("valid spec")
}

pub fn synthetic_network(corpus: &Corpus, labels: &LabelSpace) -> TextRichNetwork {
    let phrases = mine_phrases(corpus, 5, 3).expect("mining succeeds");
    build_network(corpus, &phrases, labels).expect("network builds")
}

pub struct GnnFixture {
    pub model: NetworkClassifier,
    pub table: NeighborTable,
    pub features: NodeFeatures,
    pub examples: Vec<(NodeId, usize)>,
}

pub fn gnn_fixture() -> GnnFixture {
    let (corpus, labels) = synthetic_corpus();
    let network = synthetic_network(&corpus, &labels);
    let params = PprParams { beta: 0.85, epsilon: 1e-3, top_k: 20 };
    let table = build_neighbor_table(&network, &params).expect("table builds");

    let dim = 32;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut matrix = FeatureMatrix::new(dim);
    for doc in corpus.iter() {
        let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        matrix.insert(doc.id.clone(), row).expect("width matches");
    }
    let features = NodeFeatures::from_matrix(&network, &matrix).expect("features map");

    let config = GnnConfig {
        hidden_dim: 32,
        epochs: 1,
        batch_size: 16,
        ..GnnConfig::default()
    };
    let model = NetworkClassifier::new(dim, labels.len(), config).expect("model builds");

    let examples: Vec<(NodeId, usize)> = corpus
        .iter()
        .map(|doc| {
            let node = network.require_textual_node(&doc.id).expect("doc node exists");
            let class = labels
                .class_index(doc.gold_label.as_deref().expect("synth docs are labeled"))
                .expect("label known");
            (node, class)
        })
        .collect();

    GnnFixture { model, table, features, examples }
}
