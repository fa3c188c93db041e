//! Core library for classifying documents embedded in a text-rich network.
//!
//! Pipeline: load a corpus ([`corpus`]), mine phrases ([`phrases`]) and build
//! a heterogeneous network ([`network`]), compute personalized-PageRank
//! neighborhoods ([`ppr`]), then co-train a neighborhood attention classifier
//! ([`gnn`]) with a text classifier ([`text`]) through shared pseudo labels
//! and features ([`cotrain`]). Evaluation and synthetic-data helpers live in
//! [`eval`].

pub mod corpus;
pub mod cotrain;
pub mod error;
pub mod eval;
pub mod features;
pub mod gnn;
pub mod network;
pub mod optim;
pub mod phrases;
pub mod ppr;
pub mod text;
pub mod tokenize;

pub use corpus::{select_seeds, Corpus, Document, Label, LabelSpace, SeedSet};
pub use cotrain::{
    confident_predictions, merge_pools, read_trace_jsonl, run_joint_training, write_trace_jsonl,
    CoTrainConfig, IterationRecord, JointTrainOutcome, PoolEntry, PoolRule, PseudoLabel,
    PseudoLabelPool, PseudoLabelSource, StopReason, TrainEnvironment,
};
pub use error::{Error, Result};
pub use eval::{
    evaluate, generate_synthetic, split_corpus, synthetic_label_space, ClassMetrics, EvalReport,
    SynthSpec,
};
pub use features::{
    feature_digest, prediction_from_probabilities, softmax_in_place, EmbedStage, FeatureMatrix,
    Prediction,
};
pub use gnn::{Activation, GnnConfig, NetworkClassifier, NodeFeatures, TrainReport};
pub use optim::{Adam, AdamConfig};
pub use network::{build_network, Edge, Node, NodeId, NodeKind, TextRichNetwork};
pub use phrases::{compute_tfidf, mine_phrases, Phrase, PhraseVocabulary, TfidfTable};
pub use ppr::{
    build_neighbor_table, load_or_build_neighbor_table, ppr_push, topk_textual, NeighborTable,
    PprOutcome, PprParams, TransitionStructure,
};
pub use text::{
    build_vocab, check_text_model_contract, load_embedding_tsv, load_text_model_json,
    DefaultTextModel, ExternalEmbeddingModel, TextModel, TextTrainConfig, Vocabulary, UNK_TOKEN,
};
