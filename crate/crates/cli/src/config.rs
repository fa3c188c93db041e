//! Flat run configuration: one explicit key per tunable, serialized as
//! TOML, so every run is fully self-describing. Defaults match the library
//! defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tricat_core::{
    Activation, CoTrainConfig, Error, GnnConfig, PprParams, Result, TextTrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Random-walk neighborhoods.
    pub beta: f64,
    pub epsilon: f64,
    pub top_k: usize,
    // Network classifier.
    pub hidden_dim: usize,
    /// "rectifier" or "identity".
    pub activation: String,
    pub renormalize_scores: bool,
    pub gnn_learning_rate: f64,
    pub gnn_epochs: usize,
    pub gnn_batch_size: usize,
    pub gnn_rng_seed: u64,
    // Text model.
    pub embedding_dim: usize,
    pub vocab_min_count: usize,
    pub phrase_min_count: usize,
    pub phrase_max_len: usize,
    pub text_epochs: usize,
    pub text_learning_rate: f64,
    pub text_rng_seed: u64,
    // Joint training.
    pub confidence_threshold: f64,
    pub top_m_per_class: usize,
    /// When present, replaces the top-M pooling rule with a top-fraction
    /// rule; omit the key for top-M mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_percent: Option<f64>,
    pub max_iterations: usize,
    pub feature_sharing: bool,
    pub warm_start: bool,
    // Seed selection, used when no seed file is given.
    pub seeds_per_class: usize,
    pub seed_rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cotrain = CoTrainConfig::default();
        let gnn = GnnConfig::default();
        let text = TextTrainConfig::default();
        let ppr = PprParams::default();
        RunConfig {
            beta: ppr.beta,
            epsilon: ppr.epsilon,
            top_k: ppr.top_k,
            hidden_dim: gnn.hidden_dim,
            activation: "rectifier".into(),
            renormalize_scores: gnn.renormalize_scores,
            gnn_learning_rate: gnn.learning_rate,
            gnn_epochs: gnn.epochs,
            gnn_batch_size: gnn.batch_size,
            gnn_rng_seed: gnn.rng_seed,
            embedding_dim: 64,
            vocab_min_count: 1,
            phrase_min_count: 5,
            phrase_max_len: 4,
            text_epochs: text.epochs,
            text_learning_rate: text.learning_rate,
            text_rng_seed: text.rng_seed,
            confidence_threshold: cotrain.confidence_threshold,
            top_m_per_class: cotrain.top_m_per_class,
            top_percent: cotrain.top_percent,
            max_iterations: cotrain.max_iterations,
            feature_sharing: cotrain.feature_sharing,
            warm_start: cotrain.warm_start,
            seeds_per_class: 3,
            seed_rng_seed: 0,
        }
    }
}

impl RunConfig {
    /// Read a TOML file, or take the defaults when no path is given.
    /// Unknown keys are rejected so typos cannot silently fall back.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| {
                    Error::Validation(format!("config file {}: {e}", p.display()))
                })?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_min_count < 1 {
            return Err(Error::Parameter("vocab_min_count must be at least 1".into()));
        }
        if self.embedding_dim < 1 {
            return Err(Error::Parameter("embedding_dim must be at least 1".into()));
        }
        if self.seeds_per_class < 1 {
            return Err(Error::Parameter("seeds_per_class must be at least 1".into()));
        }
        self.parse_activation()?;
        self.cotrain()?.validate()
    }

    fn parse_activation(&self) -> Result<Activation> {
        match self.activation.as_str() {
            "rectifier" => Ok(Activation::Rectifier),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Validation(format!(
                "activation must be 'rectifier' or 'identity', got '{other}'"
            ))),
        }
    }

    pub fn ppr(&self) -> PprParams {
        PprParams { beta: self.beta, epsilon: self.epsilon, top_k: self.top_k }
    }

    pub fn gnn(&self) -> Result<GnnConfig> {
        Ok(GnnConfig {
            hidden_dim: self.hidden_dim,
            activation: self.parse_activation()?,
            renormalize_scores: self.renormalize_scores,
            learning_rate: self.gnn_learning_rate,
            epochs: self.gnn_epochs,
            batch_size: self.gnn_batch_size,
            rng_seed: self.gnn_rng_seed,
        })
    }

    pub fn text(&self) -> TextTrainConfig {
        TextTrainConfig {
            epochs: self.text_epochs,
            learning_rate: self.text_learning_rate,
            rng_seed: self.text_rng_seed,
        }
    }

    pub fn cotrain(&self) -> Result<CoTrainConfig> {
        Ok(CoTrainConfig {
            confidence_threshold: self.confidence_threshold,
            top_m_per_class: self.top_m_per_class,
            top_percent: self.top_percent,
            max_iterations: self.max_iterations,
            feature_sharing: self.feature_sharing,
            warm_start: self.warm_start,
            text: self.text(),
            gnn: self.gnn()?,
            ppr: self.ppr(),
        })
    }

    /// Print the fully resolved configuration (every key, including the rng
    /// seeds) so the run is reproducible from its log alone.
    pub fn echo(&self) {
        println!("# resolved configuration");
        print!("{}", toml::to_string(self).expect("flat config serializes"));
        println!();
    }
}
