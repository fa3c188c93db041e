//! One function per subcommand. Each echoes what it resolved (configuration,
//! seeds) before doing the work, and returns library errors unchanged so the
//! binary can map them to exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tricat_core::corpus::{
    load_corpus, load_label_space, load_predictions, load_seed_set, save_corpus,
    save_label_space, save_seed_set, select_seeds,
};
use tricat_core::ppr::load_or_build_neighbor_table;
use tricat_core::text::{load_embedding_tsv, load_text_model_json};
use tricat_core::{
    build_network, build_vocab, corpus::write_predictions, evaluate, generate_synthetic,
    mine_phrases, run_joint_training, DefaultTextModel, Error, ExternalEmbeddingModel, Result,
    StopReason, SynthSpec, TextModel, TextRichNetwork, TrainEnvironment,
};

use crate::config::RunConfig;

pub fn synth(spec_path: Option<&Path>, out_dir: &Path) -> Result<()> {
    let spec = match spec_path {
        None => SynthSpec::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| Error::Validation(format!("spec file {}: {e}", p.display())))?
        }
    };
    spec.validate()?;
    println!("# resolved synthetic spec");
    print!("{}", toml::to_string(&spec).expect("flat spec serializes"));
    println!();
    let (corpus, labels) = generate_synthetic(&spec)?;
    std::fs::create_dir_all(out_dir)?;
    save_corpus(&corpus, out_dir.join("corpus.jsonl"))?;
    save_label_space(&labels, out_dir.join("labels.json"))?;
    println!(
        "wrote {} documents over {} classes to {}",
        corpus.len(),
        labels.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn build_net(
    corpus_path: &Path,
    labels_path: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    config.echo();
    let corpus = load_corpus(corpus_path)?;
    let labels = load_label_space(labels_path)?;
    let phrases = mine_phrases(&corpus, config.phrase_min_count, config.phrase_max_len)?;
    let network = build_network(&corpus, &phrases, &labels)?;
    std::fs::create_dir_all(out_dir)?;
    network.save(out_dir.join("nodes.tsv"), out_dir.join("edges.tsv"))?;
    let (table, cache_path) = load_or_build_neighbor_table(&network, &config.ppr(), Some(out_dir))?;
    println!(
        "network: {} nodes, {} edges; neighborhoods for {} documents",
        network.node_count(),
        network.edges().len(),
        table.len()
    );
    if let Some(p) = cache_path {
        println!("neighbor table cached at {}", p.display());
    }
    Ok(())
}

pub struct TrainArgs<'a> {
    pub corpus: &'a Path,
    pub labels: &'a Path,
    pub seeds: Option<&'a Path>,
    pub dev: Option<&'a Path>,
    pub network_dir: Option<&'a Path>,
    pub external_embeddings: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub run_dir: &'a Path,
}

pub fn train(args: &TrainArgs<'_>) -> Result<()> {
    let config = RunConfig::load(args.config)?;
    config.echo();
    let corpus = load_corpus(args.corpus)?;
    let labels = load_label_space(args.labels)?;
    corpus.validate_labels(&labels)?;

    let seeds = match args.seeds {
        Some(p) => load_seed_set(p)?,
        None => select_seeds(&corpus, &labels, config.seeds_per_class, config.seed_rng_seed)?,
    };
    println!(
        "# seeds ({} documents{})",
        seeds.len(),
        if args.seeds.is_none() {
            format!(", selected with rng seed {}", config.seed_rng_seed)
        } else {
            String::new()
        }
    );
    for (doc, label) in seeds.entries() {
        println!("{doc}\t{label}");
    }
    println!();

    let phrases = mine_phrases(&corpus, config.phrase_min_count, config.phrase_max_len)?;
    let network = match args.network_dir {
        Some(dir) => TextRichNetwork::load(dir.join("nodes.tsv"), dir.join("edges.tsv"))?,
        None => build_network(&corpus, &phrases, &labels)?,
    };
    let dev = match args.dev {
        Some(p) => Some(load_corpus(p)?),
        None => None,
    };

    std::fs::create_dir_all(args.run_dir)?;
    save_seed_set(&seeds, args.run_dir.join("seeds.tsv"))?;
    let cache_dir: Option<PathBuf> =
        Some(args.network_dir.unwrap_or(args.run_dir).to_path_buf());

    let n_classes = labels.len();
    let factory: Box<dyn Fn(u64) -> Result<Box<dyn TextModel>>> = match args.external_embeddings {
        Some(p) => {
            let vectors = load_embedding_tsv(p)?;
            Box::new(move |_seed| {
                Ok(Box::new(ExternalEmbeddingModel::new(vectors.clone(), n_classes)?)
                    as Box<dyn TextModel>)
            })
        }
        None => {
            let vocab = build_vocab(&corpus, &phrases, config.vocab_min_count)?;
            let dim = config.embedding_dim;
            Box::new(move |seed| {
                Ok(Box::new(DefaultTextModel::new(vocab.clone(), n_classes, dim, seed)?)
                    as Box<dyn TextModel>)
            })
        }
    };

    let env = TrainEnvironment {
        neighbor_table: None,
        cache_dir: cache_dir.as_deref(),
        run_dir: Some(args.run_dir),
        dev: dev.as_ref(),
    };
    let outcome = run_joint_training(
        &corpus,
        &network,
        &labels,
        &seeds,
        &config.cotrain()?,
        &factory,
        &env,
    )?;

    for r in &outcome.trace {
        let dev_note = match r.dev_micro_f1 {
            Some(f1) => format!(", dev micro-F1 {f1:.4}"),
            None => String::new(),
        };
        let stop_note = match r.stopped {
            Some(StopReason::PoolUnchanged) => ", stopped: pool unchanged",
            Some(StopReason::MaxIterations) => ", stopped: iteration cap",
            None => "",
        };
        println!(
            "iteration {}: pool {} (seed {}, text {}, gnn {}, both {}){dev_note}{stop_note}",
            r.iteration, r.pool_size, r.seed_count, r.text_count, r.gnn_count, r.both_count
        );
    }

    std::fs::write(
        args.run_dir.join("text-final.json"),
        outcome.text_model.to_checkpoint_json()?,
    )?;
    std::fs::write(
        args.run_dir.join("gnn-final.json"),
        outcome.gnn_model.to_checkpoint_json()?,
    )?;

    // Final predictions for every non-seed document, from the deployment
    // (text) classifier.
    let unlabeled: Vec<&tricat_core::Document> =
        corpus.iter().filter(|d| !seeds.contains(&d.id)).collect();
    let mut assignments: BTreeMap<String, (String, f64)> = BTreeMap::new();
    if !unlabeled.is_empty() {
        let predictions = outcome.text_model.predict(&unlabeled)?;
        for (doc, p) in unlabeled.iter().zip(predictions) {
            assignments
                .insert(doc.id.clone(), (labels.label_id(p.class).to_string(), p.confidence));
        }
    }
    write_predictions(&assignments, &labels, args.run_dir.join("predictions.tsv"))?;
    println!(
        "run artifacts in {}: trace.jsonl, seeds.tsv, per-iteration and final checkpoints, predictions.tsv ({} documents)",
        args.run_dir.display(),
        assignments.len()
    );
    Ok(())
}

pub fn predict(
    model_path: &Path,
    corpus_path: &Path,
    labels_path: &Path,
    out_path: &Path,
) -> Result<()> {
    println!("# predicting with model {}", model_path.display());
    let model = load_text_model_json(&std::fs::read_to_string(model_path)?)?;
    let corpus = load_corpus(corpus_path)?;
    let labels = load_label_space(labels_path)?;
    if model.n_classes() != labels.len() {
        return Err(Error::Validation(format!(
            "model predicts {} classes but the label space has {}",
            model.n_classes(),
            labels.len()
        )));
    }
    let docs: Vec<&tricat_core::Document> = corpus.iter().collect();
    let predictions = model.predict(&docs)?;
    let assignments: BTreeMap<String, (String, f64)> = docs
        .iter()
        .zip(predictions)
        .map(|(d, p)| (d.id.clone(), (labels.label_id(p.class).to_string(), p.confidence)))
        .collect();
    write_predictions(&assignments, &labels, out_path)?;
    println!("wrote {} predictions to {}", assignments.len(), out_path.display());
    Ok(())
}

pub fn eval(
    predictions_path: &Path,
    corpus_path: &Path,
    labels_path: &Path,
    out_path: Option<&Path>,
) -> Result<()> {
    println!("# scoring {} against {}", predictions_path.display(), corpus_path.display());
    let with_confidence = load_predictions(predictions_path)?;
    let predictions: BTreeMap<String, String> =
        with_confidence.into_iter().map(|(d, (l, _))| (d, l)).collect();
    let corpus = load_corpus(corpus_path)?;
    let labels = load_label_space(labels_path)?;
    let report = evaluate(&predictions, &corpus, &labels)?;
    let json = serde_json::to_string_pretty(&report)?;
    match out_path {
        Some(p) => {
            std::fs::write(p, format!("{json}\n"))?;
            println!("wrote report to {}", p.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
