//! Classification metrics and a planted-structure synthetic corpus
//! generator for end-to-end checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label, LabelSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of this class among the evaluated documents.
    pub support: usize,
}

/// Micro-F1 equals accuracy in single-label classification. Macro-F1 is the
/// unweighted mean of per-class F1 over every class in the label space, so
/// classes that were never predicted or never appear in the gold data pull
/// the mean down with F1 = 0 (the conservative reading). Both metrics are
/// `None` when nothing was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Predicted documents with a gold label.
    pub n_evaluated: usize,
    /// Predicted documents without a gold label.
    pub n_skipped: usize,
}

/// Score predictions against the corpus's gold labels. Predictions must
/// reference known documents and known labels; predicted documents without
/// a gold label are skipped and counted.
pub fn evaluate(
    predictions: &BTreeMap<String, String>,
    gold: &Corpus,
    labels: &LabelSpace,
) -> Result<EvalReport> {
    let n = labels.len();
    let mut tp = vec![0usize; n];
    let mut fp = vec![0usize; n];
    let mut fn_ = vec![0usize; n];
    let mut n_evaluated = 0;
    let mut n_skipped = 0;
    let mut correct = 0;
    for (doc_id, label_id) in predictions {
        let doc = gold.get(doc_id).ok_or_else(|| {
            Error::Validation(format!("prediction for unknown document '{doc_id}'"))
        })?;
        let predicted = labels.require_index(label_id)?;
        let gold_label = match &doc.gold_label {
            Some(g) => labels.require_index(g)?,
            None => {
                n_skipped += 1;
                continue;
            }
        };
        n_evaluated += 1;
        if predicted == gold_label {
            correct += 1;
            tp[predicted] += 1;
        } else {
            fp[predicted] += 1;
            fn_[gold_label] += 1;
        }
    }

    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for (c, label) in labels.labels().iter().enumerate() {
        let precision = ratio(tp[c], tp[c] + fp[c]);
        let recall = ratio(tp[c], tp[c] + fn_[c]);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1_sum += f1;
        per_class.insert(
            label.id.clone(),
            ClassMetrics { precision, recall, f1, support: tp[c] + fn_[c] },
        );
    }

    let (micro_f1, macro_f1) = if n_evaluated == 0 {
        (None, None)
    } else {
        (Some(correct as f64 / n_evaluated as f64), Some(f1_sum / n as f64))
    };
    Ok(EvalReport { micro_f1, macro_f1, per_class, n_evaluated, n_skipped })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Deterministic stratified split: per gold class, a shuffled
/// `holdout_fraction` of the documents (rounded) goes to the second corpus.
/// Documents without a gold label stay in the first.
pub fn split_corpus(
    corpus: &Corpus,
    holdout_fraction: f64,
    rng_seed: u64,
) -> Result<(Corpus, Corpus)> {
    if !(0.0..=1.0).contains(&holdout_fraction) {
        return Err(Error::Parameter(format!(
            "holdout fraction must be in [0, 1], got {holdout_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let docs = corpus.documents();
    for (i, doc) in docs.iter().enumerate() {
        if let Some(g) = &doc.gold_label {
            by_class.entry(g.as_str()).or_default().push(i);
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut held = vec![false; docs.len()];
    for (_, mut indices) in by_class {
        use rand::seq::SliceRandom;
        indices.shuffle(&mut rng);
        let k = ((indices.len() as f64) * holdout_fraction).round() as usize;
        for &i in indices.iter().take(k) {
            held[i] = true;
        }
    }
    let train: Vec<Document> =
        docs.iter().zip(&held).filter(|(_, h)| !**h).map(|(d, _)| d.clone()).collect();
    let holdout: Vec<Document> =
        docs.iter().zip(&held).filter(|(_, h)| **h).map(|(d, _)| d.clone()).collect();
    Ok((Corpus::new(train)?, Corpus::new(holdout)?))
}

/// Parameters of the planted-structure corpus: each class gets a private
/// vocabulary and private attribute values; documents mix in shared tokens
/// at `noise_token_rate`, take an in-class attribute with probability
/// `attribute_purity` (otherwise one from a random other class), and
/// mention their class's surface name with probability
/// `label_name_mention_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub docs_per_class: usize,
    pub class_vocab_size: usize,
    pub shared_vocab_size: usize,
    pub attrs_per_class: usize,
    pub attribute_purity: f64,
    pub label_name_mention_rate: f64,
    pub noise_token_rate: f64,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 6,
            docs_per_class: 100,
            class_vocab_size: 40,
            shared_vocab_size: 60,
            attrs_per_class: 4,
            attribute_purity: 0.9,
            label_name_mention_rate: 0.3,
            noise_token_rate: 0.3,
            rng_seed: 13,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_classes", self.n_classes),
            ("docs_per_class", self.docs_per_class),
            ("class_vocab_size", self.class_vocab_size),
            ("shared_vocab_size", self.shared_vocab_size),
            ("attrs_per_class", self.attrs_per_class),
        ] {
            if v < 1 {
                return Err(Error::Parameter(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("attribute_purity", self.attribute_purity),
            ("label_name_mention_rate", self.label_name_mention_rate),
            ("noise_token_rate", self.noise_token_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

const SURFACE_WORDS: [&str; 26] = [
    "alfa", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
];

/// Label ids are `c0..c{n-1}`; surface names come from a fixed word list
/// (then `topic{k}`) so they never collide with the generated vocabulary.
pub fn synthetic_label_space(n_classes: usize) -> Result<LabelSpace> {
    LabelSpace::new(
        (0..n_classes)
            .map(|k| Label {
                id: format!("c{k}"),
                surface: SURFACE_WORDS
                    .get(k)
                    .map(|w| w.to_string())
                    .unwrap_or_else(|| format!("topic{k}")),
            })
            .collect(),
    )
}

/// Deterministic per `rng_seed`: documents are generated class by class,
/// document by document, with a fixed draw order (length, one draw per
/// token slot, mention draw, attribute draws).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Corpus, LabelSpace)> {
    spec.validate()?;
    let labels = synthetic_label_space(spec.n_classes)?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.rng_seed);
    let mut docs = Vec::with_capacity(spec.n_classes * spec.docs_per_class);
    for k in 0..spec.n_classes {
        for i in 0..spec.docs_per_class {
            let length = rng.random_range(12..=24usize);
            let mut words = Vec::with_capacity(length + 1);
            for _ in 0..length {
                if rng.random::<f64>() < spec.noise_token_rate {
                    words.push(format!("sh{}", rng.random_range(0..spec.shared_vocab_size)));
                } else {
                    words.push(format!("c{k}w{}", rng.random_range(0..spec.class_vocab_size)));
                }
            }
            if rng.random::<f64>() < spec.label_name_mention_rate {
                words.push(labels.labels()[k].surface.clone());
            }
            let attr_class = if rng.random::<f64>() < spec.attribute_purity
                || spec.n_classes == 1
            {
                k
            } else {
                let other = rng.random_range(0..spec.n_classes - 1);
                if other >= k {
                    other + 1
                } else {
                    other
                }
            };
            let value = format!("c{attr_class}a{}", rng.random_range(0..spec.attrs_per_class));
            docs.push(Document {
                id: format!("c{k}d{i:03}"),
                text: words.join(" "),
                attributes: [("vendor".to_string(), value)].into(),
                gold_label: Some(format!("c{k}")),
            });
        }
    }
    Ok((Corpus::new(docs)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled_doc(id: &str, gold: Option<&str>) -> Document {
        Document {
            id: id.into(),
            text: "body".into(),
            attributes: BTreeMap::new(),
            gold_label: gold.map(String::from),
        }
    }

    fn two_labels() -> LabelSpace {
        LabelSpace::new(vec![
            Label { id: "A".into(), surface: "a".into() },
            Label { id: "B".into(), surface: "b".into() },
        ])
        .unwrap()
    }

    fn preds(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(d, l)| (d.to_string(), l.to_string())).collect()
    }

    #[test]
    fn worked_confusion_example() {
        let corpus = Corpus::new(vec![
            labeled_doc("d1", Some("A")),
            labeled_doc("d2", Some("A")),
            labeled_doc("d3", Some("B")),
            labeled_doc("d4", Some("B")),
        ])
        .unwrap();
        let labels = two_labels();
        let p = preds(&[("d1", "A"), ("d2", "B"), ("d3", "B"), ("d4", "B")]);
        let report = evaluate(&p, &corpus, &labels).unwrap();
        assert_eq!(report.n_evaluated, 4);
        assert_eq!(report.n_skipped, 0);
        assert!((report.micro_f1.unwrap() - 0.75).abs() < 1e-15);
        let a = &report.per_class["A"];
        let b = &report.per_class["B"];
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((b.f1 - 0.8).abs() < 1e-12);
        assert_eq!((a.support, b.support), (2, 2));
        assert!((report.macro_f1.unwrap() - 11.0 / 15.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let corpus =
            Corpus::new(vec![labeled_doc("d1", Some("A")), labeled_doc("d2", Some("B"))]).unwrap();
        let labels = two_labels();
        let report =
            evaluate(&preds(&[("d1", "A"), ("d2", "B")]), &corpus, &labels).unwrap();
        assert_eq!(report.micro_f1, Some(1.0));
        assert_eq!(report.macro_f1, Some(1.0));
    }

    #[test]
    fn empty_predictions_mark_metrics_undefined() {
        let corpus = Corpus::new(vec![labeled_doc("d1", Some("A"))]).unwrap();
        let labels = two_labels();
        let report = evaluate(&BTreeMap::new(), &corpus, &labels).unwrap();
        assert_eq!(report.n_evaluated, 0);
        assert_eq!(report.micro_f1, None);
        assert_eq!(report.macro_f1, None);
    }

    #[test]
    fn unknown_documents_and_labels_are_named() {
        let corpus = Corpus::new(vec![labeled_doc("d1", Some("A"))]).unwrap();
        let labels = two_labels();
        let err = evaluate(&preds(&[("ghost", "A")]), &corpus, &labels).unwrap_err();
        assert!(err.to_string().contains("ghost"), "got: {err}");
        let err = evaluate(&preds(&[("d1", "C")]), &corpus, &labels).unwrap_err();
        assert!(err.to_string().contains("'C'"), "got: {err}");
    }

    #[test]
    fn unlabeled_gold_documents_are_skipped_and_counted() {
        let corpus =
            Corpus::new(vec![labeled_doc("d1", Some("A")), labeled_doc("d2", None)]).unwrap();
        let labels = two_labels();
        let report =
            evaluate(&preds(&[("d1", "A"), ("d2", "B")]), &corpus, &labels).unwrap();
        assert_eq!(report.n_evaluated, 1);
        assert_eq!(report.n_skipped, 1);
        assert_eq!(report.micro_f1, Some(1.0));
    }

    #[test]
    fn unsupported_class_pulls_macro_down_with_zero() {
        // One class never appears: macro averages over both classes anyway.
        let corpus =
            Corpus::new(vec![labeled_doc("d1", Some("A")), labeled_doc("d2", Some("A"))]).unwrap();
        let labels = two_labels();
        let report =
            evaluate(&preds(&[("d1", "A"), ("d2", "A")]), &corpus, &labels).unwrap();
        assert_eq!(report.micro_f1, Some(1.0));
        assert!((report.macro_f1.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(report.per_class["B"].support, 0);
        assert_eq!(report.per_class["B"].f1, 0.0);
    }

    #[test]
    fn stratified_split_is_deterministic_and_proportional() {
        let (corpus, _) = generate_synthetic(&SynthSpec {
            n_classes: 3,
            docs_per_class: 20,
            ..SynthSpec::default()
        })
        .unwrap();
        let (train_a, hold_a) = split_corpus(&corpus, 0.4, 5).unwrap();
        let (train_b, hold_b) = split_corpus(&corpus, 0.4, 5).unwrap();
        assert_eq!(train_a.len(), train_b.len());
        assert_eq!(hold_a.len(), 24, "40% of each 20-doc class is 8");
        assert_eq!(train_a.len() + hold_a.len(), corpus.len());
        let ids_a: Vec<&str> = hold_a.iter().map(|d| d.id.as_str()).collect();
        let ids_b: Vec<&str> = hold_b.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids_a, ids_b);
        // Per-class counts in the holdout.
        for k in 0..3 {
            let count = hold_a.iter().filter(|d| d.gold_label.as_deref() == Some(&format!("c{k}")[..])).count();
            assert_eq!(count, 8);
        }
        // No overlap.
        for d in hold_a.iter() {
            assert!(train_a.get(&d.id).is_none());
        }
        assert!(split_corpus(&corpus, 1.5, 0).is_err());
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SynthSpec::default();
        let (corpus, labels) = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.len(), 600);
        assert_eq!(labels.len(), 6);
        let (again, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.documents(), again.documents());
        let (other, _) =
            generate_synthetic(&SynthSpec { rng_seed: 14, ..spec }).unwrap();
        assert_ne!(corpus.documents(), other.documents());
    }

    #[test]
    fn extremal_parameters_plant_clean_structure() {
        let spec = SynthSpec {
            n_classes: 3,
            docs_per_class: 10,
            attribute_purity: 1.0,
            noise_token_rate: 0.0,
            label_name_mention_rate: 1.0,
            ..SynthSpec::default()
        };
        let (corpus, labels) = generate_synthetic(&spec).unwrap();
        for doc in corpus.iter() {
            let k: usize = doc.gold_label.as_ref().unwrap()[1..].parse().unwrap();
            let surface = &labels.labels()[k].surface;
            assert!(doc.text.contains(surface.as_str()), "doc {} lacks its surface name", doc.id);
            let own_prefix = format!("c{k}w");
            for w in doc.text.split(' ') {
                assert!(
                    w.starts_with(&own_prefix) || w == surface,
                    "unexpected token {w} in class {k}"
                );
            }
            let value = doc.attributes.get("vendor").unwrap();
            assert!(value.starts_with(&format!("c{k}a")), "impure attribute {value}");
        }
    }

    #[test]
    fn empirical_attribute_purity_matches_spec() {
        let spec = SynthSpec { attribute_purity: 0.5, ..SynthSpec::default() };
        let (corpus, _) = generate_synthetic(&spec).unwrap();
        let in_class = corpus
            .iter()
            .filter(|d| {
                let k = &d.gold_label.as_ref().unwrap()[..];
                d.attributes.get("vendor").unwrap().starts_with(&format!("{k}a"))
            })
            .count();
        let fraction = in_class as f64 / corpus.len() as f64;
        assert!(
            (fraction - 0.5).abs() <= 0.05,
            "in-class attribute fraction {fraction} outside 0.5 +- 0.05"
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SynthSpec { n_classes: 0, ..SynthSpec::default() }.validate().is_err());
        assert!(
            SynthSpec { attribute_purity: 1.2, ..SynthSpec::default() }.validate().is_err()
        );
        assert!(
            SynthSpec { noise_token_rate: -0.1, ..SynthSpec::default() }.validate().is_err()
        );
    }
}
