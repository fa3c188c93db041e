//! Corpus, label-space, and seed-set data model with JSONL/JSON persistence
//! and the prediction TSV format.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// A single document: raw text, free-form attribute metadata, and an
/// optional gold label used only for evaluation and seed sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Attribute-field name -> string value (e.g. "brand" -> "Clorox").
    #[serde(default, rename = "attrs", skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    #[serde(default, rename = "label", skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl Document {
    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("document with empty id".into()));
        }
        if self.text.is_empty() && self.attributes.is_empty() {
            return Err(Error::Validation(format!(
                "document '{}' has empty text and no attributes",
                self.id
            )));
        }
        Ok(())
    }
}

/// An ordered collection of documents with unique ids. Immutable after
/// construction and safe to share across read-only workers.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Build a corpus, normalizing text to Unicode NFC and validating ids.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        let mut normalized = Vec::with_capacity(documents.len());
        for mut doc in documents {
            doc.text = doc.text.nfc().collect();
            doc.validate()?;
            if by_id.insert(doc.id.clone(), normalized.len()).is_some() {
                return Err(Error::Validation(format!("duplicate document id '{}'", doc.id)));
            }
            normalized.push(doc);
        }
        Ok(Corpus { documents: normalized, by_id })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Look up a document, raising a validation error naming the id.
    pub fn require(&self, id: &str) -> Result<&Document> {
        self.get(id)
            .ok_or_else(|| Error::Validation(format!("unknown document id '{id}'")))
    }

    /// Documents referencing labels missing from `labels` raise an error.
    pub fn validate_labels(&self, labels: &LabelSpace) -> Result<()> {
        for doc in &self.documents {
            if let Some(l) = &doc.gold_label {
                if labels.class_index(l).is_none() {
                    return Err(Error::Validation(format!(
                        "document '{}' references unknown label '{l}'",
                        doc.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One class: a stable id plus the human-readable surface name matched in
/// document text during network construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: String,
    pub surface: String,
}

/// The ordered label set; ordering defines the class-index <-> label-id
/// correspondence used by every probability vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSpace {
    labels: Vec<Label>,
    by_id: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.id.is_empty() {
                return Err(Error::Validation("label with empty id".into()));
            }
            if by_id.insert(label.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate label id '{}'", label.id)));
            }
        }
        Ok(LabelSpace { labels, by_id })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Class index of a label id, if present.
    pub fn class_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn require_index(&self, id: &str) -> Result<usize> {
        self.class_index(id)
            .ok_or_else(|| Error::Validation(format!("unknown label '{id}'")))
    }

    /// Label id for a class index; panics on out-of-range (internal misuse).
    pub fn label_id(&self, class: usize) -> &str {
        &self.labels[class].id
    }
}

/// The seed supervision: document id -> label id, with every class populated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    entries: BTreeMap<String, String>,
    per_class_count: usize,
}

impl SeedSet {
    /// Build from explicit entries; `per_class_count` becomes the largest
    /// per-class entry count.
    pub fn new(entries: BTreeMap<String, String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("seed set is empty".into()));
        }
        let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
        for label in entries.values() {
            *per_class.entry(label).or_insert(0) += 1;
        }
        let per_class_count = per_class.values().copied().max().unwrap_or(0);
        Ok(SeedSet { entries, per_class_count })
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.entries.contains_key(doc_id)
    }

    pub fn per_class_count(&self) -> usize {
        self.per_class_count
    }

    /// Check referential integrity: every seed document exists in the
    /// corpus, every label is known, and every class has at least one seed.
    pub fn validate(&self, corpus: &Corpus, labels: &LabelSpace) -> Result<()> {
        let mut seen = vec![0usize; labels.len()];
        for (doc, label) in &self.entries {
            corpus.require(doc)?;
            seen[labels.require_index(label)?] += 1;
        }
        for (i, count) in seen.iter().enumerate() {
            if *count == 0 {
                return Err(Error::Validation(format!(
                    "class '{}' has no seed documents",
                    labels.label_id(i)
                )));
            }
            if *count > self.per_class_count {
                return Err(Error::Validation(format!(
                    "class '{}' has {count} seeds, more than per_class_count {}",
                    labels.label_id(i),
                    self.per_class_count
                )));
            }
        }
        Ok(())
    }
}

// ===== Seed sampling =====

/// Uniformly sample `n_per_class` gold-labeled documents per class without
/// replacement. Deterministic for a fixed `rng_seed`.
pub fn select_seeds(
    corpus: &Corpus,
    labels: &LabelSpace,
    n_per_class: usize,
    rng_seed: u64,
) -> Result<SeedSet> {
    if n_per_class == 0 {
        return Err(Error::Parameter("n_per_class must be >= 1".into()));
    }
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); labels.len()];
    for doc in corpus.iter() {
        if let Some(label) = &doc.gold_label {
            by_class[labels.require_index(label)?].push(&doc.id);
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut entries = BTreeMap::new();
    for (class, pool) in by_class.iter().enumerate() {
        let label = labels.label_id(class);
        if pool.len() < n_per_class {
            return Err(Error::Validation(format!(
                "class '{label}' has only {} gold-labeled documents, need {n_per_class}",
                pool.len()
            )));
        }
        for idx in rand::seq::index::sample(&mut rng, pool.len(), n_per_class) {
            entries.insert(pool[idx].to_string(), label.to_string());
        }
    }
    Ok(SeedSet { entries, per_class_count: n_per_class })
}

// ===== Persistence =====

/// Load a corpus from JSONL: one `{"id","text","attrs"?,"label"?}` object
/// per line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut documents = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        documents.push(doc);
    }
    Corpus::new(documents)
}

/// Write a corpus as JSONL, one document per line in corpus order.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for doc in corpus.iter() {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load a label space from a JSON array of `{"id","surface"}` records.
pub fn load_label_space(path: impl AsRef<Path>) -> Result<LabelSpace> {
    let file = File::open(path.as_ref())?;
    let labels: Vec<Label> = serde_json::from_reader(BufReader::new(file))?;
    LabelSpace::new(labels)
}

pub fn save_label_space(labels: &LabelSpace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, labels.labels())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SeedRecord {
    id: String,
    label: String,
}

/// Load a seed set from JSONL `{"id","label"}` lines.
pub fn load_seed_set(path: impl AsRef<Path>) -> Result<SeedSet> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut entries = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SeedRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if entries.insert(rec.id.clone(), rec.label).is_some() {
            return Err(Error::Validation(format!("duplicate seed document '{}'", rec.id)));
        }
    }
    SeedSet::new(entries)
}

pub fn save_seed_set(seeds: &SeedSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (id, label) in seeds.entries() {
        let rec = SeedRecord { id: id.clone(), label: label.clone() };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Write predictions as a TSV `doc_id<TAB>label_id<TAB>confidence`, one row
/// per document sorted by doc id, confidence with 6 decimal places.
pub fn write_predictions(
    assignments: &BTreeMap<String, (String, f64)>,
    labels: &LabelSpace,
    path: impl AsRef<Path>,
) -> Result<()> {
    for (doc, (label, _)) in assignments {
        if labels.class_index(label).is_none() {
            return Err(Error::Validation(format!(
                "prediction for '{doc}' uses unknown label '{label}'"
            )));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for (doc, (label, confidence)) in assignments {
        writeln!(out, "{doc}\t{label}\t{confidence:.6}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a prediction TSV back into doc id -> (label id, confidence).
pub fn load_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, (String, f64)>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut assignments = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = || -> Option<(String, String, f64)> {
            let mut parts = line.split('\t');
            let doc = parts.next()?.to_string();
            let label = parts.next()?.to_string();
            let conf: f64 = parts.next()?.parse().ok()?;
            if parts.next().is_some() {
                return None;
            }
            Some((doc, label, conf))
        };
        let (doc, label, conf) = parse().ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: "expected 'doc_id<TAB>label<TAB>confidence'".into(),
        })?;
        if assignments.insert(doc.clone(), (label, conf)).is_some() {
            return Err(Error::Validation(format!("duplicate prediction for document '{doc}'")));
        }
    }
    Ok(assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn doc(id: &str, text: &str, label: Option<&str>) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            attributes: BTreeMap::new(),
            gold_label: label.map(|s| s.into()),
        }
    }

    fn labels(ids: &[&str]) -> LabelSpace {
        LabelSpace::new(
            ids.iter()
                .map(|id| Label { id: id.to_string(), surface: id.to_string() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "").unwrap();
        let corpus = load_corpus(&path).unwrap();
        assert_eq!(corpus.len(), 0);
    }

    #[test]
    fn minimal_record_parses() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, r#"{"id":"d1","text":"a b","attrs":{"brand":"X"}}"#).unwrap();
        let corpus = load_corpus(&path).unwrap();
        assert_eq!(corpus.len(), 1);
        let d = corpus.get("d1").unwrap();
        assert_eq!(d.text, "a b");
        assert_eq!(d.attributes.get("brand").map(String::as_str), Some("X"));
        assert_eq!(d.gold_label, None);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"id\":\"d1\",\"text\":\"a\"}\nnot json\n").unwrap();
        let err = load_corpus(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected_by_name() {
        let docs = vec![doc("d1", "a", None), doc("d1", "b", None)];
        let err = Corpus::new(docs).unwrap_err();
        assert!(err.to_string().contains("d1"));
    }

    #[test]
    fn empty_text_requires_attributes() {
        assert!(Corpus::new(vec![doc("d1", "", None)]).is_err());
        let mut with_attr = doc("d1", "", None);
        with_attr.attributes.insert("brand".into(), "X".into());
        assert!(Corpus::new(vec![with_attr]).is_ok());
    }

    #[test]
    fn text_normalized_to_nfc() {
        // "é" as 'e' + COMBINING ACUTE ACCENT normalizes to the composed form.
        let decomposed = "caf\u{0065}\u{0301}";
        let corpus = Corpus::new(vec![doc("d1", decomposed, None)]).unwrap();
        assert_eq!(corpus.get("d1").unwrap().text, "caf\u{00e9}");
    }

    #[test]
    fn corpus_roundtrip_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut d2 = doc("d2", "second doc", Some("B"));
        d2.attributes.insert("brand".into(), "Acme".into());
        d2.attributes.insert("author".into(), "Someone".into());
        let corpus = Corpus::new(vec![doc("d1", "first doc", Some("A")), d2]).unwrap();
        save_corpus(&corpus, &path).unwrap();
        let reloaded = load_corpus(&path).unwrap();
        assert_eq!(reloaded.documents(), corpus.documents());
    }

    #[test]
    fn label_space_roundtrip_and_lookup() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.json");
        let ls = LabelSpace::new(vec![
            Label { id: "safety".into(), surface: "Safe".into() },
            Label { id: "poetry".into(), surface: "Poetry".into() },
        ])
        .unwrap();
        save_label_space(&ls, &path).unwrap();
        let reloaded = load_label_space(&path).unwrap();
        assert_eq!(reloaded, ls);
        assert_eq!(reloaded.class_index("poetry"), Some(1));
        assert_eq!(reloaded.label_id(0), "safety");
        assert!(reloaded.require_index("nope").is_err());
    }

    #[test]
    fn duplicate_label_id_rejected() {
        let err = LabelSpace::new(vec![
            Label { id: "a".into(), surface: "A".into() },
            Label { id: "a".into(), surface: "B".into() },
        ])
        .unwrap_err();
        assert!(err.to_string().contains('a'));
    }

    fn seed_corpus(per_class: usize) -> (Corpus, LabelSpace) {
        let mut docs = Vec::new();
        for class in ["A", "B"] {
            for i in 0..per_class {
                docs.push(doc(&format!("{class}{i}"), "text", Some(class)));
            }
        }
        (Corpus::new(docs).unwrap(), labels(&["A", "B"]))
    }

    #[test]
    fn select_seeds_counts_and_determinism() {
        let (corpus, ls) = seed_corpus(10);
        let s1 = select_seeds(&corpus, &ls, 3, 42).unwrap();
        let s2 = select_seeds(&corpus, &ls, 3, 42).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 6);
        assert_eq!(s1.per_class_count(), 3);
        for (id, label) in s1.entries() {
            assert!(id.starts_with(label));
        }
        let s3 = select_seeds(&corpus, &ls, 3, 43).unwrap();
        assert_ne!(s1, s3, "different seeds should (overwhelmingly) differ");
    }

    #[test]
    fn select_seeds_forced_draw() {
        let corpus = Corpus::new(vec![doc("only", "x", Some("A"))]).unwrap();
        let ls = labels(&["A"]);
        let s = select_seeds(&corpus, &ls, 1, 7).unwrap();
        assert_eq!(s.entries().get("only").map(String::as_str), Some("A"));
    }

    #[test]
    fn select_seeds_insufficient_class_named() {
        let (corpus, ls) = seed_corpus(2);
        let err = select_seeds(&corpus, &ls, 3, 7).unwrap_err();
        assert!(err.to_string().contains('A'));
    }

    #[test]
    fn seed_set_validation() {
        let (corpus, ls) = seed_corpus(3);
        let seeds = select_seeds(&corpus, &ls, 2, 1).unwrap();
        seeds.validate(&corpus, &ls).unwrap();

        let mut entries = seeds.entries().clone();
        entries.insert("ghost".into(), "A".into());
        let bad = SeedSet::new(entries).unwrap();
        assert!(bad.validate(&corpus, &ls).is_err());

        let one_class = SeedSet::new(BTreeMap::from([("A0".to_string(), "A".to_string())])).unwrap();
        let err = one_class.validate(&corpus, &ls).unwrap_err();
        assert!(err.to_string().contains('B'), "missing class named: {err}");
    }

    #[test]
    fn seed_set_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("seeds.jsonl");
        let (corpus, ls) = seed_corpus(4);
        let seeds = select_seeds(&corpus, &ls, 2, 9).unwrap();
        save_seed_set(&seeds, &path).unwrap();
        assert_eq!(load_seed_set(&path).unwrap(), seeds);
    }

    #[test]
    fn predictions_format_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("preds.tsv");
        let ls = LabelSpace::new(vec![Label { id: "Safe".into(), surface: "Safe".into() }]).unwrap();

        write_predictions(&BTreeMap::new(), &ls, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");

        let one = BTreeMap::from([("d1".to_string(), ("Safe".to_string(), 0.917))]);
        write_predictions(&one, &ls, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "d1\tSafe\t0.917000\n");
    }

    #[test]
    fn predictions_sorted_and_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("preds.tsv");
        let ls = labels(&["A"]);
        let preds = BTreeMap::from([
            ("d2".to_string(), ("A".to_string(), 0.5)),
            ("d1".to_string(), ("A".to_string(), 0.25)),
        ]);
        write_predictions(&preds, &ls, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("d1\t") && lines[1].starts_with("d2\t"));
        assert_eq!(load_predictions(&path).unwrap(), preds);
    }

    #[test]
    fn predictions_unknown_label_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("preds.tsv");
        let ls = labels(&["A"]);
        let preds = BTreeMap::from([("d1".to_string(), ("Z".to_string(), 0.5))]);
        let err = write_predictions(&preds, &ls, &path).unwrap_err();
        assert!(err.to_string().contains('Z'));
    }
}
