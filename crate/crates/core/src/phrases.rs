//! Frequent maximal n-gram phrase mining and the document-phrase TF-IDF
//! weight table used for phrase edges.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tokenize::{count_token_seq, tokenize};

/// A mined phrase: token sequence plus corpus-wide counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub tokens: Vec<String>,
    /// Total occurrences across the corpus (sliding count, overlaps allowed).
    pub corpus_frequency: usize,
    /// Number of documents containing the phrase at least once.
    pub document_frequency: usize,
}

impl Phrase {
    /// The phrase as a single space-joined string (vocabulary key / display).
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// The phrase inventory feeding phrase nodes and the text vocabulary,
/// sorted lexicographically by token sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhraseVocabulary {
    phrases: Vec<Phrase>,
}

impl PhraseVocabulary {
    pub fn phrases(&self) -> &[Phrase] {
        &self.phrases
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn contains(&self, tokens: &[String]) -> bool {
        self.phrases.binary_search_by(|p| p.tokens.as_slice().cmp(tokens)).is_ok()
    }

    /// Build a vocabulary from externally supplied phrases (one token
    /// sequence each), recomputing counts against `corpus`. Phrases absent
    /// from the corpus keep zero counts. Duplicates are merged.
    pub fn from_token_lists(lists: &[Vec<String>], corpus: &Corpus) -> Self {
        let docs: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(&d.text)).collect();
        let unique: std::collections::BTreeSet<&Vec<String>> =
            lists.iter().filter(|t| !t.is_empty()).collect();
        let phrases = unique
            .into_iter()
            .map(|tokens| {
                let mut cf = 0;
                let mut df = 0;
                for doc in &docs {
                    let n = count_token_seq(doc, tokens);
                    cf += n;
                    df += usize::from(n > 0);
                }
                Phrase { tokens: tokens.clone(), corpus_frequency: cf, document_frequency: df }
            })
            .collect();
        PhraseVocabulary { phrases }
    }
}

/// Mine all n-grams (length <= `max_len`, lowercased alphanumeric tokens)
/// with document frequency >= `min_count`, then drop any n-gram wholly
/// contained in a selected longer n-gram with the same document frequency
/// (maximality rule).
pub fn mine_phrases(corpus: &Corpus, min_count: usize, max_len: usize) -> Result<PhraseVocabulary> {
    if min_count < 1 {
        return Err(Error::Parameter("min_count must be >= 1".into()));
    }
    if max_len < 1 {
        return Err(Error::Parameter("max_len must be >= 1".into()));
    }

    // Count document and corpus frequency for every n-gram up to max_len.
    let mut doc_freq: HashMap<Vec<String>, usize> = HashMap::new();
    let mut corpus_freq: HashMap<Vec<String>, usize> = HashMap::new();
    for doc in corpus.iter() {
        let tokens = tokenize(&doc.text);
        let mut seen: HashSet<&[String]> = HashSet::new();
        for n in 1..=max_len.min(tokens.len()) {
            for gram in tokens.windows(n) {
                *corpus_freq.entry(gram.to_vec()).or_insert(0) += 1;
                if seen.insert(gram) {
                    *doc_freq.entry(gram.to_vec()).or_insert(0) += 1;
                }
            }
        }
    }

    // Candidates above the document-frequency threshold, longest first so
    // that maximality can be checked against already-selected longer grams.
    let mut candidates: Vec<(Vec<String>, usize)> = doc_freq
        .into_iter()
        .filter(|(_, df)| *df >= min_count)
        .collect();
    candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));

    // Selected grams grouped by document frequency for containment checks.
    let mut selected_by_df: HashMap<usize, Vec<Vec<String>>> = HashMap::new();
    let mut phrases = Vec::new();
    for (tokens, df) in candidates {
        let subsumed = selected_by_df
            .get(&df)
            .map(|longer| {
                longer
                    .iter()
                    .any(|g| g.len() > tokens.len() && count_token_seq(g, &tokens) > 0)
            })
            .unwrap_or(false);
        if subsumed {
            continue;
        }
        selected_by_df.entry(df).or_default().push(tokens.clone());
        let corpus_frequency = corpus_freq[&tokens];
        phrases.push(Phrase { tokens, corpus_frequency, document_frequency: df });
    }

    phrases.sort_by(|a, b| a.tokens.cmp(&b.tokens));
    Ok(PhraseVocabulary { phrases })
}

/// Per-document phrase weights: doc id -> (phrase index in `vocab` -> weight),
/// with weight(d,p) = tf(p,d) * (ln((1+N)/(1+df(p))) + 1) and entries absent
/// when tf = 0.
pub type TfidfTable = BTreeMap<String, BTreeMap<usize, f64>>;

pub fn compute_tfidf(corpus: &Corpus, vocab: &PhraseVocabulary) -> TfidfTable {
    let n_docs = corpus.len() as f64;
    let mut table = TfidfTable::new();
    for doc in corpus.iter() {
        let tokens = tokenize(&doc.text);
        let mut row = BTreeMap::new();
        for (idx, phrase) in vocab.phrases().iter().enumerate() {
            let tf = count_token_seq(&tokens, &phrase.tokens);
            if tf > 0 {
                let idf = ((1.0 + n_docs) / (1.0 + phrase.document_frequency as f64)).ln() + 1.0;
                row.insert(idx, tf as f64 * idf);
            }
        }
        if !row.is_empty() {
            table.insert(doc.id.clone(), row);
        }
    }
    table
}
