//! Text-rich network construction: one textual node per document joined to
//! attribute, phrase, and label-surface-name auxiliary nodes by weighted
//! undirected edges.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, LabelSpace};
use crate::error::{Error, Result};
use crate::phrases::{compute_tfidf, PhraseVocabulary};
use crate::tokenize::{count_token_seq, tokenize};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Textual,
    Attribute,
    Phrase,
    LabelName,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Textual => "textual",
            NodeKind::Attribute => "attribute",
            NodeKind::Phrase => "phrase",
            NodeKind::LabelName => "label_name",
        }
    }

    fn parse(s: &str) -> Option<NodeKind> {
        match s {
            "textual" => Some(NodeKind::Textual),
            "attribute" => Some(NodeKind::Attribute),
            "phrase" => Some(NodeKind::Phrase),
            "label_name" => Some(NodeKind::LabelName),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: f64,
}

/// The heterogeneous network: bipartite by construction between textual and
/// auxiliary nodes. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextRichNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    /// textual node id -> document id (bijection onto the corpus).
    textual_content: BTreeMap<NodeId, String>,
    by_doc: HashMap<String, NodeId>,
}

impl TextRichNetwork {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id as usize)
    }

    pub fn is_textual(&self, id: NodeId) -> bool {
        self.node(id).map(|n| n.kind == NodeKind::Textual).unwrap_or(false)
    }

    /// textual node id -> document id mapping.
    pub fn textual_content(&self) -> &BTreeMap<NodeId, String> {
        &self.textual_content
    }

    pub fn textual_node(&self, doc_id: &str) -> Option<NodeId> {
        self.by_doc.get(doc_id).copied()
    }

    pub fn require_textual_node(&self, doc_id: &str) -> Result<NodeId> {
        self.textual_node(doc_id)
            .ok_or_else(|| Error::Validation(format!("document '{doc_id}' has no textual node")))
    }

    pub fn doc_id(&self, node: NodeId) -> Option<&str> {
        self.textual_content.get(&node).map(String::as_str)
    }

    /// All textual node ids in ascending order.
    pub fn textual_nodes(&self) -> Vec<NodeId> {
        self.textual_content.keys().copied().collect()
    }

    /// SHA-256 over the canonical node and edge listing; used as the
    /// neighbor-table cache key.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.nodes.len() as u64).to_le_bytes());
        for node in &self.nodes {
            hasher.update(node.id.to_le_bytes());
            hasher.update(node.kind.as_str().as_bytes());
            hasher.update([0xff]);
            hasher.update(node.display.as_bytes());
            hasher.update([0xfe]);
        }
        hasher.update((self.edges.len() as u64).to_le_bytes());
        for edge in &self.edges {
            hasher.update(edge.u.to_le_bytes());
            hasher.update(edge.v.to_le_bytes());
            hasher.update(edge.weight.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<()> {
        let mut pairs = BTreeSet::new();
        for edge in &self.edges {
            let ends = [edge.u, edge.v];
            for id in ends {
                if self.node(id).is_none() {
                    return Err(Error::Validation(format!("edge references unknown node {id}")));
                }
            }
            if !(edge.weight > 0.0) {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    edge.u, edge.v, edge.weight
                )));
            }
            let textual_ends = ends.iter().filter(|&&id| self.is_textual(id)).count();
            if textual_ends != 1 {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) must join exactly one textual node, has {textual_ends}",
                    edge.u, edge.v
                )));
            }
            let key = (edge.u.min(edge.v), edge.u.max(edge.v));
            if !pairs.insert(key) {
                return Err(Error::Validation(format!(
                    "duplicate edge between {} and {}",
                    key.0, key.1
                )));
            }
        }
        Ok(())
    }
}

/// Build the network: textual nodes in corpus order, then attribute nodes
/// (one per distinct (field, value), edges weight 1), phrase nodes (edges
/// weighted by TF-IDF), and label-name nodes (edges weighted by the exact
/// occurrence count of the label's surface name in the document text).
/// Label matching never assigns a label to a document - it only adds edges.
pub fn build_network(
    corpus: &Corpus,
    vocab: &PhraseVocabulary,
    labels: &LabelSpace,
) -> Result<TextRichNetwork> {
    let mut net = TextRichNetwork::default();

    for doc in corpus.iter() {
        let id = net.nodes.len() as NodeId;
        net.nodes.push(Node { id, kind: NodeKind::Textual, display: doc.id.clone() });
        net.textual_content.insert(id, doc.id.clone());
        net.by_doc.insert(doc.id.clone(), id);
    }

    // Attribute nodes, keyed by (field, value) so equal values in different
    // fields stay distinct.
    let mut attr_values: BTreeSet<(String, String)> = BTreeSet::new();
    for doc in corpus.iter() {
        for (field, value) in &doc.attributes {
            attr_values.insert((field.clone(), value.clone()));
        }
    }
    let mut attr_node: BTreeMap<(String, String), NodeId> = BTreeMap::new();
    for (field, value) in attr_values {
        let id = net.nodes.len() as NodeId;
        net.nodes.push(Node {
            id,
            kind: NodeKind::Attribute,
            display: format!("{field}={value}"),
        });
        attr_node.insert((field, value), id);
    }

    // Phrase nodes only for phrases that occur in at least one document.
    let tfidf = compute_tfidf(corpus, vocab);
    let mut used_phrases: BTreeSet<usize> = BTreeSet::new();
    for row in tfidf.values() {
        used_phrases.extend(row.keys().copied());
    }
    let mut phrase_node: BTreeMap<usize, NodeId> = BTreeMap::new();
    for &idx in &used_phrases {
        let id = net.nodes.len() as NodeId;
        net.nodes.push(Node {
            id,
            kind: NodeKind::Phrase,
            display: vocab.phrases()[idx].joined(),
        });
        phrase_node.insert(idx, id);
    }

    // Label-name nodes for labels whose surface occurs in >= 1 document;
    // matching is a case-insensitive token-sequence scan.
    let doc_tokens: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(&d.text)).collect();
    let surfaces: Vec<Vec<String>> =
        labels.labels().iter().map(|l| tokenize(&l.surface)).collect();
    let mut label_counts: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); labels.len()];
    for (doc_idx, tokens) in doc_tokens.iter().enumerate() {
        for (class, surface) in surfaces.iter().enumerate() {
            if surface.is_empty() {
                continue;
            }
            let count = count_token_seq(tokens, surface);
            if count > 0 {
                label_counts[class].push((doc_idx as NodeId, count));
            }
        }
    }
    let mut label_node: Vec<Option<NodeId>> = vec![None; labels.len()];
    for (class, matches) in label_counts.iter().enumerate() {
        if !matches.is_empty() {
            let id = net.nodes.len() as NodeId;
            net.nodes.push(Node {
                id,
                kind: NodeKind::LabelName,
                display: labels.labels()[class].surface.clone(),
            });
            label_node[class] = Some(id);
        }
    }

    // Edges, family by family, in deterministic order.
    for doc in corpus.iter() {
        let u = net.by_doc[&doc.id];
        for (field, value) in &doc.attributes {
            let v = attr_node[&(field.clone(), value.clone())];
            net.edges.push(Edge { u, v, weight: 1.0 });
        }
    }
    for doc in corpus.iter() {
        let u = net.by_doc[&doc.id];
        if let Some(row) = tfidf.get(&doc.id) {
            for (idx, weight) in row {
                net.edges.push(Edge { u, v: phrase_node[idx], weight: *weight });
            }
        }
    }
    for (class, matches) in label_counts.iter().enumerate() {
        if let Some(v) = label_node[class] {
            for &(u, count) in matches {
                net.edges.push(Edge { u, v, weight: count as f64 });
            }
        }
    }

    net.validate()?;
    Ok(net)
}

// ===== TSV persistence =====

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl TextRichNetwork {
    /// Write the network as two TSV files: `node_id<TAB>kind<TAB>display`
    /// and `u<TAB>v<TAB>weight`. Weights print in shortest round-trip form
    /// so reloading reproduces them bit for bit.
    pub fn save(&self, nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(nodes_path)?);
        for node in &self.nodes {
            writeln!(out, "{}\t{}\t{}", node.id, node.kind.as_str(), escape(&node.display))?;
        }
        out.flush()?;
        let mut out = BufWriter::new(File::create(edges_path)?);
        for edge in &self.edges {
            writeln!(out, "{}\t{}\t{}", edge.u, edge.v, edge.weight)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<Self> {
        let nodes_path = nodes_path.as_ref();
        let edges_path = edges_path.as_ref();
        let mut net = TextRichNetwork::default();

        for (lineno, line) in BufReader::new(File::open(nodes_path)?).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let parsed = (|| {
                let id: NodeId = parts.next()?.parse().ok()?;
                let kind = NodeKind::parse(parts.next()?)?;
                let display = unescape(parts.next()?);
                Some(Node { id, kind, display })
            })();
            let node = parsed.ok_or_else(|| Error::Parse {
                path: nodes_path.display().to_string(),
                line: lineno + 1,
                message: "expected 'node_id<TAB>kind<TAB>display'".into(),
            })?;
            if node.id as usize != net.nodes.len() {
                return Err(Error::Parse {
                    path: nodes_path.display().to_string(),
                    line: lineno + 1,
                    message: format!("node ids must be dense and ascending, got {}", node.id),
                });
            }
            if node.kind == NodeKind::Textual {
                net.textual_content.insert(node.id, node.display.clone());
                if net.by_doc.insert(node.display.clone(), node.id).is_some() {
                    return Err(Error::Validation(format!(
                        "duplicate textual node for document '{}'",
                        node.display
                    )));
                }
            }
            net.nodes.push(node);
        }

        for (lineno, line) in BufReader::new(File::open(edges_path)?).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let parsed = (|| {
                let u: NodeId = parts.next()?.parse().ok()?;
                let v: NodeId = parts.next()?.parse().ok()?;
                let weight: f64 = parts.next()?.parse().ok()?;
                if parts.next().is_some() {
                    return None;
                }
                Some(Edge { u, v, weight })
            })();
            let edge = parsed.ok_or_else(|| Error::Parse {
                path: edges_path.display().to_string(),
                line: lineno + 1,
                message: "expected 'u<TAB>v<TAB>weight'".into(),
            })?;
            net.edges.push(edge);
        }

        net.validate()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Label};

    fn doc(id: &str, text: &str, attrs: &[(&str, &str)]) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            gold_label: None,
        }
    }

    fn label_space(pairs: &[(&str, &str)]) -> LabelSpace {
        LabelSpace::new(
            pairs
                .iter()
                .map(|(id, surface)| Label { id: id.to_string(), surface: surface.to_string() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_doc_single_attribute() {
        let corpus = Corpus::new(vec![doc("d1", "a b", &[("brand", "X")])]).unwrap();
        let net =
            build_network(&corpus, &PhraseVocabulary::default(), &label_space(&[])).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.edges().len(), 1);
        assert_eq!(net.edges()[0].weight, 1.0);
        assert_eq!(net.nodes()[1].kind, NodeKind::Attribute);
        assert_eq!(net.nodes()[1].display, "brand=X");
    }

    #[test]
    fn label_name_edge_counts_occurrences() {
        let corpus = Corpus::new(vec![doc("d1", "poetry poetry anthology", &[])]).unwrap();
        let labels = label_space(&[("poetry", "poetry"), ("safety", "Safe")]);
        let net = build_network(&corpus, &PhraseVocabulary::default(), &labels).unwrap();
        let label_nodes: Vec<&Node> =
            net.nodes().iter().filter(|n| n.kind == NodeKind::LabelName).collect();
        assert_eq!(label_nodes.len(), 1, "unmatched surfaces get no node");
        assert_eq!(label_nodes[0].display, "poetry");
        let edge = net.edges().iter().find(|e| e.v == label_nodes[0].id).unwrap();
        assert_eq!(edge.weight, 2.0);
        // The document's gold label stays unset: matching only adds edges.
        assert_eq!(corpus.get("d1").unwrap().gold_label, None);
    }

    #[test]
    fn label_match_is_case_insensitive_token_sequence() {
        let corpus = Corpus::new(vec![
            doc("d1", "I bought Science Fiction books", &[]),
            doc("d2", "science fictional is no match", &[]),
        ])
        .unwrap();
        let labels = label_space(&[("sf", "science fiction")]);
        let net = build_network(&corpus, &PhraseVocabulary::default(), &labels).unwrap();
        let ln = net.nodes().iter().find(|n| n.kind == NodeKind::LabelName).unwrap();
        let edges: Vec<&Edge> = net.edges().iter().filter(|e| e.v == ln.id).collect();
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].u, net.textual_node("d1").unwrap());
    }

    #[test]
    fn phrase_edges_carry_tfidf_weights() {
        let corpus = Corpus::new(vec![
            doc("d1", "salt pepper salt pepper", &[]),
            doc("d2", "x y", &[]),
            doc("d3", "y z", &[]),
            doc("d4", "z w", &[]),
        ])
        .unwrap();
        let vocab = PhraseVocabulary::from_token_lists(
            &[crate::tokenize::tokenize("salt pepper")],
            &corpus,
        );
        let net = build_network(&corpus, &vocab, &label_space(&[])).unwrap();
        let pn = net.nodes().iter().find(|n| n.kind == NodeKind::Phrase).unwrap();
        assert_eq!(pn.display, "salt pepper");
        let edge = net.edges().iter().find(|e| e.v == pn.id).unwrap();
        let expected = 2.0 * ((5.0f64 / 2.0).ln() + 1.0);
        assert!((edge.weight - expected).abs() < 1e-12);
    }

    /// Brute-force constructor applying the three edge rules independently.
    fn naive_network(
        corpus: &Corpus,
        vocab: &PhraseVocabulary,
        labels: &LabelSpace,
    ) -> (Vec<(String, String)>, Vec<(String, String, f64)>) {
        use crate::tokenize::tokenize as tok;
        let mut nodes: Vec<(String, String)> = Vec::new(); // (kind, display)
        let mut edges: Vec<(String, String, f64)> = Vec::new(); // (doc, aux display, w)
        for d in corpus.iter() {
            nodes.push(("textual".into(), d.id.clone()));
        }
        let mut attrs: std::collections::BTreeSet<(String, String)> = Default::default();
        for d in corpus.iter() {
            for (f, v) in &d.attributes {
                attrs.insert((f.clone(), v.clone()));
                edges.push((d.id.clone(), format!("{f}={v}"), 1.0));
            }
        }
        for (f, v) in attrs {
            nodes.push(("attribute".into(), format!("{f}={v}")));
        }
        let n = corpus.len() as f64;
        let mut phrase_used: std::collections::BTreeSet<String> = Default::default();
        for d in corpus.iter() {
            let toks = tok(&d.text);
            for p in vocab.phrases() {
                let tf = toks.windows(p.tokens.len()).filter(|w| *w == p.tokens.as_slice()).count();
                if tf > 0 {
                    let w = tf as f64
                        * (((1.0 + n) / (1.0 + p.document_frequency as f64)).ln() + 1.0);
                    edges.push((d.id.clone(), p.joined(), w));
                    phrase_used.insert(p.joined());
                }
            }
        }
        for p in phrase_used {
            nodes.push(("phrase".into(), p));
        }
        let mut label_used: std::collections::BTreeSet<String> = Default::default();
        for d in corpus.iter() {
            let toks = tok(&d.text);
            for l in labels.labels() {
                let surf = tok(&l.surface);
                if surf.is_empty() {
                    continue;
                }
                let c = toks.windows(surf.len()).filter(|w| *w == surf.as_slice()).count();
                if c > 0 {
                    edges.push((d.id.clone(), format!("label:{}", l.surface), c as f64));
                    label_used.insert(format!("label:{}", l.surface));
                }
            }
        }
        for l in label_used {
            nodes.push(("label_name".into(), l));
        }
        nodes.sort();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (nodes, edges)
    }

    #[test]
    fn six_doc_corpus_matches_naive_constructor() {
        let corpus = Corpus::new(vec![
            doc("d1", "fantasy world of dragons", &[("genre", "fantasy"), ("binding", "hard")]),
            doc("d2", "cook book for salt pepper lovers", &[("genre", "cooking")]),
            doc("d3", "dragons and salt pepper", &[("binding", "hard")]),
            doc("d4", "a fantasy cook", &[("genre", "fantasy")]),
            doc("d5", "pure noise text", &[]),
            doc("d6", "salt pepper salt pepper", &[("binding", "soft")]),
        ])
        .unwrap();
        let vocab = crate::phrases::mine_phrases(&corpus, 2, 3).unwrap();
        let labels = label_space(&[("fan", "fantasy"), ("cook", "cook")]);
        let net = build_network(&corpus, &vocab, &labels).unwrap();

        let mut got_nodes: Vec<(String, String)> = net
            .nodes()
            .iter()
            .map(|nd| {
                let display = if nd.kind == NodeKind::LabelName {
                    format!("label:{}", nd.display)
                } else {
                    nd.display.clone()
                };
                (nd.kind.as_str().to_string(), display)
            })
            .collect();
        got_nodes.sort();
        let mut got_edges: Vec<(String, String, f64)> = net
            .edges()
            .iter()
            .map(|e| {
                let aux = net.node(e.v).unwrap();
                let display = if aux.kind == NodeKind::LabelName {
                    format!("label:{}", aux.display)
                } else {
                    aux.display.clone()
                };
                (net.doc_id(e.u).unwrap().to_string(), display, e.weight)
            })
            .collect();
        got_edges.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let (oracle_nodes, oracle_edges) = naive_network(&corpus, &vocab, &labels);
        assert_eq!(got_nodes, oracle_nodes);
        assert_eq!(got_edges.len(), oracle_edges.len());
        for (g, o) in got_edges.iter().zip(&oracle_edges) {
            assert_eq!((&g.0, &g.1), (&o.0, &o.1));
            assert!((g.2 - o.2).abs() < 1e-12);
        }
    }

    #[test]
    fn bipartite_and_deterministic() {
        let corpus = Corpus::new(vec![
            doc("d1", "salt pepper market", &[("brand", "X")]),
            doc("d2", "salt pepper dealer", &[("brand", "X"), ("brand2", "X")]),
        ])
        .unwrap();
        let vocab = crate::phrases::mine_phrases(&corpus, 2, 2).unwrap();
        let labels = label_space(&[("m", "market")]);
        let a = build_network(&corpus, &vocab, &labels).unwrap();
        let b = build_network(&corpus, &vocab, &labels).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
        for e in a.edges() {
            let t = usize::from(a.is_textual(e.u)) + usize::from(a.is_textual(e.v));
            assert_eq!(t, 1);
            assert!(e.weight > 0.0);
        }
        // Same value under different fields stays two distinct nodes.
        let attr_nodes = a.nodes().iter().filter(|n| n.kind == NodeKind::Attribute).count();
        assert_eq!(attr_nodes, 2);
    }

    #[test]
    fn tsv_roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::new(vec![
            doc("d1", "salt pepper salt", &[("brand", "Acme Co")]),
            doc("d2", "salt pepper", &[]),
            doc("d3", "other text entirely", &[]),
        ])
        .unwrap();
        let vocab = crate::phrases::mine_phrases(&corpus, 2, 2).unwrap();
        let net = build_network(&corpus, &vocab, &label_space(&[("s", "salt")])).unwrap();
        let nodes_path = dir.path().join("nodes.tsv");
        let edges_path = dir.path().join("edges.tsv");
        net.save(&nodes_path, &edges_path).unwrap();
        let reloaded = TextRichNetwork::load(&nodes_path, &edges_path).unwrap();
        assert_eq!(reloaded, net);
        for (a, b) in net.edges().iter().zip(reloaded.edges()) {
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
        assert_eq!(reloaded.content_hash(), net.content_hash());
    }

    #[test]
    fn display_escaping_survives_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus =
            Corpus::new(vec![doc("d\t1", "plain text", &[("brand", "tab\tand\nnewline")])])
                .unwrap();
        let net =
            build_network(&corpus, &PhraseVocabulary::default(), &label_space(&[])).unwrap();
        let nodes_path = dir.path().join("nodes.tsv");
        let edges_path = dir.path().join("edges.tsv");
        net.save(&nodes_path, &edges_path).unwrap();
        let reloaded = TextRichNetwork::load(&nodes_path, &edges_path).unwrap();
        assert_eq!(reloaded, net);
        assert!(reloaded.textual_node("d\t1").is_some());
    }

    #[test]
    fn isolated_document_still_gets_textual_node() {
        let corpus = Corpus::new(vec![doc("lonely", "nothing shared here", &[])]).unwrap();
        let net =
            build_network(&corpus, &PhraseVocabulary::default(), &label_space(&[])).unwrap();
        assert_eq!(net.node_count(), 1);
        assert_eq!(net.edges().len(), 0);
        assert_eq!(net.textual_node("lonely"), Some(0));
        assert_eq!(net.textual_content().len(), 1);
    }
}
