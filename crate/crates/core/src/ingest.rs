//! Corpus, label, split, and triple ingestion plus text preprocessing and
//! segmentation.
//!
//! All four input files are UTF-8 JSON-lines: documents `{doc_id, text}`,
//! labels `{doc_id, codes:[...]}`, splits `{doc_id, split}`, and triples
//! `{doc_id, head, head_type, relation, relation_family, tail, tail_type}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityType, RelationFamily};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown relation family '{family}'")]
    UnknownFamily {
        path: String,
        line: usize,
        family: String,
    },
    #[error("{path}:{line}: empty {field}")]
    EmptyField {
        path: String,
        line: usize,
        field: &'static str,
    },
    #[error("duplicate doc_id '{0}'")]
    DuplicateDocId(String),
    #[error("triples reference unknown documents: {}", .0.join(", "))]
    DanglingDocIds(Vec<String>),
    #[error("document '{doc_id}' has no split assignment")]
    MissingSplit { doc_id: String },
    #[error("document '{doc_id}' carries label '{label}' outside the label space")]
    LabelOutsideSpace { doc_id: String, label: String },
    #[error("unknown split '{0}' (expected train, dev, or test)")]
    UnknownSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(raw: &str) -> Result<Split, IngestError> {
        match raw.trim().to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(IngestError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
    pub split: Split,
}

/// Ordered lowercase tokens. Sequences produced by [`preprocess_text`]
/// contain only tokens with at least one alphabetic character; serialized
/// graphs may additionally carry literal relation tokens such as `1`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        TokenSequence { tokens }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.tokens.iter()
    }
}

/// One extracted relation, attributed to a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub doc_id: String,
    pub head_text: String,
    pub head_type: EntityType,
    pub relation: String,
    pub relation_family: RelationFamily,
    pub tail_text: String,
    pub tail_type: EntityType,
}

/// Contiguous chunk of a token sequence; all segments except possibly the
/// last hold exactly the configured segment length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub tokens: Vec<String>,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<RawDocument>,
    pub token_sequences: Vec<TokenSequence>,
    pub triples: Vec<Vec<Triple>>,
    pub label_space: Vec<String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.doc_id == doc_id)
    }

    /// Indices of documents in the given split, in corpus order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Binary label vector over the lexicographic label space.
    pub fn label_vector(&self, doc: usize) -> Vec<f64> {
        self.label_space
            .iter()
            .map(|code| {
                if self.documents[doc].labels.contains(code) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Lowercases, splits on whitespace, and drops tokens with no alphabetic
/// character (so "40mg" survives while "###" does not). Idempotent.
pub fn preprocess_text(raw: &str) -> TokenSequence {
    let tokens = raw
        .to_lowercase()
        .split_whitespace()
        .filter(|t| t.chars().any(|c| c.is_alphabetic()))
        .map(|t| t.to_string())
        .collect();
    TokenSequence { tokens }
}

/// Truncates to `max_len` tokens, then partitions into segments of `l`
/// tokens each (last one possibly shorter). An empty sequence yields one
/// empty segment so every document has a defined text representation.
pub fn segment_document(tokens: &TokenSequence, l: usize, max_len: usize) -> Vec<Segment> {
    assert!(l >= 1, "segment length must be positive");
    assert!(max_len >= 1, "max length must be positive");
    let truncated = &tokens.tokens[..tokens.len().min(max_len)];
    if truncated.is_empty() {
        return vec![Segment {
            tokens: Vec::new(),
            index: 0,
        }];
    }
    truncated
        .chunks(l)
        .enumerate()
        .map(|(index, chunk)| Segment {
            tokens: chunk.to_vec(),
            index,
        })
        .collect()
}

#[derive(Deserialize)]
struct TripleLine {
    doc_id: String,
    head: String,
    head_type: String,
    relation: String,
    relation_family: String,
    tail: String,
    tail_type: String,
}

/// Parses a JSON-lines triple stream. Lines whose relation label is the
/// no-relationship marker ("O" or "0") are dropped.
pub fn parse_triples(reader: impl BufRead, path: &str) -> Result<Vec<Triple>, IngestError> {
    let mut triples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TripleLine =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse {
                path: path.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        let rel = row.relation.trim();
        if rel == "O" || rel == "0" {
            continue;
        }
        let family = RelationFamily::parse(&row.relation_family).ok_or_else(|| {
            IngestError::UnknownFamily {
                path: path.to_string(),
                line: i + 1,
                family: row.relation_family.clone(),
            }
        })?;
        if row.head.trim().is_empty() {
            return Err(IngestError::EmptyField {
                path: path.to_string(),
                line: i + 1,
                field: "head",
            });
        }
        if row.tail.trim().is_empty() {
            return Err(IngestError::EmptyField {
                path: path.to_string(),
                line: i + 1,
                field: "tail",
            });
        }
        triples.push(Triple {
            doc_id: row.doc_id,
            head_text: row.head,
            head_type: EntityType::parse(&row.head_type),
            relation: rel.to_string(),
            relation_family: family,
            tail_text: row.tail,
            tail_type: EntityType::parse(&row.tail_type),
        });
    }
    Ok(triples)
}

pub fn parse_triples_file(path: &Path) -> Result<Vec<Triple>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_triples(std::io::BufReader::new(file), &path.display().to_string())
}

#[derive(Deserialize)]
struct DocLine {
    doc_id: String,
    text: String,
}

#[derive(Deserialize)]
struct LabelLine {
    doc_id: String,
    codes: Vec<String>,
}

#[derive(Deserialize)]
struct SplitLine {
    doc_id: String,
    split: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Loads and cross-validates a corpus. The label space is the lexicographic
/// union of all codes in the labels file; documents keep corpus-file order.
pub fn load_corpus(
    doc_path: &Path,
    label_path: &Path,
    triples_path: &Path,
    splits_path: &Path,
) -> Result<Corpus, IngestError> {
    let docs: Vec<DocLine> = read_jsonl(doc_path)?;
    let labels: Vec<LabelLine> = read_jsonl(label_path)?;
    let splits: Vec<SplitLine> = read_jsonl(splits_path)?;
    let triples = parse_triples_file(triples_path)?;
    assemble_corpus(docs, labels, splits, triples)
}

fn assemble_corpus(
    docs: Vec<DocLine>,
    labels: Vec<LabelLine>,
    splits: Vec<SplitLine>,
    triples: Vec<Triple>,
) -> Result<Corpus, IngestError> {
    let mut label_map: HashMap<String, BTreeSet<String>> = HashMap::new();
    let mut label_space: BTreeSet<String> = BTreeSet::new();
    for row in labels {
        let entry = label_map.entry(row.doc_id).or_default();
        for code in row.codes {
            label_space.insert(code.clone());
            entry.insert(code);
        }
    }

    let mut split_map: HashMap<String, Split> = HashMap::new();
    for row in splits {
        let split = Split::parse(&row.split)?;
        if split_map.insert(row.doc_id.clone(), split).is_some() {
            return Err(IngestError::DuplicateDocId(row.doc_id));
        }
    }

    let mut documents = Vec::with_capacity(docs.len());
    let mut token_sequences = Vec::with_capacity(docs.len());
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.clone()) {
            return Err(IngestError::DuplicateDocId(doc.doc_id));
        }
        let split = *split_map
            .get(&doc.doc_id)
            .ok_or_else(|| IngestError::MissingSplit {
                doc_id: doc.doc_id.clone(),
            })?;
        token_sequences.push(preprocess_text(&doc.text));
        documents.push(RawDocument {
            labels: label_map.remove(&doc.doc_id).unwrap_or_default(),
            doc_id: doc.doc_id,
            text: doc.text,
            split,
        });
    }

    let mut per_doc: BTreeMap<String, Vec<Triple>> = BTreeMap::new();
    let mut dangling: BTreeSet<String> = BTreeSet::new();
    for triple in triples {
        if seen.contains(&triple.doc_id) {
            per_doc.entry(triple.doc_id.clone()).or_default().push(triple);
        } else {
            dangling.insert(triple.doc_id.clone());
        }
    }
    if !dangling.is_empty() {
        return Err(IngestError::DanglingDocIds(dangling.into_iter().collect()));
    }

    let triples: Vec<Vec<Triple>> = documents
        .iter()
        .map(|d| per_doc.remove(&d.doc_id).unwrap_or_default())
        .collect();

    let label_space: Vec<String> = label_space.into_iter().collect();
    for doc in &documents {
        for label in &doc.labels {
            if label_space.binary_search(label).is_err() {
                return Err(IngestError::LabelOutsideSpace {
                    doc_id: doc.doc_id.clone(),
                    label: label.clone(),
                });
            }
        }
    }

    Ok(Corpus {
        documents,
        token_sequences,
        triples,
        label_space,
    })
}
