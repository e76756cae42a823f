//! Shannon entropy of token unigram distributions and the graph-vs-text
//! information retention ratio, including ablation sweeps.
//!
//! Entropy is computed in bits over a token-level unigram distribution
//! pooled across the corpus; a per-document averaging mode exists but makes
//! no parity claims against published corpus-level figures.

use std::collections::BTreeMap;

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Corpus, TokenSequence};
use crate::kg::{filter_graph, serialize_graph, AblationFilter, KgError, PatientGraph};

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("cannot form a distribution over an empty token sequence")]
    EmptyDistribution,
    #[error("text entropy must be positive, got {0}")]
    NonPositiveTextEntropy(f64),
    #[error("distribution probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Discrete distribution over distinct tokens. Support is sorted
/// lexicographically so downstream sums are order-deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<F> {
    support: Vec<String>,
    probabilities: Vec<F>,
}

impl<F: Float> Distribution<F> {
    pub fn new(support: Vec<String>, probabilities: Vec<F>) -> Result<Self, EntropyError> {
        if support.is_empty() {
            return Err(EntropyError::EmptyDistribution);
        }
        let sum = probabilities.iter().fold(F::zero(), |a, &p| a + p);
        let tol = F::from(1e-12).expect("tolerance");
        if (sum - F::one()).abs() > tol || probabilities.iter().any(|&p| p <= F::zero()) {
            return Err(EntropyError::NotNormalized(
                sum.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Distribution {
            support,
            probabilities,
        })
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn probabilities(&self) -> &[F] {
        &self.probabilities
    }
}

/// Unigram distribution of a token sequence: probability = count / total.
pub fn unigram_distribution<F: Float>(
    tokens: &TokenSequence,
) -> Result<Distribution<F>, EntropyError> {
    unigram_from_counts(count_tokens(tokens.iter().map(String::as_str)))
}

fn count_tokens<'a>(tokens: impl Iterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for token in tokens {
        *counts.entry(token.to_string()).or_insert(0) += 1;
    }
    counts
}

fn unigram_from_counts<F: Float>(
    counts: BTreeMap<String, u64>,
) -> Result<Distribution<F>, EntropyError> {
    if counts.is_empty() {
        return Err(EntropyError::EmptyDistribution);
    }
    let total = counts.values().sum::<u64>();
    let total = F::from(total).expect("count fits scalar");
    let (support, probabilities) = counts
        .into_iter()
        .map(|(token, count)| (token, F::from(count).expect("count fits scalar") / total))
        .unzip();
    Distribution::new(support, probabilities)
}

/// `H(X) = -sum P(x) log2 P(x)`, in bits.
pub fn shannon_entropy<F: Float>(dist: &Distribution<F>) -> F {
    dist.probabilities
        .iter()
        .fold(F::zero(), |h, &p| h - p * p.log2())
}

/// Retention and loss percentages of graph entropy relative to text entropy.
/// Loss `L = (h_text - h_graph) / h_text * 100`; retention is `100 - L`, so
/// the two always sum to exactly 100.
pub fn retention_and_loss<F: Float>(h_text: F, h_graph: F) -> Result<(F, F), EntropyError> {
    if h_text <= F::zero() {
        return Err(EntropyError::NonPositiveTextEntropy(
            h_text.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let hundred = F::from(100.0).expect("scalar");
    let loss = (h_text - h_graph) / h_text * hundred;
    Ok((hundred - loss, loss))
}

/// Pooled across the corpus (default) or the mean of per-document entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolingMode {
    #[default]
    Pooled,
    PerDocumentMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub description: String,
    pub graph_entropy: f64,
    pub retention_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    pub text_entropy: f64,
    pub graph_entropy: f64,
    pub retention_ratio: f64,
    pub loss_ratio: f64,
    pub ablation_rows: Vec<AblationRow>,
    /// Set when every graph serialized to nothing; graph entropy is then
    /// reported as 0 rather than erroring out.
    pub all_graphs_empty: bool,
}

impl EntropyReport {
    /// Aligned table mirroring the report schema: Remove, Graph Entropy,
    /// Ratio %.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Text Entropy: {:.4}\n", self.text_entropy));
        out.push_str(&format!(
            "{:<28} {:>14} {:>10}\n",
            "Remove", "Graph Entropy", "Ratio (%)"
        ));
        out.push_str(&format!(
            "{:<28} {:>14.4} {:>10.2}\n",
            "full", self.graph_entropy, self.retention_ratio
        ));
        for row in &self.ablation_rows {
            out.push_str(&format!(
                "{:<28} {:>14.4} {:>10.2}\n",
                row.description, row.graph_entropy, row.retention_ratio
            ));
        }
        out
    }
}

fn pooled_entropy<'a>(
    sequences: impl Iterator<Item = &'a TokenSequence>,
    mode: PoolingMode,
) -> Option<f64> {
    match mode {
        PoolingMode::Pooled => {
            let counts = count_tokens(
                sequences.flat_map(|seq| seq.iter().map(String::as_str)),
            );
            unigram_from_counts::<f64>(counts)
                .ok()
                .map(|d| shannon_entropy(&d))
        }
        PoolingMode::PerDocumentMean => {
            let entropies: Vec<f64> = sequences
                .filter(|seq| !seq.is_empty())
                .map(|seq| shannon_entropy(&unigram_distribution::<f64>(seq).expect("non-empty")))
                .collect();
            if entropies.is_empty() {
                None
            } else {
                Some(entropies.iter().sum::<f64>() / entropies.len() as f64)
            }
        }
    }
}

/// Text entropy over all processed documents, graph entropy over all
/// serialized graphs, and one ablation row per filter with the graph
/// entropy recomputed on filtered graphs. Text entropy is constant across
/// ablation rows.
pub fn corpus_entropy_report(
    corpus: &Corpus,
    graphs: &[PatientGraph],
    filters: &[AblationFilter],
    mode: PoolingMode,
) -> Result<EntropyReport, EntropyError> {
    let text_entropy = pooled_entropy(corpus.token_sequences.iter(), mode)
        .ok_or(EntropyError::EmptyDistribution)?;
    if text_entropy <= 0.0 {
        return Err(EntropyError::NonPositiveTextEntropy(text_entropy));
    }

    let serialized: Vec<TokenSequence> = graphs.iter().map(serialize_graph).collect();
    let (graph_entropy, all_graphs_empty) = match pooled_entropy(serialized.iter(), mode) {
        Some(h) => (h, false),
        None => (0.0, true),
    };
    let (retention_ratio, loss_ratio) = retention_and_loss(text_entropy, graph_entropy)?;

    let mut ablation_rows = Vec::with_capacity(filters.len());
    for filter in filters {
        let filtered: Vec<PatientGraph> = corpus
            .documents
            .iter()
            .enumerate()
            .map(|(i, doc)| filter_graph(&doc.doc_id, &corpus.triples[i], filter))
            .collect::<Result<_, _>>()?;
        let serialized: Vec<TokenSequence> = filtered.iter().map(serialize_graph).collect();
        let h = pooled_entropy(serialized.iter(), mode).unwrap_or(0.0);
        let (retention, _) = retention_and_loss(text_entropy, h)?;
        ablation_rows.push(AblationRow {
            description: filter.describe(),
            graph_entropy: h,
            retention_ratio: retention,
        });
    }

    Ok(EntropyReport {
        text_entropy,
        graph_entropy,
        retention_ratio,
        loss_ratio,
        ablation_rows,
        all_graphs_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::preprocess_text;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(tokens.iter().map(|t| t.to_string()).collect())
    }

    #[test]
    fn unigram_counting() {
        let d = unigram_distribution::<f64>(&seq(&["a", "a", "b"])).unwrap();
        assert_eq!(d.support(), &["a", "b"]);
        assert!((d.probabilities()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probabilities()[1] - 1.0 / 3.0).abs() < 1e-15);

        let singleton = unigram_distribution::<f64>(&seq(&["x"])).unwrap();
        assert_eq!(singleton.probabilities(), &[1.0]);

        let uniform = unigram_distribution::<f64>(&seq(&["d", "c", "b", "a"])).unwrap();
        assert!(uniform.probabilities().iter().all(|&p| p == 0.25));
        // support sorted lexicographically
        assert_eq!(uniform.support(), &["a", "b", "c", "d"]);
    }

    #[test]
    fn unigram_rejects_empty() {
        assert!(unigram_distribution::<f64>(&TokenSequence::default()).is_err());
    }

    #[test]
    fn entropy_closed_forms() {
        let uniform = unigram_distribution::<f64>(&seq(&["a", "b", "c", "d"])).unwrap();
        assert!((shannon_entropy(&uniform) - 2.0).abs() < 1e-12);

        let skew = unigram_distribution::<f64>(&seq(&["a", "a", "b"])).unwrap();
        assert!((shannon_entropy(&skew) - 0.918296).abs() < 1e-6);

        let single = unigram_distribution::<f64>(&seq(&["x", "x"])).unwrap();
        assert_eq!(shannon_entropy(&single), 0.0);
    }

    #[test]
    fn entropy_uniform_closed_form_family() {
        for n in [1usize, 2, 4, 8, 1024] {
            let tokens: Vec<String> = (0..n).map(|i| format!("tok{i:04}")).collect();
            let d = unigram_distribution::<f64>(&TokenSequence::from_tokens(tokens)).unwrap();
            assert!(
                (shannon_entropy(&d) - (n as f64).log2()).abs() < 1e-12,
                "n = {n}"
            );
        }
    }

    #[test]
    fn entropy_bounded_by_log_support() {
        let d = unigram_distribution::<f64>(&seq(&["a", "a", "a", "b", "c"])).unwrap();
        let h = shannon_entropy(&d);
        assert!(h >= 0.0 && h <= (d.support().len() as f64).log2() + 1e-15);
    }

    #[test]
    fn entropy_generic_over_f32() {
        let d = unigram_distribution::<f32>(&seq(&["a", "b", "c", "d"])).unwrap();
        assert!((shannon_entropy(&d) - 2.0_f32).abs() < 1e-6);
    }

    #[test]
    fn retention_arithmetic() {
        let (r, l) = retention_and_loss(8.0, 7.2).unwrap();
        assert!((r - 90.0).abs() < 1e-9 && (l - 10.0).abs() < 1e-9);

        // Table-style rounded inputs: direct arithmetic, not the published
        // third digit
        let (r, l) = retention_and_loss(8.33, 7.48).unwrap();
        assert!((r - 89.80).abs() < 0.01);
        assert!((l - 10.20).abs() < 0.01);

        let (r, l) = retention_and_loss(5.0, 5.0).unwrap();
        assert_eq!((r, l), (100.0, 0.0));

        assert!(retention_and_loss(0.0, 1.0).is_err());
    }

    #[test]
    fn retention_plus_loss_is_exactly_one_hundred() {
        for (t, g) in [(8.33, 7.48), (1.0, 2.5), (3.7, 0.0)] {
            let (r, l) = retention_and_loss(t, g).unwrap();
            assert!((r + l - 100.0).abs() < 1e-9);
        }
    }

    fn tiny_corpus(text: &str, graph_tokens: &[&str]) -> (Corpus, Vec<PatientGraph>) {
        use crate::ingest::{RawDocument, Split};
        use crate::kg::{Edge, EntityType, Node, RelationFamily};
        let corpus = Corpus {
            documents: vec![RawDocument {
                doc_id: "d1".into(),
                text: text.into(),
                labels: Default::default(),
                split: Split::Train,
            }],
            token_sequences: vec![preprocess_text(text)],
            triples: vec![vec![]],
            label_space: vec![],
        };
        let graph = if graph_tokens.is_empty() {
            PatientGraph { doc_id: "d1".into(), nodes: vec![], edges: vec![] }
        } else {
            PatientGraph {
                doc_id: "d1".into(),
                nodes: vec![
                    Node { text: graph_tokens[0].into(), entity_type: EntityType::Problem },
                    Node { text: graph_tokens[1].into(), entity_type: EntityType::Test },
                ],
                edges: vec![Edge {
                    head: 0,
                    tail: 1,
                    relation: graph_tokens[2].into(),
                    family: RelationFamily::CR,
                }],
            }
        };
        (corpus, vec![graph])
    }

    #[test]
    fn corpus_report_single_doc() {
        // doc "a a b"; graph serializes to ["a", "terp", "b"] -> drop the
        // relation by using nodes only? Use nodes "a","b" with relation "terp".
        let (corpus, graphs) = tiny_corpus("a a b", &["a", "b", "TeRP"]);
        let report =
            corpus_entropy_report(&corpus, &graphs, &[], PoolingMode::Pooled).unwrap();
        assert!((report.text_entropy - 0.9183).abs() < 1e-4);
        // serialized graph is ["a","terp","b"]: uniform over 3 symbols
        assert!((report.graph_entropy - 3.0_f64.log2()).abs() < 1e-12);
        assert!(report.ablation_rows.is_empty());
        assert!(!report.all_graphs_empty);
    }

    #[test]
    fn corpus_report_flags_all_empty_graphs() {
        let (corpus, graphs) = tiny_corpus("a a b", &[]);
        let report =
            corpus_entropy_report(&corpus, &graphs, &[], PoolingMode::Pooled).unwrap();
        assert_eq!(report.graph_entropy, 0.0);
        assert!(report.all_graphs_empty);
        assert_eq!(report.retention_ratio, 0.0);
    }

    #[test]
    fn entropy_permutation_invariant_over_input_order() {
        let a = unigram_distribution::<f64>(&seq(&["b", "a", "c", "a"])).unwrap();
        let b = unigram_distribution::<f64>(&seq(&["a", "c", "a", "b"])).unwrap();
        assert_eq!(shannon_entropy(&a), shannon_entropy(&b));
    }
}
