//! Seeded synthetic corpus with planted signals: some labels are decodable
//! from text tokens alone, others only from graph motifs whose node texts
//! never appear in the documents. Used to verify that the graph branch
//! carries information the text branch cannot supply.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{preprocess_text, Corpus, RawDocument, Split, Triple};
use crate::kg::{build_graph, EntityType, PatientGraph, RelationFamily};
use crate::model::EncoderConfig;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub seed: u64,
    /// Per-document probability that each text-planted label is active.
    pub text_label_prob: f64,
    /// Per-document probability that each motif-planted label is active.
    /// Kept below 0.5 so a constant prediction never clears the assignment
    /// threshold.
    pub motif_label_prob: f64,
    pub text_labels: usize,
    pub motif_labels: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            docs: 32,
            seed: 7,
            text_label_prob: 0.5,
            motif_label_prob: 0.375,
            text_labels: 4,
            motif_labels: 4,
        }
    }
}

pub struct SyntheticFixture {
    pub spec: SyntheticSpec,
    pub corpus: Corpus,
    pub graphs: Vec<PatientGraph>,
}

impl SyntheticFixture {
    /// A small encoder sized for this fixture.
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            segment_length: 16,
            max_len: 128,
            text_hidden_dim: 16,
            dgcnn_layer_sizes: vec![16],
            node_feature_dim: 16,
            label_count: self.corpus.label_space.len(),
            self_loops: true,
        }
    }
}

/// Builds the fixture. Every fourth document goes to the dev split, the rest
/// to train. Text-planted label `t{j}` is marked by the token `sig{j}`;
/// motif-planted label `m{j}` is marked by an edge between nodes `motif{j}a`
/// and `motif{j}b`, and those node texts occur in no document text. The text
/// carries no distractor tokens: every token is either boilerplate shared by
/// all documents or a planted signal, so a model that fits the train split
/// without spurious shortcuts transfers to dev.
pub fn planted_motif_corpus(spec: &SyntheticSpec) -> SyntheticFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut documents = Vec::with_capacity(spec.docs);
    let mut token_sequences = Vec::with_capacity(spec.docs);
    let mut doc_triples: Vec<Vec<Triple>> = Vec::with_capacity(spec.docs);
    let mut graphs = Vec::with_capacity(spec.docs);

    let mut label_space: Vec<String> = (0..spec.motif_labels)
        .map(|j| format!("m{j}"))
        .chain((0..spec.text_labels).map(|j| format!("t{j}")))
        .collect();
    label_space.sort();

    for i in 0..spec.docs {
        let doc_id = format!("doc{i:03}");
        let mut labels = std::collections::BTreeSet::new();
        let mut words: Vec<String> = vec!["patient".into(), "record".into()];

        for j in 0..spec.text_labels {
            if rng.gen_bool(spec.text_label_prob) {
                labels.insert(format!("t{j}"));
                words.push(format!("sig{j}"));
                words.push(format!("sig{j}"));
            }
        }
        let mut triples = Vec::new();
        for j in 0..spec.motif_labels {
            if rng.gen_bool(spec.motif_label_prob) {
                labels.insert(format!("m{j}"));
                let family = RelationFamily::ALL[j % RelationFamily::ALL.len()];
                triples.push(Triple {
                    doc_id: doc_id.clone(),
                    head_text: format!("motif{j}a"),
                    head_type: EntityType::Treatment,
                    relation: "rel".into(),
                    relation_family: family,
                    tail_text: format!("motif{j}b"),
                    tail_type: EntityType::Problem,
                });
            }
        }

        let text = words.join(" ");
        let split = if i % 4 == 3 { Split::Dev } else { Split::Train };
        graphs.push(build_graph(&doc_id, &triples).expect("synthetic triples are well-formed"));
        token_sequences.push(preprocess_text(&text));
        documents.push(RawDocument { doc_id, text, labels, split });
        doc_triples.push(triples);
    }

    SyntheticFixture {
        spec: spec.clone(),
        corpus: Corpus {
            documents,
            token_sequences,
            triples: doc_triples,
            label_space,
        },
        graphs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic() {
        let a = planted_motif_corpus(&SyntheticSpec::default());
        let b = planted_motif_corpus(&SyntheticSpec::default());
        assert_eq!(a.corpus.documents, b.corpus.documents);
        assert_eq!(a.graphs, b.graphs);
    }

    #[test]
    fn splits_are_three_to_one() {
        let f = planted_motif_corpus(&SyntheticSpec::default());
        let train = f.corpus.split_indices(Split::Train).len();
        let dev = f.corpus.split_indices(Split::Dev).len();
        assert_eq!(train, 24);
        assert_eq!(dev, 8);
    }

    #[test]
    fn motif_tokens_never_appear_in_text() {
        let f = planted_motif_corpus(&SyntheticSpec::default());
        for seq in &f.corpus.token_sequences {
            for token in seq.iter() {
                assert!(!token.starts_with("motif"), "leaked motif token {token}");
            }
        }
    }

    #[test]
    fn motif_labels_match_graph_motifs() {
        let f = planted_motif_corpus(&SyntheticSpec::default());
        for (doc, graph) in f.corpus.documents.iter().zip(&f.graphs) {
            for j in 0..f.spec.motif_labels {
                let has_label = doc.labels.contains(&format!("m{j}"));
                let has_node = graph.nodes.iter().any(|n| n.text == format!("motif{j}a"));
                assert_eq!(has_label, has_node, "doc {}", doc.doc_id);
            }
        }
    }
}
