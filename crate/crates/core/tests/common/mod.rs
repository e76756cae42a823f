use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kgcoder::ingest::Split;
use kgcoder::synthetic::SyntheticFixture;

pub struct FixturePaths {
    pub docs: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
    pub triples: PathBuf,
}

/// Writes a synthetic fixture out as the four JSON-lines input files the CLI
/// consumes.
pub fn write_fixture_files(dir: &Path, fixture: &SyntheticFixture) -> FixturePaths {
    let mut docs = String::new();
    let mut labels = String::new();
    let mut splits = String::new();
    let mut triples = String::new();

    for (i, doc) in fixture.corpus.documents.iter().enumerate() {
        writeln!(
            docs,
            "{}",
            serde_json::json!({ "doc_id": doc.doc_id, "text": doc.text })
        )
        .unwrap();
        writeln!(
            labels,
            "{}",
            serde_json::json!({
                "doc_id": doc.doc_id,
                "codes": doc.labels.iter().collect::<Vec<_>>(),
            })
        )
        .unwrap();
        let split = match doc.split {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        writeln!(
            splits,
            "{}",
            serde_json::json!({ "doc_id": doc.doc_id, "split": split })
        )
        .unwrap();
        for t in &fixture.corpus.triples[i] {
            writeln!(
                triples,
                "{}",
                serde_json::json!({
                    "doc_id": t.doc_id,
                    "head": t.head_text,
                    "head_type": t.head_type.as_str(),
                    "relation": t.relation,
                    "relation_family": t.relation_family.as_str(),
                    "tail": t.tail_text,
                    "tail_type": t.tail_type.as_str(),
                })
            )
            .unwrap();
        }
    }

    let paths = FixturePaths {
        docs: dir.join("docs.jsonl"),
        labels: dir.join("labels.jsonl"),
        splits: dir.join("splits.jsonl"),
        triples: dir.join("triples.jsonl"),
    };
    std::fs::write(&paths.docs, docs).unwrap();
    std::fs::write(&paths.labels, labels).unwrap();
    std::fs::write(&paths.splits, splits).unwrap();
    std::fs::write(&paths.triples, triples).unwrap();
    paths
}
