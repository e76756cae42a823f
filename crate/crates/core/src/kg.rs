//! Patient-level knowledge graphs: construction from triples, ablation
//! filtering, serialization for entropy analysis, statistics, and DOT export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{preprocess_text, Corpus, Split, TokenSequence, Triple};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("triple for document '{found}' mixed into graph for '{expected}'")]
    MixedDocuments { expected: String, found: String },
    #[error("graph archive line {line}: {message}")]
    Archive { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The 14 canonical clinical entity types plus an open extension variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Problem,
    Treatment,
    Test,
    Drug,
    Strength,
    Frequency,
    Form,
    Dosage,
    InternalOrganOrComponent,
    Route,
    Direction,
    Symptom,
    ExternalBodyPartOrRegion,
    Duration,
    Other(String),
}

impl EntityType {
    /// Parses a type tag, normalizing to lowercase snake form first.
    pub fn parse(raw: &str) -> EntityType {
        let norm: String = raw
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        match norm.as_str() {
            "problem" => EntityType::Problem,
            "treatment" => EntityType::Treatment,
            "test" => EntityType::Test,
            "drug" => EntityType::Drug,
            "strength" => EntityType::Strength,
            "frequency" => EntityType::Frequency,
            "form" => EntityType::Form,
            "dosage" => EntityType::Dosage,
            "internal_organ_or_component" => EntityType::InternalOrganOrComponent,
            "route" => EntityType::Route,
            "direction" => EntityType::Direction,
            "symptom" => EntityType::Symptom,
            "external_body_part_or_region" => EntityType::ExternalBodyPartOrRegion,
            "duration" => EntityType::Duration,
            _ => EntityType::Other(norm),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            EntityType::Problem => "problem",
            EntityType::Treatment => "treatment",
            EntityType::Test => "test",
            EntityType::Drug => "drug",
            EntityType::Strength => "strength",
            EntityType::Frequency => "frequency",
            EntityType::Form => "form",
            EntityType::Dosage => "dosage",
            EntityType::InternalOrganOrComponent => "internal_organ_or_component",
            EntityType::Route => "route",
            EntityType::Direction => "direction",
            EntityType::Symptom => "symptom",
            EntityType::ExternalBodyPartOrRegion => "external_body_part_or_region",
            EntityType::Duration => "duration",
            EntityType::Other(tag) => tag,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for EntityType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(EntityType::parse(&raw))
    }
}

/// The five relation families the graphs are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationFamily {
    /// Clinical Relationship: problems, treatments, tests.
    CR,
    /// Temporal Events.
    TE,
    /// Posology Relationship: drug regimens.
    PR,
    /// Bodypart-Directions.
    BD,
    /// Bodypart-Problem.
    BP,
}

impl RelationFamily {
    pub const ALL: [RelationFamily; 5] = [
        RelationFamily::CR,
        RelationFamily::TE,
        RelationFamily::PR,
        RelationFamily::BD,
        RelationFamily::BP,
    ];

    pub fn parse(raw: &str) -> Option<RelationFamily> {
        match raw.trim().to_uppercase().as_str() {
            "CR" => Some(RelationFamily::CR),
            "TE" => Some(RelationFamily::TE),
            "PR" => Some(RelationFamily::PR),
            "BD" => Some(RelationFamily::BD),
            "BP" => Some(RelationFamily::BP),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RelationFamily::CR => "CR",
            RelationFamily::TE => "TE",
            RelationFamily::PR => "PR",
            RelationFamily::BD => "BD",
            RelationFamily::BP => "BP",
        }
    }

    /// Human-readable name matching the ablation report rows.
    pub fn long_name(&self) -> &'static str {
        match self {
            RelationFamily::CR => "clinical relationship",
            RelationFamily::TE => "temporal events",
            RelationFamily::PR => "posology relationship",
            RelationFamily::BD => "bodypart-directions",
            RelationFamily::BP => "bodypart-problem",
        }
    }
}

impl fmt::Display for RelationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Deduplicated entity occurrence in a graph. Identity is exact match on
/// (lowercased text, entity type); no fuzzy or synonym merging.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub text: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub head: usize,
    pub tail: usize,
    pub relation: String,
    pub family: RelationFamily,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientGraph {
    pub doc_id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl PatientGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Which relation families and entity types to drop in an ablation run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AblationFilter {
    pub removed_families: HashSet<RelationFamily>,
    pub removed_entity_types: HashSet<EntityType>,
}

impl AblationFilter {
    pub fn is_empty(&self) -> bool {
        self.removed_families.is_empty() && self.removed_entity_types.is_empty()
    }

    pub fn remove_family(family: RelationFamily) -> Self {
        AblationFilter {
            removed_families: [family].into_iter().collect(),
            removed_entity_types: HashSet::new(),
        }
    }

    pub fn remove_entity(ty: EntityType) -> Self {
        AblationFilter {
            removed_families: HashSet::new(),
            removed_entity_types: [ty].into_iter().collect(),
        }
    }

    pub fn keeps(&self, triple: &Triple) -> bool {
        !self.removed_families.contains(&triple.relation_family)
            && !self.removed_entity_types.contains(&triple.head_type)
            && !self.removed_entity_types.contains(&triple.tail_type)
    }

    /// Row label used in ablation reports, e.g. `-posology relationship`.
    pub fn describe(&self) -> String {
        if self.is_empty() {
            return "full".to_string();
        }
        let mut parts: Vec<String> = Vec::new();
        let mut families: Vec<_> = self.removed_families.iter().collect();
        families.sort();
        for f in families {
            parts.push(format!("-{}", f.long_name()));
        }
        let mut types: Vec<_> = self.removed_entity_types.iter().collect();
        types.sort();
        for t in types {
            parts.push(format!("-{t}"));
        }
        parts.join(" ")
    }
}

/// The standard ablation sweep: one filter per relation family, then one per
/// headline entity type (problem, treatment, test, drug) — nine in total.
pub fn ablate_all_filters() -> Vec<AblationFilter> {
    let mut filters: Vec<AblationFilter> = RelationFamily::ALL
        .iter()
        .map(|&f| AblationFilter::remove_family(f))
        .collect();
    for ty in [
        EntityType::Problem,
        EntityType::Treatment,
        EntityType::Test,
        EntityType::Drug,
    ] {
        filters.push(AblationFilter::remove_entity(ty));
    }
    filters
}

fn normalize_entity_text(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Builds the deduplicated graph for one document. Nodes are keyed by
/// (normalized text, entity type) in first-occurrence order; one edge per
/// triple with exact duplicates collapsed.
pub fn build_graph(doc_id: &str, triples: &[Triple]) -> Result<PatientGraph, KgError> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut index: HashMap<(String, EntityType), usize> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut seen_edges: HashSet<(usize, usize, String)> = HashSet::new();

    let intern = |nodes: &mut Vec<Node>,
                      index: &mut HashMap<(String, EntityType), usize>,
                      text: &str,
                      ty: &EntityType| {
        let key = (normalize_entity_text(text), ty.clone());
        *index.entry(key.clone()).or_insert_with(|| {
            nodes.push(Node {
                text: key.0,
                entity_type: key.1,
            });
            nodes.len() - 1
        })
    };

    for triple in triples {
        if triple.doc_id != doc_id {
            return Err(KgError::MixedDocuments {
                expected: doc_id.to_string(),
                found: triple.doc_id.clone(),
            });
        }
        let head = intern(&mut nodes, &mut index, &triple.head_text, &triple.head_type);
        let tail = intern(&mut nodes, &mut index, &triple.tail_text, &triple.tail_type);
        if head == tail {
            // endpoints merged to one node; no self-edge
            continue;
        }
        let key = (head, tail, triple.relation.clone());
        if seen_edges.insert(key) {
            edges.push(Edge {
                head,
                tail,
                relation: triple.relation.clone(),
                family: triple.relation_family,
            });
        }
    }
    Ok(PatientGraph {
        doc_id: doc_id.to_string(),
        nodes,
        edges,
    })
}

/// Drops triples matching the filter. Removing an entity type drops every
/// triple with either endpoint of that type, so orphaned nodes vanish when
/// the graph is rebuilt.
pub fn filter_triples(triples: &[Triple], filter: &AblationFilter) -> Vec<Triple> {
    triples.iter().filter(|t| filter.keeps(t)).cloned().collect()
}

/// Rebuilds a filtered graph from the document's triples.
pub fn filter_graph(
    doc_id: &str,
    triples: &[Triple],
    filter: &AblationFilter,
) -> Result<PatientGraph, KgError> {
    build_graph(doc_id, &filter_triples(triples, filter))
}

/// Flattens a graph to tokens: per edge, head tokens, the relation label as
/// one lowercased token, then tail tokens, in edge-insertion order. Relation
/// labels like "1" are kept literally even though they carry no letters.
pub fn serialize_graph(graph: &PatientGraph) -> TokenSequence {
    let mut tokens: Vec<String> = Vec::new();
    for edge in &graph.edges {
        tokens.extend(preprocess_text(&graph.nodes[edge.head].text).into_tokens());
        tokens.push(edge.relation.to_lowercase());
        tokens.extend(preprocess_text(&graph.nodes[edge.tail].text).into_tokens());
    }
    TokenSequence::from_tokens(tokens)
}

/// Token count of a node's normalized text under the standard preprocessing.
pub fn node_token_count(node: &Node) -> usize {
    preprocess_text(&node.text).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: String,
    pub docs: usize,
    pub avg_tokens: f64,
    pub avg_nodes: f64,
    pub avg_tokens_in_nodes: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

/// Per-split aggregates over processed-text tokens and graph nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStatsReport {
    pub splits: Vec<SplitStats>,
}

impl GraphStatsReport {
    /// Aligned-column rendering: Split, Avg |T|, Avg |N|, Avg T in N,
    /// Min/Max T, Min/Max N.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:>10} {:>10} {:>12} {:>11} {:>11}\n",
            "Split", "Avg |T|", "Avg |N|", "Avg T in N", "Min/Max T", "Min/Max N"
        ));
        for s in &self.splits {
            out.push_str(&format!(
                "{:<8} {:>10.1} {:>10.1} {:>12.1} {:>11} {:>11}\n",
                s.split,
                s.avg_tokens,
                s.avg_nodes,
                s.avg_tokens_in_nodes,
                format!("{}/{}", s.min_tokens, s.max_tokens),
                format!("{}/{}", s.min_nodes, s.max_nodes),
            ));
        }
        out
    }
}

/// Computes per-split statistics; averages are arithmetic means over all
/// documents of the split, including those with empty graphs.
pub fn graph_stats(corpus: &Corpus, graphs: &[PatientGraph]) -> GraphStatsReport {
    let by_id: HashMap<&str, &PatientGraph> =
        graphs.iter().map(|g| (g.doc_id.as_str(), g)).collect();

    let mut splits: BTreeMap<String, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        let tokens = corpus.token_sequences[i].len();
        let (nodes, tokens_in_nodes) = match by_id.get(doc.doc_id.as_str()) {
            Some(g) => (
                g.nodes.len(),
                g.nodes.iter().map(node_token_count).sum::<usize>(),
            ),
            None => (0, 0),
        };
        splits
            .entry(split_name(doc.split).to_string())
            .or_default()
            .push((tokens, nodes, tokens_in_nodes));
    }

    let splits = splits
        .into_iter()
        .map(|(split, rows)| {
            let n = rows.len() as f64;
            SplitStats {
                split,
                docs: rows.len(),
                avg_tokens: rows.iter().map(|r| r.0 as f64).sum::<f64>() / n,
                avg_nodes: rows.iter().map(|r| r.1 as f64).sum::<f64>() / n,
                avg_tokens_in_nodes: rows.iter().map(|r| r.2 as f64).sum::<f64>() / n,
                min_tokens: rows.iter().map(|r| r.0).min().unwrap_or(0),
                max_tokens: rows.iter().map(|r| r.0).max().unwrap_or(0),
                min_nodes: rows.iter().map(|r| r.1).min().unwrap_or(0),
                max_nodes: rows.iter().map(|r| r.1).max().unwrap_or(0),
            }
        })
        .collect();
    GraphStatsReport { splits }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    }
}

/// Fixed palette keyed by entity type; extension types fall back to gray.
fn dot_color(ty: &EntityType) -> &'static str {
    match ty {
        EntityType::Problem => "lightcoral",
        EntityType::Treatment => "lightgreen",
        EntityType::Test => "lightskyblue",
        EntityType::Drug => "gold",
        EntityType::Strength => "khaki",
        EntityType::Frequency => "plum",
        EntityType::Form => "wheat",
        EntityType::Dosage => "palegoldenrod",
        EntityType::InternalOrganOrComponent => "lightsalmon",
        EntityType::Route => "paleturquoise",
        EntityType::Direction => "thistle",
        EntityType::Symptom => "pink",
        EntityType::ExternalBodyPartOrRegion => "peachpuff",
        EntityType::Duration => "lavender",
        EntityType::Other(_) => "lightgray",
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the graph as a DOT digraph with entity text labels, per-type node
/// colors, and relation-labeled edges.
pub fn export_dot(graph: &PatientGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{}\" {{\n", dot_escape(&graph.doc_id)));
    for (i, node) in graph.nodes.iter().enumerate() {
        out.push_str(&format!(
            "  n{} [label=\"{}\", style=filled, fillcolor={}, tooltip=\"{}\"];\n",
            i,
            dot_escape(&node.text),
            dot_color(&node.entity_type),
            node.entity_type,
        ));
    }
    for edge in &graph.edges {
        out.push_str(&format!(
            "  n{} -> n{} [label=\"{}\"];\n",
            edge.head,
            edge.tail,
            dot_escape(&edge.relation.to_lowercase()),
        ));
    }
    out.push_str("}\n");
    out
}

/// Writes graphs as JSON-lines, one record per document.
pub fn write_graph_archive<W: Write>(mut w: W, graphs: &[PatientGraph]) -> Result<(), KgError> {
    for g in graphs {
        serde_json::to_writer(&mut w, g)
            .map_err(|e| KgError::Archive { line: 0, message: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_graph_archive<R: BufRead>(r: R) -> Result<Vec<PatientGraph>, KgError> {
    let mut graphs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: PatientGraph = serde_json::from_str(&line).map_err(|e| KgError::Archive {
            line: i + 1,
            message: e.to_string(),
        })?;
        for e in &g.edges {
            if e.head >= g.nodes.len() || e.tail >= g.nodes.len() {
                return Err(KgError::Archive {
                    line: i + 1,
                    message: format!("edge endpoint out of range in '{}'", g.doc_id),
                });
            }
        }
        graphs.push(g);
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(
        doc: &str,
        head: &str,
        head_ty: EntityType,
        rel: &str,
        fam: RelationFamily,
        tail: &str,
        tail_ty: EntityType,
    ) -> Triple {
        Triple {
            doc_id: doc.to_string(),
            head_text: head.to_string(),
            head_type: head_ty,
            relation: rel.to_string(),
            relation_family: fam,
            tail_text: tail.to_string(),
            tail_type: tail_ty,
        }
    }

    fn lisinopril_triples() -> Vec<Triple> {
        vec![triple(
            "docA",
            "Lisinopril",
            EntityType::Drug,
            "DRUG-STRENGTH",
            RelationFamily::PR,
            "40mg",
            EntityType::Strength,
        )]
    }

    #[test]
    fn empty_triples_give_empty_graph() {
        let g = build_graph("docX", &[]).unwrap();
        assert_eq!(g.nodes.len(), 0);
        assert_eq!(g.edges.len(), 0);
    }

    #[test]
    fn single_triple_two_nodes_one_edge() {
        let g = build_graph("docA", &lisinopril_triples()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.nodes[0].text, "lisinopril");
        assert_eq!(g.nodes[1].text, "40mg");
    }

    #[test]
    fn shared_head_dedups_to_three_nodes() {
        let mut triples = lisinopril_triples();
        triples.push(triple(
            "docA",
            "lisinopril",
            EntityType::Drug,
            "DRUG-FREQUENCY",
            RelationFamily::PR,
            "daily",
            EntityType::Frequency,
        ));
        let g = build_graph("docA", &triples).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let mut triples = lisinopril_triples();
        triples.extend(lisinopril_triples());
        let g = build_graph("docA", &triples).unwrap();
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn node_count_bounded_by_twice_triples() {
        let mut triples = lisinopril_triples();
        triples.push(triple(
            "docA",
            "metformin",
            EntityType::Drug,
            "DRUG-DOSAGE",
            RelationFamily::PR,
            "500mg",
            EntityType::Dosage,
        ));
        let g = build_graph("docA", &triples).unwrap();
        assert!(g.nodes.len() <= 2 * triples.len());
    }

    #[test]
    fn mixed_doc_ids_rejected() {
        let mut triples = lisinopril_triples();
        triples[0].doc_id = "other".into();
        assert!(build_graph("docA", &triples).is_err());
    }

    #[test]
    fn filter_identity_and_family_removal() {
        let triples = lisinopril_triples();
        let g_full = filter_graph("docA", &triples, &AblationFilter::default()).unwrap();
        assert_eq!(g_full, build_graph("docA", &triples).unwrap());

        let g_pr = filter_graph(
            "docA",
            &triples,
            &AblationFilter::remove_family(RelationFamily::PR),
        )
        .unwrap();
        assert!(g_pr.is_empty());
    }

    #[test]
    fn filter_entity_type_removes_all_matching_nodes() {
        let mut triples = lisinopril_triples();
        triples.push(triple(
            "docA",
            "chest pain",
            EntityType::Problem,
            "TeRP",
            RelationFamily::CR,
            "ecg",
            EntityType::Test,
        ));
        let g = filter_graph(
            "docA",
            &triples,
            &AblationFilter::remove_entity(EntityType::Problem),
        )
        .unwrap();
        assert!(g.nodes.iter().all(|n| n.entity_type != EntityType::Problem));
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn filter_is_idempotent_and_monotone() {
        let mut triples = lisinopril_triples();
        triples.push(triple(
            "docA",
            "chest pain",
            EntityType::Problem,
            "TeRP",
            RelationFamily::CR,
            "ecg",
            EntityType::Test,
        ));
        let f = AblationFilter::remove_family(RelationFamily::CR);
        let once = filter_triples(&triples, &f);
        let twice = filter_triples(&once, &f);
        assert_eq!(once, twice);
        assert!(once.len() <= triples.len());
    }

    #[test]
    fn serialize_matches_stated_rule() {
        let g = build_graph("docA", &lisinopril_triples()).unwrap();
        let tokens = serialize_graph(&g);
        assert_eq!(tokens.as_slice(), &["lisinopril", "drug-strength", "40mg"]);

        let empty = build_graph("docB", &[]).unwrap();
        assert!(serialize_graph(&empty).is_empty());
    }

    #[test]
    fn serialize_length_law() {
        let mut triples = lisinopril_triples();
        triples.push(triple(
            "docA",
            "left arm",
            EntityType::ExternalBodyPartOrRegion,
            "1",
            RelationFamily::BD,
            "left",
            EntityType::Direction,
        ));
        let g = build_graph("docA", &triples).unwrap();
        let tokens = serialize_graph(&g);
        let expect: usize = g
            .edges
            .iter()
            .map(|e| {
                node_token_count(&g.nodes[e.head]) + 1 + node_token_count(&g.nodes[e.tail])
            })
            .sum();
        assert_eq!(tokens.len(), expect);
        // BD relation label "1" survives as a literal token
        assert!(tokens.as_slice().contains(&"1".to_string()));
    }

    #[test]
    fn permutation_of_triples_preserves_counts() {
        let mut triples = lisinopril_triples();
        triples.push(triple(
            "docA",
            "chest pain",
            EntityType::Problem,
            "TeRP",
            RelationFamily::CR,
            "ecg",
            EntityType::Test,
        ));
        let g1 = build_graph("docA", &triples).unwrap();
        triples.reverse();
        let g2 = build_graph("docA", &triples).unwrap();
        assert_eq!(g1.nodes.len(), g2.nodes.len());
        assert_eq!(g1.edges.len(), g2.edges.len());
        let set1: HashSet<_> = g1
            .edges
            .iter()
            .map(|e| {
                (
                    g1.nodes[e.head].clone(),
                    e.relation.clone(),
                    g1.nodes[e.tail].clone(),
                )
            })
            .collect();
        let set2: HashSet<_> = g2
            .edges
            .iter()
            .map(|e| {
                (
                    g2.nodes[e.head].clone(),
                    e.relation.clone(),
                    g2.nodes[e.tail].clone(),
                )
            })
            .collect();
        assert_eq!(set1, set2);
    }

    #[test]
    fn dot_export_shapes() {
        let empty = build_graph("docB", &[]).unwrap();
        let dot = export_dot(&empty);
        assert!(dot.starts_with("digraph"));
        assert!(dot.trim_end().ends_with('}'));

        let g = build_graph("docA", &lisinopril_triples()).unwrap();
        let dot = export_dot(&g);
        assert_eq!(dot.matches("style=filled").count(), 2);
        assert!(dot.contains("label=\"drug-strength\""));
        assert!(dot.contains("fillcolor=gold"));
        assert!(dot.contains("fillcolor=khaki"));
    }

    #[test]
    fn archive_roundtrip() {
        let graphs = vec![
            build_graph("docA", &lisinopril_triples()).unwrap(),
            build_graph("docB", &[]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_graph_archive(&mut buf, &graphs).unwrap();
        let back = read_graph_archive(&buf[..]).unwrap();
        assert_eq!(back, graphs);
    }

    #[test]
    fn entity_type_parse_normalizes() {
        assert_eq!(EntityType::parse("PROBLEM"), EntityType::Problem);
        assert_eq!(
            EntityType::parse("Internal Organ Or Component"),
            EntityType::InternalOrganOrComponent
        );
        assert_eq!(
            EntityType::parse("weird-tag"),
            EntityType::Other("weird_tag".into())
        );
    }
}
