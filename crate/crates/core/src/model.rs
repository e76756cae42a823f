//! Dual-branch classifier: token-embedding text encoder, stacked graph
//! convolutions with layer-concatenated outputs, one label-wise attention
//! head per branch, per-label scoring, and BCE loss.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::ingest::{Corpus, Segment, TokenSequence};
use crate::kg::PatientGraph;
use crate::numerics::{Checkpoint, NodeId, NumericsError, Tape};
use crate::Matrix64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("token '{0}' missing from the embedding vocabulary")]
    Vocabulary(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid layer plan '{0}': expected dash-separated positive sizes like 384-384")]
    LayerPlan(String),
    #[error("checkpoint incompatible: {0}")]
    CheckpointIncompatible(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Parses a layer plan such as "768" or "384-384" into layer sizes.
pub fn parse_layer_plan(plan: &str) -> Result<Vec<usize>, ModelError> {
    let sizes: Result<Vec<usize>, _> = plan
        .split('-')
        .map(|part| part.trim().parse::<usize>())
        .collect();
    match sizes {
        Ok(sizes) if !sizes.is_empty() && sizes.iter().all(|&s| s >= 1) => Ok(sizes),
        _ => Err(ModelError::LayerPlan(plan.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct EncoderConfig {
    /// Segment (chunk) length l.
    pub segment_length: usize,
    pub max_len: usize,
    pub text_hidden_dim: usize,
    pub dgcnn_layer_sizes: Vec<usize>,
    pub node_feature_dim: usize,
    pub label_count: usize,
    /// Add self-loops before degree normalization (the default); the
    /// plain-adjacency variant exists for fidelity experiments.
    #[serde(default = "default_true")]
    pub self_loops: bool,
}

fn default_true() -> bool {
    true
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.segment_length == 0 || self.max_len == 0 {
            return Err(ModelError::Config("segment_length and max_len must be >= 1".into()));
        }
        if self.text_hidden_dim == 0 || self.node_feature_dim == 0 || self.label_count == 0 {
            return Err(ModelError::Config("all dimensions must be >= 1".into()));
        }
        if self.dgcnn_layer_sizes.is_empty() || self.dgcnn_layer_sizes.contains(&0) {
            return Err(ModelError::Config("dgcnn_layer_sizes must be non-empty positives".into()));
        }
        if self.node_feature_dim != self.text_hidden_dim {
            return Err(ModelError::Config(
                "node_feature_dim must equal text_hidden_dim when node features \
                 come from the shared embedding table"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Column count of the concatenated graph representation.
    pub fn graph_dim(&self) -> usize {
        self.dgcnn_layer_sizes.iter().sum()
    }
}

/// Token-to-id table over the corpus text plus all node texts, ordered
/// lexicographically for determinism.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(token_iter: impl Iterator<Item = &'a str>) -> Vocabulary {
        let index: BTreeMap<String, usize> = token_iter
            .map(|t| t.to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        let mut tokens = vec![String::new(); index.len()];
        for (t, &i) in &index {
            tokens[i] = t.clone();
        }
        Vocabulary { tokens, index }
    }

    /// Vocabulary over a corpus's processed text, serialized graph tokens,
    /// and every node's own tokens (a node isolated by edge dedup never
    /// reaches the serialized form but still needs feature embeddings).
    pub fn from_corpus(corpus: &Corpus, graphs: &[PatientGraph]) -> Vocabulary {
        let doc_tokens = corpus
            .token_sequences
            .iter()
            .flat_map(|seq| seq.iter().map(String::as_str));
        let node_sequences: Vec<TokenSequence> = graphs
            .iter()
            .map(crate::kg::serialize_graph)
            .chain(
                graphs
                    .iter()
                    .flat_map(|g| g.nodes.iter())
                    .map(|n| crate::ingest::preprocess_text(&n.text)),
            )
            .collect();
        let node_tokens = node_sequences
            .iter()
            .flat_map(|seq| seq.iter().map(String::as_str));
        Vocabulary::build(doc_tokens.chain(node_tokens).collect::<Vec<_>>().into_iter())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn ids(&self, tokens: &[String]) -> Result<Vec<usize>, ModelError> {
        tokens
            .iter()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| ModelError::Vocabulary(t.clone()))
            })
            .collect()
    }
}

/// All trainable tensors of both branches, in a fixed serialization order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Shared token embedding table, vocab x text_hidden_dim.
    pub embedding: Matrix64,
    /// Per-layer graph convolution weights.
    pub dgcnn: Vec<Matrix64>,
    /// Text attention: scores = v1 tanh(v2 H_t^T).
    pub v1: Matrix64,
    pub v2: Matrix64,
    /// Graph attention: scores = v3 tanh(v4 H_g^T).
    pub v3: Matrix64,
    pub v4: Matrix64,
    /// One row per label, matching the concatenated [Z_t | Z_g] width.
    pub label_emb: Matrix64,
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix64 {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix64::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect())
        .expect("shape")
}

impl ModelParams {
    pub fn init(config: &EncoderConfig, vocab_size: usize, rng: &mut impl Rng) -> ModelParams {
        let d_t = config.text_hidden_dim;
        let d_g = config.graph_dim();
        let n_c = config.label_count;
        let mut dims = vec![config.node_feature_dim];
        dims.extend(&config.dgcnn_layer_sizes);
        let dgcnn = dims
            .windows(2)
            .map(|w| xavier(rng, w[0], w[1]))
            .collect();
        ModelParams {
            embedding: xavier(rng, vocab_size, d_t),
            dgcnn,
            v1: xavier(rng, n_c, d_t),
            v2: xavier(rng, d_t, d_t),
            v3: xavier(rng, n_c, d_g),
            v4: xavier(rng, d_g, d_g),
            label_emb: xavier(rng, n_c, d_t + d_g),
        }
    }

    /// Fixed tensor ordering shared by checkpoints and the optimizer.
    pub fn tensors(&self) -> Vec<(String, &Matrix64)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (i, w) in self.dgcnn.iter().enumerate() {
            out.push((format!("dgcnn.{i}"), w));
        }
        out.push(("v1".to_string(), &self.v1));
        out.push(("v2".to_string(), &self.v2));
        out.push(("v3".to_string(), &self.v3));
        out.push(("v4".to_string(), &self.v4));
        out.push(("label_emb".to_string(), &self.label_emb));
        out
    }

    pub fn as_vec(&self) -> Vec<Matrix64> {
        self.tensors().into_iter().map(|(_, m)| m.clone()).collect()
    }

    pub fn from_vec(config: &EncoderConfig, mut mats: Vec<Matrix64>) -> ModelParams {
        let n_layers = config.dgcnn_layer_sizes.len();
        assert_eq!(mats.len(), n_layers + 6, "parameter count");
        let rest = mats.split_off(1);
        let embedding = mats.pop().expect("embedding");
        let mut iter = rest.into_iter();
        let dgcnn: Vec<Matrix64> = (0..n_layers).map(|_| iter.next().expect("dgcnn")).collect();
        let v1 = iter.next().expect("v1");
        let v2 = iter.next().expect("v2");
        let v3 = iter.next().expect("v3");
        let v4 = iter.next().expect("v4");
        let label_emb = iter.next().expect("label_emb");
        ModelParams { embedding, dgcnn, v1, v2, v3, v4, label_emb }
    }

    pub fn to_checkpoint(&self, config: &EncoderConfig) -> Checkpoint {
        let mut meta = vec![
            config.segment_length as f64,
            config.max_len as f64,
            config.text_hidden_dim as f64,
            config.node_feature_dim as f64,
            config.label_count as f64,
            if config.self_loops { 1.0 } else { 0.0 },
            config.dgcnn_layer_sizes.len() as f64,
        ];
        meta.extend(config.dgcnn_layer_sizes.iter().map(|&s| s as f64));
        let mut tensors = vec![(
            "config".to_string(),
            Matrix64::from_vec(1, meta.len(), meta).expect("meta row"),
        )];
        tensors.extend(self.tensors().into_iter().map(|(n, m)| (n, m.clone())));
        Checkpoint { tensors }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(EncoderConfig, ModelParams), ModelError> {
        let meta = ckpt
            .get("config")
            .ok_or_else(|| ModelError::CheckpointIncompatible("missing config tensor".into()))?;
        let row = meta.data();
        if row.len() < 8 {
            return Err(ModelError::CheckpointIncompatible("config tensor too short".into()));
        }
        let n_layers = row[6] as usize;
        if row.len() != 7 + n_layers {
            return Err(ModelError::CheckpointIncompatible("config layer count mismatch".into()));
        }
        let config = EncoderConfig {
            segment_length: row[0] as usize,
            max_len: row[1] as usize,
            text_hidden_dim: row[2] as usize,
            node_feature_dim: row[3] as usize,
            label_count: row[4] as usize,
            self_loops: row[5] != 0.0,
            dgcnn_layer_sizes: row[7..].iter().map(|&s| s as usize).collect(),
        };
        config.validate()?;
        let fetch = |name: &str| {
            ckpt.get(name)
                .cloned()
                .ok_or_else(|| ModelError::CheckpointIncompatible(format!("missing tensor '{name}'")))
        };
        let dgcnn = (0..n_layers)
            .map(|i| fetch(&format!("dgcnn.{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        let params = ModelParams {
            embedding: fetch("embedding")?,
            dgcnn,
            v1: fetch("v1")?,
            v2: fetch("v2")?,
            v3: fetch("v3")?,
            v4: fetch("v4")?,
            label_emb: fetch("label_emb")?,
        };
        params.check_shapes(&config)?;
        Ok((config, params))
    }

    pub fn check_shapes(&self, config: &EncoderConfig) -> Result<(), ModelError> {
        let d_t = config.text_hidden_dim;
        let d_g = config.graph_dim();
        let n_c = config.label_count;
        let mut dims = vec![config.node_feature_dim];
        dims.extend(&config.dgcnn_layer_sizes);
        let mut ok = self.embedding.cols() == d_t
            && self.v1.shape() == (n_c, d_t)
            && self.v2.shape() == (d_t, d_t)
            && self.v3.shape() == (n_c, d_g)
            && self.v4.shape() == (d_g, d_g)
            && self.label_emb.shape() == (n_c, d_t + d_g)
            && self.dgcnn.len() == config.dgcnn_layer_sizes.len();
        for (w, pair) in self.dgcnn.iter().zip(dims.windows(2)) {
            ok &= w.shape() == (pair[0], pair[1]);
        }
        if ok {
            Ok(())
        } else {
            Err(ModelError::CheckpointIncompatible(
                "parameter shapes do not match the configuration".into(),
            ))
        }
    }
}

/// Random-walk-normalized adjacency: symmetrize the edges, optionally add
/// self-loops, then divide each row by its degree. Zero-degree rows (only
/// possible without self-loops) stay zero.
pub fn normalized_adjacency(graph: &PatientGraph, self_loops: bool) -> Matrix64 {
    let n = graph.nodes.len();
    let mut adj = Matrix64::zeros(n, n);
    for edge in &graph.edges {
        adj.set(edge.head, edge.tail, 1.0);
        adj.set(edge.tail, edge.head, 1.0);
    }
    if self_loops {
        for i in 0..n {
            adj.set(i, i, 1.0);
        }
    }
    for r in 0..n {
        let degree: f64 = adj.row(r).iter().sum();
        if degree > 0.0 {
            for c in 0..n {
                adj.set(r, c, adj.get(r, c) / degree);
            }
        }
    }
    adj
}

/// One graph convolution: `tanh(adj_norm . h . w)`.
pub fn graph_conv_layer(
    adj_norm: &Matrix64,
    h: &Matrix64,
    w: &Matrix64,
) -> Result<Matrix64, NumericsError> {
    Ok(adj_norm.matmul(h)?.matmul(w)?.tanh())
}

/// Mean over labels of `-(y ln p + (1-y) ln(1-p))`, with p clamped to
/// [1e-12, 1-1e-12] before the logs.
pub fn bce_loss(y: &[f64], p: &[f64]) -> Result<f64, NumericsError> {
    if y.len() != p.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "bce_loss",
            lhs_rows: y.len(),
            lhs_cols: 1,
            rhs_rows: p.len(),
            rhs_cols: 1,
        });
    }
    let mut tape = Tape::new();
    let pid = tape.constant(Matrix64::from_vec(p.len(), 1, p.to_vec())?);
    let loss = tape.bce_mean(pid, y)?;
    Ok(tape.scalar(loss))
}

/// Per-document model input: token ids of the segmented text, node token
/// groups for the feature means, and the normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub doc_id: String,
    pub token_ids: Vec<usize>,
    pub node_token_groups: Vec<Vec<usize>>,
    pub adj_norm: Matrix64,
}

impl ModelInput {
    /// Prepares a document: segments the tokens, resolves ids, and builds
    /// the graph-side inputs. An empty graph yields zero node groups; the
    /// forward pass substitutes the zero-feature sentinel node.
    pub fn prepare(
        doc_id: &str,
        segments: &[Segment],
        graph: &PatientGraph,
        vocab: &Vocabulary,
        config: &EncoderConfig,
    ) -> Result<ModelInput, ModelError> {
        let mut token_ids = Vec::new();
        for segment in segments {
            token_ids.extend(vocab.ids(&segment.tokens)?);
        }
        let node_token_groups = graph
            .nodes
            .iter()
            .map(|node| {
                vocab.ids(crate::ingest::preprocess_text(&node.text).as_slice())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ModelInput {
            doc_id: doc_id.to_string(),
            token_ids,
            node_token_groups,
            adj_norm: normalized_adjacency(graph, config.self_loops),
        })
    }
}

/// Pluggable segment encoder: the trainable embedding bag (default) or
/// precomputed per-token vectors keyed by doc_id.
#[derive(Debug, Clone, Default)]
pub enum TextEncoderKind {
    #[default]
    EmbeddingBag,
    Precomputed(HashMap<String, Matrix64>),
}

/// Node feature source: mean of node-token embeddings from the shared table
/// (default) or precomputed per-node vectors keyed by doc_id.
#[derive(Debug, Clone, Default)]
pub enum NodeFeatureKind {
    #[default]
    EmbeddingMean,
    Precomputed(HashMap<String, Matrix64>),
}

/// Intermediate representations of one forward pass, extracted from the tape.
#[derive(Debug, Clone)]
pub struct PatientRepresentation {
    pub h_t: Matrix64,
    pub h_g: Matrix64,
    pub alpha_t: Matrix64,
    pub alpha_g: Matrix64,
    pub z_t: Matrix64,
    pub z_g: Matrix64,
    pub z: Matrix64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Replace every graph with the zero-feature sentinel node, silencing
    /// the graph branch.
    pub zero_graph_branch: bool,
}

pub struct Model {
    pub config: EncoderConfig,
    pub params: ModelParams,
    pub text_encoder: TextEncoderKind,
    pub node_features: NodeFeatureKind,
}

struct BoundParams {
    embedding: NodeId,
    dgcnn: Vec<NodeId>,
    v1: NodeId,
    v2: NodeId,
    v3: NodeId,
    v4: NodeId,
    label_emb: NodeId,
}

impl BoundParams {
    fn bind(tape: &mut Tape, params: &ModelParams) -> BoundParams {
        BoundParams {
            embedding: tape.param(params.embedding.clone()),
            dgcnn: params.dgcnn.iter().map(|w| tape.param(w.clone())).collect(),
            v1: tape.param(params.v1.clone()),
            v2: tape.param(params.v2.clone()),
            v3: tape.param(params.v3.clone()),
            v4: tape.param(params.v4.clone()),
            label_emb: tape.param(params.label_emb.clone()),
        }
    }

    fn ids(&self) -> Vec<NodeId> {
        let mut out = vec![self.embedding];
        out.extend(&self.dgcnn);
        out.extend([self.v1, self.v2, self.v3, self.v4, self.label_emb]);
        out
    }
}

/// Label-wise attention: `alpha = row_softmax(v_a tanh(v_b H^T))` with one
/// row per label normalized over the token/node axis, and `Z = alpha H`
/// holding one label-specific row vector per label.
fn label_attention(
    tape: &mut Tape,
    h: NodeId,
    v_a: NodeId,
    v_b: NodeId,
) -> Result<(NodeId, NodeId), ModelError> {
    let h_t = tape.transpose(h);
    let inner = tape.matmul(v_b, h_t)?;
    let inner = tape.tanh(inner);
    let scores = tape.matmul(v_a, inner)?;
    let alpha = tape.row_softmax(scores);
    let z = tape.matmul(alpha, h)?;
    Ok((alpha, z))
}

struct ForwardNodes {
    p: NodeId,
    h_t: NodeId,
    h_g: NodeId,
    alpha_t: NodeId,
    alpha_g: NodeId,
    z_t: NodeId,
    z_g: NodeId,
    z: NodeId,
}

impl Model {
    pub fn new(config: EncoderConfig, params: ModelParams) -> Result<Model, ModelError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Model {
            config,
            params,
            text_encoder: TextEncoderKind::default(),
            node_features: NodeFeatureKind::default(),
        })
    }

    fn encode_text(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
    ) -> Result<NodeId, ModelError> {
        match &self.text_encoder {
            TextEncoderKind::EmbeddingBag => {
                if input.token_ids.is_empty() {
                    // empty-document sentinel: one zero row
                    Ok(tape.constant(Matrix64::zeros(1, self.config.text_hidden_dim)))
                } else {
                    Ok(tape.gather_rows(bound.embedding, &input.token_ids)?)
                }
            }
            TextEncoderKind::Precomputed(map) => {
                let h = map.get(&input.doc_id).ok_or_else(|| {
                    ModelError::Config(format!("no precomputed text vectors for '{}'", input.doc_id))
                })?;
                if h.cols() != self.config.text_hidden_dim {
                    return Err(ModelError::Config(format!(
                        "precomputed text vectors for '{}' have width {}, expected {}",
                        input.doc_id,
                        h.cols(),
                        self.config.text_hidden_dim
                    )));
                }
                Ok(tape.constant(h.clone()))
            }
        }
    }

    fn node_feature_input(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
        opts: ForwardOptions,
    ) -> Result<(NodeId, Matrix64), ModelError> {
        let sentinel =
            opts.zero_graph_branch || input.node_token_groups.is_empty();
        if sentinel {
            let x = tape.constant(Matrix64::zeros(1, self.config.node_feature_dim));
            return Ok((x, Matrix64::identity(1)));
        }
        let x = match &self.node_features {
            NodeFeatureKind::EmbeddingMean => {
                tape.group_mean_rows(bound.embedding, &input.node_token_groups)?
            }
            NodeFeatureKind::Precomputed(map) => {
                let x = map.get(&input.doc_id).ok_or_else(|| {
                    ModelError::Config(format!("no precomputed node vectors for '{}'", input.doc_id))
                })?;
                if x.shape() != (input.node_token_groups.len(), self.config.node_feature_dim) {
                    return Err(ModelError::Config(format!(
                        "precomputed node vectors for '{}' have shape {:?}",
                        input.doc_id,
                        x.shape()
                    )));
                }
                tape.constant(x.clone())
            }
        };
        Ok((x, input.adj_norm.clone()))
    }

    fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &ModelInput,
        opts: ForwardOptions,
    ) -> Result<ForwardNodes, ModelError> {
        let h_t = self.encode_text(tape, bound, input)?;
        let (alpha_t, z_t) = label_attention(tape, h_t, bound.v1, bound.v2)?;

        let (x, adj) = self.node_feature_input(tape, bound, input, opts)?;
        let adj = tape.constant(adj);
        let mut layer_input = x;
        let mut layer_outputs = Vec::with_capacity(bound.dgcnn.len());
        for &w in &bound.dgcnn {
            let mixed = tape.matmul(adj, layer_input)?;
            let projected = tape.matmul(mixed, w)?;
            layer_input = tape.tanh(projected);
            layer_outputs.push(layer_input);
        }
        let mut h_g = layer_outputs[0];
        for &layer in &layer_outputs[1..] {
            h_g = tape.concat_cols(h_g, layer)?;
        }
        let (alpha_g, z_g) = label_attention(tape, h_g, bound.v3, bound.v4)?;

        let z = tape.concat_cols(z_t, z_g)?;
        let logits = tape.row_dot(bound.label_emb, z)?;
        let p = tape.sigmoid(logits);
        Ok(ForwardNodes { p, h_t, h_g, alpha_t, alpha_g, z_t, z_g, z })
    }

    /// Runs the full forward pass and extracts the predicted probabilities
    /// plus the intermediate representations.
    pub fn forward(
        &self,
        input: &ModelInput,
        opts: ForwardOptions,
    ) -> Result<(Vec<f64>, PatientRepresentation), ModelError> {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &self.params);
        let nodes = self.forward_on_tape(&mut tape, &bound, input, opts)?;
        let p = tape.value(nodes.p).data().to_vec();
        let repr = PatientRepresentation {
            h_t: tape.value(nodes.h_t).clone(),
            h_g: tape.value(nodes.h_g).clone(),
            alpha_t: tape.value(nodes.alpha_t).clone(),
            alpha_g: tape.value(nodes.alpha_g).clone(),
            z_t: tape.value(nodes.z_t).clone(),
            z_g: tape.value(nodes.z_g).clone(),
            z: tape.value(nodes.z).clone(),
        };
        Ok((p, repr))
    }

    pub fn predict(&self, input: &ModelInput, opts: ForwardOptions) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward(input, opts)?.0)
    }

    /// Loss and gradients (in [`ModelParams::tensors`] order) for one sample.
    pub fn loss_and_grads(
        &self,
        input: &ModelInput,
        targets: &[f64],
        opts: ForwardOptions,
    ) -> Result<(f64, Vec<Matrix64>), ModelError> {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &self.params);
        let nodes = self.forward_on_tape(&mut tape, &bound, input, opts)?;
        let loss = tape.bce_mean(nodes.p, targets)?;
        let grads = tape.backward(loss)?;
        let out = bound
            .ids()
            .into_iter()
            .map(|id| {
                let v = tape.value(id);
                grads.get_or_zeros(id, v.rows(), v.cols())
            })
            .collect();
        Ok((tape.scalar(loss), out))
    }
}
