//! Mini-batch training with warmup-scheduled Adam, thresholded code
//! assignment, per-epoch dev evaluation, and deterministic seeding.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{segment_document, Corpus, Split};
use crate::kg::PatientGraph;
use crate::metrics::{full_report, MetricsError, MetricsReport};
use crate::model::{
    EncoderConfig, ForwardOptions, Model, ModelError, ModelInput, ModelParams, Vocabulary,
};
use crate::Matrix64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("non-finite loss on document '{doc_id}' in epoch {epoch}")]
    Divergence { doc_id: String, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub grad_accumulation_steps: usize,
    pub seed: u64,
    /// Probability threshold for code assignment.
    pub threshold: f64,
    /// k for dev-split precision/recall at k.
    pub k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 1e-3,
            warmup_steps: 2000,
            batch_size: 1,
            grad_accumulation_steps: 1,
            seed: 42,
            threshold: 0.5,
            k: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(TrainError::Config("threshold must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.grad_accumulation_steps == 0 {
            return Err(TrainError::Config(
                "batch_size and grad_accumulation_steps must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Label indices whose probability strictly exceeds the threshold.
pub fn assign_codes(p: &[f64], threshold: f64) -> BTreeSet<usize> {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold in (0,1)");
    p.iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Option<MetricsReport>,
    /// Not serialized: timing varies between byte-identical runs.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// JSON-lines rendering, one epoch per line; deterministic across runs
    /// with the same seed.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializable"))
            .map(|line| line + "\n")
            .collect()
    }
}

pub struct TrainOutcome {
    /// Model holding the final-epoch parameters.
    pub model: Model,
    pub final_params: ModelParams,
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub log: TrainLog,
}

struct Adam {
    m: Vec<Matrix64>,
    v: Vec<Matrix64>,
    step: usize,
    lr: f64,
    warmup_steps: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(params: &[Matrix64], lr: f64, warmup_steps: usize) -> Adam {
        Adam {
            m: params.iter().map(|p| Matrix64::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Matrix64::zeros(p.rows(), p.cols())).collect(),
            step: 0,
            lr,
            warmup_steps,
        }
    }

    /// Linear warmup to the base rate, then constant.
    fn scheduled_lr(&self) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * (self.step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }

    fn update(&mut self, params: &mut [Matrix64], grads: &[Matrix64]) {
        self.step += 1;
        let lr = self.scheduled_lr();
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = param.data_mut();
            for (i, &g) in grad.data().iter().enumerate() {
                let mi = BETA1 * m.data()[i] + (1.0 - BETA1) * g;
                let vi = BETA2 * v.data()[i] + (1.0 - BETA2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Prepares one [`ModelInput`] per document, in corpus order.
pub fn prepare_inputs(
    corpus: &Corpus,
    graphs: &[PatientGraph],
    vocab: &Vocabulary,
    config: &EncoderConfig,
) -> Result<Vec<ModelInput>, ModelError> {
    corpus
        .documents
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let graph = graphs
                .iter()
                .find(|g| g.doc_id == doc.doc_id)
                .cloned()
                .unwrap_or(PatientGraph {
                    doc_id: doc.doc_id.clone(),
                    nodes: vec![],
                    edges: vec![],
                });
            let segments = segment_document(
                &corpus.token_sequences[i],
                config.segment_length,
                config.max_len,
            );
            ModelInput::prepare(&doc.doc_id, &segments, &graph, vocab, config)
        })
        .collect()
}

fn split_report(
    model: &Model,
    corpus: &Corpus,
    inputs: &[ModelInput],
    split: Split,
    threshold: f64,
    k: usize,
    opts: ForwardOptions,
) -> Result<Option<MetricsReport>, TrainError> {
    let indices = corpus.split_indices(split);
    if indices.is_empty() {
        return Ok(None);
    }
    let mut y_true = Vec::with_capacity(indices.len());
    let mut y_prob = Vec::with_capacity(indices.len());
    for &i in &indices {
        let p = model.predict(&inputs[i], opts)?;
        y_prob.push(p);
        y_true.push(
            corpus
                .label_vector(i)
                .into_iter()
                .map(|v| v == 1.0)
                .collect::<Vec<bool>>(),
        );
    }
    match full_report(&y_true, &y_prob, threshold, k) {
        Ok(report) => Ok(Some(report)),
        // degenerate dev labels: keep F1/top-k, flag AUC at chance
        Err(MetricsError::MacroAucUndefined) => {
            let y_pred: Vec<Vec<bool>> = y_prob
                .iter()
                .map(|row| row.iter().map(|&p| p > threshold).collect())
                .collect();
            let (macro_f1, micro_f1) = crate::metrics::f1_scores(&y_true, &y_pred)?;
            let (p_at_k, r_at_k) = crate::metrics::precision_recall_at_k(&y_true, &y_prob, k)?;
            Ok(Some(MetricsReport {
                macro_f1,
                micro_f1,
                macro_auc: 0.5,
                micro_auc: 0.5,
                p_at_k,
                r_at_k,
                k,
            }))
        }
        Err(e) => Err(e.into()),
    }
}

/// Evaluates a model over one split of the corpus.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &Model,
    corpus: &Corpus,
    graphs: &[PatientGraph],
    vocab: &Vocabulary,
    split: Split,
    threshold: f64,
    k: usize,
    opts: ForwardOptions,
) -> Result<MetricsReport, TrainError> {
    if k > corpus.label_space.len() {
        return Err(TrainError::Config(format!(
            "k = {k} exceeds the {} labels of the corpus",
            corpus.label_space.len()
        )));
    }
    let inputs = prepare_inputs(corpus, graphs, vocab, &model.config)?;
    split_report(model, corpus, &inputs, split, threshold, k, opts)?
        .ok_or_else(|| TrainError::Config(format!("split {split:?} is empty")))
}

/// Trains the dual-branch model. Deterministic for a fixed seed: parameter
/// initialization, iteration order, and the optimizer are all fixed, so two
/// runs produce bitwise-identical losses and parameters.
pub fn train(
    corpus: &Corpus,
    graphs: &[PatientGraph],
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
    opts: ForwardOptions,
) -> Result<TrainOutcome, TrainError> {
    encoder_config.validate()?;
    train_config.validate()?;
    if encoder_config.label_count != corpus.label_space.len() {
        return Err(TrainError::Config(format!(
            "label_count {} does not match corpus label space {}",
            encoder_config.label_count,
            corpus.label_space.len()
        )));
    }
    let train_indices = corpus.split_indices(Split::Train);
    if train_indices.is_empty() {
        return Err(TrainError::EmptyTrainSplit);
    }

    let vocab = Vocabulary::from_corpus(corpus, graphs);
    let inputs = prepare_inputs(corpus, graphs, &vocab, encoder_config)?;
    let targets: Vec<Vec<f64>> = (0..corpus.len()).map(|i| corpus.label_vector(i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let params = ModelParams::init(encoder_config, vocab.len(), &mut rng);
    let mut model = Model::new(encoder_config.clone(), params)?;

    let mut flat = model.params.as_vec();
    let mut adam = Adam::new(&flat, train_config.learning_rate, train_config.warmup_steps);
    let accum_target = train_config.batch_size * train_config.grad_accumulation_steps;

    let mut log = TrainLog::default();
    let mut best_epoch = 0usize;
    let mut best_macro_f1 = f64::NEG_INFINITY;
    let mut best_params = model.params.clone();

    for epoch in 1..=train_config.epochs {
        let started = Instant::now();
        let mut epoch_loss = 0.0;
        let mut accum: Option<Vec<Matrix64>> = None;
        let mut accum_count = 0usize;

        for &i in &train_indices {
            let (loss, grads) = model.loss_and_grads(&inputs[i], &targets[i], opts)?;
            if !loss.is_finite() {
                return Err(TrainError::Divergence {
                    doc_id: corpus.documents[i].doc_id.clone(),
                    epoch,
                });
            }
            epoch_loss += loss;
            accum = Some(match accum {
                None => grads,
                Some(acc) => acc
                    .iter()
                    .zip(&grads)
                    .map(|(a, g)| a.add(g).expect("matching shapes"))
                    .collect(),
            });
            accum_count += 1;
            if accum_count == accum_target {
                apply_step(&mut adam, &mut flat, accum.take().expect("grads"), accum_count);
                accum_count = 0;
                model.params = ModelParams::from_vec(encoder_config, flat.clone());
            }
        }
        if let Some(acc) = accum.take() {
            apply_step(&mut adam, &mut flat, acc, accum_count);
            model.params = ModelParams::from_vec(encoder_config, flat.clone());
        }
        epoch_loss /= train_indices.len() as f64;

        let dev = split_report(
            &model,
            corpus,
            &inputs,
            Split::Dev,
            train_config.threshold,
            train_config.k.min(corpus.label_space.len()),
            opts,
        )?;
        if let Some(report) = &dev {
            if report.macro_f1 > best_macro_f1 {
                best_macro_f1 = report.macro_f1;
                best_epoch = epoch;
                best_params = model.params.clone();
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            dev,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }

    if best_epoch == 0 {
        best_epoch = train_config.epochs;
        best_params = model.params.clone();
    }
    Ok(TrainOutcome {
        final_params: model.params.clone(),
        best_params,
        best_epoch,
        log,
        model,
    })
}

fn apply_step(adam: &mut Adam, flat: &mut [Matrix64], accumulated: Vec<Matrix64>, count: usize) {
    let scale = 1.0 / count as f64;
    let grads: Vec<Matrix64> = accumulated.into_iter().map(|g| g.scale(scale)).collect();
    adam.update(flat, &grads);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{planted_motif_corpus, SyntheticSpec};

    #[test]
    fn assign_codes_strict_threshold() {
        let assigned = assign_codes(&[0.7, 0.2, 0.5], 0.5);
        assert_eq!(assigned, BTreeSet::from([0]));

        assert!(assign_codes(&[0.5, 0.5], 0.5).is_empty());
        assert_eq!(assign_codes(&[0.99], 0.5), BTreeSet::from([0]));
    }

    #[test]
    fn assign_codes_monotone_in_threshold() {
        let p = [0.1, 0.35, 0.55, 0.72, 0.9];
        let low = assign_codes(&p, 0.3);
        let high = assign_codes(&p, 0.6);
        assert!(high.is_subset(&low));
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(TrainError::Config(_))));
    }

    #[test]
    fn same_seed_reproduces_losses_bitwise() {
        let fixture = planted_motif_corpus(&SyntheticSpec::default());
        let encoder = fixture.encoder_config();
        let train_cfg = TrainConfig {
            epochs: 3,
            warmup_steps: 20,
            ..TrainConfig::default()
        };
        let a = train(&fixture.corpus, &fixture.graphs, &encoder, &train_cfg, ForwardOptions::default())
            .unwrap();
        let b = train(&fixture.corpus, &fixture.graphs, &encoder, &train_cfg, ForwardOptions::default())
            .unwrap();
        let losses_a: Vec<f64> = a.log.epochs.iter().map(|e| e.train_loss).collect();
        let losses_b: Vec<f64> = b.log.epochs.iter().map(|e| e.train_loss).collect();
        assert_eq!(losses_a, losses_b);
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn loss_decreases_on_overfit_fixture() {
        let fixture = planted_motif_corpus(&SyntheticSpec::default());
        let encoder = fixture.encoder_config();
        let train_cfg = TrainConfig {
            epochs: 60,
            warmup_steps: 50,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let outcome = train(
            &fixture.corpus,
            &fixture.graphs,
            &encoder,
            &train_cfg,
            ForwardOptions::default(),
        )
        .unwrap();
        let first = outcome.log.epochs.first().unwrap().train_loss;
        let last = outcome.log.epochs.last().unwrap().train_loss;
        assert!(last < first / 10.0, "first {first}, last {last}");
        // monotone within 5% transient upticks
        for pair in outcome.log.epochs.windows(2) {
            assert!(
                pair[1].train_loss <= pair[0].train_loss * 1.05,
                "epoch {} loss {} after {}",
                pair[1].epoch,
                pair[1].train_loss,
                pair[0].train_loss
            );
        }
    }

    #[test]
    fn evaluate_rejects_oversized_k() {
        let fixture = planted_motif_corpus(&SyntheticSpec::default());
        let encoder = fixture.encoder_config();
        let train_cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let outcome = train(
            &fixture.corpus,
            &fixture.graphs,
            &encoder,
            &train_cfg,
            ForwardOptions::default(),
        )
        .unwrap();
        let vocab = Vocabulary::from_corpus(&fixture.corpus, &fixture.graphs);
        let err = evaluate(
            &outcome.model,
            &fixture.corpus,
            &fixture.graphs,
            &vocab,
            Split::Dev,
            0.5,
            fixture.corpus.label_space.len() + 1,
            ForwardOptions::default(),
        );
        assert!(err.is_err());
    }
}
