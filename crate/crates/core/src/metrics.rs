//! Multi-label evaluation: macro/micro F1, macro/micro ROC-AUC, and
//! precision/recall at k.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {lhs} vs {rhs} ({what})")]
    ShapeMismatch {
        what: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("k = {k} out of range for {labels} labels")]
    KOutOfRange { k: usize, labels: usize },
    #[error("macro AUC undefined: no label has both classes present")]
    MacroAucUndefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub macro_auc: f64,
    pub micro_auc: f64,
    pub p_at_k: f64,
    pub r_at_k: f64,
    pub k: usize,
}

impl MetricsReport {
    /// Aligned table with the standard column layout.
    pub fn render_table(&self) -> String {
        format!(
            "{:<12} {:>8} {:>8}\n{:<12} {:>8.4} {:>8.4}\n{:<12} {:>8.4} {:>8.4}\n{:<12} {:>8.4} {:>8.4}\n",
            "Metric", "Macro", "Micro",
            "F1", self.macro_f1, self.micro_f1,
            "AUC", self.macro_auc, self.micro_auc,
            format!("P@{}/R@{}", self.k, self.k), self.p_at_k, self.r_at_k,
        )
    }
}

fn check_shapes(
    rows_a: usize,
    cols_a: usize,
    rows_b: usize,
    cols_b: usize,
    what: &'static str,
) -> Result<(), MetricsError> {
    if rows_a != rows_b || cols_a != cols_b {
        return Err(MetricsError::ShapeMismatch {
            what,
            lhs: format!("{rows_a}x{cols_a}"),
            rhs: format!("{rows_b}x{cols_b}"),
        });
    }
    Ok(())
}

fn cols_of(m: &[Vec<bool>]) -> usize {
    m.first().map_or(0, Vec::len)
}

/// Macro and micro F1 over docs x labels binary matrices. Micro pools
/// TP/FP/FN over all cells; macro averages per-label F1 with 0/0 defined
/// as 0.
pub fn f1_scores(
    y_true: &[Vec<bool>],
    y_pred: &[Vec<bool>],
) -> Result<(f64, f64), MetricsError> {
    check_shapes(y_true.len(), cols_of(y_true), y_pred.len(), cols_of(y_pred), "f1")?;
    let labels = cols_of(y_true);
    let mut macro_sum = 0.0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0u64, 0u64, 0u64);
    for label in 0..labels {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for (truth, pred) in y_true.iter().zip(y_pred) {
            match (truth[label], pred[label]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
        let denom = 2 * tp + fp + fneg;
        if denom > 0 {
            macro_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    let macro_f1 = if labels > 0 { macro_sum / labels as f64 } else { 0.0 };
    let denom = 2 * tp_all + fp_all + fn_all;
    let micro_f1 = if denom > 0 {
        2.0 * tp_all as f64 / denom as f64
    } else {
        0.0
    };
    Ok((macro_f1, micro_f1))
}

/// ROC-AUC of one score column via the Mann-Whitney rank statistic with
/// ties contributing average ranks. `None` when only one class is present.
fn rank_auc(pairs: &[(f64, bool)]) -> Option<f64> {
    let positives = pairs.iter().filter(|(_, y)| *y).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.partial_cmp(&pairs[b].0).expect("finite scores"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pairs[order[j]].0 == pairs[order[i]].0 {
            j += 1;
        }
        // 1-based average rank for the tie block [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if pairs[idx].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Some(u / (p * negatives as f64))
}

/// Macro AUC averages labels having both classes present (single-class
/// labels are skipped); micro AUC is one AUC over all flattened cells.
pub fn auc_scores(
    y_true: &[Vec<bool>],
    y_prob: &[Vec<f64>],
) -> Result<(f64, f64), MetricsError> {
    check_shapes(
        y_true.len(),
        cols_of(y_true),
        y_prob.len(),
        y_prob.first().map_or(0, Vec::len),
        "auc",
    )?;
    let labels = cols_of(y_true);

    let mut macro_sum = 0.0;
    let mut macro_count = 0usize;
    for label in 0..labels {
        let pairs: Vec<(f64, bool)> = y_true
            .iter()
            .zip(y_prob)
            .map(|(t, p)| (p[label], t[label]))
            .collect();
        if let Some(auc) = rank_auc(&pairs) {
            macro_sum += auc;
            macro_count += 1;
        }
    }
    if macro_count == 0 {
        return Err(MetricsError::MacroAucUndefined);
    }
    let macro_auc = macro_sum / macro_count as f64;

    let flat: Vec<(f64, bool)> = y_true
        .iter()
        .zip(y_prob)
        .flat_map(|(t, p)| t.iter().zip(p).map(|(&y, &s)| (s, y)))
        .collect();
    let micro_auc = rank_auc(&flat).ok_or(MetricsError::MacroAucUndefined)?;
    Ok((macro_auc, micro_auc))
}

/// Per document, the k highest-probability labels with ties broken by lower
/// label index. P@k averages hits/k over all documents; R@k averages
/// hits/|truth| over documents with non-empty truth.
pub fn precision_recall_at_k(
    y_true: &[Vec<bool>],
    y_prob: &[Vec<f64>],
    k: usize,
) -> Result<(f64, f64), MetricsError> {
    check_shapes(
        y_true.len(),
        cols_of(y_true),
        y_prob.len(),
        y_prob.first().map_or(0, Vec::len),
        "top-k",
    )?;
    let labels = cols_of(y_true);
    if k == 0 || k > labels {
        return Err(MetricsError::KOutOfRange { k, labels });
    }

    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut r_docs = 0usize;
    for (truth, probs) in y_true.iter().zip(y_prob) {
        let mut order: Vec<usize> = (0..labels).collect();
        order.sort_by(|&a, &b| {
            probs[b]
                .partial_cmp(&probs[a])
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        let hits = order[..k].iter().filter(|&&i| truth[i]).count();
        p_sum += hits as f64 / k as f64;
        let truth_count = truth.iter().filter(|&&t| t).count();
        if truth_count > 0 {
            r_sum += hits as f64 / truth_count as f64;
            r_docs += 1;
        }
    }
    let docs = y_true.len().max(1) as f64;
    let p_at_k = p_sum / docs;
    let r_at_k = if r_docs > 0 { r_sum / r_docs as f64 } else { 0.0 };
    Ok((p_at_k, r_at_k))
}

/// Full report for one evaluation run.
pub fn full_report(
    y_true: &[Vec<bool>],
    y_prob: &[Vec<f64>],
    threshold: f64,
    k: usize,
) -> Result<MetricsReport, MetricsError> {
    let y_pred: Vec<Vec<bool>> = y_prob
        .iter()
        .map(|row| row.iter().map(|&p| p > threshold).collect())
        .collect();
    let (macro_f1, micro_f1) = f1_scores(y_true, &y_pred)?;
    let (macro_auc, micro_auc) = auc_scores(y_true, y_prob)?;
    let (p_at_k, r_at_k) = precision_recall_at_k(y_true, y_prob, k)?;
    Ok(MetricsReport {
        macro_f1,
        micro_f1,
        macro_auc,
        micro_auc,
        p_at_k,
        r_at_k,
        k,
    })
}
