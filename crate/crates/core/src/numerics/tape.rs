//! Reverse-mode gradient tape over a fixed primitive set.
//!
//! The model graph is small and static, so the tape records concrete matrix
//! values per node and replays them backward. Replaying forward from the tape
//! reproduces the recorded outputs bitwise because every primitive is a pure
//! function of its recorded inputs.

use crate::Matrix64;

use super::NumericsError;

const BCE_CLAMP: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf { trainable: bool },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    RowSoftmax(NodeId),
    ConcatCols(NodeId, NodeId),
    GatherRows { src: NodeId, ids: Vec<usize> },
    GroupMeanRows { src: NodeId, groups: Vec<Vec<usize>> },
    RowDot(NodeId, NodeId),
    BceMean { pred: NodeId, targets: Vec<f64> },
}

struct Node {
    op: Op,
    value: Matrix64,
}

/// Ordered record of primitive applications; gradients of a scalar output
/// with respect to every trainable leaf fall out of [`Tape::backward`].
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Matrix64) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix64 {
        &self.nodes[id.0].value
    }

    /// Trainable leaf; gradients are accumulated for it during backward.
    pub fn param(&mut self, value: Matrix64) -> NodeId {
        self.push(Op::Leaf { trainable: true }, value)
    }

    /// Non-trainable leaf (inputs, normalized adjacency, sentinels).
    pub fn constant(&mut self, value: Matrix64) -> NodeId {
        self.push(Op::Leaf { trainable: false }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).tanh();
        self.push(Op::Tanh(a), value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).sigmoid();
        self.push(Op::Sigmoid(a), value)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).row_softmax();
        self.push(Op::RowSoftmax(a), value)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(Op::ConcatCols(a, b), value))
    }

    pub fn gather_rows(&mut self, src: NodeId, ids: &[usize]) -> Result<NodeId, NumericsError> {
        let value = self.value(src).gather_rows(ids)?;
        Ok(self.push(
            Op::GatherRows {
                src,
                ids: ids.to_vec(),
            },
            value,
        ))
    }

    /// Row `j` of the result is the mean of `src` rows in `groups[j]`;
    /// an empty group yields a zero row.
    pub fn group_mean_rows(
        &mut self,
        src: NodeId,
        groups: &[Vec<usize>],
    ) -> Result<NodeId, NumericsError> {
        let m = self.value(src);
        let cols = m.cols();
        let mut out = Matrix64::zeros(groups.len(), cols);
        for (j, group) in groups.iter().enumerate() {
            for &id in group {
                if id >= m.rows() {
                    return Err(NumericsError::RowOutOfRange {
                        index: id,
                        rows: m.rows(),
                    });
                }
                for c in 0..cols {
                    out.set(j, c, out.get(j, c) + m.get(id, c));
                }
            }
            if !group.is_empty() {
                let inv = 1.0 / group.len() as f64;
                for c in 0..cols {
                    out.set(j, c, out.get(j, c) * inv);
                }
            }
        }
        Ok(self.push(
            Op::GroupMeanRows {
                src,
                groups: groups.to_vec(),
            },
            out,
        ))
    }

    /// Row-wise dot product of two equally shaped matrices, yielding n x 1.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.shape() != mb.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "row_dot",
                lhs_rows: ma.rows(),
                lhs_cols: ma.cols(),
                rhs_rows: mb.rows(),
                rhs_cols: mb.cols(),
            });
        }
        let mut out = Matrix64::zeros(ma.rows(), 1);
        for r in 0..ma.rows() {
            let dot = ma
                .row(r)
                .iter()
                .zip(mb.row(r))
                .map(|(x, y)| x * y)
                .sum::<f64>();
            out.set(r, 0, dot);
        }
        Ok(self.push(Op::RowDot(a, b), out))
    }

    /// Mean binary cross-entropy of an n x 1 probability column against
    /// targets, with probabilities clamped away from {0, 1} before the logs.
    pub fn bce_mean(&mut self, pred: NodeId, targets: &[f64]) -> Result<NodeId, NumericsError> {
        let p = self.value(pred);
        if p.cols() != 1 || p.rows() != targets.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "bce_mean",
                lhs_rows: p.rows(),
                lhs_cols: p.cols(),
                rhs_rows: targets.len(),
                rhs_cols: 1,
            });
        }
        let n = targets.len() as f64;
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let pc = p.get(i, 0).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(NumericsError::NonFinite("bce_mean"));
        }
        let value = Matrix64::from_vec(1, 1, vec![loss]).expect("scalar");
        Ok(self.push(
            Op::BceMean {
                pred,
                targets: targets.to_vec(),
            },
            value,
        ))
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).get(0, 0)
    }

    /// Gradients of the scalar `loss` node with respect to every node;
    /// only leaves marked trainable and interior nodes on a path to the
    /// loss receive entries.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumericsError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(NumericsError::ShapeMismatch {
                op: "backward(loss must be 1x1)",
                lhs_rows: lv.rows(),
                lhs_cols: lv.cols(),
                rhs_rows: 1,
                rhs_cols: 1,
            });
        }
        let mut grads: Vec<Option<Matrix64>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix64::from_vec(1, 1, vec![1.0]).expect("scalar"));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf { trainable } => {
                    if *trainable {
                        grads[idx] = Some(g);
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose())?;
                    let db = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, *a, g.transpose())?;
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let da = hadamard(&g, &y.map(|v| 1.0 - v * v));
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    let da = hadamard(&g, &y.map(|v| v * (1.0 - v)));
                    accumulate(&mut grads, *a, da)?;
                }
                Op::RowSoftmax(a) => {
                    let y = &self.nodes[idx].value;
                    let mut da = Matrix64::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot = y
                            .row(r)
                            .iter()
                            .zip(g.row(r))
                            .map(|(yv, gv)| yv * gv)
                            .sum::<f64>();
                        for c in 0..y.cols() {
                            da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let rows = g.rows();
                    let mut da = Matrix64::zeros(rows, ca);
                    let mut db = Matrix64::zeros(rows, g.cols() - ca);
                    for r in 0..rows {
                        for c in 0..ca {
                            da.set(r, c, g.get(r, c));
                        }
                        for c in ca..g.cols() {
                            db.set(r, c - ca, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::GatherRows { src, ids } => {
                    let sm = self.value(*src);
                    let mut ds = Matrix64::zeros(sm.rows(), sm.cols());
                    for (k, &id) in ids.iter().enumerate() {
                        for c in 0..sm.cols() {
                            ds.set(id, c, ds.get(id, c) + g.get(k, c));
                        }
                    }
                    accumulate(&mut grads, *src, ds)?;
                }
                Op::GroupMeanRows { src, groups } => {
                    let sm = self.value(*src);
                    let mut ds = Matrix64::zeros(sm.rows(), sm.cols());
                    for (j, group) in groups.iter().enumerate() {
                        if group.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / group.len() as f64;
                        for &id in group {
                            for c in 0..sm.cols() {
                                ds.set(id, c, ds.get(id, c) + g.get(j, c) * inv);
                            }
                        }
                    }
                    accumulate(&mut grads, *src, ds)?;
                }
                Op::RowDot(a, b) => {
                    let (ma, mb) = (self.value(*a), self.value(*b));
                    let mut da = Matrix64::zeros(ma.rows(), ma.cols());
                    let mut db = Matrix64::zeros(mb.rows(), mb.cols());
                    for r in 0..ma.rows() {
                        let gr = g.get(r, 0);
                        for c in 0..ma.cols() {
                            da.set(r, c, gr * mb.get(r, c));
                            db.set(r, c, gr * ma.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::BceMean { pred, targets } => {
                    let p = self.value(*pred);
                    let n = targets.len() as f64;
                    let gs = g.get(0, 0);
                    let mut dp = Matrix64::zeros(p.rows(), 1);
                    for (i, &y) in targets.iter().enumerate() {
                        let raw = p.get(i, 0);
                        // zero gradient through an active clamp
                        if raw <= BCE_CLAMP || raw >= 1.0 - BCE_CLAMP {
                            continue;
                        }
                        dp.set(i, 0, gs * ((1.0 - y) / (1.0 - raw) - y / raw) / n);
                    }
                    accumulate(&mut grads, *pred, dp)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix64>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix64> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or a zero matrix of the given shape when the node
    /// did not influence the loss.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> Matrix64 {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Matrix64::zeros(rows, cols))
    }
}

fn hadamard(a: &Matrix64, b: &Matrix64) -> Matrix64 {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= v;
    }
    out
}

fn accumulate(
    grads: &mut [Option<Matrix64>],
    id: NodeId,
    g: Matrix64,
) -> Result<(), NumericsError> {
    match &mut grads[id.0] {
        Some(existing) => {
            *existing = existing.add(&g)?;
        }
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_two_w() {
        // loss = sum(w^2) via row_dot of w with itself on a 1-row matrix
        let w = Matrix64::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let mut tape = Tape::new();
        let wid = tape.param(w.clone());
        let sq = tape.row_dot(wid, wid).unwrap();
        // sq is 1x1 already
        let grads = tape.backward(sq).unwrap();
        let gw = grads.get(wid).unwrap();
        for c in 0..3 {
            assert!((gw.get(0, c) - 2.0 * w.get(0, c)).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_closed_forms() {
        let p = Matrix64::from_vec(1, 1, vec![0.5]).unwrap();
        let mut tape = Tape::new();
        let pid = tape.constant(p);
        let loss = tape.bce_mean(pid, &[1.0]).unwrap();
        assert!((tape.scalar(loss) - std::f64::consts::LN_2).abs() < 1e-6);

        let p2 = Matrix64::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        let mut tape2 = Tape::new();
        let pid2 = tape2.constant(p2);
        let loss2 = tape2.bce_mean(pid2, &[1.0, 0.0]).unwrap();
        assert!((tape2.scalar(loss2) - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let p = Matrix64::from_vec(2, 1, vec![1.0 - 1e-12, 1e-12]).unwrap();
        let mut tape = Tape::new();
        let pid = tape.constant(p);
        let loss = tape.bce_mean(pid, &[1.0, 0.0]).unwrap();
        assert!(tape.scalar(loss).abs() < 1e-9);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let id = tape.param(Matrix64::zeros(2, 2));
        assert!(tape.backward(id).is_err());
    }

    #[test]
    fn constant_leaf_still_collects_gradient_but_is_marked() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix64::from_vec(1, 1, vec![3.0]).unwrap());
        let b = tape.constant(Matrix64::from_vec(1, 1, vec![4.0]).unwrap());
        let prod = tape.matmul(a, b).unwrap();
        let grads = tape.backward(prod).unwrap();
        assert_eq!(grads.get(a).unwrap().get(0, 0), 4.0);
    }
}
