//! Margin ranking losses over cosine scores and their exact gradients.

use std::collections::BTreeMap;

use crate::encoder::SparseVector;
use crate::error::Result;
use crate::model::{cosine, dot, norm, Column, EmbeddingModel, Side};
use crate::scalar::Scalar;

/// Which pair of matrices a triple is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Question against facts: `W_V` and `W_S`.
    QuestionFact,
    /// Question against questions: `W_V` on both sides.
    Paraphrase,
}

impl LossKind {
    /// Side of the question and side of the positive/negative items.
    pub fn sides(self) -> (Side, Side) {
        match self {
            LossKind::QuestionFact => (Side::Words, Side::Symbols),
            LossKind::Paraphrase => (Side::Words, Side::Words),
        }
    }
}

/// Hinge `[margin - positive + negative]_+`.
#[inline]
pub fn margin_loss(positive: f64, negative: f64, margin: f64) -> f64 {
    (margin - positive + negative).max(0.0)
}

pub fn loss<T: Scalar>(
    model: &EmbeddingModel<T>,
    kind: LossKind,
    q: &SparseVector<T>,
    pos: &SparseVector<T>,
    neg: &SparseVector<T>,
    margin: f64,
) -> Result<f64> {
    let (qs, is) = kind.sides();
    let u = model.embed(qs, q)?;
    let v = model.embed(is, pos)?;
    let w = model.embed(is, neg)?;
    Ok(margin_loss(cosine(&u, &v), cosine(&u, &w), margin))
}

pub fn loss_qa<T: Scalar>(
    model: &EmbeddingModel<T>,
    q: &SparseVector<T>,
    pos: &SparseVector<T>,
    neg: &SparseVector<T>,
    margin: f64,
) -> Result<f64> {
    loss(model, LossKind::QuestionFact, q, pos, neg, margin)
}

pub fn loss_qq<T: Scalar>(
    model: &EmbeddingModel<T>,
    q: &SparseVector<T>,
    paraphrase: &SparseVector<T>,
    other: &SparseVector<T>,
    margin: f64,
) -> Result<f64> {
    loss(model, LossKind::Paraphrase, q, paraphrase, other, margin)
}

/// Cosine of `a` and `b` with its partial derivatives. Derivatives are
/// zero when either vector is zero.
pub fn cosine_with_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let c = dot(a, b) / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| y / (na * nb) - c * x / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x / (na * nb) - c * y / (nb * nb))
        .collect();
    (c, da, db)
}

/// Per-column gradient of a loss, sorted by column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub columns: Vec<(Column, Vec<f64>)>,
}

impl Gradient {
    pub fn get(&self, c: Column) -> Option<&[f64]> {
        self.columns
            .binary_search_by(|(k, _)| k.cmp(&c))
            .ok()
            .map(|i| self.columns[i].1.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// The loss and its gradient with respect to every column touched by the
/// three vectors. Inside the margin the gradient is empty.
pub fn loss_and_gradient<T: Scalar>(
    model: &EmbeddingModel<T>,
    kind: LossKind,
    q: &SparseVector<T>,
    pos: &SparseVector<T>,
    neg: &SparseVector<T>,
    margin: f64,
) -> Result<(f64, Gradient)> {
    let (qs, is) = kind.sides();
    let u = model.embed(qs, q)?;
    let v = model.embed(is, pos)?;
    let w = model.embed(is, neg)?;
    let (c_pos, du_pos, dv) = cosine_with_grads(&u, &v);
    let (c_neg, du_neg, dw) = cosine_with_grads(&u, &w);
    let l = margin_loss(c_pos, c_neg, margin);
    if l <= 0.0 {
        return Ok((0.0, Gradient::default()));
    }
    // dL/du = -dcos(u,v)/du + dcos(u,w)/du, dL/dv = -dcos/dv, dL/dw = +dcos/dw
    let du: Vec<f64> = du_neg.iter().zip(&du_pos).map(|(n, p)| n - p).collect();
    let mut cols: BTreeMap<Column, Vec<f64>> = BTreeMap::new();
    let d = model.dim();
    let mut add = |side: Side, vec: &SparseVector<T>, dir: &[f64], sign: f64| {
        for &(i, wt) in vec.entries() {
            let scale = sign * wt.to_f64_lossy();
            let g = cols
                .entry(model.column_of(side, i as usize))
                .or_insert_with(|| vec![0.0; d]);
            for (gi, di) in g.iter_mut().zip(dir) {
                *gi += scale * di;
            }
        }
    };
    add(qs, q, &du, 1.0);
    add(is, pos, &dv, -1.0);
    add(is, neg, &dw, 1.0);
    Ok((
        l,
        Gradient {
            columns: cols.into_iter().collect(),
        },
    ))
}

/// Applies a gradient with per-entry Adagrad and projects each touched
/// column onto the unit ball.
pub fn apply_gradient<T: Scalar>(model: &EmbeddingModel<T>, grad: &Gradient, lr: f64) {
    for (c, g) in &grad.columns {
        model.adagrad_update(*c, g, lr);
    }
}

/// One Adagrad step on a triple. Returns the loss before the step; a
/// triple inside the margin leaves the model untouched.
pub fn grad_step<T: Scalar>(
    model: &EmbeddingModel<T>,
    kind: LossKind,
    q: &SparseVector<T>,
    pos: &SparseVector<T>,
    neg: &SparseVector<T>,
    margin: f64,
    lr: f64,
) -> Result<f64> {
    let (l, grad) = loss_and_gradient(model, kind, q, pos, neg, margin)?;
    apply_gradient(model, &grad, lr);
    Ok(l)
}
