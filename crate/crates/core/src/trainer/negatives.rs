//! Negative sampling policies and the WARP violator search.

use rand::Rng;

use super::loss::{margin_loss, LossKind};
use crate::encoder::SparseVector;
use crate::error::{Error, Result};
use crate::kb_store::{GroupedFact, GroupedFactStore};
use crate::model::{cosine, EmbeddingModel};
use crate::scalar::Scalar;

const MAX_RESAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactElement {
    Subject,
    Relationship,
    Objects,
}

const ELEMENTS: [FactElement; 3] = [FactElement::Subject, FactElement::Relationship, FactElement::Objects];

#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub fact: GroupedFact,
    /// Elements replaced, in the order they were drawn.
    pub elements: Vec<FactElement>,
    /// Set when every resample reproduced the gold fact and the subject was
    /// replaced deterministically instead.
    pub fallback: bool,
}

/// Replaces one element of `gold` (subject, relationship or objects) by the
/// same element of another fact drawn uniformly from the store; with
/// probability `multi_prob` a second, different element is replaced too.
/// The result never equals `gold`.
pub fn sample_negative_default<R: Rng>(
    gold: &GroupedFact,
    store: &GroupedFactStore,
    multi_prob: f64,
    rng: &mut R,
) -> Result<Corruption> {
    if store.len() < 2 {
        return Err(Error::StoreTooSmall(store.len()));
    }
    let own = store.index_of(gold.subject, gold.relationship);
    let donor = |rng: &mut R| loop {
        let j = rng.gen_range(0..store.len());
        if Some(j) != own {
            return store.fact(j);
        }
    };
    for _ in 0..MAX_RESAMPLES {
        let mut fact = gold.clone();
        let first = ELEMENTS[rng.gen_range(0..3)];
        let mut elements = vec![first];
        if rng.gen_bool(multi_prob) {
            let k = rng.gen_range(0..2);
            elements.push(*ELEMENTS.iter().filter(|&&e| e != first).nth(k).unwrap());
        }
        for &e in &elements {
            let other = donor(rng);
            match e {
                FactElement::Subject => fact.subject = other.subject,
                FactElement::Relationship => fact.relationship = other.relationship,
                FactElement::Objects => fact.objects = other.objects.clone(),
            }
        }
        if fact != *gold {
            return Ok(Corruption {
                fact,
                elements,
                fallback: false,
            });
        }
    }
    let replacement = store
        .entities()
        .into_iter()
        .find(|&e| e != gold.subject)
        .ok_or(Error::StoreTooSmall(store.len()))?;
    let mut fact = gold.clone();
    fact.subject = replacement;
    Ok(Corruption {
        fact,
        elements: vec![FactElement::Subject],
        fallback: true,
    })
}

/// A negative fact: either a stored fact or a corrupted copy of the gold.
#[derive(Debug, Clone, PartialEq)]
pub enum NegativeDraw {
    Stored(usize),
    Corrupted(GroupedFact),
}

/// Uniform draw among the candidate facts that are not gold; falls back to
/// [`sample_negative_default`] when none remain.
pub fn sample_negative_candidates<R: Rng>(
    gold: usize,
    other_golds: &[usize],
    candidates: &[usize],
    store: &GroupedFactStore,
    multi_prob: f64,
    rng: &mut R,
) -> Result<NegativeDraw> {
    let is_gold = |c: &usize| *c == gold || other_golds.contains(c);
    let n = candidates.iter().filter(|c| !is_gold(c)).count();
    if n == 0 {
        let c = sample_negative_default(store.fact(gold), store, multi_prob, rng)?;
        return Ok(NegativeDraw::Corrupted(c.fact));
    }
    let k = rng.gen_range(0..n);
    let pick = candidates.iter().filter(|c| !is_gold(c)).nth(k).copied().unwrap();
    Ok(NegativeDraw::Stored(pick))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpOutcome<T> {
    /// First negative violating the margin, with its loss.
    pub violator: Option<(SparseVector<T>, f64)>,
    /// Negatives drawn.
    pub trials: usize,
}

/// Draws negatives until one violates the margin or `max_trials` draws
/// are spent.
pub fn warp_find_violator<T: Scalar, F>(
    model: &EmbeddingModel<T>,
    kind: LossKind,
    q: &SparseVector<T>,
    pos: &SparseVector<T>,
    margin: f64,
    max_trials: usize,
    mut draw: F,
) -> Result<WarpOutcome<T>>
where
    F: FnMut() -> Result<SparseVector<T>>,
{
    let (qs, is) = kind.sides();
    let u = model.embed(qs, q)?;
    let pos_score = cosine(&u, &model.embed(is, pos)?);
    for trial in 1..=max_trials.max(1) {
        let neg = draw()?;
        let l = margin_loss(pos_score, cosine(&u, &model.embed(is, &neg)?), margin);
        if l > 0.0 {
            return Ok(WarpOutcome {
                violator: Some((neg, l)),
                trials: trial,
            });
        }
    }
    Ok(WarpOutcome {
        violator: None,
        trials: max_trials.max(1),
    })
}

/// Rank-based weight `sum_{i<=k} 1/i` with `k` estimated as
/// `floor((n_negatives - 1) / trials)`, at least 1.
pub fn warp_rank_weight(n_negatives: usize, trials: usize) -> f64 {
    let k = (n_negatives.saturating_sub(1) / trials.max(1)).max(1);
    (1..=k).map(|i| 1.0 / i as f64).sum()
}
