//! Answering questions from the memory and the three evaluation protocols.

use std::collections::BTreeSet;

use crate::candidate_gen::CandidateGenerator;
use crate::encoder::{encode_external_fact, encode_question, FactCache, SparseVector, SymbolTable, VocabTable};
use crate::error::{Error, Result};
use crate::kb_store::{AliasIndex, EntityId, GroupedFactStore, RelationId};
use crate::memory_extend::{link_entity, ExternalFact, RawFact};
use crate::model::EmbeddingModel;
use crate::scalar::Scalar;
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `(store index, score)`, best first.
    pub ranked: Vec<(usize, f64)>,
    /// Objects of the top fact; empty without candidates.
    pub answer: Vec<EntityId>,
    pub no_candidates: bool,
}

impl Prediction {
    pub fn top(&self) -> Option<usize> {
        self.ranked.first().map(|&(i, _)| i)
    }
}

/// Models used to score candidate facts. Scores of every ensemble member
/// are added, plus the subgraph model's score when present.
#[derive(Clone, Copy)]
pub struct Scorer<'a, T: Scalar> {
    pub models: &'a [EmbeddingModel<T>],
    pub facts: &'a FactCache<T>,
    pub subgraph: Option<(&'a EmbeddingModel<T>, &'a FactCache<T>)>,
}

impl<'a, T: Scalar> Scorer<'a, T> {
    pub fn new(models: &'a [EmbeddingModel<T>], facts: &'a FactCache<T>) -> Self {
        Scorer {
            models,
            facts,
            subgraph: None,
        }
    }

    pub fn with_subgraph(mut self, model: &'a EmbeddingModel<T>, facts: &'a FactCache<T>) -> Self {
        self.subgraph = Some((model, facts));
        self
    }

    pub fn score(&self, q: &SparseVector<T>, fact: usize) -> Result<f64> {
        let mut s = 0.0;
        for m in self.models {
            s += m.score_qa(q, self.facts.get(fact))?;
        }
        if let Some((m, cache)) = self.subgraph {
            s += m.score_qa(q, cache.get(fact))?;
        }
        Ok(s)
    }

    /// Scores candidates and sorts them best first; equal scores are
    /// ordered by subject then relationship symbol.
    pub fn rank(
        &self,
        q: &SparseVector<T>,
        candidates: &[usize],
        store: &GroupedFactStore,
    ) -> Result<Vec<(usize, f64)>> {
        let mut ranked = candidates
            .iter()
            .map(|&i| Ok((i, self.score(q, i)?)))
            .collect::<Result<Vec<_>>>()?;
        ranked.sort_by(|a, b| {
            let (fa, fb) = (store.fact(a.0), store.fact(b.0));
            b.1.total_cmp(&a.1)
                .then_with(|| store.symbol_cmp(fa.subject.0, fb.subject.0))
                .then_with(|| store.symbol_cmp(fa.relationship.0, fb.relationship.0))
        });
        ranked.dedup_by_key(|r| r.0);
        Ok(ranked)
    }
}

/// Input, output and response steps bundled over one memory.
pub struct Answerer<'a, T: Scalar> {
    pub store: &'a GroupedFactStore,
    pub aliases: &'a AliasIndex,
    pub vocab: &'a VocabTable,
    pub generator: &'a CandidateGenerator,
    pub scorer: Scorer<'a, T>,
}

impl<'a, T: Scalar> Answerer<'a, T> {
    pub fn answer(&self, q: &str) -> Result<Prediction> {
        let cands = self.generator.candidates(q, self.store, self.aliases);
        let q_vec = encode_question(q, self.vocab, self.aliases);
        self.answer_with(&q_vec, &cands.facts)
    }

    /// Ranks an explicit candidate list.
    pub fn answer_with(&self, q_vec: &SparseVector<T>, candidates: &[usize]) -> Result<Prediction> {
        let ranked = self.scorer.rank(q_vec, candidates, self.store)?;
        let answer = ranked
            .first()
            .map(|&(i, _)| self.store.fact(i).objects.clone())
            .unwrap_or_default();
        Ok(Prediction {
            no_candidates: ranked.is_empty(),
            ranked,
            answer,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub records: Vec<f64>,
    /// Questions left out of the mean.
    pub skipped: usize,
}

impl EvalReport {
    fn from_records(metric: &str, records: Vec<f64>, skipped: usize) -> Self {
        let value = if records.is_empty() {
            0.0
        } else {
            records.iter().sum::<f64>() / records.len() as f64
        };
        EvalReport {
            metric: metric.to_owned(),
            value,
            records,
            skipped,
        }
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {:.1}% ({} questions, {} skipped)",
            self.metric,
            100.0 * self.value,
            self.records.len(),
            self.skipped
        )
    }
}

/// Displayed answer of an entity: its first alias, else its symbol.
pub fn answer_string(e: EntityId, store: &GroupedFactStore, aliases: &AliasIndex) -> String {
    aliases
        .canonical_name(e)
        .map(str::to_owned)
        .unwrap_or_else(|| normalize(store.name(e.0)))
}

/// Set F1 between two string sets after normalization; 0 when either is
/// empty.
pub fn set_f1(predicted: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    if predicted.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let hit = predicted.intersection(gold).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let p = hit / predicted.len() as f64;
    let r = hit / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn eval_f1(
    predictions: &[Prediction],
    gold: &[Vec<String>],
    store: &GroupedFactStore,
    aliases: &AliasIndex,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let records = predictions
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            let pred: BTreeSet<String> = p.answer.iter().map(|&e| answer_string(e, store, aliases)).collect();
            let gold: BTreeSet<String> = g.iter().map(|s| normalize(s)).filter(|s| !s.is_empty()).collect();
            set_f1(&pred, &gold)
        })
        .collect();
    Ok(EvalReport::from_records("f1", records, 0))
}

/// Correct when the top fact has the gold subject and relationship.
pub fn eval_path_accuracy(
    predictions: &[Prediction],
    gold: &[(EntityId, RelationId)],
    store: &GroupedFactStore,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let records = predictions
        .iter()
        .zip(gold)
        .map(|(p, &key)| match p.top() {
            Some(i) if store.fact(i).key() == key => 1.0,
            _ => 0.0,
        })
        .collect();
    Ok(EvalReport::from_records("path_accuracy", records, 0))
}

/// One question of a reranking benchmark with its labeled candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankQuestion {
    pub question: String,
    pub candidates: Vec<(RawFact, bool)>,
}

/// Links and encodes a string fact against the memory.
pub fn link_raw_fact(raw: &RawFact, store: &GroupedFactStore, aliases: &AliasIndex) -> ExternalFact {
    ExternalFact {
        subject: raw.subject.clone(),
        relation: raw.relation.clone(),
        object: raw.object.clone(),
        subject_link: link_entity(&raw.subject, aliases, store),
        object_link: link_entity(&raw.object, aliases, store),
    }
}

pub struct RerankContext<'a> {
    pub store: &'a GroupedFactStore,
    pub aliases: &'a AliasIndex,
    pub symbols: &'a SymbolTable,
    pub vocab: &'a VocabTable,
}

/// Fraction of questions whose best-scoring candidate is labeled correct.
/// The first candidate in file order wins ties. Questions without
/// candidates are skipped.
pub fn eval_rerank<T: Scalar>(
    questions: &[RerankQuestion],
    models: &[EmbeddingModel<T>],
    ctx: &RerankContext<'_>,
) -> Result<EvalReport> {
    if models.is_empty() {
        return Err(Error::Config("rerank needs at least one model".into()));
    }
    let mut records = Vec::new();
    let mut skipped = 0;
    for item in questions {
        if item.candidates.is_empty() {
            skipped += 1;
            continue;
        }
        let q: SparseVector<T> = encode_question(&item.question, ctx.vocab, ctx.aliases);
        let mut best: Option<(f64, bool)> = None;
        for (raw, label) in &item.candidates {
            let ext = link_raw_fact(raw, ctx.store, ctx.aliases);
            let h = encode_external_fact(&ext, ctx.symbols, ctx.vocab);
            let mut s = 0.0;
            for m in models {
                s += m.score_external(&q, &h)?;
            }
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, *label));
            }
        }
        records.push(if best.is_some_and(|b| b.1) { 1.0 } else { 0.0 });
    }
    if skipped > 0 {
        log::warn!("{skipped} rerank question(s) without candidates skipped");
    }
    Ok(EvalReport::from_records("rerank_accuracy", records, skipped))
}

/// Mean of `1 / |candidates|` over questions with candidates: the
/// random-guess accuracy when each question has one correct candidate.
pub fn random_rerank_baseline(questions: &[RerankQuestion]) -> f64 {
    let per: Vec<f64> = questions
        .iter()
        .filter(|q| !q.candidates.is_empty())
        .map(|q| 1.0 / q.candidates.len() as f64)
        .collect();
    if per.is_empty() {
        0.0
    } else {
        per.iter().sum::<f64>() / per.len() as f64
    }
}
