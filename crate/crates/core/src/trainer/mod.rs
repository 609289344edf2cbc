//! Multitask margin-ranking training with lock-free parallel workers.
//!
//! Workers share one [`EmbeddingModel`] by reference. Matrix entries are
//! individually atomic cells, so concurrent updates race on values but
//! never on layout. A single worker is bitwise reproducible for a seed.

pub mod loss;
pub mod negatives;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub use loss::{
    apply_gradient, cosine_with_grads, grad_step, loss, loss_and_gradient, loss_qa, loss_qq, margin_loss, Gradient,
    LossKind,
};
pub use negatives::{
    sample_negative_candidates, sample_negative_default, warp_find_violator, warp_rank_weight, Corruption, FactElement,
    NegativeDraw, WarpOutcome,
};

use crate::bundle::KnowledgeBase;
use crate::candidate_gen::CandidateGenerator;
use crate::encoder::{encode_grouped, encode_question, FactCache, SparseVector};
use crate::error::{Error, Result};
use crate::eval_answer::Scorer;
use crate::kb_store::{EntityId, RelationId};
use crate::model::{EmbeddingModel, Hyperparams};
use crate::scalar::Scalar;
use crate::supervision::{ParaphrasePool, QAExample, Source};

/// Where QA negatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativePolicy {
    /// Corrupt the gold fact with elements of random facts.
    #[default]
    Default,
    /// Draw from the question's own candidate facts.
    Candidates,
}

impl fmt::Display for NegativePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativePolicy::Default => "default",
            NegativePolicy::Candidates => "candidates",
        })
    }
}

impl FromStr for NegativePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(NegativePolicy::Default),
            "candidates" => Ok(NegativePolicy::Candidates),
            other => Err(Error::Config(format!("unknown negative policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub policy: NegativePolicy,
    pub threads: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Steps between evaluations; the smallest QA source size when unset.
    pub eval_every: Option<usize>,
    /// Hard cap on the number of evaluation rounds.
    pub max_rounds: usize,
    /// Scale each update by the WARP rank estimate.
    pub warp_rank_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: Hyperparams::default(),
            policy: NegativePolicy::Default,
            threads: 1,
            patience: 5,
            eval_every: None,
            max_rounds: 200,
            warp_rank_weighting: false,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Sets one option by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "d" | "dim" => self.hyper.dim = parse_value(key, value)?,
            "lr" | "learning_rate" => self.hyper.learning_rate = parse_value(key, value)?,
            "gamma" | "margin" => self.hyper.margin = parse_value(key, value)?,
            "paraphrase_prob" => self.hyper.paraphrase_prob = parse_value(key, value)?,
            "multi_corrupt_prob" => self.hyper.multi_corrupt_prob = parse_value(key, value)?,
            "warp_max_trials" => self.hyper.warp_max_trials = parse_value(key, value)?,
            "seed" => self.hyper.seed = parse_value(key, value)?,
            "threads" => self.threads = parse_value(key, value)?,
            "policy" => self.policy = value.parse()?,
            "patience" => self.patience = parse_value(key, value)?,
            "eval_every" => self.eval_every = Some(parse_value(key, value)?),
            "max_rounds" => self.max_rounds = parse_value(key, value)?,
            "warp_rank_weighting" => self.warp_rank_weighting = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown option `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, "expected key=value"))?;
            self.set(k, v).map_err(|e| Error::parse(n + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        Ok(())
    }
}

/// A training question with every fact it is labeled with.
#[derive(Debug, Clone)]
pub struct PreparedExample<T: Scalar> {
    pub question: SparseVector<T>,
    /// Store indices of the supporting facts; one is drawn per step.
    pub golds: Vec<usize>,
    /// Candidate facts of the question, filled for candidates-as-negatives.
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct QaSource<T: Scalar> {
    pub name: String,
    pub source: Source,
    pub examples: Vec<PreparedExample<T>>,
}

impl<T: Scalar> QaSource<T> {
    /// Encodes examples and groups repeated questions. Examples whose fact
    /// is not in the store are dropped; the count is returned.
    pub fn prepare(
        name: impl Into<String>,
        source: Source,
        examples: &[QAExample],
        kb: &KnowledgeBase,
        generator: Option<&CandidateGenerator>,
    ) -> (Self, usize) {
        let mut by_question: HashMap<&str, usize> = HashMap::new();
        let mut out: Vec<PreparedExample<T>> = Vec::new();
        let mut missing = 0;
        for ex in examples {
            let Some(idx) = kb.store.index_of(ex.fact.subject, ex.fact.relationship) else {
                missing += 1;
                continue;
            };
            match by_question.get(ex.question.as_str()) {
                Some(&slot) => {
                    if !out[slot].golds.contains(&idx) {
                        out[slot].golds.push(idx);
                    }
                }
                None => {
                    by_question.insert(&ex.question, out.len());
                    let candidates = generator
                        .map(|g| g.candidates(&ex.question, &kb.store, &kb.aliases).facts)
                        .unwrap_or_default();
                    out.push(PreparedExample {
                        question: encode_question(&ex.question, &kb.vocab, &kb.aliases),
                        golds: vec![idx],
                        candidates,
                    });
                }
            }
        }
        if missing > 0 {
            log::warn!("{missing} example(s) reference facts absent from the store");
        }
        (
            QaSource {
                name: name.into(),
                source,
                examples: out,
            },
            missing,
        )
    }
}

/// Everything the multitask loop draws from.
#[derive(Debug, Clone)]
pub struct TrainingSet<T: Scalar> {
    pub sources: Vec<QaSource<T>>,
    pub paraphrases: ParaphrasePool,
    pub paraphrase_vecs: Vec<SparseVector<T>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(sources: Vec<QaSource<T>>, paraphrases: ParaphrasePool, kb: &KnowledgeBase) -> Self {
        let paraphrase_vecs = paraphrases
            .questions()
            .iter()
            .map(|q| encode_question(q, &kb.vocab, &kb.aliases))
            .collect();
        TrainingSet {
            sources,
            paraphrases,
            paraphrase_vecs,
        }
    }

    fn has_paraphrases(&self) -> bool {
        self.paraphrases.cluster_count() >= 2
    }
}

/// A held-out question with its candidates and gold path.
#[derive(Debug, Clone)]
pub struct ValidationItem<T: Scalar> {
    pub question: SparseVector<T>,
    pub candidates: Vec<usize>,
    pub gold: (EntityId, RelationId),
}

pub fn prepare_validation<T: Scalar>(
    examples: &[QAExample],
    kb: &KnowledgeBase,
    generator: &CandidateGenerator,
) -> Vec<ValidationItem<T>> {
    examples
        .iter()
        .map(|ex| ValidationItem {
            question: encode_question(&ex.question, &kb.vocab, &kb.aliases),
            candidates: generator.candidates(&ex.question, &kb.store, &kb.aliases).facts,
            gold: ex.fact.key(),
        })
        .collect()
}

/// Path-level accuracy of a single model over prepared validation items.
pub fn validation_accuracy<T: Scalar>(
    model: &EmbeddingModel<T>,
    items: &[ValidationItem<T>],
    kb: &KnowledgeBase,
    facts: &FactCache<T>,
) -> Result<f64> {
    if items.is_empty() {
        return Ok(0.0);
    }
    let models = std::slice::from_ref(model);
    let scorer = Scorer::new(models, facts);
    let mut hits = 0usize;
    for item in items {
        let ranked = scorer.rank(&item.question, &item.candidates, &kb.store)?;
        if ranked
            .first()
            .is_some_and(|&(i, _)| kb.store.fact(i).key() == item.gold)
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Paraphrase,
    Qa(usize),
}

/// Paraphrase with probability `p` when clusters exist, otherwise a
/// uniformly drawn QA source.
pub fn choose_task<R: Rng>(rng: &mut R, p: f64, has_paraphrases: bool, n_sources: usize) -> Task {
    if has_paraphrases && rng.gen_bool(p) {
        Task::Paraphrase
    } else {
        Task::Qa(rng.gen_range(0..n_sources))
    }
}

#[derive(Debug, Default)]
struct Counters {
    paraphrase: AtomicU64,
    qa: Vec<AtomicU64>,
    updates: AtomicU64,
    no_violator: AtomicU64,
    skipped: AtomicU64,
    trials: AtomicU64,
}

/// Task and update counts over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskCounts {
    pub paraphrase: u64,
    pub qa: Vec<u64>,
    pub updates: u64,
    /// Steps where WARP found no violating negative.
    pub no_violator: u64,
    /// Steps that could not draw a triple.
    pub skipped: u64,
    /// Negatives drawn by WARP.
    pub trials: u64,
}

impl TaskCounts {
    pub fn steps(&self) -> u64 {
        self.paraphrase + self.qa.iter().sum::<u64>()
    }
}

impl Counters {
    fn new(n_sources: usize) -> Self {
        Counters {
            qa: (0..n_sources).map(|_| AtomicU64::new(0)).collect(),
            ..Default::default()
        }
    }

    fn snapshot(&self) -> TaskCounts {
        TaskCounts {
            paraphrase: self.paraphrase.load(Ordering::Relaxed),
            qa: self.qa.iter().map(|c| c.load(Ordering::Relaxed)).collect(),
            updates: self.updates.load(Ordering::Relaxed),
            no_violator: self.no_violator.load(Ordering::Relaxed),
            skipped: self.skipped.load(Ordering::Relaxed),
            trials: self.trials.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    /// The best model seen at an evaluation point.
    pub model: EmbeddingModel<T>,
    pub trace: Vec<EvalPoint>,
    pub best_metric: f64,
    pub counts: TaskCounts,
    pub steps: u64,
}

struct Worker<'a, T: Scalar> {
    set: &'a TrainingSet<T>,
    kb: &'a KnowledgeBase,
    facts: &'a FactCache<T>,
    config: &'a TrainConfig,
    counters: &'a Counters,
}

impl<T: Scalar> Worker<'_, T> {
    fn encode_fact(&self, fact: &crate::kb_store::GroupedFact) -> Result<SparseVector<T>> {
        encode_grouped(fact, &self.kb.store, &self.kb.symbols, self.facts.mode())
    }

    fn run<R: Rng>(&self, model: &EmbeddingModel<T>, steps: usize, rng: &mut R) -> Result<()> {
        let has_para = self.set.has_paraphrases();
        for _ in 0..steps {
            match choose_task(rng, self.config.hyper.paraphrase_prob, has_para, self.set.sources.len()) {
                Task::Paraphrase => {
                    self.counters.paraphrase.fetch_add(1, Ordering::Relaxed);
                    self.paraphrase_step(model, rng)?;
                }
                Task::Qa(s) => {
                    self.counters.qa[s].fetch_add(1, Ordering::Relaxed);
                    self.qa_step(model, &self.set.sources[s], rng)?;
                }
            }
        }
        Ok(())
    }

    fn qa_step<R: Rng>(&self, model: &EmbeddingModel<T>, src: &QaSource<T>, rng: &mut R) -> Result<()> {
        let Some(ex) = src.examples.choose(rng) else {
            self.counters.skipped.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        };
        let gold = *ex.golds.choose(rng).expect("examples have a gold fact");
        let pos = self.facts.get(gold);
        let hyper = &self.config.hyper;
        let use_candidates = self.config.policy == NegativePolicy::Candidates && src.source != Source::Synthetic;
        let draw = || -> Result<SparseVector<T>> {
            if use_candidates {
                match sample_negative_candidates(
                    gold,
                    &ex.golds,
                    &ex.candidates,
                    &self.kb.store,
                    hyper.multi_corrupt_prob,
                    rng,
                )? {
                    NegativeDraw::Stored(i) => Ok(self.facts.get(i).clone()),
                    NegativeDraw::Corrupted(f) => self.encode_fact(&f),
                }
            } else {
                let c =
                    sample_negative_default(self.kb.store.fact(gold), &self.kb.store, hyper.multi_corrupt_prob, rng)?;
                self.encode_fact(&c.fact)
            }
        };
        self.warp_update(
            model,
            LossKind::QuestionFact,
            &ex.question,
            pos,
            draw,
            self.kb.store.len(),
        )
    }

    fn paraphrase_step<R: Rng>(&self, model: &EmbeddingModel<T>, rng: &mut R) -> Result<()> {
        let Some((q, q2, first)) = self.set.paraphrases.sample(rng) else {
            self.counters.skipped.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        };
        let vecs = &self.set.paraphrase_vecs;
        let pool = &self.set.paraphrases;
        let mut first = Some(first);
        let draw = || -> Result<SparseVector<T>> {
            let n = first.take().unwrap_or_else(|| pool.negative_for(q, rng));
            Ok(vecs[n].clone())
        };
        self.warp_update(
            model,
            LossKind::Paraphrase,
            &vecs[q],
            &vecs[q2],
            draw,
            pool.outside_count(q),
        )
    }

    fn warp_update<F>(
        &self,
        model: &EmbeddingModel<T>,
        kind: LossKind,
        q: &SparseVector<T>,
        pos: &SparseVector<T>,
        draw: F,
        n_negatives: usize,
    ) -> Result<()>
    where
        F: FnMut() -> Result<SparseVector<T>>,
    {
        let hyper = &self.config.hyper;
        let out = warp_find_violator(model, kind, q, pos, hyper.margin, hyper.warp_max_trials, draw)?;
        self.counters.trials.fetch_add(out.trials as u64, Ordering::Relaxed);
        let Some((neg, _)) = out.violator else {
            self.counters.no_violator.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        };
        let (l, mut grad) = loss_and_gradient(model, kind, q, pos, &neg, hyper.margin)?;
        if l > 0.0 {
            if self.config.warp_rank_weighting {
                let w = warp_rank_weight(n_negatives, out.trials);
                for (_, g) in grad.columns.iter_mut() {
                    g.iter_mut().for_each(|x| *x *= w);
                }
            }
            apply_gradient(model, &grad, hyper.learning_rate);
            self.counters.updates.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }
}

/// Runs the multitask loop with early stopping on validation path
/// accuracy. The initial model is evaluated too, so the result is never
/// worse on validation than `init`. Without validation items the loop runs
/// `max_rounds` rounds and returns the final model.
pub fn train<T: Scalar>(
    set: &TrainingSet<T>,
    kb: &KnowledgeBase,
    facts: &FactCache<T>,
    config: &TrainConfig,
    validation: &[ValidationItem<T>],
    init: Option<&EmbeddingModel<T>>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if set.sources.iter().all(|s| s.examples.is_empty()) {
        return Err(Error::EmptySources);
    }
    let hyper = config.hyper.clone();
    let mut model = match init {
        Some(m) => {
            if m.n_words() != kb.vocab.len() || m.n_symbols() != kb.symbols.len() {
                return Err(Error::DimensionMismatch {
                    expected: kb.vocab.len() + kb.symbols.len(),
                    got: m.n_words() + m.n_symbols(),
                });
            }
            let mut m = m.clone();
            m.hyper = hyper.clone();
            m
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
            rng.set_stream(u64::MAX);
            EmbeddingModel::new(hyper.clone(), kb.vocab.len(), kb.symbols.len(), &mut rng)
        }
    };
    let round_steps = config.eval_every.unwrap_or_else(|| {
        set.sources
            .iter()
            .map(|s| s.examples.len())
            .filter(|&n| n > 0)
            .min()
            .unwrap_or(1)
    });
    let mut rngs: Vec<ChaCha8Rng> = (0..config.threads)
        .map(|w| {
            let mut r = ChaCha8Rng::seed_from_u64(hyper.seed);
            r.set_stream(w as u64);
            r
        })
        .collect();
    let counters = Counters::new(set.sources.len());
    let worker = Worker {
        set,
        kb,
        facts,
        config,
        counters: &counters,
    };

    let mut trace = Vec::new();
    let mut steps = 0u64;
    let mut best = if validation.is_empty() {
        None
    } else {
        let m = validation_accuracy(&model, validation, kb, facts)?;
        trace.push(EvalPoint { step: 0, metric: m });
        log::info!("step 0: validation path accuracy {m:.4}");
        Some((m, model.clone()))
    };
    let mut since_best = 0;
    for round in 0..config.max_rounds {
        run_round(&worker, &model, round_steps, &mut rngs)?;
        steps += round_steps as u64;
        let Some((best_metric, best_model)) = best.as_mut() else {
            continue;
        };
        let m = validation_accuracy(&model, validation, kb, facts)?;
        trace.push(EvalPoint { step: steps, metric: m });
        log::info!("round {}: step {steps}, validation path accuracy {m:.4}", round + 1);
        if m > *best_metric {
            *best_metric = m;
            best_model.copy_from(&model);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!("no improvement for {since_best} evaluations, stopping");
                break;
            }
        }
    }
    let counts = counters.snapshot();
    let (best_metric, model) = match best {
        Some((m, best_model)) => (m, best_model),
        None => {
            model.hyper = hyper;
            (f64::NAN, model)
        }
    };
    Ok(TrainOutcome {
        model,
        trace,
        best_metric,
        counts,
        steps,
    })
}

fn run_round<T: Scalar>(
    worker: &Worker<'_, T>,
    model: &EmbeddingModel<T>,
    steps: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<()> {
    let n = rngs.len();
    if n == 1 {
        return worker.run(model, steps, &mut rngs[0]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = rngs
            .iter_mut()
            .enumerate()
            .map(|(w, rng)| {
                let share = steps / n + usize::from(w < steps % n);
                scope.spawn(move || worker.run(model, share, rng))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect::<Result<Vec<()>>>()
            .map(|_| ())
    })
}
