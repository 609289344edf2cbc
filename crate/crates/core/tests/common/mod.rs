//! Brute-force reference implementations and shared fixtures. Nothing here
//! calls the code under test except to build inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use memqa::candidate_gen::CandidateGenerator;
use memqa::encoder::{FactCache, FactEncoding};
use memqa::kb_store::{group_facts, AtomicFact, GroupedFactStore, Interner};
use memqa::supervision::{ParaphrasePool, Source};
use memqa::toy::{ToyBenchmark, ToyConfig};
use memqa::trainer::{prepare_validation, train, QaSource, TrainConfig, TrainOutcome, TrainingSet, ValidationItem};
use memqa::KnowledgeBase;
use rand::prelude::*;

pub type Triple = (String, String, String);
pub type Grouped = BTreeMap<(String, String), BTreeSet<String>>;

pub fn triple(s: &str, r: &str, o: &str) -> Triple {
    (s.to_owned(), r.to_owned(), o.to_owned())
}

/// Interns string triples into a store.
pub fn store_of(triples: &[Triple]) -> GroupedFactStore {
    let mut i = Interner::new();
    let atomic: Vec<AtomicFact> = triples
        .iter()
        .map(|(s, r, o)| AtomicFact::new(i.entity(s), i.relation(r), i.entity(o)))
        .collect();
    group_facts(&atomic, i)
}

pub fn store_as_map(store: &GroupedFactStore) -> Grouped {
    store
        .facts()
        .iter()
        .map(|f| {
            (
                (
                    store.name(f.subject.0).to_owned(),
                    store.name(f.relationship.0).to_owned(),
                ),
                f.objects.iter().map(|o| store.name(o.0).to_owned()).collect(),
            )
        })
        .collect()
}

// ---- preprocessing ----

/// Pass-through facts in input order, then every `(s, r2, o)` reachable
/// through one mediator with non-mediator endpoints and `o != s`, sorted
/// and without repeats.
pub fn oracle_collapse(facts: &[Triple], is_med: &dyn Fn(&str) -> bool) -> Vec<Triple> {
    let mut out: Vec<Triple> = facts
        .iter()
        .filter(|(s, _, o)| !is_med(s) && !is_med(o))
        .cloned()
        .collect();
    let mut condensed = BTreeSet::new();
    for (s, _, m) in facts {
        if !is_med(m) || is_med(s) {
            continue;
        }
        for (m2, r2, o) in facts {
            if m2 == m && !is_med(o) && o != s {
                condensed.insert((s.clone(), r2.clone(), o.clone()));
            }
        }
    }
    out.extend(condensed);
    out
}

/// Mediators that appear in some fact but lack an incoming or an outgoing
/// edge.
pub fn oracle_orphans(facts: &[Triple], is_med: &dyn Fn(&str) -> bool) -> usize {
    let mut meds = BTreeSet::new();
    for (s, _, o) in facts {
        for e in [s, o] {
            if is_med(e) {
                meds.insert(e.clone());
            }
        }
    }
    meds.iter()
        .filter(|m| !facts.iter().any(|f| &f.2 == *m) || !facts.iter().any(|f| &f.0 == *m))
        .count()
}

pub fn oracle_group(facts: &[Triple]) -> Grouped {
    let mut g = Grouped::new();
    for (s, r, o) in facts {
        g.entry((s.clone(), r.clone())).or_default().insert(o.clone());
    }
    g
}

pub fn oracle_degrees(g: &Grouped) -> BTreeMap<String, usize> {
    let mut entities = BTreeSet::new();
    for ((s, _), objs) in g {
        entities.insert(s.clone());
        entities.extend(objs.iter().cloned());
    }
    entities
        .into_iter()
        .map(|e| {
            let n = g.iter().filter(|((s, _), objs)| *s == e || objs.contains(&e)).count();
            (e, n)
        })
        .collect()
}

/// Random KB of at most `max_facts` atomic facts with up to `max_meds`
/// mediators named `m.*`, returned with the mediator names.
pub fn random_mediated_kb<R: Rng>(rng: &mut R, max_facts: usize, max_meds: usize) -> (Vec<Triple>, Vec<String>) {
    let n_ent = rng.gen_range(3..40);
    let n_rel = rng.gen_range(1..8);
    let n_med = rng.gen_range(0..=max_meds);
    let ent = |i: usize| format!("e.{i}");
    let meds: Vec<String> = (0..n_med).map(|i| format!("m.{i}")).collect();
    let mut facts = Vec::new();
    let n = rng.gen_range(1..=max_facts);
    while facts.len() < n {
        let r = format!("r.{}", rng.gen_range(0..n_rel));
        let roll: f64 = rng.gen();
        let f = if !meds.is_empty() && roll < 0.15 {
            (ent(rng.gen_range(0..n_ent)), r, meds.choose(rng).unwrap().clone())
        } else if !meds.is_empty() && roll < 0.3 {
            (meds.choose(rng).unwrap().clone(), r, ent(rng.gen_range(0..n_ent)))
        } else if !meds.is_empty() && roll < 0.32 {
            (meds.choose(rng).unwrap().clone(), r, meds.choose(rng).unwrap().clone())
        } else {
            (ent(rng.gen_range(0..n_ent)), r, ent(rng.gen_range(0..n_ent)))
        };
        facts.push(f);
    }
    (facts, meds)
}

// ---- candidate pipeline ----

pub const PREFIXES: [&str; 4] = ["in", "of", "for", "the"];

/// Every span `(start, end)`, longest first then left to right, without
/// interrogatives and without stopword unigrams.
pub fn oracle_ngrams(tokens: &[String], stop: &HashSet<String>, interr: &HashSet<String>) -> Vec<(usize, usize)> {
    let n = tokens.len();
    let mut all = Vec::new();
    for s in 0..n {
        for e in s + 1..=n {
            all.push((s, e));
        }
    }
    all.retain(|&(s, e)| {
        let span = &tokens[s..e];
        !span.iter().any(|t| interr.contains(t)) && !(e - s == 1 && stop.contains(&span[0]))
    });
    all.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    all
}

/// Spans that are alias keys, minus spans strictly inside another matched
/// span unless the longer one is the shorter with one leading prefix word.
pub fn oracle_match(tokens: &[String], spans: &[(usize, usize)], keys: &HashSet<String>) -> Vec<(usize, usize)> {
    let text = |&(s, e): &(usize, usize)| tokens[s..e].join(" ");
    let matched: Vec<(usize, usize)> = spans.iter().copied().filter(|sp| keys.contains(&text(sp))).collect();
    matched
        .iter()
        .copied()
        .filter(|&(s, e)| {
            !matched.iter().any(|&(s2, e2)| {
                let inside = s2 <= s && e <= e2 && (s2, e2) != (s, e);
                let exception = e2 == e && s2 + 1 == s && PREFIXES.contains(&tokens[s2].as_str());
                inside && !exception
            })
        })
        .collect()
}

/// Five longest matches (ties left to right, then text); top two entities
/// of each by degree then name; union in first-seen order.
pub fn oracle_select(
    tokens: &[String],
    matches: &[(usize, usize)],
    alias_entities: &dyn Fn(&str) -> Vec<String>,
    degree: &dyn Fn(&str) -> usize,
) -> Vec<String> {
    let mut m: Vec<(usize, usize, String)> = matches.iter().map(|&(s, e)| (s, e, tokens[s..e].join(" "))).collect();
    m.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));
    let mut out: Vec<String> = Vec::new();
    for (_, _, text) in m.into_iter().take(5) {
        let mut ents = alias_entities(&text);
        ents.sort_by(|a, b| degree(b).cmp(&degree(a)).then(a.cmp(b)));
        for e in ents.into_iter().take(2) {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

/// Keys of facts with a listed subject, by list order then relation name.
pub fn oracle_candidates(entities: &[String], g: &Grouped) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for e in entities {
        let mut own: Vec<(String, String)> = g.keys().filter(|(s, _)| s == e).cloned().collect();
        own.sort_by(|a, b| a.1.cmp(&b.1));
        for k in own {
            if !out.contains(&k) {
                out.push(k);
            }
        }
    }
    out
}

// ---- toy training ----

pub struct Toy {
    pub bench: ToyBenchmark,
    pub kb: KnowledgeBase,
    pub facts: FactCache<f32>,
    pub generator: CandidateGenerator,
    pub set: TrainingSet<f32>,
    pub valid: Vec<ValidationItem<f32>>,
    pub test: Vec<ValidationItem<f32>>,
}

impl Toy {
    pub fn new() -> Self {
        let bench = ToyBenchmark::generate(&ToyConfig::default()).unwrap();
        let kb = bench.knowledge_base();
        let generator = CandidateGenerator::default();
        let facts = FactCache::build(&kb.store, &kb.symbols, FactEncoding::Plain).unwrap();
        let (src, missing) = QaSource::prepare("toy", Source::SimpleqStyle, &bench.train, &kb, Some(&generator));
        assert_eq!(missing, 0);
        let set = TrainingSet::new(vec![src], ParaphrasePool::new(&[]), &kb);
        let valid = prepare_validation(&bench.valid, &kb, &generator);
        let test = prepare_validation(&bench.test, &kb, &generator);
        Toy {
            bench,
            kb,
            facts,
            generator,
            set,
            valid,
            test,
        }
    }

    pub fn train(&self, cfg: &TrainConfig, init: Option<&memqa::Model>) -> TrainOutcome<f32> {
        train(&self.set, &self.kb, &self.facts, cfg, &self.valid, init).unwrap()
    }

    pub fn test_accuracy(&self, model: &memqa::Model) -> f64 {
        memqa::trainer::validation_accuracy(model, &self.test, &self.kb, &self.facts).unwrap()
    }
}

/// Oracle tokenization: whitespace split, punctuation trimmed at token
/// edges, lowercased.
pub fn oracle_tokens(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn oracle_normalize(s: &str) -> String {
    oracle_tokens(s).join(" ")
}

pub struct Trained {
    pub toy: Toy,
    pub outcome: TrainOutcome<f32>,
    pub test_accuracy: f64,
    pub seconds: f64,
}

/// The toy benchmark trained once per test binary with the default
/// configuration.
pub fn trained() -> &'static Trained {
    static CELL: std::sync::OnceLock<Trained> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let start = std::time::Instant::now();
        let toy = Toy::new();
        let outcome = toy.train(&TrainConfig::default(), None);
        let test_accuracy = toy.test_accuracy(&outcome.model);
        Trained {
            toy,
            outcome,
            test_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

/// Prints one result line for an acceptance criterion and fails the test
/// when it does not hold.
pub fn verdict(id: u32, name: &str, ok: bool, detail: impl AsRef<str>) {
    println!(
        "[{}] {id:02} {name}: {}",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(ok, "{id:02} {name}: {}", detail.as_ref());
}
