//! Grafting facts from a string-valued knowledge base onto the memory.
//!
//! Endpoints are linked by exact alias match; whatever stays unlinked is
//! kept as a bag of words over the existing vocabulary. Nothing here
//! touches the grouped store, the tables or the model.

use std::collections::{BTreeSet, HashMap};

use crate::candidate_gen::{CandidateGenerator, WordLists};
use crate::encoder::{encode_external_fact, SparseVector, SymbolTable, VocabTable};
use crate::kb_store::{AliasIndex, EntityId, GroupedFactStore};
use crate::scalar::Scalar;
use crate::text::{normalize, tokenize};

/// A `(subject, relation, object)` fact with string fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFact {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl RawFact {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, object: impl Into<String>) -> Self {
        RawFact {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalFact {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub subject_link: Option<EntityId>,
    pub object_link: Option<EntityId>,
}

impl ExternalFact {
    pub fn links(&self) -> impl Iterator<Item = EntityId> {
        self.subject_link.into_iter().chain(self.object_link)
    }
}

/// Resolves a string to the entity it is an alias of. Several candidates
/// are ranked by degree, then symbol order.
pub fn link_entity(s: &str, aliases: &AliasIndex, store: &GroupedFactStore) -> Option<EntityId> {
    aliases
        .lookup_normalized(&normalize(s))
        .iter()
        .copied()
        .min_by(|&a, &b| {
            store
                .entity_degree(b)
                .cmp(&store.entity_degree(a))
                .then_with(|| store.symbol_cmp(a.0, b.0))
        })
}

#[derive(Debug, Clone)]
pub struct ExternalStore<T: Scalar> {
    facts: Vec<ExternalFact>,
    encodings: Vec<SparseVector<T>>,
    by_word: HashMap<String, Vec<usize>>,
    by_entity: HashMap<EntityId, Vec<usize>>,
    linked_endpoints: usize,
}

impl<T: Scalar> ExternalStore<T> {
    pub fn facts(&self) -> &[ExternalFact] {
        &self.facts
    }

    pub fn fact(&self, i: usize) -> &ExternalFact {
        &self.facts[i]
    }

    pub fn encoding(&self, i: usize) -> &SparseVector<T> {
        &self.encodings[i]
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Facts that encode to the zero vector.
    pub fn degenerate(&self) -> usize {
        self.encodings.iter().filter(|e| e.is_zero()).count()
    }

    /// Fraction of subject/object strings linked to an entity.
    pub fn link_rate(&self) -> f64 {
        if self.facts.is_empty() {
            return 0.0;
        }
        self.linked_endpoints as f64 / (2 * self.facts.len()) as f64
    }

    pub fn facts_with_word(&self, w: &str) -> &[usize] {
        self.by_word.get(w).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn facts_with_entity(&self, e: EntityId) -> &[usize] {
        self.by_entity.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn content_words(text: &str, words: &WordLists) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !words.is_function_word(t))
        .collect()
}

fn fact_words(f: &ExternalFact, words: &WordLists) -> BTreeSet<String> {
    let mut s = content_words(&f.subject, words);
    s.extend(content_words(&f.relation, words));
    s.extend(content_words(&f.object, words));
    s
}

/// Links, encodes and indexes external facts.
pub fn add_external_facts<T: Scalar>(
    raw: &[RawFact],
    store: &GroupedFactStore,
    aliases: &AliasIndex,
    symbols: &SymbolTable,
    vocab: &VocabTable,
    words: &WordLists,
) -> ExternalStore<T> {
    let mut ext = ExternalStore {
        facts: Vec::with_capacity(raw.len()),
        encodings: Vec::with_capacity(raw.len()),
        by_word: HashMap::new(),
        by_entity: HashMap::new(),
        linked_endpoints: 0,
    };
    for (i, r) in raw.iter().enumerate() {
        let fact = ExternalFact {
            subject: r.subject.clone(),
            relation: r.relation.clone(),
            object: r.object.clone(),
            subject_link: link_entity(&r.subject, aliases, store),
            object_link: link_entity(&r.object, aliases, store),
        };
        ext.linked_endpoints += fact.links().count();
        for e in fact.links().collect::<BTreeSet<_>>() {
            ext.by_entity.entry(e).or_default().push(i);
        }
        for w in fact_words(&fact, words) {
            ext.by_word.entry(w).or_default().push(i);
        }
        ext.encodings.push(encode_external_fact(&fact, symbols, vocab));
        ext.facts.push(fact);
    }
    log::info!(
        "added {} external facts, endpoint link rate {:.3}",
        ext.len(),
        ext.link_rate()
    );
    ext
}

/// External facts related to a question: those sharing an entity with the
/// question's candidate entities, or at least two content words. Ranked by
/// shared entities plus shared words, then by insertion order; at most
/// `limit` are returned.
pub fn external_candidates<T: Scalar>(
    q: &str,
    ext: &ExternalStore<T>,
    store: &GroupedFactStore,
    aliases: &AliasIndex,
    generator: &CandidateGenerator,
    limit: usize,
) -> Vec<usize> {
    let q_entities = generator.entities(q, store, aliases);
    let q_words = content_words(q, &generator.words);
    let mut ent_hits: HashMap<usize, usize> = HashMap::new();
    let mut word_hits: HashMap<usize, usize> = HashMap::new();
    for e in &q_entities {
        for &i in ext.facts_with_entity(*e) {
            *ent_hits.entry(i).or_default() += 1;
        }
    }
    for w in &q_words {
        for &i in ext.facts_with_word(w) {
            *word_hits.entry(i).or_default() += 1;
        }
    }
    let mut scored: Vec<(usize, usize)> = ent_hits
        .keys()
        .chain(word_hits.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter_map(|&i| {
            let e = ent_hits.get(&i).copied().unwrap_or(0);
            let w = word_hits.get(&i).copied().unwrap_or(0);
            (e >= 1 || w >= 2).then_some((i, e + w))
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(limit).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::build_tables;
    use crate::kb_store::{build_alias_index, group_facts, AliasRecord, AtomicFact, Interner};

    struct Fixture {
        store: GroupedFactStore,
        aliases: AliasIndex,
        symbols: SymbolTable,
        vocab: VocabTable,
    }

    fn fixture() -> Fixture {
        let mut i = Interner::new();
        let mut facts = vec![AtomicFact::new(
            i.entity("m.fc"),
            i.relation("loc.containedby"),
            i.entity("m.nc"),
        )];
        for k in 0..7 {
            facts.push(AtomicFact::new(
                i.entity("m.p2"),
                i.relation(&format!("r{k}")),
                i.entity("m.nc"),
            ));
        }
        for k in 0..3 {
            facts.push(AtomicFact::new(
                i.entity("m.p1"),
                i.relation(&format!("r{k}")),
                i.entity("m.nc"),
            ));
        }
        let recs = vec![
            AliasRecord::new(i.entity("m.fc"), "Fires Creek"),
            AliasRecord::new(i.entity("m.nc"), "North Carolina"),
            AliasRecord::new(i.entity("m.p1"), "Paris"),
            AliasRecord::new(i.entity("m.p2"), "Paris"),
        ];
        let store = group_facts(&facts, i);
        let aliases = build_alias_index(&recs);
        let (symbols, vocab) = build_tables(&store, &aliases, &["where was born in river".into()]);
        Fixture {
            store,
            aliases,
            symbols,
            vocab,
        }
    }

    #[test]
    fn linking() {
        let f = fixture();
        assert_eq!(link_entity("Fires Creek", &f.aliases, &f.store), f.store.entity("m.fc"));
        assert_eq!(link_entity("zzzz unknown", &f.aliases, &f.store), None);
        assert_eq!(link_entity("paris", &f.aliases, &f.store), f.store.entity("m.p2"));
    }

    #[test]
    fn linked_and_fallback_encodings() {
        let f = fixture();
        let raw = vec![
            RawFact::new("Fires Creek", "was born in", "North Carolina"),
            RawFact::new("some river", "was born in", "fires creek"),
            RawFact::new("qqq", "zzz", "yyy"),
        ];
        let ext: ExternalStore<f32> =
            add_external_facts(&raw, &f.store, &f.aliases, &f.symbols, &f.vocab, &WordLists::default());
        let n_v = f.vocab.len();
        let e0 = ext.encoding(0);
        let sym_entries = e0.entries().iter().filter(|(i, _)| *i as usize >= n_v).count();
        assert_eq!(sym_entries, 2);
        assert_eq!(e0.nnz(), 5);
        let e1 = ext.encoding(1);
        assert!(e1.get(f.vocab.index("river").unwrap()) == 1.0);
        assert_eq!(ext.degenerate(), 1);
        assert!((ext.link_rate() - 3.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn candidates_by_entity_and_words() {
        let f = fixture();
        let raw = vec![
            RawFact::new("Fires Creek", "flows into", "lake"),
            RawFact::new("some river", "flows into", "big lake"),
            RawFact::new("Paris", "is", "capital"),
        ];
        let words = WordLists::default();
        let ext: ExternalStore<f32> = add_external_facts(&raw, &f.store, &f.aliases, &f.symbols, &f.vocab, &words);
        let g = CandidateGenerator::default();
        assert_eq!(
            external_candidates("what does fires creek flow into", &ext, &f.store, &f.aliases, &g, 10),
            vec![0]
        );
        assert_eq!(
            external_candidates("which river flows into a lake", &ext, &f.store, &f.aliases, &g, 10),
            vec![1, 0]
        );
        assert!(external_candidates("nothing shared", &ext, &f.store, &f.aliases, &g, 10).is_empty());
    }
}
