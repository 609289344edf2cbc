//! Approximate entity linking: question n-grams are matched against the
//! alias index, a few high-degree entities are kept, and their facts
//! become the candidates to score.

use std::collections::HashSet;
use std::path::Path;

use crate::error::Result;
use crate::kb_store::{AliasIndex, EntityId, GroupedFactStore};
use crate::text::tokenize;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_INTERROGATIVES: &str = include_str!("../data/interrogatives.txt");

/// Leading words that may separate a longer alias match from a shorter
/// one without discarding the shorter.
pub const PREFIX_EXCEPTIONS: [&str; 4] = ["in", "of", "for", "the"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ngram {
    /// Token range `[start, end)` within the normalized question.
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Ngram {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// True when `self` is a strictly smaller contiguous sub-span of `other`.
    pub fn strictly_inside(&self, other: &Ngram) -> bool {
        other.start <= self.start && self.end <= other.end && other.len() > self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramMatch {
    pub ngram: Ngram,
    /// Entities aliased by the n-gram, sorted by handle.
    pub entities: Vec<EntityId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub entities: Vec<EntityId>,
    /// Store indices of the candidate facts.
    pub facts: Vec<usize>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }
}

#[derive(Debug, Clone)]
pub struct WordLists {
    pub stopwords: HashSet<String>,
    pub interrogatives: HashSet<String>,
}

impl Default for WordLists {
    fn default() -> Self {
        WordLists {
            stopwords: parse_word_list(DEFAULT_STOPWORDS),
            interrogatives: parse_word_list(DEFAULT_INTERROGATIVES),
        }
    }
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl WordLists {
    /// Replaces either list from a one-word-per-line file.
    pub fn with_files(mut self, stopwords: Option<&Path>, interrogatives: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map(|t| parse_word_list(&t))
                .map_err(|e| crate::error::Error::io(p, e))
        };
        if let Some(p) = stopwords {
            self.stopwords = read(p)?;
        }
        if let Some(p) = interrogatives {
            self.interrogatives = read(p)?;
        }
        Ok(self)
    }

    pub fn is_function_word(&self, token: &str) -> bool {
        self.stopwords.contains(token) || self.interrogatives.contains(token)
    }
}

/// Every contiguous span of the normalized question, minus spans that
/// contain an interrogative pronoun and single-token stopwords. Longest
/// spans first, then left to right.
pub fn generate_ngrams(q: &str, stopwords: &HashSet<String>, interrogatives: &HashSet<String>) -> Vec<Ngram> {
    ngrams_of_tokens(&tokenize(q), stopwords, interrogatives)
}

pub fn ngrams_of_tokens(
    tokens: &[String],
    stopwords: &HashSet<String>,
    interrogatives: &HashSet<String>,
) -> Vec<Ngram> {
    let n = tokens.len();
    let mut out = Vec::new();
    for len in (1..=n).rev() {
        for start in 0..=n - len {
            let span = &tokens[start..start + len];
            if span.iter().any(|t| interrogatives.contains(t)) {
                continue;
            }
            if len == 1 && stopwords.contains(&span[0]) {
                continue;
            }
            out.push(Ngram {
                start,
                end: start + len,
                text: span.join(" "),
            });
        }
    }
    out
}

/// Keeps the n-grams that are aliases, then drops any whose span lies
/// strictly inside another match, unless that longer match is exactly the
/// shorter one preceded by one of [`PREFIX_EXCEPTIONS`].
pub fn match_aliases(ngrams: &[Ngram], aliases: &AliasIndex) -> Vec<NgramMatch> {
    let matched: Vec<NgramMatch> = ngrams
        .iter()
        .filter_map(|g| {
            let ents = aliases.lookup_normalized(&g.text);
            (!ents.is_empty()).then(|| NgramMatch {
                ngram: g.clone(),
                entities: ents.to_vec(),
            })
        })
        .collect();
    matched
        .iter()
        .filter(|m| {
            !matched
                .iter()
                .any(|other| m.ngram.strictly_inside(&other.ngram) && !prefix_exception(&m.ngram, &other.ngram))
        })
        .cloned()
        .collect()
}

fn prefix_exception(short: &Ngram, long: &Ngram) -> bool {
    long.end == short.end
        && long.start + 1 == short.start
        && long
            .text
            .split(' ')
            .next()
            .is_some_and(|w| PREFIX_EXCEPTIONS.contains(&w))
}

/// Top entities by degree for each of the longest matches, in first-seen
/// order without repeats.
pub fn select_entities(matches: &[NgramMatch], store: &GroupedFactStore) -> Vec<EntityId> {
    select_entities_with(matches, store, 5, 2)
}

pub fn select_entities_with(
    matches: &[NgramMatch],
    store: &GroupedFactStore,
    max_ngrams: usize,
    per_ngram: usize,
) -> Vec<EntityId> {
    let mut ordered: Vec<&NgramMatch> = matches.iter().collect();
    ordered.sort_by(|a, b| {
        b.ngram
            .len()
            .cmp(&a.ngram.len())
            .then(a.ngram.start.cmp(&b.ngram.start))
            .then_with(|| a.ngram.text.cmp(&b.ngram.text))
    });
    let mut out: Vec<EntityId> = Vec::new();
    for m in ordered.into_iter().take(max_ngrams) {
        let mut ents = m.entities.clone();
        ents.sort_by(|&a, &b| {
            store
                .entity_degree(b)
                .cmp(&store.entity_degree(a))
                .then_with(|| store.symbol_cmp(a.0, b.0))
        });
        for e in ents.into_iter().take(per_ngram) {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

/// All facts whose subject is one of `entities`, grouped by entity in
/// list order and by relationship symbol within an entity.
pub fn candidate_facts(entities: &[EntityId], store: &GroupedFactStore) -> CandidateSet {
    let mut facts = Vec::new();
    let mut seen = HashSet::new();
    for &e in entities {
        if !seen.insert(e) {
            continue;
        }
        let mut own: Vec<usize> = store.facts_of_subject(e).to_vec();
        own.sort_by(|&a, &b| store.symbol_cmp(store.fact(a).relationship.0, store.fact(b).relationship.0));
        facts.extend(own);
    }
    CandidateSet {
        entities: entities.to_vec(),
        facts,
    }
}

/// The full pipeline with its word lists and selection limits.
#[derive(Debug, Clone)]
pub struct CandidateGenerator {
    pub words: WordLists,
    pub max_ngrams: usize,
    pub per_ngram: usize,
}

impl Default for CandidateGenerator {
    fn default() -> Self {
        CandidateGenerator {
            words: WordLists::default(),
            max_ngrams: 5,
            per_ngram: 2,
        }
    }
}

impl CandidateGenerator {
    pub fn new(words: WordLists) -> Self {
        CandidateGenerator {
            words,
            ..Default::default()
        }
    }

    pub fn matches(&self, q: &str, aliases: &AliasIndex) -> Vec<NgramMatch> {
        let grams = generate_ngrams(q, &self.words.stopwords, &self.words.interrogatives);
        match_aliases(&grams, aliases)
    }

    pub fn entities(&self, q: &str, store: &GroupedFactStore, aliases: &AliasIndex) -> Vec<EntityId> {
        select_entities_with(&self.matches(q, aliases), store, self.max_ngrams, self.per_ngram)
    }

    pub fn candidates(&self, q: &str, store: &GroupedFactStore, aliases: &AliasIndex) -> CandidateSet {
        candidate_facts(&self.entities(q, store, aliases), store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb_store::{build_alias_index, group_facts, AliasRecord, AtomicFact, Interner};

    fn texts(g: &[Ngram]) -> Vec<&str> {
        g.iter().map(|n| n.text.as_str()).collect()
    }

    #[test]
    fn interrogatives_and_stopword_unigrams_removed() {
        let w = WordLists::default();
        let g = generate_ngrams("what is kimchi", &w.stopwords, &w.interrogatives);
        assert_eq!(texts(&g), vec!["is kimchi", "kimchi"]);
        let g = generate_ngrams("kimchi", &w.stopwords, &w.interrogatives);
        assert_eq!(texts(&g), vec!["kimchi"]);
        assert!(generate_ngrams("", &w.stopwords, &w.interrogatives).is_empty());
    }

    #[test]
    fn default_lists_loaded() {
        let w = WordLists::default();
        assert_eq!(w.interrogatives.len(), 9);
        assert!(w.stopwords.len() >= 110);
        assert!(w.stopwords.contains("the"));
    }

    fn alias_fixture(names: &[(&str, &str)]) -> (GroupedFactStore, AliasIndex) {
        let mut i = Interner::new();
        let recs: Vec<AliasRecord> = names.iter().map(|(e, a)| AliasRecord::new(i.entity(e), *a)).collect();
        let facts: Vec<AtomicFact> = names
            .iter()
            .map(|(e, _)| AtomicFact::new(i.entity(e), i.relation("r"), i.entity("o")))
            .collect();
        (group_facts(&facts, i), build_alias_index(&recs))
    }

    #[test]
    fn subsequence_discarded() {
        let (_, idx) = alias_fixture(&[("fc", "fires creek"), ("c", "creek")]);
        let w = WordLists::default();
        let g = generate_ngrams("where is fires creek", &w.stopwords, &w.interrogatives);
        let m = match_aliases(&g, &idx);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].ngram.text, "fires creek");
    }

    #[test]
    fn leading_article_exception() {
        let (_, idx) = alias_fixture(&[("a", "the fires creek"), ("b", "fires creek"), ("c", "creek")]);
        let w = WordLists::default();
        let g = generate_ngrams("the fires creek flows", &w.stopwords, &w.interrogatives);
        let m = match_aliases(&g, &idx);
        let t: Vec<&str> = m.iter().map(|m| m.ngram.text.as_str()).collect();
        assert_eq!(t, vec!["the fires creek", "fires creek"]);
    }

    #[test]
    fn exception_needs_exactly_one_leading_word() {
        let (_, idx) = alias_fixture(&[("a", "the big creek"), ("b", "creek")]);
        let w = WordLists::default();
        let g = generate_ngrams("the big creek", &w.stopwords, &w.interrogatives);
        let m = match_aliases(&g, &idx);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn two_highest_degree_entities() {
        let mut i = Interner::new();
        let (e1, e2, e3) = (i.entity("e1"), i.entity("e2"), i.entity("e3"));
        let mut facts = Vec::new();
        for (e, deg) in [(e1, 5), (e2, 9), (e3, 1)] {
            for k in 0..deg {
                facts.push(AtomicFact::new(e, i.relation(&format!("r{k}")), i.entity("o")));
            }
        }
        let store = group_facts(&facts, i);
        let m = NgramMatch {
            ngram: Ngram {
                start: 0,
                end: 1,
                text: "x".into(),
            },
            entities: vec![e1, e2, e3],
        };
        assert_eq!(select_entities(&[m], &store), vec![e2, e1]);
        assert!(select_entities(&[], &store).is_empty());
    }

    #[test]
    fn subject_only_retrieval() {
        let mut i = Interner::new();
        let (a, c) = (i.entity("a"), i.entity("c"));
        let facts = vec![
            AtomicFact::new(a, i.relation("r"), i.entity("b")),
            AtomicFact::new(c, i.relation("q"), a),
        ];
        let store = group_facts(&facts, i);
        let set = candidate_facts(&[a], &store);
        assert_eq!(set.facts, vec![0]);
        assert!(candidate_facts(&[], &store).is_empty());
    }
}
