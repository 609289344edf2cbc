//! Desk-scale synthetic benchmark: a random knowledge base with nonsense
//! entity aliases, template questions over it, a string-valued external
//! KB and a labeled reranking set.

use std::collections::HashSet;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::bundle::KnowledgeBase;
use crate::candidate_gen::WordLists;
use crate::datasets::{write_qa_file, write_raw_facts, write_rerank_file};
use crate::error::{Error, Result};
use crate::eval_answer::RerankQuestion;
use crate::kb_store::{
    build_alias_index, write_triples, AliasIndex, AliasRecord, AtomicFact, GroupedFactStore, Interner,
};
use crate::memory_extend::RawFact;
use crate::supervision::{question_for_fact, QAExample, Source, DEFAULT_TEMPLATES};
use crate::text::{normalize, relation_words};

pub const TOY_RELATIONS: [&str; 20] = [
    "toy.film.directed_by",
    "toy.person.birth_place",
    "toy.location.contained_by",
    "toy.book.written_by",
    "toy.music.album_artist",
    "toy.person.nationality",
    "toy.org.founded_by",
    "toy.film.production_company",
    "toy.person.spouse",
    "toy.sports.team_coach",
    "toy.location.capital_city",
    "toy.music.record_label",
    "toy.person.profession",
    "toy.book.main_genre",
    "toy.org.headquarters_location",
    "toy.film.music_composer",
    "toy.person.alma_mater",
    "toy.game.developer_studio",
    "toy.river.basin_country",
    "toy.food.origin_region",
];

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 4] = ["", "", "x", "q"];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub entities: usize,
    pub relations: usize,
    pub relations_per_entity: usize,
    pub max_objects: usize,
    pub max_aliases: usize,
    /// Size of each relation's object range.
    pub range_size: usize,
    pub questions: usize,
    /// Train and validation fractions; the rest is test.
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            entities: 500,
            relations: 20,
            relations_per_entity: 10,
            max_objects: 3,
            max_aliases: 3,
            range_size: 25,
            questions: 4000,
            split: (0.7, 0.1),
            seed: 7,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.entities < 2 {
            return bad("toy KB needs at least two entities");
        }
        if self.relations == 0 || self.relations > TOY_RELATIONS.len() {
            return bad("toy relation count out of range");
        }
        if self.relations_per_entity == 0 || self.relations_per_entity > self.relations {
            return bad("relations per entity out of range");
        }
        if self.range_size < self.max_objects || self.range_size > self.entities {
            return bad("relation range must hold max_objects and fit the entity count");
        }
        if self.max_objects == 0 || self.max_aliases == 0 {
            return bad("object and alias counts must be positive");
        }
        if self.questions > self.entities * self.relations_per_entity {
            return bad("more questions than facts");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ToyBenchmark {
    pub store: GroupedFactStore,
    pub alias_records: Vec<AliasRecord>,
    pub aliases: AliasIndex,
    pub train: Vec<QAExample>,
    pub valid: Vec<QAExample>,
    pub test: Vec<QAExample>,
}

fn nonsense_word<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    (0..n)
        .map(|_| {
            format!(
                "{}{}{}",
                ONSETS.choose(rng).unwrap(),
                NUCLEI.choose(rng).unwrap(),
                CODAS.choose(rng).unwrap()
            )
        })
        .collect()
}

/// Relation, template and function words, kept out of aliases.
fn reserved_words() -> HashSet<String> {
    let lists = WordLists::default();
    TOY_RELATIONS
        .iter()
        .map(|r| relation_words(r))
        .chain(DEFAULT_TEMPLATES.iter().map(|t| normalize(t)))
        .flat_map(|s| s.split(' ').map(str::to_owned).collect::<Vec<_>>())
        .chain(lists.stopwords)
        .chain(lists.interrogatives)
        .collect()
}

/// A fresh alias of one or two nonsense words, distinct from every alias
/// and relation word drawn so far.
fn fresh_alias<R: Rng>(rng: &mut R, used: &mut HashSet<String>, reserved: &HashSet<String>) -> String {
    loop {
        let words = rng.gen_range(1..=2);
        let alias: Vec<String> = (0..words).map(|_| nonsense_word(rng)).collect();
        if alias.iter().any(|w| reserved.contains(w)) {
            continue;
        }
        let alias = alias.join(" ");
        if used.insert(alias.clone()) {
            return alias;
        }
    }
}

impl ToyBenchmark {
    pub fn generate(cfg: &ToyConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut interner = Interner::new();
        let entities: Vec<_> = (0..cfg.entities)
            .map(|i| interner.entity(&format!("toy.e{i:04}")))
            .collect();
        let relations: Vec<_> = TOY_RELATIONS[..cfg.relations]
            .iter()
            .map(|r| interner.relation(r))
            .collect();
        let reserved = reserved_words();

        // Each relation points into its own range of entities, like a typed
        // KB. Ranges are consecutive windows of a shuffled entity list, so
        // they are disjoint while they fit.
        let mut shuffled = entities.clone();
        shuffled.shuffle(&mut rng);
        let ranges: Vec<Vec<_>> = (0..relations.len())
            .map(|j| {
                (0..cfg.range_size)
                    .map(|t| shuffled[(j * cfg.range_size + t) % shuffled.len()])
                    .collect()
            })
            .collect();
        let mut atomic = Vec::new();
        for &s in &entities {
            for r in rand::seq::index::sample(&mut rng, relations.len(), cfg.relations_per_entity) {
                let k = rng.gen_range(1..=cfg.max_objects);
                for &o in ranges[r].choose_multiple(&mut rng, k) {
                    atomic.push(AtomicFact::new(s, relations[r], o));
                }
            }
        }
        let mut used = HashSet::new();
        let mut alias_records = Vec::new();
        for &e in &entities {
            for _ in 0..rng.gen_range(1..=cfg.max_aliases) {
                alias_records.push(AliasRecord::new(e, fresh_alias(&mut rng, &mut used, &reserved)));
            }
        }
        let store = crate::kb_store::group_facts(&atomic, interner);
        let aliases = build_alias_index(&alias_records);

        let templates: Vec<String> = DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect();
        let picked: Vec<usize> = rand::seq::index::sample(&mut rng, store.len(), cfg.questions).into_vec();
        let mut examples = Vec::with_capacity(picked.len());
        for i in picked {
            let fact = store.fact(i);
            let question =
                question_for_fact(fact, &store, &aliases, &templates, &mut rng).expect("toy entities have aliases");
            examples.push(QAExample {
                question,
                fact: fact.clone(),
                source: Source::SimpleqStyle,
            });
        }
        let n_train = (cfg.split.0 * examples.len() as f64).round() as usize;
        let n_valid = (cfg.split.1 * examples.len() as f64).round() as usize;
        let test = examples.split_off((n_train + n_valid).min(examples.len()));
        let valid = examples.split_off(n_train.min(examples.len()));
        Ok(ToyBenchmark {
            store,
            alias_records,
            aliases,
            train: examples,
            valid,
            test,
        })
    }

    /// The memory with tables built from the training questions.
    pub fn knowledge_base(&self) -> KnowledgeBase {
        let questions: Vec<String> = self.train.iter().map(|e| e.question.clone()).collect();
        KnowledgeBase::build(self.store.clone(), self.aliases.clone(), &questions)
    }

    fn alias_of<R: Rng>(&self, e: crate::kb_store::EntityId, rng: &mut R) -> String {
        self.aliases
            .aliases_of(e)
            .choose(rng)
            .cloned()
            .expect("toy entities have aliases")
    }

    /// String facts derived from random grouped facts. Each endpoint is
    /// written as an alias with probability `link_prob`, otherwise as an
    /// unlinkable nonsense phrase.
    pub fn external_facts(&self, n: usize, link_prob: f64, seed: u64) -> Vec<RawFact> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reserved = reserved_words();
        let mut used: HashSet<String> = self.aliases.keys().map(str::to_owned).collect();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let f = self.store.fact(rng.gen_range(0..self.store.len()));
            let o = *f.objects.choose(&mut rng).unwrap();
            let mut endpoint = |e, rng: &mut ChaCha8Rng| {
                if rng.gen_bool(link_prob) {
                    self.alias_of(e, rng)
                } else {
                    fresh_alias(rng, &mut used, &reserved)
                }
            };
            let subject = endpoint(f.subject, &mut rng);
            let object = endpoint(o, &mut rng);
            out.push(RawFact::new(
                subject,
                relation_words(self.store.name(f.relationship.0)),
                object,
            ));
        }
        out
    }

    /// Reranking questions whose correct candidate is an external fact
    /// with a linkable subject. The question is a template over that
    /// fact's subject and relation strings. Half of the `distractors` are
    /// other external facts, the rest are made up to share the subject or
    /// the relation with the correct one. No distractor repeats the correct
    /// subject and relation.
    pub fn rerank_set(
        &self,
        external: &[RawFact],
        n_questions: usize,
        distractors: usize,
        seed: u64,
    ) -> Vec<RerankQuestion> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let golds: Vec<&RawFact> = external
            .iter()
            .filter(|f| self.aliases.contains(&normalize(&f.subject)))
            .collect();
        if golds.is_empty() {
            return Vec::new();
        }
        let rels: Vec<String> = self
            .store
            .relations()
            .iter()
            .map(|r| relation_words(self.store.name(r.0)))
            .collect();
        let entities = self.store.entities();
        let mut out = Vec::with_capacity(n_questions);
        for _ in 0..n_questions {
            let gold = *golds.choose(&mut rng).unwrap();
            let template = DEFAULT_TEMPLATES.choose(&mut rng).unwrap();
            let question = template
                .replace("{rel}", &gold.relation)
                .replace("{subj}", &gold.subject);
            let same = |f: &RawFact| normalize(&f.subject) == normalize(&gold.subject) && f.relation == gold.relation;
            let mut cands = vec![(gold.clone(), true)];
            while cands.len() <= distractors {
                let f = if cands.len() % 2 == 1 {
                    external.choose(&mut rng).unwrap().clone()
                } else {
                    let object = self.alias_of(*entities.choose(&mut rng).unwrap(), &mut rng);
                    if rng.gen_bool(0.5) {
                        RawFact::new(gold.subject.clone(), rels.choose(&mut rng).unwrap().clone(), object)
                    } else {
                        let subject = self.alias_of(*entities.choose(&mut rng).unwrap(), &mut rng);
                        RawFact::new(subject, gold.relation.clone(), object)
                    }
                };
                if !same(&f) {
                    cands.push((f, false));
                }
            }
            cands.shuffle(&mut rng);
            out.push(RerankQuestion {
                question,
                candidates: cands,
            });
        }
        out
    }

    /// Writes triples, aliases, the three question splits, an external KB
    /// and a rerank set into `dir`.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_triples(
            &dir.join("triples.tsv"),
            &self.store.atomic_expansion(),
            self.store.interner(),
        )?;
        let aliases: Vec<String> = self
            .alias_records
            .iter()
            .map(|r| format!("{}\t{}", self.store.name(r.entity.0), r.alias))
            .collect();
        let p = dir.join("aliases.tsv");
        std::fs::write(&p, aliases.join("\n") + "\n").map_err(|e| Error::io(&p, e))?;
        write_qa_file(&dir.join("train.tsv"), &self.train, &self.store)?;
        write_qa_file(&dir.join("valid.tsv"), &self.valid, &self.store)?;
        write_qa_file(&dir.join("test.tsv"), &self.test, &self.store)?;
        let external = self.external_facts(500, 0.5, seed);
        write_raw_facts(&dir.join("external.tsv"), &external)?;
        write_rerank_file(&dir.join("rerank.tsv"), &self.rerank_set(&external, 200, 4, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyConfig {
        ToyConfig {
            entities: 60,
            questions: 300,
            ..Default::default()
        }
    }

    #[test]
    fn shape_matches_config() {
        let b = ToyBenchmark::generate(&small()).unwrap();
        assert_eq!(b.store.len(), 600);
        assert_eq!(b.train.len() + b.valid.len() + b.test.len(), 300);
        assert_eq!(b.train.len(), 210);
        assert_eq!(b.valid.len(), 30);
        for f in b.store.facts() {
            assert!((1..=3).contains(&f.objects.len()));
        }
        for e in b.store.entities() {
            assert!((1..=3).contains(&b.aliases.aliases_of(e).len()));
        }
    }

    #[test]
    fn aliases_are_unambiguous() {
        let b = ToyBenchmark::generate(&small()).unwrap();
        for key in b.aliases.keys() {
            assert_eq!(b.aliases.lookup_normalized(key).len(), 1);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = ToyBenchmark::generate(&small()).unwrap();
        let b = ToyBenchmark::generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.store.facts(), b.store.facts());
    }

    #[test]
    fn rerank_questions_have_one_correct_candidate() {
        let b = ToyBenchmark::generate(&small()).unwrap();
        let ext = b.external_facts(100, 0.5, 1);
        for q in b.rerank_set(&ext, 20, 4, 1) {
            assert_eq!(q.candidates.len(), 5);
            assert_eq!(q.candidates.iter().filter(|c| c.1).count(), 1);
        }
    }
}
