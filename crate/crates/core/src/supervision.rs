//! Training labels derived rather than given: distant supervision from
//! answer strings, template questions generated from the memory, and
//! paraphrase clusters.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;

use crate::candidate_gen::CandidateGenerator;
use crate::error::{Error, Result};
use crate::kb_store::{AliasIndex, GroupedFact, GroupedFactStore};
use crate::text::{normalize, relation_words};

/// Where a QA example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    /// Answer strings only, labeled by distant supervision.
    WebqStyle,
    /// Annotated with the supporting fact.
    SimpleqStyle,
    /// Generated from the memory.
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::WebqStyle => "webq",
            Source::SimpleqStyle => "simpleq",
            Source::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "webq" => Ok(Source::WebqStyle),
            "simpleq" => Ok(Source::SimpleqStyle),
            "synthetic" => Ok(Source::Synthetic),
            other => Err(Error::Config(format!("unknown source tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAExample {
    pub question: String,
    pub fact: GroupedFact,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerLabeledQuestion {
    pub question: String,
    pub answers: Vec<String>,
}

/// Facts among the question's candidates whose object aliases produce the
/// most answer strings; ties go to the facts with the fewest objects.
/// Returns store indices, empty when no candidate produces any answer.
pub fn label_distant(
    item: &AnswerLabeledQuestion,
    store: &GroupedFactStore,
    aliases: &AliasIndex,
    generator: &CandidateGenerator,
) -> Vec<usize> {
    let cands = generator.candidates(&item.question, store, aliases);
    best_matching_facts(&cands.facts, &item.answers, store, aliases)
}

/// The max-match, min-object selection over an explicit candidate list.
pub fn best_matching_facts(
    candidates: &[usize],
    answers: &[String],
    store: &GroupedFactStore,
    aliases: &AliasIndex,
) -> Vec<usize> {
    let answers: BTreeSet<String> = answers.iter().map(|a| normalize(a)).filter(|a| !a.is_empty()).collect();
    let scored: Vec<(usize, usize, usize)> = candidates
        .iter()
        .map(|&i| {
            let f = store.fact(i);
            let produced: BTreeSet<&str> = f
                .objects
                .iter()
                .flat_map(|&o| aliases.aliases_of(o).iter().map(String::as_str))
                .collect();
            let hits = answers.iter().filter(|a| produced.contains(a.as_str())).count();
            (i, hits, f.objects.len())
        })
        .collect();
    let Some(best) = scored.iter().map(|s| s.1).max().filter(|&m| m > 0) else {
        return Vec::new();
    };
    let min_objects = scored.iter().filter(|s| s.1 == best).map(|s| s.2).min().unwrap();
    scored
        .into_iter()
        .filter(|s| s.1 == best && s.2 == min_objects)
        .map(|s| s.0)
        .collect()
}

pub const DEFAULT_TEMPLATES: [&str; 3] = [
    "what is the {rel} of {subj} ?",
    "what {rel} does {subj} have ?",
    "which {rel} is associated with {subj} ?",
];

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    /// Facts with more objects than this are skipped.
    pub object_threshold: usize,
    pub seed: u64,
    pub templates: Vec<String>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            object_threshold: 10,
            seed: 1,
            templates: DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.object_threshold == 0 {
            return Err(Error::Config("object threshold must be at least 1".into()));
        }
        if self.templates.is_empty() || self.templates.iter().any(|t| !t.contains("{subj}")) {
            return Err(Error::Config("every template needs a {subj} slot".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyntheticStats {
    pub emitted: usize,
    pub over_threshold: usize,
    pub no_alias: usize,
}

/// Fills a random template with a random alias of the subject and the
/// relationship's readable words. `None` when the subject has no alias.
pub fn question_for_fact<R: Rng>(
    fact: &GroupedFact,
    store: &GroupedFactStore,
    aliases: &AliasIndex,
    templates: &[String],
    rng: &mut R,
) -> Option<String> {
    let alias = aliases.aliases_of(fact.subject).choose(rng)?;
    let template = templates.choose(rng)?;
    let rel = relation_words(store.name(fact.relationship.0));
    Some(template.replace("{rel}", &rel).replace("{subj}", alias))
}

/// One question per eligible grouped fact, in store order.
pub fn generate_synthetic(
    store: &GroupedFactStore,
    aliases: &AliasIndex,
    cfg: &SyntheticConfig,
) -> Result<(Vec<QAExample>, SyntheticStats)> {
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = SyntheticStats::default();
    let mut out = Vec::new();
    for fact in store.facts() {
        if fact.objects.len() > cfg.object_threshold {
            stats.over_threshold += 1;
            continue;
        }
        match question_for_fact(fact, store, aliases, &cfg.templates, &mut rng) {
            Some(question) => {
                out.push(QAExample {
                    question,
                    fact: fact.clone(),
                    source: Source::Synthetic,
                });
                stats.emitted += 1;
            }
            None => stats.no_alias += 1,
        }
    }
    Ok((out, stats))
}

/// Draws eligible facts with probability inversely proportional to how
/// many eligible facts share their relationship.
pub struct WeightedFactSampler {
    facts: Vec<usize>,
    dist: WeightedIndex<f64>,
}

impl WeightedFactSampler {
    pub fn new(store: &GroupedFactStore, aliases: &AliasIndex, cfg: &SyntheticConfig) -> Result<Self> {
        let facts: Vec<usize> = (0..store.len())
            .filter(|&i| {
                let f = store.fact(i);
                f.objects.len() <= cfg.object_threshold && !aliases.aliases_of(f.subject).is_empty()
            })
            .collect();
        let mut freq: HashMap<u32, usize> = HashMap::new();
        for &i in &facts {
            *freq.entry(store.fact(i).relationship.0).or_default() += 1;
        }
        let weights: Vec<f64> = facts
            .iter()
            .map(|&i| 1.0 / freq[&store.fact(i).relationship.0] as f64)
            .collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("no eligible facts: {e}")))?;
        Ok(WeightedFactSampler { facts, dist })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.facts[self.dist.sample(rng)]
    }
}

/// Subsampled corpus of `n` questions drawn by [`WeightedFactSampler`].
pub fn generate_synthetic_weighted(
    store: &GroupedFactStore,
    aliases: &AliasIndex,
    cfg: &SyntheticConfig,
    n: usize,
) -> Result<Vec<QAExample>> {
    cfg.validate()?;
    let sampler = WeightedFactSampler::new(store, aliases, cfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let fact = store.fact(sampler.sample(&mut rng));
        let question =
            question_for_fact(fact, store, aliases, &cfg.templates, &mut rng).expect("eligible facts have aliases");
        out.push(QAExample {
            question,
            fact: fact.clone(),
            source: Source::Synthetic,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParaphraseCluster {
    pub questions: Vec<String>,
}

/// Reads one tab-separated cluster per line; clusters with fewer than two
/// questions are dropped and counted.
pub fn load_paraphrases(path: &Path) -> Result<(Vec<ParaphraseCluster>, usize)> {
    let mut clusters = Vec::new();
    let mut dropped = 0;
    for item in crate::kb_store::io_data_lines(crate::kb_store::io_open(path)?) {
        let (_, line) = item?;
        let questions: Vec<String> = line
            .split('\t')
            .map(str::trim)
            .filter(|q| !q.is_empty())
            .map(str::to_owned)
            .collect();
        if questions.len() >= 2 {
            clusters.push(ParaphraseCluster { questions });
        } else {
            dropped += 1;
        }
    }
    Ok((clusters, dropped))
}

/// Flattened paraphrase clusters for drawing `(q, q', q'')` triples.
#[derive(Debug, Clone)]
pub struct ParaphrasePool {
    questions: Vec<String>,
    cluster_of: Vec<usize>,
    /// `[start, end)` of each cluster in `questions`.
    ranges: Vec<(usize, usize)>,
}

impl ParaphrasePool {
    pub fn new(clusters: &[ParaphraseCluster]) -> Self {
        let mut pool = ParaphrasePool {
            questions: Vec::new(),
            cluster_of: Vec::new(),
            ranges: Vec::new(),
        };
        for (c, cl) in clusters.iter().filter(|c| c.questions.len() >= 2).enumerate() {
            let start = pool.questions.len();
            pool.questions.extend(cl.questions.iter().cloned());
            pool.cluster_of.extend(std::iter::repeat_n(c, cl.questions.len()));
            pool.ranges.push((start, pool.questions.len()));
        }
        pool
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn cluster_of(&self, q: usize) -> usize {
        self.cluster_of[q]
    }

    /// Two members of one cluster and a question from another cluster, as
    /// indices into [`questions`](Self::questions). `None` with fewer than
    /// two clusters.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<(usize, usize, usize)> {
        if self.ranges.len() < 2 {
            return None;
        }
        let c = rng.gen_range(0..self.ranges.len());
        let (start, end) = self.ranges[c];
        let q = rng.gen_range(start..end);
        let mut q2 = rng.gen_range(start..end - 1);
        if q2 >= q {
            q2 += 1;
        }
        Some((q, q2, self.negative_for(q, rng)))
    }

    /// A uniformly drawn question outside the cluster of `q`. Needs at
    /// least two clusters.
    pub fn negative_for<R: Rng>(&self, q: usize, rng: &mut R) -> usize {
        let (start, end) = self.ranges[self.cluster_of[q]];
        let mut neg = rng.gen_range(0..self.questions.len() - (end - start));
        if neg >= start {
            neg += end - start;
        }
        neg
    }

    /// Number of questions outside the cluster of `q`.
    pub fn outside_count(&self, q: usize) -> usize {
        let (start, end) = self.ranges[self.cluster_of[q]];
        self.questions.len() - (end - start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb_store::{build_alias_index, group_facts, AliasRecord, AtomicFact, Interner};
    use rand_chacha::ChaCha8Rng;

    fn fires_creek() -> (GroupedFactStore, AliasIndex) {
        let mut i = Interner::new();
        let facts = vec![
            AtomicFact::new(
                i.entity("m.fc"),
                i.relation("location.location.containedby"),
                i.entity("m.nan"),
            ),
            AtomicFact::new(
                i.entity("m.fc"),
                i.relation("location.location.containedby"),
                i.entity("m.nc"),
            ),
        ];
        let recs = vec![
            AliasRecord::new(i.entity("m.fc"), "Fires Creek"),
            AliasRecord::new(i.entity("m.nan"), "Nantahala National Forest"),
            AliasRecord::new(i.entity("m.nc"), "North Carolina"),
        ];
        (group_facts(&facts, i), build_alias_index(&recs))
    }

    #[test]
    fn template_question_round_trips_through_candidates() {
        let (store, aliases) = fires_creek();
        let templates = vec![DEFAULT_TEMPLATES[0].to_owned()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = question_for_fact(&store.facts()[0], &store, &aliases, &templates, &mut rng).unwrap();
        assert_eq!(q, "what is the containedby of fires creek ?");
        let g = CandidateGenerator::default();
        let cands = g.candidates(&q, &store, &aliases);
        assert_eq!(cands.entities, vec![store.entity("m.fc").unwrap()]);
        assert_eq!(cands.facts, vec![0]);
    }

    #[test]
    fn threshold_and_missing_alias_skip() {
        let mut i = Interner::new();
        let mut facts = Vec::new();
        for k in 0..11 {
            facts.push(AtomicFact::new(
                i.entity("big"),
                i.relation("r"),
                i.entity(&format!("o{k}")),
            ));
        }
        facts.push(AtomicFact::new(i.entity("big"), i.relation("q"), i.entity("o0")));
        facts.push(AtomicFact::new(i.entity("anon"), i.relation("q"), i.entity("o0")));
        let recs = vec![AliasRecord::new(i.entity("big"), "big thing")];
        let store = group_facts(&facts, i);
        let aliases = build_alias_index(&recs);
        let (qs, stats) = generate_synthetic(&store, &aliases, &SyntheticConfig::default()).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(
            stats,
            SyntheticStats {
                emitted: 1,
                over_threshold: 1,
                no_alias: 1
            }
        );
        assert!(qs[0].question.contains("big thing"));
    }

    #[test]
    fn distant_label_prefers_fewest_objects() {
        let mut i = Interner::new();
        let s = i.entity("s");
        let mut facts = Vec::new();
        for o in ["x", "y", "z"] {
            facts.push(AtomicFact::new(s, i.relation("f1"), i.entity(o)));
        }
        for o in ["x", "y"] {
            facts.push(AtomicFact::new(s, i.relation("f2"), i.entity(o)));
        }
        facts.push(AtomicFact::new(s, i.relation("f3"), i.entity("x")));
        let recs = vec![
            AliasRecord::new(s, "sam"),
            AliasRecord::new(i.entity("x"), "ex"),
            AliasRecord::new(i.entity("y"), "why"),
            AliasRecord::new(i.entity("z"), "zed"),
        ];
        let store = group_facts(&facts, i);
        let aliases = build_alias_index(&recs);
        let g = CandidateGenerator::default();
        let item = AnswerLabeledQuestion {
            question: "sam ?".into(),
            answers: vec!["Ex".into(), "why".into()],
        };
        let got = label_distant(&item, &store, &aliases, &g);
        assert_eq!(got, vec![store.index_of(s, store.relation("f2").unwrap()).unwrap()]);
        let none = AnswerLabeledQuestion {
            question: "sam ?".into(),
            answers: vec!["nobody".into()],
        };
        assert!(label_distant(&none, &store, &aliases, &g).is_empty());
    }

    #[test]
    fn paraphrase_file_size_rule() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.tsv");
        std::fs::write(&p, "q1\tq2\tq3\nq1\n").unwrap();
        let (clusters, dropped) = load_paraphrases(&p).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].questions.len(), 3);
        assert_eq!(dropped, 1);
        assert!(load_paraphrases(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn paraphrase_negatives_leave_the_cluster() {
        let clusters: Vec<ParaphraseCluster> = (0..5)
            .map(|c| ParaphraseCluster {
                questions: (0..(2 + c % 3)).map(|k| format!("c{c} q{k}")).collect(),
            })
            .collect();
        let pool = ParaphrasePool::new(&clusters);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let (q, q2, neg) = pool.sample(&mut rng).unwrap();
            assert_ne!(q, q2);
            assert_eq!(pool.cluster_of(q), pool.cluster_of(q2));
            assert_ne!(pool.cluster_of(q), pool.cluster_of(neg));
        }
        assert!(ParaphrasePool::new(&clusters[..1]).sample(&mut rng).is_none());
    }
}
