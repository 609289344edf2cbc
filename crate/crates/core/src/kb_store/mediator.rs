use std::collections::{BTreeMap, HashSet};

use super::{AtomicFact, EntityId, Interner};

/// Declares which nodes are mediators: explicit ids and/or id prefixes.
#[derive(Debug, Clone, Default)]
pub struct MediatorSpec {
    pub ids: HashSet<String>,
    pub prefixes: Vec<String>,
}

impl MediatorSpec {
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty() && self.prefixes.is_empty()
    }

    pub fn is_mediator(&self, symbol: &str) -> bool {
        self.ids.contains(symbol) || self.prefixes.iter().any(|p| symbol.starts_with(p.as_str()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Collapsed {
    pub facts: Vec<AtomicFact>,
    /// Mediators lacking incoming or outgoing edges; their edges are gone.
    pub orphan_mediators: usize,
    /// Mediator edges that produced no condensed fact.
    pub dropped_edges: usize,
    /// In/out pairs skipped because they would produce `(s, r2, s)` or
    /// would leave another mediator as an endpoint.
    pub skipped_pairs: usize,
}

/// Replaces every path `s -r1-> m -r2-> o` through a mediator `m` by the
/// condensed fact `(s, r2, o)`.
///
/// Facts not touching a mediator are passed through in their original
/// order, followed by the condensed facts sorted by the symbol strings of
/// `(s, r2, o)` and deduplicated.
pub fn collapse_mediators(facts: &[AtomicFact], spec: &MediatorSpec, interner: &Interner) -> Collapsed {
    if spec.is_empty() {
        return Collapsed {
            facts: facts.to_vec(),
            ..Default::default()
        };
    }
    let is_med = |e: EntityId| spec.is_mediator(interner.name(e.0));

    let mut out = Vec::with_capacity(facts.len());
    // mediator -> (incoming, outgoing)
    let mut edges: BTreeMap<EntityId, (Vec<AtomicFact>, Vec<AtomicFact>)> = BTreeMap::new();
    for f in facts {
        let s_med = is_med(f.subject);
        let o_med = is_med(f.object);
        if !s_med && !o_med {
            out.push(*f);
            continue;
        }
        if o_med {
            edges.entry(f.object).or_default().0.push(*f);
        }
        if s_med {
            edges.entry(f.subject).or_default().1.push(*f);
        }
    }

    let mut stats = Collapsed::default();
    let mut condensed = Vec::new();
    for (_, (incoming, outgoing)) in edges {
        if incoming.is_empty() || outgoing.is_empty() {
            stats.orphan_mediators += 1;
            stats.dropped_edges += incoming.len() + outgoing.len();
            continue;
        }
        let mut used_in = vec![false; incoming.len()];
        let mut used_out = vec![false; outgoing.len()];
        for (i, inc) in incoming.iter().enumerate() {
            for (j, outg) in outgoing.iter().enumerate() {
                let (s, o) = (inc.subject, outg.object);
                if o == s || is_med(s) || is_med(o) {
                    stats.skipped_pairs += 1;
                    continue;
                }
                used_in[i] = true;
                used_out[j] = true;
                condensed.push(AtomicFact::new(s, outg.relationship, o));
            }
        }
        stats.dropped_edges += used_in.iter().chain(&used_out).filter(|u| !**u).count();
    }
    let key = |f: &AtomicFact| {
        (
            interner.name(f.subject.0),
            interner.name(f.relationship.0),
            interner.name(f.object.0),
        )
    };
    condensed.sort_by(|a, b| key(a).cmp(&key(b)));
    condensed.dedup();
    if stats.orphan_mediators > 0 {
        log::warn!(
            "{} mediator(s) without incoming or outgoing edges dropped",
            stats.orphan_mediators
        );
    }
    out.extend(condensed);
    stats.facts = out;
    stats
}
