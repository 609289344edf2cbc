//! The fact memory: interned symbols, grouped facts keyed by
//! `(subject, relationship)`, per-entity degree, and the alias index.

mod alias;
mod io;
mod mediator;

use std::cmp::Ordering;
use std::collections::HashMap;

pub use alias::{build_alias_index, AliasIndex, AliasRecord};
pub(crate) use io::{data_lines as io_data_lines, open as io_open, split_fields as io_split_fields};
pub use io::{
    load_triples, parse_grouped_triples, parse_triples, read_alias_file, read_mediator_spec, write_triples,
    TripleFormat,
};
pub use mediator::{collapse_mediators, Collapsed, MediatorSpec};

/// Handle of an entity in the shared symbol table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Handle of a relationship in the shared symbol table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

/// One symbol table for entities and relationships alike.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    names: Vec<String>,
    map: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, symbol: &str) -> u32 {
        if let Some(&h) = self.map.get(symbol) {
            return h;
        }
        let h = self.names.len() as u32;
        self.names.push(symbol.to_owned());
        self.map.insert(symbol.to_owned(), h);
        h
    }

    pub fn entity(&mut self, symbol: &str) -> EntityId {
        EntityId(self.intern(symbol))
    }

    pub fn relation(&mut self, symbol: &str) -> RelationId {
        RelationId(self.intern(symbol))
    }

    pub fn get(&self, symbol: &str) -> Option<u32> {
        self.map.get(symbol).copied()
    }

    pub fn name(&self, handle: u32) -> &str {
        &self.names[handle as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AtomicFact {
    pub subject: EntityId,
    pub relationship: RelationId,
    pub object: EntityId,
}

impl AtomicFact {
    pub fn new(subject: EntityId, relationship: RelationId, object: EntityId) -> Self {
        AtomicFact {
            subject,
            relationship,
            object,
        }
    }
}

/// A subject and relationship together with every object they reach.
///
/// `objects` is kept sorted by handle and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupedFact {
    pub subject: EntityId,
    pub relationship: RelationId,
    pub objects: Vec<EntityId>,
}

impl GroupedFact {
    pub fn new(subject: EntityId, relationship: RelationId, mut objects: Vec<EntityId>) -> Self {
        objects.sort_unstable();
        objects.dedup();
        GroupedFact {
            subject,
            relationship,
            objects,
        }
    }

    pub fn key(&self) -> (EntityId, RelationId) {
        (self.subject, self.relationship)
    }
}

#[derive(Debug, Clone)]
pub struct GroupedFactStore {
    interner: Interner,
    facts: Vec<GroupedFact>,
    by_key: HashMap<(EntityId, RelationId), usize>,
    by_subject: HashMap<EntityId, Vec<usize>>,
    degree: HashMap<EntityId, usize>,
}

/// Groups atomic facts by `(subject, relationship)`. Grouped facts appear
/// in order of first occurrence of their key.
pub fn group_facts(facts: &[AtomicFact], interner: Interner) -> GroupedFactStore {
    let mut by_key: HashMap<(EntityId, RelationId), usize> = HashMap::new();
    let mut objects: Vec<(EntityId, RelationId, Vec<EntityId>)> = Vec::new();
    for f in facts {
        let idx = *by_key.entry((f.subject, f.relationship)).or_insert_with(|| {
            objects.push((f.subject, f.relationship, Vec::new()));
            objects.len() - 1
        });
        objects[idx].2.push(f.object);
    }
    let grouped = objects.into_iter().map(|(s, r, o)| GroupedFact::new(s, r, o)).collect();
    GroupedFactStore::from_parts(interner, grouped)
}

impl GroupedFactStore {
    /// Builds a store from already grouped facts. Keys must be unique.
    pub fn from_parts(interner: Interner, facts: Vec<GroupedFact>) -> Self {
        let mut by_key = HashMap::with_capacity(facts.len());
        let mut by_subject: HashMap<EntityId, Vec<usize>> = HashMap::new();
        let mut degree: HashMap<EntityId, usize> = HashMap::new();
        for (i, f) in facts.iter().enumerate() {
            let prev = by_key.insert(f.key(), i);
            assert!(prev.is_none(), "duplicate grouped fact key");
            by_subject.entry(f.subject).or_default().push(i);
            *degree.entry(f.subject).or_default() += 1;
            for &o in &f.objects {
                if o != f.subject {
                    *degree.entry(o).or_default() += 1;
                }
            }
        }
        GroupedFactStore {
            interner,
            facts,
            by_key,
            by_subject,
            degree,
        }
    }

    pub fn interner(&self) -> &Interner {
        &self.interner
    }

    pub fn facts(&self) -> &[GroupedFact] {
        &self.facts
    }

    pub fn fact(&self, idx: usize) -> &GroupedFact {
        &self.facts[idx]
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn get(&self, subject: EntityId, relationship: RelationId) -> Option<&GroupedFact> {
        self.index_of(subject, relationship).map(|i| &self.facts[i])
    }

    pub fn index_of(&self, subject: EntityId, relationship: RelationId) -> Option<usize> {
        self.by_key.get(&(subject, relationship)).copied()
    }

    /// Indices of the facts having `e` as subject, in store order.
    pub fn facts_of_subject(&self, e: EntityId) -> &[usize] {
        self.by_subject.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of grouped facts in which `e` appears as subject or object.
    pub fn entity_degree(&self, e: EntityId) -> usize {
        self.degree.get(&e).copied().unwrap_or(0)
    }

    /// Entities reached in one hop from `e` along its own facts, sorted by
    /// handle, excluding `e` itself.
    pub fn neighbors(&self, e: EntityId) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self
            .facts_of_subject(e)
            .iter()
            .flat_map(|&i| self.facts[i].objects.iter().copied())
            .filter(|&o| o != e)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn name(&self, handle: u32) -> &str {
        self.interner.name(handle)
    }

    pub fn entity(&self, symbol: &str) -> Option<EntityId> {
        self.interner.get(symbol).map(EntityId)
    }

    pub fn relation(&self, symbol: &str) -> Option<RelationId> {
        self.interner.get(symbol).map(RelationId)
    }

    /// Orders two symbol handles by their string form.
    pub fn symbol_cmp(&self, a: u32, b: u32) -> Ordering {
        self.interner.name(a).cmp(self.interner.name(b))
    }

    /// Distinct entities mentioned by any fact, sorted by handle.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut v: Vec<EntityId> = self.degree.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Distinct relationships used by any fact, sorted by handle.
    pub fn relations(&self) -> Vec<RelationId> {
        let mut v: Vec<RelationId> = self.facts.iter().map(|f| f.relationship).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Flattens back to one atomic fact per (subject, relationship, object).
    pub fn atomic_expansion(&self) -> Vec<AtomicFact> {
        self.facts
            .iter()
            .flat_map(|f| {
                f.objects
                    .iter()
                    .map(move |&o| AtomicFact::new(f.subject, f.relationship, o))
            })
            .collect()
    }

    pub fn atomic_count(&self) -> usize {
        self.facts.iter().map(|f| f.objects.len()).sum()
    }
}

pub fn entity_degree(store: &GroupedFactStore, e: EntityId) -> usize {
    store.entity_degree(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intern3(i: &mut Interner, s: &str, r: &str, o: &str) -> AtomicFact {
        AtomicFact::new(i.entity(s), i.relation(r), i.entity(o))
    }

    #[test]
    fn grouping_unions_objects() {
        let mut i = Interner::new();
        let facts = vec![
            intern3(&mut i, "a", "r", "b"),
            intern3(&mut i, "a", "r", "c"),
            intern3(&mut i, "a", "q", "b"),
            intern3(&mut i, "a", "r", "b"),
        ];
        let a = i.get("a").map(EntityId).unwrap();
        let r = i.get("r").map(RelationId).unwrap();
        let q = i.get("q").map(RelationId).unwrap();
        let store = group_facts(&facts, i);
        assert_eq!(store.len(), 2);
        assert_eq!(store.get(a, r).unwrap().objects.len(), 2);
        assert_eq!(store.get(a, q).unwrap().objects.len(), 1);
        assert_eq!(store.atomic_count(), 3);
    }

    #[test]
    fn degree_counts_facts_not_objects() {
        let mut i = Interner::new();
        let facts = vec![intern3(&mut i, "a", "r", "b"), intern3(&mut i, "a", "r", "c")];
        let store = group_facts(&facts, i.clone());
        let a = store.entity("a").unwrap();
        assert_eq!(entity_degree(&store, a), 1);

        let mut facts2 = facts.clone();
        facts2.push(intern3(&mut i, "c", "q", "a"));
        let store = group_facts(&facts2, i);
        assert_eq!(store.entity_degree(a), 2);
        assert_eq!(store.entity_degree(EntityId(9999)), 0);
    }

    #[test]
    fn self_loop_counts_once() {
        let mut i = Interner::new();
        let facts = vec![intern3(&mut i, "a", "r", "a")];
        let store = group_facts(&facts, i);
        assert_eq!(store.entity_degree(store.entity("a").unwrap()), 1);
    }

    #[test]
    fn neighbors_follow_outgoing_facts() {
        let mut i = Interner::new();
        let facts = vec![
            intern3(&mut i, "a", "r", "b"),
            intern3(&mut i, "b", "r", "c"),
            intern3(&mut i, "b", "q", "d"),
            intern3(&mut i, "b", "q", "b"),
        ];
        let store = group_facts(&facts, i);
        let b = store.entity("b").unwrap();
        let names: Vec<&str> = store.neighbors(b).iter().map(|e| store.name(e.0)).collect();
        assert_eq!(names, vec!["c", "d"]);
        assert!(store.neighbors(store.entity("c").unwrap()).is_empty());
    }
}
