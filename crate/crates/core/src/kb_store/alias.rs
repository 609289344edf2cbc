use std::collections::HashMap;

use super::EntityId;
use crate::text::normalize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasRecord {
    pub entity: EntityId,
    pub alias: String,
}

impl AliasRecord {
    pub fn new(entity: EntityId, alias: impl Into<String>) -> Self {
        AliasRecord {
            entity,
            alias: alias.into(),
        }
    }
}

/// Normalized alias string to the entities it names.
#[derive(Debug, Clone, Default)]
pub struct AliasIndex {
    index: HashMap<String, Vec<EntityId>>,
    /// Normalized aliases per entity in record order, without repeats.
    by_entity: HashMap<EntityId, Vec<String>>,
    max_tokens: usize,
    skipped: usize,
}

pub fn build_alias_index(records: &[AliasRecord]) -> AliasIndex {
    let mut idx = AliasIndex::default();
    for rec in records {
        let key = normalize(&rec.alias);
        if key.is_empty() {
            idx.skipped += 1;
            continue;
        }
        idx.max_tokens = idx.max_tokens.max(key.split(' ').count());
        let ents = idx.index.entry(key.clone()).or_default();
        if let Err(pos) = ents.binary_search(&rec.entity) {
            ents.insert(pos, rec.entity);
        }
        let names = idx.by_entity.entry(rec.entity).or_default();
        if !names.contains(&key) {
            names.push(key);
        }
    }
    if idx.skipped > 0 {
        log::warn!("{} alias record(s) normalized to nothing and were skipped", idx.skipped);
    }
    idx
}

impl AliasIndex {
    /// Entities named by `alias` (normalized first), sorted by handle.
    pub fn lookup(&self, alias: &str) -> &[EntityId] {
        self.lookup_normalized(&normalize(alias))
    }

    pub fn lookup_normalized(&self, key: &str) -> &[EntityId] {
        self.index.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn aliases_of(&self, e: EntityId) -> &[String] {
        self.by_entity.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }

    /// First alias of `e` in record order.
    pub fn canonical_name(&self, e: EntityId) -> Option<&str> {
        self.aliases_of(e).first().map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Longest alias length in tokens.
    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    /// Records dropped because the alias normalized to the empty string.
    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_round_trip() {
        let idx = build_alias_index(&[AliasRecord::new(EntityId(1), "Fires Creek")]);
        assert_eq!(idx.lookup("fires creek"), &[EntityId(1)]);
        assert_eq!(idx.lookup("  FIRES   creek!"), &[EntityId(1)]);
        assert!(idx.lookup("fires").is_empty());
    }

    #[test]
    fn ambiguous_alias() {
        let idx = build_alias_index(&[
            AliasRecord::new(EntityId(2), "Paris"),
            AliasRecord::new(EntityId(1), "Paris"),
        ]);
        assert_eq!(idx.lookup("paris"), &[EntityId(1), EntityId(2)]);
    }

    #[test]
    fn empty_alias_skipped() {
        let idx = build_alias_index(&[
            AliasRecord::new(EntityId(1), " ?! "),
            AliasRecord::new(EntityId(1), "x"),
        ]);
        assert_eq!(idx.skipped(), 1);
        assert_eq!(idx.len(), 1);
        assert!(idx.keys().all(|k| !k.is_empty()));
    }

    #[test]
    fn canonical_is_first_in_file_order() {
        let idx = build_alias_index(&[
            AliasRecord::new(EntityId(1), "Big Apple"),
            AliasRecord::new(EntityId(1), "New York"),
            AliasRecord::new(EntityId(1), "big apple"),
        ]);
        assert_eq!(idx.canonical_name(EntityId(1)), Some("big apple"));
        assert_eq!(idx.aliases_of(EntityId(1)).len(), 2);
        assert_eq!(idx.max_tokens(), 2);
    }
}
