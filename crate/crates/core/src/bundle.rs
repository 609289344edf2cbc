//! A prepared memory: grouped store, alias index and both tables, with a
//! directory layout for persistence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::encoder::{build_tables, SymbolTable, VocabTable};
use crate::error::{Error, Result};
use crate::kb_store::{
    build_alias_index, collapse_mediators, group_facts, load_triples, read_alias_file, AliasIndex, AliasRecord,
    EntityId, GroupedFactStore, Interner, MediatorSpec, TripleFormat,
};

pub const TRIPLES_FILE: &str = "triples.tsv";
pub const ALIASES_FILE: &str = "aliases.tsv";
pub const SYMBOLS_FILE: &str = "symbols.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    pub store: GroupedFactStore,
    pub aliases: AliasIndex,
    pub symbols: SymbolTable,
    pub vocab: VocabTable,
}

/// Counts gathered while preparing a memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrepReport {
    pub atomic_facts: usize,
    pub after_collapse: usize,
    pub grouped_facts: usize,
    pub entities: usize,
    pub relationships: usize,
    pub alias_keys: usize,
    pub skipped_aliases: usize,
    pub orphan_mediators: usize,
    pub dropped_mediator_edges: usize,
    pub n_symbols: usize,
    pub n_vocab: usize,
}

impl std::fmt::Display for PrepReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "atomic facts\t{}", self.atomic_facts)?;
        writeln!(f, "after mediator collapse\t{}", self.after_collapse)?;
        writeln!(f, "facts (grouped)\t{}", self.grouped_facts)?;
        writeln!(f, "entities\t{}", self.entities)?;
        writeln!(f, "relationships\t{}", self.relationships)?;
        writeln!(f, "alias keys\t{}", self.alias_keys)?;
        writeln!(f, "skipped aliases\t{}", self.skipped_aliases)?;
        writeln!(f, "orphan mediators\t{}", self.orphan_mediators)?;
        writeln!(f, "dropped mediator edges\t{}", self.dropped_mediator_edges)?;
        writeln!(f, "symbols (N_S)\t{}", self.n_symbols)?;
        write!(f, "vocabulary (N_V)\t{}", self.n_vocab)
    }
}

impl KnowledgeBase {
    pub fn build(store: GroupedFactStore, aliases: AliasIndex, questions: &[String]) -> Self {
        let (symbols, vocab) = build_tables(&store, &aliases, questions);
        KnowledgeBase {
            store,
            aliases,
            symbols,
            vocab,
        }
    }

    /// Loads triples and aliases, collapses mediators, groups and indexes.
    pub fn prepare(
        triples: &[PathBuf],
        format: TripleFormat,
        alias_files: &[PathBuf],
        mediators: Option<&MediatorSpec>,
        questions: &[String],
    ) -> Result<(Self, PrepReport)> {
        let mut interner = Interner::new();
        let mut atomic = Vec::new();
        for p in triples {
            atomic.extend(load_triples(p, format, &mut interner)?);
        }
        let mut records: Vec<AliasRecord> = Vec::new();
        for p in alias_files {
            records.extend(read_alias_file(p, &mut interner)?);
        }
        let mut report = PrepReport {
            atomic_facts: atomic.len(),
            ..Default::default()
        };
        let facts = match mediators {
            Some(spec) => {
                let c = collapse_mediators(&atomic, spec, &interner);
                report.orphan_mediators = c.orphan_mediators;
                report.dropped_mediator_edges = c.dropped_edges;
                c.facts
            }
            None => atomic,
        };
        report.after_collapse = facts.len();
        let store = group_facts(&facts, interner);
        let aliases = build_alias_index(&records);
        let kb = KnowledgeBase::build(store, aliases, questions);
        report.grouped_facts = kb.store.len();
        report.entities = kb.store.entities().len();
        report.relationships = kb.store.relations().len();
        report.alias_keys = kb.aliases.len();
        report.skipped_aliases = kb.aliases.skipped();
        report.n_symbols = kb.symbols.len();
        report.n_vocab = kb.vocab.len();
        Ok((kb, report))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::kb_store::write_triples(
            &dir.join(TRIPLES_FILE),
            &self.store.atomic_expansion(),
            self.store.interner(),
        )?;
        let path = dir.join(ALIASES_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            let interner = self.store.interner();
            for h in 0..interner.len() as u32 {
                for a in self.aliases.aliases_of(EntityId(h)) {
                    writeln!(w, "{}\t{}", interner.name(h), a)?;
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(&path, e))?;
        self.symbols.save(&dir.join(SYMBOLS_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut interner = Interner::new();
        let atomic = load_triples(&dir.join(TRIPLES_FILE), TripleFormat::Tsv, &mut interner)?;
        let records = read_alias_file(&dir.join(ALIASES_FILE), &mut interner)?;
        let store = group_facts(&atomic, interner);
        let symbols = SymbolTable::load(&dir.join(SYMBOLS_FILE), store.interner())?;
        let vocab = VocabTable::load(&dir.join(VOCAB_FILE))?;
        Ok(KnowledgeBase {
            store,
            aliases: build_alias_index(&records),
            symbols,
            vocab,
        })
    }
}
