//! Symbol/vocabulary tables and the sparse encodings of facts and
//! questions.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kb_store::{AliasIndex, GroupedFact, GroupedFactStore, Interner};
use crate::memory_extend::ExternalFact;
use crate::scalar::Scalar;
use crate::text::tokenize;

/// Sorted `(index, weight)` pairs over a fixed dimension. Indices are
/// strictly increasing and no stored weight is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<T> {
    entries: Vec<(u32, T)>,
    dim: usize,
}

impl<T: Scalar> SparseVector<T> {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            entries: Vec::new(),
            dim,
        }
    }

    /// Sums repeated indices and drops zeros. Panics on an index outside
    /// `[0, dim)`.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, T)>) -> Self {
        let mut raw: Vec<(u32, T)> = pairs
            .into_iter()
            .map(|(i, w)| {
                assert!(i < dim, "index {i} out of range for dim {dim}");
                (i as u32, w)
            })
            .collect();
        raw.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, T)> = Vec::with_capacity(raw.len());
        for (i, w) in raw {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc = *acc + w,
                _ => entries.push((i, w)),
            }
        }
        entries.retain(|&(_, w)| w != T::zero());
        SparseVector { entries, dim }
    }

    /// Indicator vector over the given indices (repeats collapse).
    pub fn indicator(dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        SparseVector::from_pairs(dim, set.into_iter().map(|i| (i, T::one())))
    }

    pub fn entries(&self) -> &[(u32, T)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: usize) -> T {
        self.entries
            .binary_search_by_key(&(idx as u32), |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w.to_f64_lossy()).sum()
    }

    pub fn scaled(&self, factor: T) -> Self {
        SparseVector::from_pairs(self.dim, self.entries.iter().map(|&(i, w)| (i as usize, w * factor)))
    }
}

/// Entity/relationship symbol to column of `W_S`.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    by_name: HashMap<String, usize>,
    by_handle: HashMap<u32, usize>,
}

/// Word or alias n-gram to column of `W_V`.
#[derive(Debug, Clone, Default)]
pub struct VocabTable {
    tokens: Vec<String>,
    by_token: HashMap<String, usize>,
}

impl SymbolTable {
    /// Columns assigned in sorted symbol order.
    pub fn from_store(store: &GroupedFactStore) -> Self {
        let interner = store.interner();
        let mut handles: Vec<u32> = store
            .entities()
            .into_iter()
            .map(|e| e.0)
            .chain(store.relations().into_iter().map(|r| r.0))
            .collect();
        handles.sort_by(|&a, &b| interner.name(a).cmp(interner.name(b)));
        handles.dedup();
        let names: Vec<String> = handles.iter().map(|&h| interner.name(h).to_owned()).collect();
        let by_name = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let by_handle = handles.iter().enumerate().map(|(i, &h)| (h, i)).collect();
        SymbolTable {
            names,
            by_name,
            by_handle,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn column(&self, handle: u32) -> Option<usize> {
        self.by_handle.get(&handle).copied()
    }

    pub fn column_of(&self, symbol: &str) -> Option<usize> {
        self.by_name.get(symbol).copied()
    }

    pub fn name(&self, column: usize) -> &str {
        &self.names[column]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_table(path, &self.names)
    }

    /// Loads a saved table and resolves symbols against `interner`.
    /// Symbols unknown to the interner keep their column but cannot be
    /// reached by handle.
    pub fn load(path: &Path, interner: &Interner) -> Result<Self> {
        let names = load_table(path)?;
        let by_name: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let by_handle = names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| interner.get(n).map(|h| (h, i)))
            .collect();
        Ok(SymbolTable {
            names,
            by_name,
            by_handle,
        })
    }
}

impl VocabTable {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = tokens.into_iter().filter(|t| !t.is_empty()).collect();
        let tokens: Vec<String> = set.into_iter().collect();
        let by_token = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        VocabTable { tokens, by_token }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.by_token.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_table(path, &self.tokens)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tokens = load_table(path)?;
        let by_token = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(VocabTable { tokens, by_token })
    }
}

fn save_table(path: &Path, names: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{}", names.len())?;
        for (i, n) in names.iter().enumerate() {
            writeln!(w, "{i}\t{n}")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn load_table(path: &Path) -> Result<Vec<String>> {
    let reader = crate::kb_store::io_open(path)?;
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing count header"))?
        .map_err(|e| Error::io(path, e))?;
    let count: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::parse(1, "count header is not an integer"))?;
    let mut names = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 2;
        let (idx, name) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected index<TAB>symbol"))?;
        if idx.parse::<usize>().ok() != Some(i) {
            return Err(Error::parse(lineno, format!("expected index {i}")));
        }
        names.push(name.to_owned());
    }
    if names.len() != count {
        return Err(Error::parse(
            names.len() + 1,
            format!("header says {count} entries, found {}", names.len()),
        ));
    }
    Ok(names)
}

/// Builds both tables. The vocabulary is every normalized word of the
/// question corpus plus every alias of the index, each alias a single
/// token of the table.
pub fn build_tables(store: &GroupedFactStore, aliases: &AliasIndex, questions: &[String]) -> (SymbolTable, VocabTable) {
    let words = questions.iter().flat_map(|q| tokenize(q));
    let vocab = VocabTable::from_tokens(words.chain(aliases.keys().map(str::to_owned)));
    (SymbolTable::from_store(store), vocab)
}

fn column(symbols: &SymbolTable, interner: &Interner, handle: u32) -> Result<usize> {
    symbols
        .column(handle)
        .ok_or_else(|| Error::UnknownSymbol(interner.name(handle).to_owned()))
}

/// Bag of symbols: subject and relationship weigh 1, each of the `k`
/// objects `1/k`. A subject repeated among the objects sums on its column.
pub fn encode_fact<T: Scalar>(
    fact: &GroupedFact,
    symbols: &SymbolTable,
    interner: &Interner,
) -> Result<SparseVector<T>> {
    let k = T::from_usize(fact.objects.len().max(1)).unwrap();
    let mut pairs = Vec::with_capacity(fact.objects.len() + 2);
    pairs.push((column(symbols, interner, fact.subject.0)?, T::one()));
    pairs.push((column(symbols, interner, fact.relationship.0)?, T::one()));
    for o in &fact.objects {
        pairs.push((column(symbols, interner, o.0)?, T::one() / k));
    }
    Ok(SparseVector::from_pairs(symbols.len(), pairs))
}

/// Like [`encode_fact`], except every object is spread uniformly over
/// itself and its one-hop neighbors, keeping `1/k` mass per object.
pub fn encode_fact_subgraph<T: Scalar>(
    fact: &GroupedFact,
    store: &GroupedFactStore,
    symbols: &SymbolTable,
) -> Result<SparseVector<T>> {
    let interner = store.interner();
    let k = fact.objects.len().max(1) as f64;
    let mut pairs = vec![
        (column(symbols, interner, fact.subject.0)?, T::one()),
        (column(symbols, interner, fact.relationship.0)?, T::one()),
    ];
    for o in &fact.objects {
        let mut bag = store.neighbors(*o);
        bag.push(*o);
        let w = T::from_f64_lossy(1.0 / (k * bag.len() as f64));
        for e in bag {
            pairs.push((column(symbols, interner, e.0)?, w));
        }
    }
    Ok(SparseVector::from_pairs(symbols.len(), pairs))
}

/// Bag of n-grams with binary weights: every in-vocabulary word plus every
/// contiguous span that is both an alias and a vocabulary entry.
pub fn encode_question<T: Scalar>(q: &str, vocab: &VocabTable, aliases: &AliasIndex) -> SparseVector<T> {
    SparseVector::indicator(vocab.len(), question_indices(&tokenize(q), vocab, aliases))
}

pub(crate) fn question_indices(tokens: &[String], vocab: &VocabTable, aliases: &AliasIndex) -> BTreeSet<usize> {
    let mut idx: BTreeSet<usize> = tokens.iter().filter_map(|t| vocab.index(t)).collect();
    let max_len = aliases.max_tokens().min(tokens.len());
    for len in 2..=max_len {
        for start in 0..=tokens.len() - len {
            let span = tokens[start..start + len].join(" ");
            if aliases.contains(&span) {
                if let Some(i) = vocab.index(&span) {
                    idx.insert(i);
                }
            }
        }
    }
    idx
}

/// Encodes a linked external fact over `N_V + N_S` columns. Linked
/// endpoints use their symbol column offset by `N_V`; everything else is
/// a bag of words. Weights are binary.
pub fn encode_external_fact<T: Scalar>(
    fact: &ExternalFact,
    symbols: &SymbolTable,
    vocab: &VocabTable,
) -> SparseVector<T> {
    let n_v = vocab.len();
    let mut idx = BTreeSet::new();
    let endpoint = |link: Option<crate::kb_store::EntityId>, text: &str, idx: &mut BTreeSet<usize>| match link
        .and_then(|e| symbols.column(e.0))
    {
        Some(col) => {
            idx.insert(n_v + col);
        }
        None => idx.extend(tokenize(text).iter().filter_map(|t| vocab.index(t))),
    };
    endpoint(fact.subject_link, &fact.subject, &mut idx);
    endpoint(fact.object_link, &fact.object, &mut idx);
    idx.extend(tokenize(&fact.relation).iter().filter_map(|t| vocab.index(t)));
    SparseVector::indicator(n_v + symbols.len(), idx)
}

/// How grouped facts are turned into symbol vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactEncoding {
    #[default]
    Plain,
    /// Objects replaced by their one-hop neighborhoods.
    Subgraph,
}

pub fn encode_grouped<T: Scalar>(
    fact: &GroupedFact,
    store: &GroupedFactStore,
    symbols: &SymbolTable,
    mode: FactEncoding,
) -> Result<SparseVector<T>> {
    match mode {
        FactEncoding::Plain => encode_fact(fact, symbols, store.interner()),
        FactEncoding::Subgraph => encode_fact_subgraph(fact, store, symbols),
    }
}

/// Encodings of every fact in a store, by store index.
#[derive(Debug, Clone)]
pub struct FactCache<T: Scalar> {
    mode: FactEncoding,
    vecs: Vec<SparseVector<T>>,
}

impl<T: Scalar> FactCache<T> {
    pub fn build(store: &GroupedFactStore, symbols: &SymbolTable, mode: FactEncoding) -> Result<Self> {
        let vecs = store
            .facts()
            .iter()
            .map(|f| encode_grouped(f, store, symbols, mode))
            .collect::<Result<_>>()?;
        Ok(FactCache { mode, vecs })
    }

    pub fn mode(&self) -> FactEncoding {
        self.mode
    }

    pub fn get(&self, fact: usize) -> &SparseVector<T> {
        &self.vecs[fact]
    }

    pub fn len(&self) -> usize {
        self.vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vecs.is_empty()
    }
}
