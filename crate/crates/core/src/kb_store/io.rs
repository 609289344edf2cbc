use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{AliasRecord, AtomicFact, Interner, MediatorSpec};
use crate::error::{Error, Result};

/// Supported triple file layouts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TripleFormat {
    /// `subject<TAB>relationship<TAB>object`, `#` comments.
    #[default]
    Tsv,
    /// `subject<TAB>relationship<TAB>object[ object...]`, one line per
    /// grouped fact with whitespace-separated objects.
    Grouped,
}

impl std::str::FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(TripleFormat::Tsv),
            "grouped" => Ok(TripleFormat::Grouped),
            other => Err(Error::Config(format!("unknown triple format `{other}`"))),
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Iterates `(line_number, line)` over lines that are neither blank nor
/// `#` comments. Line numbers are 1-based over the whole file.
pub(crate) fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(Error::parse(i + 1, e.to_string()))),
        Ok(l) => {
            let l = l.trim_end_matches('\r');
            if l.trim().is_empty() || l.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, l.to_owned())))
            }
        }
    })
}

pub(crate) fn split_fields(line: &str, lineno: usize, n: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n {
        return Err(Error::parse(lineno, format!("expected {n} fields")));
    }
    if fields.iter().any(|f| f.trim().is_empty()) {
        return Err(Error::parse(lineno, "empty field"));
    }
    Ok(fields)
}

pub fn parse_triples<R: BufRead>(reader: R, interner: &mut Interner) -> Result<Vec<AtomicFact>> {
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (n, line) = item?;
        let f = split_fields(&line, n, 3)?;
        out.push(AtomicFact::new(
            interner.entity(f[0].trim()),
            interner.relation(f[1].trim()),
            interner.entity(f[2].trim()),
        ));
    }
    Ok(out)
}

/// Expands each grouped line into one atomic fact per object.
pub fn parse_grouped_triples<R: BufRead>(reader: R, interner: &mut Interner) -> Result<Vec<AtomicFact>> {
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (n, line) = item?;
        let f = split_fields(&line, n, 3)?;
        let s = interner.entity(f[0].trim());
        let r = interner.relation(f[1].trim());
        for o in f[2].split_whitespace() {
            out.push(AtomicFact::new(s, r, interner.entity(o)));
        }
    }
    Ok(out)
}

pub fn load_triples(path: &Path, format: TripleFormat, interner: &mut Interner) -> Result<Vec<AtomicFact>> {
    match format {
        TripleFormat::Tsv => parse_triples(open(path)?, interner),
        TripleFormat::Grouped => parse_grouped_triples(open(path)?, interner),
    }
}

pub fn write_triples(path: &Path, facts: &[AtomicFact], interner: &Interner) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in facts {
        writeln!(
            w,
            "{}\t{}\t{}",
            interner.name(f.subject.0),
            interner.name(f.relationship.0),
            interner.name(f.object.0)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `entity<TAB>alias` lines.
pub fn read_alias_file(path: &Path, interner: &mut Interner) -> Result<Vec<AliasRecord>> {
    let mut out = Vec::new();
    for item in data_lines(open(path)?) {
        let (n, line) = item?;
        let f = split_fields(&line, n, 2)?;
        out.push(AliasRecord::new(interner.entity(f[0].trim()), f[1]));
    }
    Ok(out)
}

/// Reads one entity id or `pattern:<prefix>` directive per line.
pub fn read_mediator_spec(path: &Path) -> Result<MediatorSpec> {
    let mut spec = MediatorSpec::default();
    for item in data_lines(open(path)?) {
        let (_, line) = item?;
        let line = line.trim();
        match line.strip_prefix("pattern:") {
            Some(p) => spec.prefixes.push(p.trim().to_owned()),
            None => {
                spec.ids.insert(line.to_owned());
            }
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_in_file_order() {
        let mut i = Interner::new();
        let facts = parse_triples(Cursor::new("a\tr\tb\n# comment\n\na\tr\tc\n"), &mut i).unwrap();
        assert_eq!(facts.len(), 2);
        assert_eq!(i.name(facts[1].object.0), "c");
        assert_eq!(facts[0].subject, facts[1].subject);
    }

    #[test]
    fn malformed_line_reports_number() {
        let mut i = Interner::new();
        let err = parse_triples(Cursor::new("a\tr\n"), &mut i).unwrap_err();
        assert_eq!(err.to_string(), "line 1: expected 3 fields");
        let err = parse_triples(Cursor::new("# x\na\tr\tb\nc\td\n"), &mut i).unwrap_err();
        assert_eq!(err.to_string(), "line 3: expected 3 fields");
    }

    #[test]
    fn empty_input_is_empty() {
        let mut i = Interner::new();
        assert!(parse_triples(Cursor::new(""), &mut i).unwrap().is_empty());
    }

    #[test]
    fn duplicates_preserved() {
        let mut i = Interner::new();
        let facts = parse_triples(Cursor::new("a\tr\tb\na\tr\tb\n"), &mut i).unwrap();
        assert_eq!(facts.len(), 2);
    }

    #[test]
    fn mediator_directives() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("med.txt");
        std::fs::write(&p, "m.01\npattern:cvt_\n").unwrap();
        let spec = read_mediator_spec(&p).unwrap();
        assert!(spec.is_mediator("m.01"));
        assert!(spec.is_mediator("cvt_99"));
        assert!(!spec.is_mediator("m.02"));
    }
}
