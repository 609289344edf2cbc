//! Readers and writers for question datasets and string-valued fact files.
//!
//! All files are UTF-8, tab-separated, one record per line; blank lines
//! and `#` comment lines are skipped.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval_answer::RerankQuestion;
use crate::kb_store::{io_data_lines, io_open, io_split_fields, GroupedFact, GroupedFactStore};
use crate::memory_extend::RawFact;
use crate::supervision::{AnswerLabeledQuestion, QAExample, Source};

fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{}", l.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Examples whose symbols are missing from the store are skipped; their
/// count is returned alongside.
pub fn parse_qa<R: BufRead>(reader: R, store: &GroupedFactStore, source: Source) -> Result<(Vec<QAExample>, usize)> {
    let mut out = Vec::new();
    let mut unknown = 0;
    for item in io_data_lines(reader) {
        let (n, line) = item?;
        let f = io_split_fields(&line, n, 4)?;
        let objects: Option<Vec<_>> = f[3]
            .split(',')
            .map(str::trim)
            .filter(|o| !o.is_empty())
            .map(|o| store.entity(o))
            .collect();
        let (Some(s), Some(r), Some(objects)) = (store.entity(f[1].trim()), store.relation(f[2].trim()), objects)
        else {
            unknown += 1;
            continue;
        };
        if objects.is_empty() {
            return Err(Error::parse(n, "empty object list"));
        }
        out.push(QAExample {
            question: f[0].trim().to_owned(),
            fact: GroupedFact::new(s, r, objects),
            source,
        });
    }
    Ok((out, unknown))
}

/// Reads `question<TAB>subject<TAB>relationship<TAB>object[,object...]`.
pub fn read_qa_file(path: &Path, store: &GroupedFactStore, source: Source) -> Result<(Vec<QAExample>, usize)> {
    parse_qa(io_open(path)?, store, source)
}

pub fn write_qa_file(path: &Path, examples: &[QAExample], store: &GroupedFactStore) -> Result<()> {
    write_lines(
        path,
        examples.iter().map(|ex| {
            let objects: Vec<&str> = ex.fact.objects.iter().map(|o| store.name(o.0)).collect();
            format!(
                "{}\t{}\t{}\t{}",
                ex.question,
                store.name(ex.fact.subject.0),
                store.name(ex.fact.relationship.0),
                objects.join(",")
            )
        }),
    )
}

pub fn parse_answers<R: BufRead>(reader: R) -> Result<Vec<AnswerLabeledQuestion>> {
    let mut out = Vec::new();
    for item in io_data_lines(reader) {
        let (n, line) = item?;
        let f = io_split_fields(&line, n, 2)?;
        let answers: Vec<String> = f[1]
            .split('|')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect();
        if answers.is_empty() {
            return Err(Error::parse(n, "no answer strings"));
        }
        out.push(AnswerLabeledQuestion {
            question: f[0].trim().to_owned(),
            answers,
        });
    }
    Ok(out)
}

/// Reads `question<TAB>answer[|answer...]`.
pub fn read_answer_file(path: &Path) -> Result<Vec<AnswerLabeledQuestion>> {
    parse_answers(io_open(path)?)
}

pub fn write_answer_file(path: &Path, items: &[AnswerLabeledQuestion]) -> Result<()> {
    write_lines(
        path,
        items.iter().map(|a| format!("{}\t{}", a.question, a.answers.join("|"))),
    )
}

pub fn parse_raw_facts<R: BufRead>(reader: R) -> Result<Vec<RawFact>> {
    let mut out = Vec::new();
    for item in io_data_lines(reader) {
        let (n, line) = item?;
        let f = io_split_fields(&line, n, 3)?;
        out.push(RawFact::new(f[0].trim(), f[1].trim(), f[2].trim()));
    }
    Ok(out)
}

/// Reads `subject<TAB>relation<TAB>object` with free-text fields.
pub fn read_raw_facts(path: &Path) -> Result<Vec<RawFact>> {
    parse_raw_facts(io_open(path)?)
}

pub fn write_raw_facts(path: &Path, facts: &[RawFact]) -> Result<()> {
    write_lines(
        path,
        facts
            .iter()
            .map(|f| format!("{}\t{}\t{}", f.subject, f.relation, f.object)),
    )
}

/// Consecutive lines with the same question form one group.
pub fn parse_rerank<R: BufRead>(reader: R) -> Result<Vec<RerankQuestion>> {
    let mut out: Vec<RerankQuestion> = Vec::new();
    for item in io_data_lines(reader) {
        let (n, line) = item?;
        let f = io_split_fields(&line, n, 5)?;
        let label = match f[4].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(n, format!("label must be 0 or 1, got `{other}`"))),
        };
        let question = f[0].trim();
        let cand = (RawFact::new(f[1].trim(), f[2].trim(), f[3].trim()), label);
        match out.last_mut() {
            Some(last) if last.question == question => last.candidates.push(cand),
            _ => out.push(RerankQuestion {
                question: question.to_owned(),
                candidates: vec![cand],
            }),
        }
    }
    Ok(out)
}

/// Reads `question<TAB>s<TAB>r<TAB>o<TAB>label` candidate lines.
pub fn read_rerank_file(path: &Path) -> Result<Vec<RerankQuestion>> {
    parse_rerank(io_open(path)?)
}

pub fn write_rerank_file(path: &Path, questions: &[RerankQuestion]) -> Result<()> {
    write_lines(
        path,
        questions.iter().flat_map(|q| {
            q.candidates.iter().map(move |(f, l)| {
                format!(
                    "{}\t{}\t{}\t{}\t{}",
                    q.question,
                    f.subject,
                    f.relation,
                    f.object,
                    u8::from(*l)
                )
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb_store::{group_facts, AtomicFact, Interner};

    fn store() -> GroupedFactStore {
        let mut i = Interner::new();
        let facts = vec![
            AtomicFact::new(i.entity("a"), i.relation("r"), i.entity("b")),
            AtomicFact::new(i.entity("a"), i.relation("r"), i.entity("c")),
        ];
        group_facts(&facts, i)
    }

    #[test]
    fn qa_lines_parse_and_skip_unknown_symbols() {
        let st = store();
        let text = "# header\nwho is a ?\ta\tr\tb,c\nwho is z ?\tz\tr\tb\n";
        let (ex, unknown) = parse_qa(text.as_bytes(), &st, Source::SimpleqStyle).unwrap();
        assert_eq!(unknown, 1);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].fact.objects.len(), 2);
        assert_eq!(ex[0].source, Source::SimpleqStyle);
    }

    #[test]
    fn qa_file_round_trips() {
        let st = store();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qa.tsv");
        let (ex, _) = parse_qa("q one\ta\tr\tc,b\n".as_bytes(), &st, Source::Synthetic).unwrap();
        write_qa_file(&p, &ex, &st).unwrap();
        let (back, unknown) = read_qa_file(&p, &st, Source::Synthetic).unwrap();
        assert_eq!(unknown, 0);
        assert_eq!(back, ex);
    }

    #[test]
    fn answers_split_on_pipes() {
        let items = parse_answers("where is x\tparis| lyon |\n".as_bytes()).unwrap();
        assert_eq!(items[0].answers, vec!["paris", "lyon"]);
        assert!(parse_answers("q\t|\n".as_bytes()).is_err());
        let err = parse_answers("q\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "line 1: expected 2 fields");
    }

    #[test]
    fn rerank_groups_consecutive_questions() {
        let text = "q1\ts\tr\to\t1\nq1\ts2\tr\to\t0\nq2\tx\ty\tz\t0\nq1\ts\tr\to\t1\n";
        let qs = parse_rerank(text.as_bytes()).unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[0].candidates.len(), 2);
        assert!(qs[0].candidates[0].1);
        assert!(!qs[0].candidates[1].1);
        assert!(parse_rerank("q\ts\tr\to\tyes\n".as_bytes()).is_err());
    }

    #[test]
    fn rerank_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rr.tsv");
        let qs = parse_rerank("q1\ts\tr\to\t1\nq1\ts2\tr\to\t0\n".as_bytes()).unwrap();
        write_rerank_file(&p, &qs).unwrap();
        assert_eq!(read_rerank_file(&p).unwrap(), qs);
    }
}
