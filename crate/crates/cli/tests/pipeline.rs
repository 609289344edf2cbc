use std::path::Path;
use std::process::{Command, Output};

fn memqa(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_memqa"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "memqa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Percentage printed on a `metric: NN.N% (...)` line.
fn percent(text: &str, metric: &str) -> f64 {
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{metric}: ")))
        .unwrap_or_else(|| panic!("no {metric} line in {text}"));
    line[metric.len() + 2..].split('%').next().unwrap().parse().unwrap()
}

#[test]
fn toy_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    memqa(&["gen-toy", "--out", "toy"], d);
    for f in [
        "triples.tsv",
        "aliases.tsv",
        "train.tsv",
        "valid.tsv",
        "test.tsv",
        "external.tsv",
        "rerank.tsv",
    ] {
        assert!(d.join("toy").join(f).is_file(), "{f} missing");
    }

    let prep = stdout(&memqa(
        &[
            "prep",
            "--triples",
            "toy/triples.tsv",
            "--aliases",
            "toy/aliases.tsv",
            "--questions",
            "toy/train.tsv",
            "--out",
            "mem",
        ],
        d,
    ));
    assert!(prep.contains("grouped"), "{prep}");

    let train = stdout(&memqa(
        &[
            "train",
            "--kb",
            "mem",
            "--simpleq",
            "toy/train.tsv",
            "--valid",
            "toy/valid.tsv",
            "--out",
            "model.bin",
        ],
        d,
    ));
    assert!(train.contains("best validation path accuracy"), "{train}");

    let eval = stdout(&memqa(
        &[
            "eval",
            "path",
            "--kb",
            "mem",
            "--model",
            "model.bin",
            "--data",
            "toy/test.tsv",
            "--records",
            "rec.txt",
        ],
        d,
    ));
    assert!(percent(&eval, "path_accuracy") >= 90.0, "{eval}");
    let records = std::fs::read_to_string(d.join("rec.txt")).unwrap();
    let tests = std::fs::read_to_string(d.join("toy/test.tsv")).unwrap();
    assert_eq!(records.lines().count(), tests.lines().count());

    let rerank = stdout(&memqa(
        &[
            "eval",
            "rerank",
            "--kb",
            "mem",
            "--model",
            "model.bin",
            "--data",
            "toy/rerank.tsv",
        ],
        d,
    ));
    assert!(
        percent(&rerank, "rerank_accuracy") >= 2.0 * percent(&rerank, "random baseline"),
        "{rerank}"
    );

    let first_question = tests.lines().next().unwrap().split('\t').next().unwrap().to_owned();
    std::fs::write(d.join("q.txt"), format!("{first_question}\nnothing to see here\n")).unwrap();
    let answers = stdout(&memqa(
        &[
            "answer",
            "--kb",
            "mem",
            "--model",
            "model.bin",
            "--input",
            "q.txt",
            "--top",
            "2",
        ],
        d,
    ));
    let lines: Vec<&str> = answers.lines().collect();
    assert!(
        lines[0].starts_with(&first_question) && lines[0].split('\t').count() == 5,
        "{answers}"
    );
    assert!(lines.last().unwrap().ends_with("no candidate facts"), "{answers}");

    let added = stdout(&memqa(
        &[
            "add-facts",
            "--kb",
            "mem",
            "--facts",
            "toy/external.tsv",
            "--model",
            "model.bin",
            "--query",
            &first_question,
        ],
        d,
    ));
    assert!(added.contains("endpoint link rate"), "{added}");

    let inspect = stdout(&memqa(&["model", "inspect", "model.bin"], d));
    assert!(
        inspect.contains("d\t64") && inspect.contains("scalar bytes\t4"),
        "{inspect}"
    );
}

#[test]
fn bad_options_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_memqa"))
        .args(["--set", "bogus=1", "gen-toy", "--out", "x"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown option `bogus`"));
}
