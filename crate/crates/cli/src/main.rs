use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use memqa::candidate_gen::{CandidateGenerator, WordLists};
use memqa::datasets::{read_answer_file, read_qa_file, read_raw_facts, read_rerank_file, write_qa_file};
use memqa::encoder::{encode_question, FactCache, FactEncoding};
use memqa::eval_answer::{
    answer_string, eval_f1, eval_path_accuracy, eval_rerank, random_rerank_baseline, Answerer, RerankContext, Scorer,
};
use memqa::kb_store::{read_mediator_spec, TripleFormat};
use memqa::memory_extend::{add_external_facts, external_candidates, ExternalStore};
use memqa::model::ModelHeader;
use memqa::supervision::{
    generate_synthetic, generate_synthetic_weighted, label_distant, load_paraphrases, ParaphrasePool, QAExample,
    Source, SyntheticConfig,
};
use memqa::toy::{ToyBenchmark, ToyConfig};
use memqa::trainer::{prepare_validation, train, NegativePolicy, QaSource, TrainConfig, TrainingSet};
use memqa::{KnowledgeBase, Model, Side};

#[derive(Parser)]
#[command(
    name = "memqa",
    version,
    about = "Memory network for simple question answering over a triple KB"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra key=value overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    policy: Option<PolicyArg>,
    /// Stopword list replacing the built-in one.
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    /// Interrogative list replacing the built-in one.
    #[arg(long, global = true)]
    interrogatives: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Default,
    Candidates,
}

#[derive(Args)]
struct Scoring {
    /// Prepared memory directory.
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Further models whose scores are added.
    #[arg(long, num_args = 1..)]
    ensemble: Vec<PathBuf>,
    /// Model trained on subgraph fact encodings; its score is added.
    #[arg(long)]
    subgraph: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Collapse mediators, group facts, index aliases and build the tables.
    Prep {
        #[arg(long, required = true, num_args = 1..)]
        triples: Vec<PathBuf>,
        /// `tsv` for one object per line, `grouped` for whitespace-separated
        /// objects.
        #[arg(long, default_value = "tsv")]
        format: TripleFormat,
        #[arg(long, num_args = 1..)]
        aliases: Vec<PathBuf>,
        #[arg(long)]
        mediators: Option<PathBuf>,
        /// Question files whose first field feeds the vocabulary.
        #[arg(long, num_args = 1..)]
        questions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate template questions from the memory.
    GenSynthetic {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        threshold: usize,
        /// Draw this many questions with inverse relation-frequency weights.
        #[arg(long)]
        weighted: Option<usize>,
    },
    /// Label answer-only questions with their best-matching facts.
    LabelDistant {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Discard report; printed to stderr when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train a model.
    Train {
        #[arg(long)]
        kb: PathBuf,
        /// Annotated QA file.
        #[arg(long)]
        simpleq: Vec<PathBuf>,
        /// Distantly labeled QA file.
        #[arg(long)]
        webq: Vec<PathBuf>,
        /// Synthetic QA file.
        #[arg(long)]
        synthetic: Vec<PathBuf>,
        #[arg(long)]
        paraphrases: Option<PathBuf>,
        /// Validation QA file for early stopping.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Start from this model, e.g. for candidates-as-negatives runs.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Encode facts with their objects' neighborhoods.
        #[arg(long)]
        subgraph: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model.
    Eval {
        #[arg(value_enum)]
        metric: Metric,
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long)]
        data: PathBuf,
        /// Write one record per question.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Answer questions from a file or stdin, one per line.
    Answer {
        #[command(flatten)]
        scoring: Scoring,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ranked facts to print per question.
        #[arg(long, default_value_t = 1)]
        top: usize,
    },
    /// Link and encode string facts and show what questions retrieve.
    AddFacts {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        facts: PathBuf,
        /// Rank retrieved facts with this model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Questions to retrieve external facts for.
        #[arg(long)]
        query: Vec<String>,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Model file utilities.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Write the synthetic toy benchmark.
    GenToy {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// Print the header and column-norm statistics.
    Inspect { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    F1,
    Path,
    Rerank,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn train_config(g: &Global) -> Result<TrainConfig> {
    let mut cfg = match &g.config {
        Some(p) => TrainConfig::from_kv_file(p)?,
        None => TrainConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = g.seed {
        cfg.hyper.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    if let Some(p) = g.policy {
        cfg.policy = match p {
            PolicyArg::Default => NegativePolicy::Default,
            PolicyArg::Candidates => NegativePolicy::Candidates,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generator(g: &Global) -> Result<CandidateGenerator> {
    let words = WordLists::default().with_files(g.stopwords.as_deref(), g.interrogatives.as_deref())?;
    Ok(CandidateGenerator::new(words))
}

fn load_kb(dir: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(dir).with_context(|| format!("loading memory from {}", dir.display()))
}

fn load_model(path: &Path, kb: &KnowledgeBase) -> Result<Model> {
    let m = Model::load(path).with_context(|| format!("loading model {}", path.display()))?;
    if m.n_words() != kb.vocab.len() || m.n_symbols() != kb.symbols.len() {
        bail!(
            "model {} has {}x{} columns but the memory has {}x{}",
            path.display(),
            m.n_words(),
            m.n_symbols(),
            kb.vocab.len(),
            kb.symbols.len()
        );
    }
    Ok(m)
}

/// First tab-separated field of every data line.
fn first_fields(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split('\t').next())
        .map(str::to_owned)
        .collect())
}

struct Loaded {
    models: Vec<Model>,
    subgraph: Option<Model>,
    facts: FactCache<f32>,
    subgraph_facts: Option<FactCache<f32>>,
}

impl Loaded {
    fn new(s: &Scoring, kb: &KnowledgeBase) -> Result<Self> {
        let mut models = vec![load_model(&s.model, kb)?];
        for p in &s.ensemble {
            models.push(load_model(p, kb)?);
        }
        let subgraph = s.subgraph.as_deref().map(|p| load_model(p, kb)).transpose()?;
        let facts = FactCache::build(&kb.store, &kb.symbols, FactEncoding::Plain)?;
        let subgraph_facts = subgraph
            .as_ref()
            .map(|_| FactCache::build(&kb.store, &kb.symbols, FactEncoding::Subgraph))
            .transpose()?;
        Ok(Loaded {
            models,
            subgraph,
            facts,
            subgraph_facts,
        })
    }

    fn scorer(&self) -> Scorer<'_, f32> {
        let s = Scorer::new(&self.models, &self.facts);
        match (&self.subgraph, &self.subgraph_facts) {
            (Some(m), Some(f)) => s.with_subgraph(m, f),
            _ => s,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Prep {
            triples,
            format,
            aliases,
            mediators,
            questions,
            out,
        } => {
            let spec = mediators.as_deref().map(read_mediator_spec).transpose()?;
            let mut corpus = Vec::new();
            for q in &questions {
                corpus.extend(first_fields(q)?);
            }
            let (kb, report) = KnowledgeBase::prepare(&triples, format, &aliases, spec.as_ref(), &corpus)?;
            kb.save(&out)?;
            println!("{report}");
        }
        Command::GenSynthetic {
            kb,
            out,
            threshold,
            weighted,
        } => {
            let kb = load_kb(&kb)?;
            let cfg = SyntheticConfig {
                object_threshold: threshold,
                seed: train_config(g)?.hyper.seed,
                ..Default::default()
            };
            let examples = match weighted {
                Some(n) => generate_synthetic_weighted(&kb.store, &kb.aliases, &cfg, n)?,
                None => {
                    let (ex, stats) = generate_synthetic(&kb.store, &kb.aliases, &cfg)?;
                    eprintln!(
                        "emitted {}, over threshold {}, without alias {}",
                        stats.emitted, stats.over_threshold, stats.no_alias
                    );
                    ex
                }
            };
            write_qa_file(&out, &examples, &kb.store)?;
        }
        Command::LabelDistant { kb, input, out, report } => {
            let kb = load_kb(&kb)?;
            let gen = generator(g)?;
            let items = read_answer_file(&input)?;
            let mut examples = Vec::new();
            let (mut no_candidates, mut no_match) = (0usize, 0usize);
            for item in &items {
                let cands = gen.candidates(&item.question, &kb.store, &kb.aliases);
                if cands.is_empty() {
                    no_candidates += 1;
                    continue;
                }
                let labeled = label_distant(item, &kb.store, &kb.aliases, &gen);
                if labeled.is_empty() {
                    no_match += 1;
                }
                examples.extend(labeled.into_iter().map(|i| QAExample {
                    question: item.question.clone(),
                    fact: kb.store.fact(i).clone(),
                    source: Source::WebqStyle,
                }));
            }
            write_qa_file(&out, &examples, &kb.store)?;
            let text = format!(
                "questions\t{}\nlabeled\t{}\ndiscarded\t{}\ndiscarded: no candidate facts\t{}\ndiscarded: no answer matched\t{}\n",
                items.len(),
                items.len() - no_candidates - no_match,
                no_candidates + no_match,
                no_candidates,
                no_match
            );
            match report {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => eprint!("{text}"),
            }
        }
        Command::Train {
            kb,
            simpleq,
            webq,
            synthetic,
            paraphrases,
            valid,
            init,
            subgraph,
            out,
        } => {
            let cfg = train_config(g)?;
            let kb = load_kb(&kb)?;
            let gen = generator(g)?;
            let want_cands = cfg.policy == NegativePolicy::Candidates;
            let mut sources = Vec::new();
            for (tag, files) in [
                (Source::SimpleqStyle, &simpleq),
                (Source::WebqStyle, &webq),
                (Source::Synthetic, &synthetic),
            ] {
                if files.is_empty() {
                    continue;
                }
                let mut examples = Vec::new();
                for f in files {
                    let (ex, unknown) = read_qa_file(f, &kb.store, tag)?;
                    if unknown > 0 {
                        log::warn!("{}: {unknown} line(s) name symbols outside the memory", f.display());
                    }
                    examples.extend(ex);
                }
                let cands = (want_cands && tag != Source::Synthetic).then_some(&gen);
                sources.push(QaSource::prepare(tag.to_string(), tag, &examples, &kb, cands).0);
            }
            if sources.is_empty() {
                bail!("no training data: pass --simpleq, --webq or --synthetic");
            }
            let pool = match paraphrases {
                Some(p) => {
                    let (clusters, dropped) = load_paraphrases(&p)?;
                    if dropped > 0 {
                        log::warn!("{dropped} paraphrase line(s) with fewer than two questions dropped");
                    }
                    ParaphrasePool::new(&clusters)
                }
                None => ParaphrasePool::new(&[]),
            };
            let set = TrainingSet::new(sources, pool, &kb);
            let validation = match valid {
                Some(p) => prepare_validation(&read_qa_file(&p, &kb.store, Source::SimpleqStyle)?.0, &kb, &gen),
                None => Vec::new(),
            };
            let mode = if subgraph {
                FactEncoding::Subgraph
            } else {
                FactEncoding::Plain
            };
            let facts = FactCache::build(&kb.store, &kb.symbols, mode)?;
            let init = init.as_deref().map(|p| load_model(p, &kb)).transpose()?;
            let outcome = train(&set, &kb, &facts, &cfg, &validation, init.as_ref())?;
            outcome.model.save(&out)?;
            let c = &outcome.counts;
            println!("steps\t{}", outcome.steps);
            println!("paraphrase steps\t{}", c.paraphrase);
            for (s, n) in set.sources.iter().zip(&c.qa) {
                println!("{} steps\t{n}", s.name);
            }
            println!("updates\t{}", c.updates);
            if !validation.is_empty() {
                println!("best validation path accuracy\t{:.4}", outcome.best_metric);
            }
        }
        Command::Eval {
            metric,
            scoring,
            data,
            records,
        } => {
            let kb = load_kb(&scoring.kb)?;
            let gen = generator(g)?;
            let loaded = Loaded::new(&scoring, &kb)?;
            let answerer = Answerer {
                store: &kb.store,
                aliases: &kb.aliases,
                vocab: &kb.vocab,
                generator: &gen,
                scorer: loaded.scorer(),
            };
            let report = match metric {
                Metric::F1 => {
                    let items = read_answer_file(&data)?;
                    let preds = items
                        .iter()
                        .map(|i| answerer.answer(&i.question))
                        .collect::<memqa::Result<Vec<_>>>()?;
                    let gold: Vec<Vec<String>> = items.iter().map(|i| i.answers.clone()).collect();
                    eval_f1(&preds, &gold, &kb.store, &kb.aliases)?
                }
                Metric::Path => {
                    let (items, unknown) = read_qa_file(&data, &kb.store, Source::SimpleqStyle)?;
                    if unknown > 0 {
                        log::warn!("{unknown} line(s) name symbols outside the memory");
                    }
                    let preds = items
                        .iter()
                        .map(|i| answerer.answer(&i.question))
                        .collect::<memqa::Result<Vec<_>>>()?;
                    let gold: Vec<_> = items.iter().map(|i| i.fact.key()).collect();
                    eval_path_accuracy(&preds, &gold, &kb.store)?
                }
                Metric::Rerank => {
                    let questions = read_rerank_file(&data)?;
                    let ctx = RerankContext {
                        store: &kb.store,
                        aliases: &kb.aliases,
                        symbols: &kb.symbols,
                        vocab: &kb.vocab,
                    };
                    let r = eval_rerank(&questions, &loaded.models, &ctx)?;
                    println!("random baseline: {:.1}%", 100.0 * random_rerank_baseline(&questions));
                    r
                }
            };
            println!("{report}");
            if let Some(p) = records {
                let text: String = report.records.iter().map(|r| format!("{r}\n")).collect();
                std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Answer { scoring, input, top } => {
            let kb = load_kb(&scoring.kb)?;
            let gen = generator(g)?;
            let loaded = Loaded::new(&scoring, &kb)?;
            let answerer = Answerer {
                store: &kb.store,
                aliases: &kb.aliases,
                vocab: &kb.vocab,
                generator: &gen,
                scorer: loaded.scorer(),
            };
            let reader: Box<dyn BufRead> = match &input {
                Some(p) => Box::new(io::BufReader::new(
                    std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
                )),
                None => Box::new(io::stdin().lock()),
            };
            let mut stdout = io::stdout().lock();
            for line in reader.lines() {
                let q = line?;
                if q.trim().is_empty() {
                    continue;
                }
                let p = answerer.answer(&q)?;
                if p.no_candidates {
                    writeln!(stdout, "{q}\t-\tno candidate facts")?;
                    continue;
                }
                for &(i, score) in p.ranked.iter().take(top.max(1)) {
                    let f = kb.store.fact(i);
                    let answers: Vec<String> = f
                        .objects
                        .iter()
                        .map(|&o| answer_string(o, &kb.store, &kb.aliases))
                        .collect();
                    writeln!(
                        stdout,
                        "{q}\t{}\t{}\t{}\t{score:.4}",
                        kb.store.name(f.subject.0),
                        kb.store.name(f.relationship.0),
                        answers.join("|")
                    )?;
                }
            }
        }
        Command::AddFacts {
            kb,
            facts,
            model,
            query,
            limit,
        } => {
            let kb = load_kb(&kb)?;
            let gen = generator(g)?;
            let raw = read_raw_facts(&facts)?;
            let ext: ExternalStore<f32> =
                add_external_facts(&raw, &kb.store, &kb.aliases, &kb.symbols, &kb.vocab, &gen.words);
            println!("external facts\t{}", ext.len());
            println!("endpoint link rate\t{:.3}", ext.link_rate());
            println!("degenerate encodings\t{}", ext.degenerate());
            let model = model.as_deref().map(|p| load_model(p, &kb)).transpose()?;
            for q in &query {
                let q_vec = encode_question::<f32>(q, &kb.vocab, &kb.aliases);
                let mut hits: Vec<(usize, f64)> = external_candidates(q, &ext, &kb.store, &kb.aliases, &gen, limit)
                    .into_iter()
                    .map(|i| {
                        let s = match &model {
                            Some(m) => m.score_external(&q_vec, ext.encoding(i)),
                            None => Ok(f64::NAN),
                        };
                        s.map(|s| (i, s))
                    })
                    .collect::<memqa::Result<_>>()?;
                if model.is_some() {
                    hits.sort_by(|a, b| b.1.total_cmp(&a.1));
                }
                for (i, s) in hits {
                    let f = ext.fact(i);
                    println!("{q}\t{}\t{}\t{}\t{s:.4}", f.subject, f.relation, f.object);
                }
            }
        }
        Command::Model {
            action: ModelAction::Inspect { path },
        } => {
            let h = ModelHeader::read(&path)?;
            println!("version\t{}", h.version);
            println!("scalar bytes\t{}", h.scalar_width);
            println!("d\t{}", h.hyper.dim);
            println!("N_V\t{}", h.n_words);
            println!("N_S\t{}", h.n_symbols);
            println!("learning rate\t{}", h.hyper.learning_rate);
            println!("margin\t{}", h.hyper.margin);
            println!("seed\t{}", h.hyper.seed);
            if h.scalar_width == 4 {
                let m = Model::load(&path)?;
                for (name, side) in [("W_V", Side::Words), ("W_S", Side::Symbols)] {
                    let (min, mean, max) = m.norm_stats(side);
                    println!("{name} column norm min/mean/max\t{min:.6}\t{mean:.6}\t{max:.6}");
                }
            }
        }
        Command::GenToy { out } => {
            let seed = train_config(g)?.hyper.seed;
            let cfg = ToyConfig {
                seed,
                ..Default::default()
            };
            let bench = ToyBenchmark::generate(&cfg)?;
            bench.write(&out, seed)?;
            println!(
                "wrote {} facts, {} train / {} valid / {} test questions to {}",
                bench.store.len(),
                bench.train.len(),
                bench.valid.len(),
                bench.test.len(),
                out.display()
            );
        }
    }
    Ok(())
}
