use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use setrank_core::checkpoint;
use setrank_core::corpus::{read_corpus, read_queries, read_triplets, write_corpus, write_queries, write_triplets};
use setrank_core::datagen::{benchmark_stats, gen_benchmark, gen_triplets, split_dataset, triplet_stats, AttributeIndex, GenConfig};
use setrank_core::encoder::{DualEncoder, EncoderParams, Tokenizer};
use setrank_core::experiment::{self, run_experiment, write_outputs, ExperimentConfig};
use setrank_core::metrics::{self, aggregate, score_query, EvalConfig, EvalReport, ReportFormat, RetrieverRun};
use setrank_core::query::parse_query;
use setrank_core::retrieval::{self, bm25_search, dense_search, embed_corpus, oracle_search, DenseIndex, RankedList};
use setrank_core::seed::sub_seed;
use setrank_core::trainer::{format_log, train_phase1, train_phase2_de, TrainConfig};
use setrank_core::vocab::Vocab;

use crate::config::FileConfig;
use crate::{
    Cli, Command, EvalArgs, ExperimentArgs, Format, GenOpts, ModelOpts, Phase, ReportArgs, SearchArgs, SearchMode,
    TrainArgs, TrainOpts,
};

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => gen_data(&gen_config(&a.gen, &file)?, &a.out),
        Command::GenBench(a) => gen_bench(&gen_config(&a.gen, &file)?, &a.out),
        Command::Train(a) => train(&a, &file),
        Command::Index(a) => index(&a.checkpoint, &a.corpus, &a.out),
        Command::Search(a) => search(&a, &file),
        Command::Eval(a) => eval(&a, &file),
        Command::Experiment(a) => experiment(&a, &file),
        Command::Report(a) => report(&a),
    }
}

fn seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or(file.seed).unwrap_or(0)
}

fn gen_config(o: &GenOpts, f: &FileConfig) -> Result<GenConfig> {
    let d = GenConfig::default();
    let vocab = match o.vocab.as_ref().or(f.vocab.as_ref()) {
        Some(p) => Vocab::load(p).with_context(|| format!("loading vocabulary {}", p.display()))?,
        None => d.vocab.clone(),
    };
    let cfg = GenConfig {
        seed: seed(o.seed, f),
        samples_per_op: o.per_op.or(f.per_op).unwrap_or(d.samples_per_op),
        positives_per_sample: o.positives.or(f.positives).unwrap_or(d.positives_per_sample),
        negatives_per_sample: o.negatives.or(f.negatives).unwrap_or(d.negatives_per_sample),
        n_docs: o.docs.or(f.docs).unwrap_or(d.n_docs),
        n_queries_per_template: o.queries_per_template.or(f.queries_per_template).unwrap_or(d.n_queries_per_template),
        vocab,
        split_ratio: o.split_ratio.or(f.split_ratio).unwrap_or(d.split_ratio),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn gen_data(cfg: &GenConfig, out: &Path) -> Result<()> {
    let data = gen_triplets(cfg)?;
    let (train, eval) = split_dataset(&data.samples, cfg.split_ratio, sub_seed(cfg.seed, "split"));
    create_dir(out)?;
    write_triplets(&out.join("triplets_train.jsonl"), &train)?;
    write_triplets(&out.join("triplets_eval.jsonl"), &eval)?;
    print!("{}", triplet_stats(&data.samples));
    Ok(())
}

fn gen_bench(cfg: &GenConfig, out: &Path) -> Result<()> {
    let bench = gen_benchmark(cfg)?;
    create_dir(out)?;
    write_corpus(&out.join("corpus.jsonl"), &bench.docs)?;
    write_queries(&out.join("queries.jsonl"), &bench.queries)?;
    print!("{}", benchmark_stats(&bench));
    Ok(())
}

fn train_config(base: TrainConfig, o: &TrainOpts, f: &FileConfig) -> Result<TrainConfig> {
    let loss_mode = match o.loss.as_ref().or(f.loss.as_ref()) {
        Some(s) => s.parse()?,
        None => base.loss_mode,
    };
    let cfg = TrainConfig {
        loss_mode,
        epochs: o.epochs.or(f.epochs).unwrap_or(base.epochs),
        batch_size: o.batch_size.or(f.batch_size).unwrap_or(base.batch_size),
        lr: o.lr.or(f.lr).unwrap_or(base.lr),
        eval_every_steps: o.eval_every.or(f.eval_every).unwrap_or(base.eval_every_steps),
        max_steps_phase2: o.steps.or(f.steps).unwrap_or(base.max_steps_phase2),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

fn model_dims(o: &ModelOpts, f: &FileConfig) -> (usize, usize) {
    let d = ExperimentConfig::new(0);
    (o.dim.or(f.dim).unwrap_or(d.dim), o.buckets.or(f.buckets).unwrap_or(d.n_buckets))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match p {
        Some(p) => Ok(p),
        None => bail!("--{flag} is required for this phase"),
    }
}

/// Loads a dual encoder, or a single encoder shared by both sides.
fn load_dual(path: &Path) -> Result<DualEncoder> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if let Ok(c) = checkpoint::from_bytes::<DualEncoder>(&bytes) {
        return Ok(c.params);
    }
    let c = checkpoint::from_bytes::<EncoderParams>(&bytes).with_context(|| format!("loading {}", path.display()))?;
    Ok(DualEncoder::from_shared(&c.params))
}

fn train(a: &TrainArgs, f: &FileConfig) -> Result<()> {
    let seed = seed(a.train.seed, f);
    let (dim, buckets) = model_dims(&a.model, f);
    match a.phase {
        Phase::One => {
            let cfg = train_config(TrainConfig::phase1(sub_seed(seed, "phase1")), &a.train, f)?;
            let train = read_triplets(required(&a.train_data, "train-data")?)?;
            let eval = read_triplets(required(&a.eval_data, "eval-data")?)?;
            let init = match &a.init {
                Some(p) => checkpoint::load::<EncoderParams>(p).with_context(|| format!("loading {}", p.display()))?.params,
                None => EncoderParams::init(sub_seed(seed, "init"), dim, buckets)?,
            };
            let out = train_phase1(&train, &eval, &init, &cfg)?;
            eprintln!("best step {} eval loss {:.6}", out.best.step, out.best.eval_loss);
            checkpoint::save(&a.out, &out.best)?;
            if let Some(log) = &a.log {
                write_file(log, format_log(&out.log))?;
            }
        }
        Phase::Two => {
            let cfg = train_config(TrainConfig::phase2(sub_seed(seed, "phase2")), &a.train, f)?;
            let docs = read_corpus(required(&a.corpus, "corpus")?)?;
            let train = read_queries(required(&a.queries_train, "queries-train")?)?;
            let dev = read_queries(required(&a.queries_dev, "queries-dev")?)?;
            let init = match &a.init {
                Some(p) => load_dual(p)?,
                None => DualEncoder::from_shared(&EncoderParams::init(sub_seed(seed, "init"), dim, buckets)?),
            };
            let out = train_phase2_de(&train, &dev, &docs, &init, &cfg)?;
            eprintln!("best step {} eval loss {:.6}", out.best.step, out.best.eval_loss);
            checkpoint::save(&a.out, &out.best)?;
            if let Some(log) = &a.log {
                write_file(log, format_log(&out.log))?;
            }
        }
    }
    Ok(())
}

fn index(ckpt: &Path, corpus: &Path, out: &Path) -> Result<()> {
    let de = load_dual(ckpt)?;
    let docs = read_corpus(corpus)?;
    let idx = embed_corpus(&de.doc, &docs);
    idx.save(out)?;
    eprintln!("indexed {} documents, dim {}", idx.len(), idx.dim());
    Ok(())
}

fn bm25_tokenizer(flag: Option<usize>, f: &FileConfig) -> Result<Tokenizer> {
    Ok(Tokenizer::new(flag.or(f.buckets).unwrap_or(ExperimentConfig::new(0).n_buckets))?)
}

fn search(a: &SearchArgs, f: &FileConfig) -> Result<()> {
    if a.k == 0 {
        bail!("k must be at least 1");
    }
    let docs = read_corpus(&a.corpus)?;
    let ranked: RankedList = match a.mode {
        SearchMode::Dense => {
            let de = load_dual(required(&a.checkpoint, "checkpoint")?)?;
            let idx = DenseIndex::load(required(&a.index, "index")?)?;
            if idx.dim() != de.query.dim() {
                bail!("index dimension {} does not match checkpoint dimension {}", idx.dim(), de.query.dim());
            }
            dense_search(&de.query, &a.query, &idx, a.k)
        }
        SearchMode::Bm25 => {
            let bm25 = retrieval::build_bm25(&docs, bm25_tokenizer(a.buckets, f)?, retrieval::BM25_K1, retrieval::BM25_B)?;
            bm25_search(&bm25, &a.query, a.k)
        }
        SearchMode::Oracle => oracle_search(&parse_query(&a.query)?, &AttributeIndex::new(&docs), a.k)?,
    };
    for (id, score) in &ranked.entries {
        let title = docs.iter().find(|d| d.doc_id == *id).map_or("", |d| d.title.as_str());
        println!("{id}\t{score:.6}\t{title}");
    }
    Ok(())
}

fn eval_config(k: &Option<Vec<usize>>, f: &FileConfig) -> Result<EvalConfig> {
    let cfg = match k.as_ref().or(f.k.as_ref()) {
        Some(k) => EvalConfig { k_values: k.clone() },
        None => EvalConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(report: &EvalReport, runs: &[RetrieverRun], out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join("report.md"), metrics::emit_report(report, ReportFormat::Markdown))?;
    write_file(&out.join("report.tsv"), metrics::emit_report(report, ReportFormat::Tsv))?;
    write_file(&out.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    write_file(&out.join("per_query.tsv"), metrics::per_query_tsv(runs, &report.k_values))
}

fn eval(a: &EvalArgs, f: &FileConfig) -> Result<()> {
    let cfg = eval_config(&a.k, f)?;
    let mut dense = Vec::new();
    for arg in &a.dense {
        let Some((name, path)) = arg.split_once('=') else {
            bail!("--dense expects NAME=CHECKPOINT, got {arg:?}");
        };
        dense.push((name.to_string(), load_dual(Path::new(path))?));
    }
    if dense.is_empty() && !a.bm25 && !a.oracle {
        bail!("nothing to evaluate: pass --dense, --bm25 or --oracle");
    }
    let docs = read_corpus(&a.corpus)?;
    let queries = read_queries(&a.queries)?;
    let k = cfg.max_k();
    let run = |name: &str, search: &dyn Fn(&setrank_core::corpus::JudgedQuery) -> Result<RankedList>| -> Result<RetrieverRun> {
        let results = queries.iter().map(|q| Ok(score_query(q, &search(q)?, &cfg)?)).collect::<Result<Vec<_>>>()?;
        Ok(RetrieverRun { name: name.to_string(), results })
    };
    let mut runs = Vec::new();
    if a.bm25 {
        let bm25 = retrieval::build_bm25(&docs, bm25_tokenizer(a.buckets, f)?, retrieval::BM25_K1, retrieval::BM25_B)?;
        runs.push(run(experiment::BM25, &|q| Ok(bm25_search(&bm25, &q.text, k)))?);
    }
    for (name, de) in &dense {
        let idx = embed_corpus(&de.doc, &docs);
        runs.push(run(name, &|q| Ok(dense_search(&de.query, &q.text, &idx, k)))?);
    }
    if a.oracle {
        let attrs = AttributeIndex::new(&docs);
        runs.push(run(experiment::ORACLE, &|q| Ok(oracle_search(&q.query, &attrs, k)?))?);
    }
    let report = aggregate(&runs, &cfg)?;
    write_report(&report, &runs, &a.out)?;
    print!("{}", metrics::emit_report(&report, ReportFormat::Markdown));
    Ok(())
}

fn experiment_config(a: &ExperimentArgs, f: &FileConfig) -> Result<ExperimentConfig> {
    let seed = seed(a.gen.seed, f);
    let mut cfg = ExperimentConfig::new(seed);
    let gen = gen_config(&GenOpts { seed: Some(cfg.gen.seed), ..a.gen.clone() }, f)?;
    cfg.gen = gen;
    let (dim, buckets) = model_dims(&a.model, f);
    cfg.dim = dim;
    cfg.n_buckets = buckets;
    let p1 = TrainOpts {
        seed: None,
        loss: None,
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        eval_every: a.eval_every,
        steps: a.steps,
    };
    let no_loss = FileConfig { loss: None, ..f.clone() };
    cfg.phase1 = train_config(cfg.phase1.clone(), &p1, &no_loss)?;
    let p2 = TrainOpts {
        batch_size: a.phase2_batch_size.or(f.phase2_batch_size),
        lr: a.phase2_lr.or(f.phase2_lr),
        ..p1
    };
    let p2_file = FileConfig { batch_size: None, lr: None, ..no_loss };
    cfg.phase2 = train_config(cfg.phase2.clone(), &p2, &p2_file)?;
    cfg.eval = eval_config(&a.k, f)?;
    cfg.train_queries_per_template = a.train_queries.or(f.train_queries).unwrap_or(cfg.train_queries_per_template);
    cfg.dev_queries_per_template = a.dev_queries.or(f.dev_queries).unwrap_or(cfg.dev_queries_per_template);
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(a: &ExperimentArgs, f: &FileConfig) -> Result<()> {
    let cfg = experiment_config(a, f)?;
    eprintln!("running experiment with seed {}", cfg.seed);
    let out = run_experiment(&cfg)?;
    write_outputs(&out, &a.out)?;
    print!("{}", metrics::emit_report(&out.report, ReportFormat::Markdown));
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    let fmt = match a.format {
        Format::Md => ReportFormat::Markdown,
        Format::Tsv => ReportFormat::Tsv,
    };
    if a.ablation {
        print!("{}", experiment::ablation_table(&report, fmt));
    } else {
        print!("{}", metrics::emit_report(&report, fmt));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("setrank").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_values() {
        let file: FileConfig = toml::from_str("seed = 3\nper_op = 50\ndocs = 70\n").unwrap();
        let Command::GenData(a) = parse(&["gen-data", "--per-op", "9", "--out", "x"]).command else { panic!() };
        let cfg = gen_config(&a.gen, &file).unwrap();
        assert_eq!((cfg.seed, cfg.samples_per_op, cfg.n_docs), (3, 9, 70));
    }

    #[test]
    fn experiment_phase_settings_are_separate() {
        let file: FileConfig = toml::from_str("lr = 0.01\nphase2_lr = 0.0005\nsteps = 12\n").unwrap();
        let Command::Experiment(a) = parse(&["experiment", "--batch-size", "8", "--out", "x"]).command else {
            panic!()
        };
        let cfg = experiment_config(&a, &file).unwrap();
        assert_eq!((cfg.phase1.lr, cfg.phase1.batch_size), (0.01, 8));
        assert_eq!((cfg.phase2.lr, cfg.phase2.batch_size, cfg.phase2.max_steps_phase2), (0.0005, 16, 12));
        assert_eq!(cfg.phase2.loss_mode, setrank_core::trainer::LossMode::Contrastive);
    }

    #[test]
    fn bad_train_config_is_rejected() {
        let o = TrainOpts { loss: Some("hinge".into()), ..TrainOpts::default() };
        assert!(train_config(TrainConfig::phase1(0), &o, &FileConfig::default()).is_err());
    }

    #[test]
    fn missing_checkpoint_names_the_path() {
        let err = load_dual(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(format!("{err:#}").contains("/nonexistent/model.ckpt"));
    }
}
