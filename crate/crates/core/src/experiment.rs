//! End-to-end comparison: generate data, run phase 1 per loss mode, train a
//! dual encoder from each starting point with the same phase-2 budget, then
//! evaluate BM25, the dense retrievers and the oracle on held-out queries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::checkpoint::{self, Checkpoint};
use crate::corpus::{write_corpus, write_queries, write_triplets, JudgedQuery, TripletSample};
use crate::datagen::{gen_benchmark, gen_triplets, split_dataset, AttributeIndex, Benchmark, GenConfig};
use crate::encoder::{DualEncoder, EncoderParams};
use crate::error::{Error, Result};
use crate::metrics::{self, aggregate, score_query, EvalConfig, EvalReport, ReportFormat, RetrieverRun};
use crate::query::Template;
use crate::retrieval::{self, bm25_search, dense_search, embed_corpus, oracle_search, BM25_B, BM25_K1};
use crate::seed::{rng_for, sub_seed};
use crate::trainer::{
    format_log, similarity_stats, train_phase1, train_phase2_de, LossMode, SimStats, TrainConfig, TrainOutcome,
};

pub const BM25: &str = "bm25";
pub const DE_INIT: &str = "de-init";
pub const DE_INVERSED: &str = "de-invcon";
pub const DE_TRIPLET: &str = "de-triplet";
pub const ORACLE: &str = "oracle";

/// Phase-1 loss modes compared by the experiment, with the name of the dual
/// encoder each one initializes.
pub const PHASE1_MODES: [(LossMode, &str); 2] =
    [(LossMode::InversedContrastive, DE_INVERSED), (LossMode::Triplet, DE_TRIPLET)];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub gen: GenConfig,
    pub dim: usize,
    pub n_buckets: usize,
    pub phase1: TrainConfig,
    pub phase2: TrainConfig,
    pub eval: EvalConfig,
    /// Benchmark queries per template used for phase-2 training.
    pub train_queries_per_template: usize,
    /// Benchmark queries per template used for phase-2 checkpoint selection.
    pub dev_queries_per_template: usize,
}

impl ExperimentConfig {
    /// Every component seed is derived from `seed`.
    pub fn new(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            gen: GenConfig { seed: sub_seed(seed, "datagen"), ..GenConfig::default() },
            dim: 64,
            n_buckets: 4096,
            phase1: TrainConfig::phase1(sub_seed(seed, "phase1")),
            phase2: TrainConfig::phase2(sub_seed(seed, "phase2")),
            eval: EvalConfig::default(),
            train_queries_per_template: 20,
            dev_queries_per_template: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.phase1.validate()?;
        self.phase2.validate()?;
        self.eval.validate()?;
        EncoderParams::init(0, self.dim, 2).map(|_| ())?;
        crate::encoder::Tokenizer::new(self.n_buckets)?;
        if self.train_queries_per_template == 0 || self.dev_queries_per_template == 0 {
            return Err(Error::InvalidConfig("phase 2 needs training and dev queries for every template".into()));
        }
        if self.train_queries_per_template + self.dev_queries_per_template >= self.gen.n_queries_per_template {
            return Err(Error::InvalidConfig(format!(
                "{} + {} phase-2 queries per template leave no test queries out of {}",
                self.train_queries_per_template, self.dev_queries_per_template, self.gen.n_queries_per_template
            )));
        }
        Ok(())
    }
}

/// Benchmark queries split per template into phase-2 train, dev and test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySplit {
    pub train: Vec<JudgedQuery>,
    pub dev: Vec<JudgedQuery>,
    pub test: Vec<JudgedQuery>,
}

pub fn split_queries(queries: &[JudgedQuery], n_train: usize, n_dev: usize, seed: u64) -> QuerySplit {
    let mut rng = rng_for(seed, "experiment/query-split");
    let mut by_template: BTreeMap<Template, Vec<&JudgedQuery>> = BTreeMap::new();
    for q in queries {
        by_template.entry(q.template()).or_default().push(q);
    }
    let mut split = QuerySplit { train: Vec::new(), dev: Vec::new(), test: Vec::new() };
    for (_, mut qs) in by_template {
        qs.shuffle(&mut rng);
        for (i, q) in qs.into_iter().enumerate() {
            let dest = if i < n_train {
                &mut split.train
            } else if i < n_train + n_dev {
                &mut split.dev
            } else {
                &mut split.test
            };
            dest.push(q.clone());
        }
    }
    for part in [&mut split.train, &mut split.dev, &mut split.test] {
        part.sort_by_key(|q| q.query_id);
    }
    split
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub train_samples: Vec<TripletSample>,
    pub eval_samples: Vec<TripletSample>,
    pub bench: Benchmark,
    pub queries: QuerySplit,
    pub init: EncoderParams,
    pub phase1: Vec<(LossMode, TrainOutcome<EncoderParams>)>,
    /// Phase-2 outcome per dense retriever name.
    pub phase2: Vec<(String, TrainOutcome<DualEncoder>)>,
    /// Similarity statistics on the phase-1 eval split: the initial encoder
    /// under "init", then one entry per loss mode.
    pub similarity: Vec<(String, SimStats)>,
    pub runs: Vec<RetrieverRun>,
    pub report: EvalReport,
}

impl ExperimentOutput {
    pub fn recall(&self, retriever: &str, k: usize) -> Option<f64> {
        let ki = self.report.k_values.iter().position(|&x| x == k)?;
        self.report.retrievers.iter().find(|r| r.name == retriever).map(|r| r.recall[ki])
    }

    pub fn similarity(&self, name: &str) -> Option<SimStats> {
        self.similarity.iter().find(|s| s.0 == name).map(|s| s.1)
    }
}

fn evaluate(
    name: &str,
    queries: &[JudgedQuery],
    cfg: &EvalConfig,
    mut search: impl FnMut(&JudgedQuery) -> Result<retrieval::RankedList>,
) -> Result<RetrieverRun> {
    let results = queries
        .iter()
        .map(|q| score_query(q, &search(q)?, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrieverRun { name: name.to_string(), results })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dataset = gen_triplets(&cfg.gen)?;
    let (train_samples, eval_samples) =
        split_dataset(&dataset.samples, cfg.gen.split_ratio, sub_seed(cfg.seed, "split"));
    let bench = gen_benchmark(&cfg.gen)?;
    let queries = split_queries(
        &bench.queries,
        cfg.train_queries_per_template,
        cfg.dev_queries_per_template,
        sub_seed(cfg.seed, "queries"),
    );
    if queries.test.is_empty() {
        return Err(Error::InvalidConfig("no test queries left after the phase-2 split".into()));
    }
    let init = EncoderParams::init(sub_seed(cfg.seed, "init"), cfg.dim, cfg.n_buckets)?;

    let mut similarity = vec![("init".to_string(), similarity_stats(&init, &eval_samples))];
    let mut phase1 = Vec::new();
    let mut starts = vec![(DE_INIT.to_string(), DualEncoder::from_shared(&init))];
    for (mode, de_name) in PHASE1_MODES {
        let tc = TrainConfig { loss_mode: mode, ..cfg.phase1.clone() };
        let out = train_phase1(&train_samples, &eval_samples, &init, &tc)?;
        similarity.push((mode.name().to_string(), similarity_stats(&out.best.params, &eval_samples)));
        starts.push((de_name.to_string(), DualEncoder::from_shared(&out.best.params)));
        phase1.push((mode, out));
    }
    let mut phase2 = Vec::new();
    for (name, start) in starts {
        let out = train_phase2_de(&queries.train, &queries.dev, &bench.docs, &start, &cfg.phase2)?;
        phase2.push((name, out));
    }

    let max_k = cfg.eval.max_k();
    let test = &queries.test;
    let mut runs = Vec::new();
    let bm25 = retrieval::build_bm25(&bench.docs, init.tokenizer(), BM25_K1, BM25_B)?;
    runs.push(evaluate(BM25, test, &cfg.eval, |q| Ok(bm25_search(&bm25, &q.text, max_k)))?);
    for name in [DE_INIT, DE_INVERSED, DE_TRIPLET] {
        let de = &phase2.iter().find(|p| p.0 == name).expect("trained above").1.best.params;
        let index = embed_corpus(&de.doc, &bench.docs);
        runs.push(evaluate(name, test, &cfg.eval, |q| Ok(dense_search(&de.query, &q.text, &index, max_k)))?);
    }
    let attrs = AttributeIndex::new(&bench.docs);
    runs.push(evaluate(ORACLE, test, &cfg.eval, |q| oracle_search(&q.query, &attrs, max_k))?);
    let report = aggregate(&runs, &cfg.eval)?;

    Ok(ExperimentOutput {
        train_samples,
        eval_samples,
        bench,
        queries,
        init,
        phase1,
        phase2,
        similarity,
        runs,
        report,
    })
}

pub fn similarity_tsv(stats: &[(String, SimStats)]) -> String {
    let mut out = String::from("encoder\tmean_sim_positive\tmean_sim_negative\tmargin\n");
    for (name, s) in stats {
        let _ = writeln!(out, "{name}\t{:.6}\t{:.6}\t{:.6}", s.mean_pos, s.mean_neg, s.margin());
    }
    out
}

/// Side-by-side per-template table of the two phase-1 loss modes.
pub fn ablation_table(report: &EvalReport, fmt: ReportFormat) -> String {
    metrics::emit_templates(report, &[DE_INVERSED, DE_TRIPLET], fmt)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes every artifact under `dir`:
///
/// ```text
/// report.md report.tsv report.json ablation.md ablation.tsv
/// per_query.tsv similarity.tsv
/// data/{triplets_train,triplets_eval}.jsonl data/{corpus,queries_train,queries_dev,queries_test}.jsonl
/// logs/phase1-<mode>.tsv logs/phase2-<retriever>.tsv
/// checkpoints/phase1-<mode>.ckpt checkpoints/<retriever>.ckpt
/// ```
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    for sub in ["data", "logs", "checkpoints"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let r = &out.report;
    write(&dir.join("report.md"), metrics::emit_report(r, ReportFormat::Markdown))?;
    write(&dir.join("report.tsv"), metrics::emit_report(r, ReportFormat::Tsv))?;
    let json = serde_json::to_string_pretty(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write(&dir.join("report.json"), json + "\n")?;
    write(&dir.join("ablation.md"), ablation_table(r, ReportFormat::Markdown))?;
    write(&dir.join("ablation.tsv"), ablation_table(r, ReportFormat::Tsv))?;
    write(&dir.join("per_query.tsv"), metrics::per_query_tsv(&out.runs, &r.k_values))?;
    write(&dir.join("similarity.tsv"), similarity_tsv(&out.similarity))?;

    let data = dir.join("data");
    write_triplets(&data.join("triplets_train.jsonl"), &out.train_samples)?;
    write_triplets(&data.join("triplets_eval.jsonl"), &out.eval_samples)?;
    write_corpus(&data.join("corpus.jsonl"), &out.bench.docs)?;
    write_queries(&data.join("queries_train.jsonl"), &out.queries.train)?;
    write_queries(&data.join("queries_dev.jsonl"), &out.queries.dev)?;
    write_queries(&data.join("queries_test.jsonl"), &out.queries.test)?;

    for (mode, o) in &out.phase1 {
        write(&dir.join(format!("logs/phase1-{mode}.tsv")), format_log(&o.log))?;
        checkpoint::save(&dir.join(format!("checkpoints/phase1-{mode}.ckpt")), &o.best)?;
    }
    for (name, o) in &out.phase2 {
        write(&dir.join(format!("logs/phase2-{name}.tsv")), format_log(&o.log))?;
        checkpoint::save(&dir.join(format!("checkpoints/{name}.ckpt")), &o.best)?;
    }
    let init = Checkpoint { params: out.init.clone(), step: 0, eval_loss: 0.0 };
    checkpoint::save(&dir.join("checkpoints/init.ckpt"), &init)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(seed);
        cfg.gen.samples_per_op = 40;
        cfg.gen.n_docs = 80;
        cfg.gen.n_queries_per_template = 6;
        cfg.dim = 8;
        cfg.n_buckets = 512;
        cfg.phase1.epochs = 2;
        cfg.phase1.batch_size = 16;
        cfg.phase2.max_steps_phase2 = 20;
        cfg.phase2.eval_every_steps = 10;
        cfg.train_queries_per_template = 2;
        cfg.dev_queries_per_template = 1;
        cfg
    }

    #[test]
    fn query_split_is_stratified() {
        let bench = gen_benchmark(&GenConfig { n_docs: 100, n_queries_per_template: 6, ..GenConfig::default() }).unwrap();
        let s = split_queries(&bench.queries, 2, 1, 0);
        for t in Template::ALL {
            let n = |qs: &[JudgedQuery]| qs.iter().filter(|q| q.template() == t).count();
            let total = n(&bench.queries);
            assert_eq!(n(&s.train), 2.min(total));
            assert_eq!(n(&s.train) + n(&s.dev) + n(&s.test), total);
        }
        assert_eq!(s, split_queries(&bench.queries, 2, 1, 0));
    }

    #[test]
    fn tiny_pipeline_runs() {
        let out = run_experiment(&tiny(3)).unwrap();
        let names: Vec<&str> = out.report.retrievers.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec![BM25, DE_INIT, DE_INVERSED, DE_TRIPLET, ORACLE]);
        let oracle = out.report.retrievers.last().unwrap();
        assert_eq!(*oracle.recall.last().unwrap(), 1.0);
        assert!(out.similarity("init").is_some());
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path()).unwrap();
        assert!(dir.path().join("checkpoints/de-invcon.ckpt").exists());
        let ab = fs::read_to_string(dir.path().join("ablation.md")).unwrap();
        assert!(ab.starts_with("| template | queries | de-invcon Recall@100 | de-triplet Recall@100 |"));
    }

    #[test]
    fn rejects_split_without_test_queries() {
        let mut cfg = tiny(0);
        cfg.train_queries_per_template = 5;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
