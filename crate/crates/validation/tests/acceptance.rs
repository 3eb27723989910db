//! Acceptance criteria 1-10. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout so it shows up without `--nocapture`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setrank_core::corpus::{Document, Op, TripletSample};
use setrank_core::datagen::{gen_benchmark, AttributeIndex, GenConfig};
use setrank_core::encoder::{EncoderParams, Tokenizer};
use setrank_core::losses::{contrastive_loss, inversed_contrastive_loss, triplet_loss};
use setrank_core::metrics::{mrecall_at_k, recall_at_k, EvalReport};
use setrank_core::query::Template;
use setrank_core::retrieval::{bm25_search, build_bm25, dense_search_embedding, oracle_search, DenseIndex, RankedList, BM25_B, BM25_K1};
use setrank_core::trainer::{phase1_batch_grad, LossMode, TrainConfig};
use setrank_validation::{central_diff, rel_err, report};

fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn criterion_01_loss_closed_forms() {
    let v = [0.3, -0.2, 0.5, 0.1];
    let negs: Vec<&[f64]> = vec![&v; 5];
    let triplet = triplet_loss(&v, &v, &v, 1.0).unwrap().loss;
    let con = contrastive_loss(&v, &v, &negs).loss;
    let inv = inversed_contrastive_loss(&v, &v, &[&v, &v], &negs).loss;
    let errs = [(triplet - 1.0).abs(), (con - 6f64.ln()).abs(), (inv - 8f64.ln()).abs()];
    let ok = triplet == 1.0 && errs.iter().all(|e| *e < 1e-9);
    report(1, ok, &format!("triplet {triplet}, contrastive-ln6 {:.1e}, inversed-ln8 {:.1e}", errs[1], errs[2]));
}

fn sample(rng: &mut ChaCha8Rng, words: &[&str]) -> TripletSample {
    let mut sentence = |n: usize| -> String {
        (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    TripletSample {
        op: Op::Not,
        anchor: sentence(4),
        positives: vec![sentence(3), sentence(5)],
        negatives: vec![sentence(4), sentence(3)],
    }
}

/// Worst block-norm relative error of the phase-1 batch gradient against
/// central differences over every parameter.
fn composite_error(seed: u64, mode: LossMode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = EncoderParams::init(seed, 8, 64).unwrap();
    for block in params.blocks_mut() {
        block.iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
    }
    let words = ["red", "films", "about", "birds", "that", "are", "not", "green", "novels", "set", "in", "space"];
    let samples: Vec<TripletSample> = (0..3).map(|_| sample(&mut rng, &words)).collect();
    let cfg = TrainConfig { loss_mode: mode, ..TrainConfig::phase1(seed) };
    let (_, grads) = phase1_batch_grad(&params, &samples, &cfg).unwrap();

    let d = params.dim();
    let mut analytic = [vec![0.0; params.blocks()[0].len()], grads.proj_weight.clone(), grads.proj_bias.clone()];
    for (t, row) in &grads.embed_rows {
        analytic[0][*t as usize * d..(*t as usize + 1) * d].copy_from_slice(row);
    }
    let mut worst: f64 = 0.0;
    for (b, a) in analytic.iter().enumerate() {
        let base = params.blocks()[b].to_vec();
        let numeric = central_diff(&base, |x| {
            let mut p = params.clone();
            p.blocks_mut()[b].copy_from_slice(x);
            phase1_batch_grad(&p, &samples, &cfg).unwrap().0
        });
        worst = worst.max(rel_err(a, &numeric));
    }
    worst
}

#[test]
fn criterion_02_gradient_suite() {
    let start = Instant::now();
    let d = 8;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<Vec<f64>> = (0..8).map(|_| rand_vec(&mut rng, d)).collect();
        let (p, a, b) = (&vs[0], &vs[1], &vs[2]);

        let t = triplet_loss(p, a, b, 1.0).unwrap();
        let f = |x: &[f64]| triplet_loss(x, a, b, 1.0).unwrap().loss;
        worst = worst.max(rel_err(&t.anchor, &central_diff(p, f)));
        let f = |x: &[f64]| triplet_loss(p, x, b, 1.0).unwrap().loss;
        worst = worst.max(rel_err(&t.positive, &central_diff(a, f)));
        let f = |x: &[f64]| triplet_loss(p, a, x, 1.0).unwrap().loss;
        worst = worst.max(rel_err(&t.negative, &central_diff(b, f)));

        let negs: Vec<&[f64]> = vs[2..7].iter().map(Vec::as_slice).collect();
        let c = contrastive_loss(p, a, &negs);
        worst = worst.max(rel_err(&c.anchor, &central_diff(p, |x| contrastive_loss(x, a, &negs).loss)));
        worst = worst.max(rel_err(&c.targets[0], &central_diff(a, |x| contrastive_loss(p, x, &negs).loss)));
        for j in 0..negs.len() {
            let f = |x: &[f64]| {
                let mut n = negs.clone();
                n[j] = x;
                contrastive_loss(p, a, &n).loss
            };
            worst = worst.max(rel_err(&c.targets[j + 1], &central_diff(negs[j], f)));
        }

        let pos: Vec<&[f64]> = vec![&vs[1], &vs[3]];
        let in_batch: Vec<&[f64]> = vs[4..8].iter().map(Vec::as_slice).collect();
        let inv = inversed_contrastive_loss(p, b, &pos, &in_batch);
        let f = |x: &[f64]| inversed_contrastive_loss(x, b, &pos, &in_batch).loss;
        worst = worst.max(rel_err(&inv.anchor, &central_diff(p, f)));
        let f = |x: &[f64]| inversed_contrastive_loss(p, x, &pos, &in_batch).loss;
        worst = worst.max(rel_err(&inv.targets[0], &central_diff(b, f)));
        let mut targets: Vec<&[f64]> = pos.clone();
        targets.extend(&in_batch);
        for (j, x0) in targets.iter().enumerate() {
            let f = |x: &[f64]| {
                let mut t = targets.clone();
                t[j] = x;
                inversed_contrastive_loss(p, b, &t[..2], &t[2..]).loss
            };
            worst = worst.max(rel_err(&inv.targets[j + 1], &central_diff(x0, f)));
        }

        for mode in [LossMode::InversedContrastive, LossMode::Triplet, LossMode::Contrastive] {
            worst = worst.max(composite_error(seed, mode));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-4 && elapsed < Duration::from_secs(10);
    report(2, ok, &format!("max relative error {worst:.2e} over 20 seeds, {:.1}s", elapsed.as_secs_f64()));
}

fn doc(id: u32, text: &str) -> Document {
    Document { doc_id: id, title: format!("d{id}"), text: text.into(), attributes: BTreeSet::new() }
}

#[test]
fn criterion_03_bm25() {
    let hand = vec![doc(0, "cat cat dog"), doc(1, "cat"), doc(2, "bird")];
    let idx = build_bm25(&hand, Tokenizer::default(), BM25_K1, BM25_B).unwrap();
    // 40-digit evaluation of the scoring formula for the query "cat".
    let expected = [(1u32, 0.561_960_861_054_683_8), (0u32, 0.527_555_094_051_335_8)];
    let got = bm25_search(&idx, "cat", 10).entries;
    let hand_ok = got.len() == 2 && got.iter().zip(&expected).all(|(g, e)| g.0 == e.0 && (g.1 - e.1).abs() < 1e-9);

    let tok = Tokenizer::default();
    let target = tok.terms("target")[0];
    let fillers: Vec<String> =
        (0..30).map(|i| format!("w{i}")).filter(|w| tok.terms(w)[0] != target).collect();
    let mut violations = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words = |n: usize| -> Vec<String> { (0..n).map(|_| fillers.choose(&mut rng).unwrap().clone()).collect() };
        let mut docs: Vec<Document> = Vec::new();
        let n_docs = 3 + (seed as usize % 10);
        for id in 0..n_docs {
            let mut w = words(2 + id % 7);
            if id % 3 == 0 {
                w.push("target".into());
            }
            docs.push(doc(id as u32, &w.join(" ")));
        }
        let len = 8;
        let lo = 1 + (seed as usize % 3);
        let hi = lo + 1 + (seed as usize % 4);
        for (off, tf) in [(0, lo), (1, hi)] {
            let mut w = words(len - tf);
            w.extend(std::iter::repeat_n("target".to_string(), tf));
            docs.push(doc((n_docs + off) as u32, &w.join(" ")));
        }
        let idx = build_bm25(&docs, tok, BM25_K1, BM25_B).unwrap();
        let r = bm25_search(&idx, "target", docs.len());
        let pos = |id: usize| r.entries.iter().position(|e| e.0 == id as u32);
        match (pos(n_docs + 1), pos(n_docs)) {
            (Some(h), Some(l)) if h < l => {}
            _ => violations += 1,
        }
    }
    report(3, hand_ok && violations == 0, &format!("hand corpus {got:?}, tf-order violations {violations}/100"));
}

fn naive_recall(rel: &BTreeSet<u32>, list: &[u32], k: usize) -> f64 {
    let top: BTreeSet<u32> = list.iter().take(k).copied().collect();
    rel.intersection(&top).count() as f64 / rel.len() as f64
}

fn naive_mrecall(rel: &BTreeSet<u32>, list: &[u32], k: usize) -> f64 {
    let top: BTreeSet<u32> = list.iter().take(k).copied().collect();
    let hits = rel.intersection(&top).count();
    let ok = if rel.len() <= k { rel.is_subset(&top) } else { hits >= k };
    if ok { 1.0 } else { 0.0 }
}

#[test]
fn criterion_04_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut recall_drops = 0;
    let mut mrecall_drops = 0;
    let mut example = String::new();
    for _ in 0..1000 {
        let universe = rng.gen_range(2..40u32);
        let mut ids: Vec<u32> = (0..universe).collect();
        ids.shuffle(&mut rng);
        let n_rel = rng.gen_range(1..=universe as usize);
        let rel: BTreeSet<u32> = ids[..n_rel].iter().copied().collect();
        ids.shuffle(&mut rng);
        ids.truncate(rng.gen_range(0..=universe as usize));
        let list = RankedList { entries: ids.iter().enumerate().map(|(i, &d)| (d, -(i as f64))).collect(), k: 50 };
        let (mut prev_r, mut prev_m) = (0.0, 0.0);
        for k in 1..=45 {
            let r = recall_at_k(&rel, &list, k).unwrap();
            let m = mrecall_at_k(&rel, &list, k).unwrap();
            if r != naive_recall(&rel, &ids, k) || m != naive_mrecall(&rel, &ids, k) {
                mismatches += 1;
            }
            if r < prev_r {
                recall_drops += 1;
            }
            if m < prev_m {
                if mrecall_drops == 0 {
                    example = format!("relevant {rel:?}, ranking {ids:?}: MRecall@{} = 1, MRecall@{k} = 0", k - 1);
                }
                mrecall_drops += 1;
            }
            (prev_r, prev_m) = (r, m);
        }
    }
    let ok = mismatches == 0 && recall_drops == 0 && mrecall_drops == 0;
    report(
        4,
        ok,
        &format!(
            "oracle mismatches {mismatches}, Recall decreases {recall_drops}, MRecall decreases {mrecall_drops}{}",
            if example.is_empty() { String::new() } else { format!(" (e.g. {example})") }
        ),
    );
}

#[test]
fn criterion_05_dense_exactness() {
    let mut failures = 0;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let n = rng.gen_range(1..60);
        let d = rng.gen_range(1..6);
        // Small integers make every dot product exact and ties common.
        let mut small = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-2..=2) as f64).collect() };
        let rows: Vec<Vec<f64>> = (0..n).map(|_| small(d)).collect();
        let q = small(d);
        let mut ids: Vec<u32> = (0..n as u32).map(|i| i * 3 + 1).collect();
        ids.shuffle(&mut rng);
        let k = rng.gen_range(1..=n + 5);
        let index = DenseIndex::from_rows(ids.clone(), rows.clone()).unwrap();
        let got = dense_search_embedding(&q, &index, k).entries;

        let mut all: Vec<(u32, f64)> =
            ids.iter().zip(&rows).map(|(&id, r)| (id, r.iter().zip(&q).map(|(a, b)| a * b).sum())).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        if got != all {
            failures += 1;
        }
    }
    report(5, failures == 0, &format!("{failures}/100 cases differ from the full sort"));
}

#[test]
fn criterion_06_oracle_ceiling() {
    let bench = gen_benchmark(&GenConfig { seed: 6, n_docs: 500, ..GenConfig::default() }).unwrap();
    let templates: BTreeSet<Template> = bench.queries.iter().map(|q| q.template()).collect();
    let k = bench.queries.iter().map(|q| q.relevant.len()).max().unwrap_or(1);
    let attrs = AttributeIndex::new(&bench.docs);
    let mut total = 0.0;
    for q in &bench.queries {
        total += recall_at_k(&q.relevant, &oracle_search(&q.query, &attrs, k).unwrap(), k).unwrap();
    }
    let avg = total / bench.queries.len() as f64;
    let ok = bench.docs.len() == 500 && bench.queries.len() >= 140 && templates.len() == 7 && avg == 1.0;
    report(
        6,
        ok,
        &format!("{} docs, {} queries, {} templates, Average Recall@{k} = {avg}", bench.docs.len(), bench.queries.len(), templates.len()),
    );
}

/// Experiment outputs shared by criteria 7-10: seeds 0, 1, 2 plus a rerun
/// of seed 0, all through the `experiment` command with default settings.
struct Runs {
    _dir: tempfile::TempDir,
    seeds: Vec<PathBuf>,
    rerun: PathBuf,
    seeds_elapsed: Duration,
}

fn experiment(out: &Path, seed: u64) {
    let out = out.to_str().expect("utf-8 temp path");
    setrank_cli::run_args(&["experiment", "--seed", &seed.to_string(), "--out", out]).expect("experiment runs");
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let seeds: Vec<PathBuf> = (0..3)
            .map(|s| {
                let p = dir.path().join(format!("seed{s}"));
                experiment(&p, s);
                p
            })
            .collect();
        let seeds_elapsed = start.elapsed();
        let rerun = dir.path().join("seed0-rerun");
        experiment(&rerun, 0);
        Runs { _dir: dir, seeds, rerun, seeds_elapsed }
    })
}

fn recall_at_100(dir: &Path, retriever: &str) -> f64 {
    let r: EvalReport = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let ki = r.k_values.iter().position(|&k| k == 100).expect("K = 100 reported");
    r.retrievers.iter().find(|s| s.name == retriever).expect("retriever reported").recall[ki]
}

#[test]
fn criterion_07_inversed_contrastive_gain() {
    let runs = runs();
    let gains: Vec<f64> =
        runs.seeds.iter().map(|d| recall_at_100(d, "de-invcon") - recall_at_100(d, "de-init")).collect();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let secs = runs.seeds_elapsed.as_secs_f64();
    let ok = mean >= 0.15 && secs < 600.0;
    let per_seed: Vec<String> = gains.iter().map(|g| format!("{g:+.3}")).collect();
    report(7, ok, &format!("Recall@100 gain per seed [{}], mean {mean:+.3} (need >= 0.15), {secs:.0}s", per_seed.join(", ")));
}

fn similarity(dir: &Path) -> BTreeMap<String, (f64, f64)> {
    fs::read_to_string(dir.join("similarity.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), (f[1].parse().unwrap(), f[2].parse().unwrap()))
        })
        .collect()
}

#[test]
fn criterion_08_negation_margin() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (s, dir) in runs().seeds.iter().enumerate() {
        let sims = similarity(dir);
        let (_, init_neg) = sims["init"];
        let (pos, neg) = sims[LossMode::InversedContrastive.name()];
        ok &= pos - neg > 0.0 && neg < init_neg;
        detail.push(format!("seed {s}: margin {:.4}, neg {neg:.4} vs init {init_neg:.4}", pos - neg));
    }
    report(8, ok, &detail.join("; "));
}

#[test]
fn criterion_09_ablation_report() {
    let r = runs();
    let md = fs::read_to_string(r.seeds[0].join("ablation.md")).unwrap();
    let header_ok = md.starts_with("| template | queries | de-invcon Recall@100 | de-triplet Recall@100 |");
    let rows = md.lines().skip(2).filter(|l| l.starts_with("| ")).count();
    let same = ["ablation.md", "ablation.tsv"]
        .iter()
        .all(|f| fs::read(r.seeds[0].join(f)).unwrap() == fs::read(r.rerun.join(f)).unwrap());
    report(9, header_ok && rows == 7 && same, &format!("{rows} template rows, byte-identical rerun {same}"));
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_10_pipeline_determinism() {
    let r = runs();
    let a = files(&r.seeds[0]);
    let b = files(&r.rerun);
    let rel = |v: &[PathBuf], root: &Path| -> Vec<PathBuf> { v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect() };
    let same_set = rel(&a, &r.seeds[0]) == rel(&b, &r.rerun);
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| fs::read(x).unwrap() != fs::read(y).unwrap())
        .map(|(x, _)| x.strip_prefix(&r.seeds[0]).unwrap().display().to_string())
        .collect();
    let ckpts = a.iter().filter(|p| p.extension().is_some_and(|e| e == "ckpt")).count();
    let ok = same_set && differing.is_empty() && ckpts > 0;
    report(10, ok, &format!("{} files ({ckpts} checkpoints) compared, differing {differing:?}", a.len()));
}
