//! Two training phases.
//!
//! Phase 1 fine-tunes one shared encoder on triplet samples with a selectable
//! loss. Phase 2 trains a dual encoder on judged benchmark queries with the
//! contrastive loss, one positive and sampled non-relevant negatives per query.
//! Both phases evaluate a held-out loss periodically and keep the best
//! parameters.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{DocId, Document, JudgedQuery, TripletSample};
use crate::encoder::{DualEncoder, EncoderGrads, EncoderParams, TokenId, Tokenizer};
use crate::error::{Error, Result};
use crate::losses::{self, assemble_in_batch, LossConfig, SampleSlots};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::seed::{rng_for, sub_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    InversedContrastive,
    Triplet,
    Contrastive,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::InversedContrastive => "inversed_contrastive",
            LossMode::Triplet => "triplet",
            LossMode::Contrastive => "contrastive",
        }
    }

    fn in_batch(self) -> bool {
        self != LossMode::Triplet
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inversed_contrastive" => Ok(LossMode::InversedContrastive),
            "triplet" => Ok(LossMode::Triplet),
            "contrastive" => Ok(LossMode::Contrastive),
            _ => Err(Error::InvalidConfig(format!("unknown loss mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    LinearDecay,
}

impl LrSchedule {
    /// Learning rate for the update taken at 0-based `step` out of `total`.
    pub fn lr_at(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::LinearDecay if total == 0 => 0.0,
            LrSchedule::LinearDecay => base * (1.0 - step.min(total) as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    pub lr_schedule: LrSchedule,
    pub eval_every_steps: usize,
    pub max_steps_phase2: usize,
    pub loss: LossConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn phase1(seed: u64) -> Self {
        TrainConfig {
            loss_mode: LossMode::InversedContrastive,
            epochs: 10,
            batch_size: 64,
            lr: 1e-3,
            adam: AdamConfig::default(),
            lr_schedule: LrSchedule::Constant,
            eval_every_steps: 200,
            max_steps_phase2: 1600,
            loss: LossConfig::default(),
            seed,
        }
    }

    pub fn phase2(seed: u64) -> Self {
        TrainConfig {
            loss_mode: LossMode::Contrastive,
            batch_size: 16,
            lr_schedule: LrSchedule::LinearDecay,
            ..TrainConfig::phase1(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || (self.loss_mode.in_batch() && self.batch_size < 2) {
            return bad(format!("batch size {} too small for {} loss", self.batch_size, self.loss_mode));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if self.eval_every_steps == 0 {
            return bad("eval_every_steps must be at least 1".into());
        }
        if self.loss.l == 0 {
            return bad("at least one positive per anchor is required".into());
        }
        Ok(())
    }
}

/// One line of the per-step metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub train_loss: Option<f64>,
    pub eval_loss: Option<f64>,
}

pub fn format_log(rows: &[LogRow]) -> String {
    let cell = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    let mut out = String::from("step\ttrain_loss\teval_loss\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}", r.step, cell(r.train_loss), cell(r.eval_loss));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub best: Checkpoint<P>,
    /// Parameters after the final update.
    pub last: P,
    pub log: Vec<LogRow>,
}

fn check_finite(phase: &'static str, step: usize, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::DivergedLoss { phase, step, value })
    }
}

/// Keeps the parameters with the smallest eval loss seen so far; ties keep
/// the earlier step.
struct Best<P> {
    ckpt: Option<Checkpoint<P>>,
}

impl<P: Clone> Best<P> {
    fn offer(&mut self, params: &P, step: usize, eval_loss: f64) {
        if self.ckpt.as_ref().is_none_or(|c| eval_loss < c.eval_loss) {
            self.ckpt = Some(Checkpoint { params: params.clone(), step, eval_loss });
        }
    }
}

struct TokSample {
    anchor: Vec<TokenId>,
    positives: Vec<Vec<TokenId>>,
    negatives: Vec<Vec<TokenId>>,
}

fn tokenize_samples(tok: &Tokenizer, samples: &[TripletSample]) -> Result<Vec<TokSample>> {
    samples
        .iter()
        .map(|s| {
            s.validate().map_err(|m| Error::InvalidConfig(format!("bad sample {:?}: {m}", s.anchor)))?;
            Ok(TokSample {
                anchor: tok.query_ids(&s.anchor),
                positives: s.positives.iter().map(|t| tok.query_ids(t)).collect(),
                negatives: s.negatives.iter().map(|t| tok.query_ids(t)).collect(),
            })
        })
        .collect()
}

/// Splits `order` into batches of `size`, folding a trailing singleton into
/// the previous batch so in-batch losses always see two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out[out.len() - 1].len() == 1 {
        let n = out.len();
        let start = (n - 2) * size;
        out.truncate(n - 2);
        out.push(&order[start..]);
    }
    out
}

/// Loss of one phase-1 batch and, when `grads` is given, its gradient.
fn phase1_batch(
    params: &EncoderParams,
    data: &[TokSample],
    batch: &[usize],
    round: usize,
    cfg: &TrainConfig,
    grads: Option<&mut EncoderGrads>,
) -> Result<f64> {
    let l = cfg.loss.l;
    let mut ids: Vec<&[TokenId]> = Vec::new();
    let mut slots = Vec::with_capacity(batch.len());
    for &i in batch {
        let s = &data[i];
        let anchor = ids.len();
        ids.push(&s.anchor);
        let positives: Vec<usize> = s.positives.iter().take(l).map(|p| {
            ids.push(p);
            ids.len() - 1
        }).collect();
        ids.push(&s.negatives[round % s.negatives.len()]);
        slots.push(SampleSlots { anchor, positives, negatives: vec![ids.len() - 1] });
    }
    let table: Vec<Vec<f64>> = ids.iter().map(|t| params.encode(t)).collect();
    let (loss, slot_grads) = match cfg.loss_mode {
        LossMode::InversedContrastive => losses::inversed_batch(&table, &assemble_in_batch(&slots, l)?),
        LossMode::Contrastive => losses::contrastive_batch(&table, &assemble_in_batch(&slots, l)?),
        LossMode::Triplet => triplet_batch(&table, &slots, cfg.loss.epsilon)?,
    };
    if let Some(acc) = grads {
        for (t, g) in ids.iter().zip(&slot_grads) {
            params.accumulate_grad(t, g, acc);
        }
    }
    Ok(loss)
}

/// Mean triplet loss over every (anchor, positive) pair against the primary negative.
fn triplet_batch(table: &[Vec<f64>], slots: &[SampleSlots], epsilon: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let d = table[0].len();
    let mut grads = vec![vec![0.0; d]; table.len()];
    let terms: usize = slots.iter().map(|s| s.positives.len()).sum();
    let scale = 1.0 / terms as f64;
    let mut total = 0.0;
    for s in slots {
        let neg = s.negatives[0];
        for &p in &s.positives {
            let out = losses::triplet_loss(&table[s.anchor], &table[p], &table[neg], epsilon)?;
            total += out.loss;
            losses::add_scaled(&mut grads[s.anchor], &out.anchor, scale);
            losses::add_scaled(&mut grads[p], &out.positive, scale);
            losses::add_scaled(&mut grads[neg], &out.negative, scale);
        }
    }
    Ok((total * scale, grads))
}

/// Eval batches follow one seeded permutation so they mix ops the way
/// shuffled training batches do.
fn phase1_eval(params: &EncoderParams, data: &[TokSample], cfg: &TrainConfig) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, "phase1/eval-order"));
    let bs = batches(&order, cfg.batch_size);
    let mut total = 0.0;
    for b in &bs {
        total += phase1_batch(params, data, b, 0, cfg, None)? * b.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Mean phase-1 loss of `samples` under the eval batching, each sample
/// with its first negative as the primary one.
pub fn phase1_loss(params: &EncoderParams, samples: &[TripletSample], cfg: &TrainConfig) -> Result<f64> {
    phase1_eval(params, &tokenize_samples(&params.tokenizer(), samples)?, cfg)
}

/// Loss and parameter gradient of `samples` taken as a single training batch.
pub fn phase1_batch_grad(
    params: &EncoderParams,
    samples: &[TripletSample],
    cfg: &TrainConfig,
) -> Result<(f64, EncoderGrads)> {
    let data = tokenize_samples(&params.tokenizer(), samples)?;
    let order: Vec<usize> = (0..data.len()).collect();
    let mut grads = EncoderGrads::zeros(params.dim());
    let loss = phase1_batch(params, &data, &order, 0, cfg, Some(&mut grads))?;
    Ok((loss, grads))
}

/// Phase 1: fine-tunes a shared encoder on triplet samples.
///
/// The primary negative of each sample rotates through its negative list one
/// epoch at a time. Evaluation runs before the first update, every
/// `eval_every_steps` updates and after the last one.
pub fn train_phase1(
    train: &[TripletSample],
    eval: &[TripletSample],
    init: &EncoderParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<EncoderParams>> {
    cfg.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::InvalidConfig("train and eval splits must be non-empty".into()));
    }
    let tok = init.tokenizer();
    let train_data = tokenize_samples(&tok, train)?;
    let eval_data = tokenize_samples(&tok, eval)?;
    if cfg.loss_mode.in_batch() && (train.len() < 2 || eval.len() < 2) {
        return Err(Error::BatchTooSmall(train.len().min(eval.len())));
    }

    let mut params = init.clone();
    let mut state = AdamState::new(&params);
    let mut rng = rng_for(cfg.seed, "phase1/shuffle");
    let mut best = Best { ckpt: None };
    let mut log = Vec::new();

    let e0 = check_finite("phase1", 0, phase1_eval(&params, &eval_data, cfg)?)?;
    best.offer(&params, 0, e0);
    log.push(LogRow { step: 0, train_loss: None, eval_loss: Some(e0) });

    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = batches(&order, cfg.batch_size).len();
    let total = steps_per_epoch * cfg.epochs;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for b in batches(&order, cfg.batch_size) {
            let mut grads = EncoderGrads::zeros(params.dim());
            let loss = phase1_batch(&params, &train_data, b, epoch, cfg, Some(&mut grads))?;
            check_finite("phase1", step, loss)?;
            let lr = cfg.lr_schedule.lr_at(cfg.lr, step, total);
            adam_step(&mut params, &grads, &mut state, &cfg.adam, lr)?;
            step += 1;
            let mut row = LogRow { step, train_loss: Some(loss), eval_loss: None };
            if step % cfg.eval_every_steps == 0 || step == total {
                let e = check_finite("phase1", step, phase1_eval(&params, &eval_data, cfg)?)?;
                best.offer(&params, step, e);
                row.eval_loss = Some(e);
            }
            log.push(row);
        }
    }
    Ok(TrainOutcome { best: best.ckpt.expect("evaluated at step 0"), last: params, log })
}

/// Mean dot-product similarity of anchors to their positives and negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStats {
    pub mean_pos: f64,
    pub mean_neg: f64,
}

impl SimStats {
    pub fn margin(&self) -> f64 {
        self.mean_pos - self.mean_neg
    }
}

pub fn similarity_stats(params: &EncoderParams, samples: &[TripletSample]) -> SimStats {
    let tok = params.tokenizer();
    let (mut sp, mut np, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for s in samples {
        let a = params.encode(&tok.query_ids(&s.anchor));
        for p in &s.positives {
            sp += losses::dot(&a, &params.encode(&tok.query_ids(p)));
            np += 1;
        }
        for n in &s.negatives {
            sn += losses::dot(&a, &params.encode(&tok.query_ids(n)));
            nn += 1;
        }
    }
    SimStats { mean_pos: sp / np.max(1) as f64, mean_neg: sn / nn.max(1) as f64 }
}

pub const PHASE2_NEGATIVES: usize = 5;

/// A phase-2 example: query tokens, the positive document and negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase2Example {
    pub query_id: u32,
    pub positive: DocId,
    pub negatives: Vec<DocId>,
}

/// Draws `PHASE2_NEGATIVES` distinct documents outside the relevant set.
pub fn sample_negatives(relevant: &BTreeSet<DocId>, n_docs: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DocId>> {
    let pool = n_docs - relevant.iter().filter(|&&d| (d as usize) < n_docs).count();
    if pool < PHASE2_NEGATIVES {
        return Err(Error::InvalidConfig(format!(
            "only {pool} non-relevant documents, need {PHASE2_NEGATIVES} negatives"
        )));
    }
    let mut out = Vec::with_capacity(PHASE2_NEGATIVES);
    while out.len() < PHASE2_NEGATIVES {
        let d = rng.gen_range(0..n_docs) as DocId;
        if !relevant.contains(&d) && !out.contains(&d) {
            out.push(d);
        }
    }
    Ok(out)
}

/// The single positive used for a query: the head of its relevant list
/// after a shuffle keyed by `seed` and the query id. It never changes
/// between visits.
pub fn first_positive(q: &JudgedQuery, seed: u64) -> Result<DocId> {
    if q.relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let pick = sub_seed(seed, &format!("phase2/positive/{}", q.query_id)) as usize % q.relevant.len();
    Ok(*q.relevant.iter().nth(pick).expect("index within set"))
}

/// One positive (see [`first_positive`]) and uniform non-relevant negatives.
pub fn phase2_example(q: &JudgedQuery, n_docs: usize, seed: u64, rng: &mut ChaCha8Rng) -> Result<Phase2Example> {
    let positive = first_positive(q, seed)?;
    Ok(Phase2Example { query_id: q.query_id, positive, negatives: sample_negatives(&q.relevant, n_docs, rng)? })
}

struct Phase2Data {
    queries: Vec<Vec<TokenId>>,
    docs: Vec<Vec<TokenId>>,
}

/// Contrastive loss of a batch of (query index, example) pairs; gradients are
/// accumulated into `grads` when present.
fn phase2_batch(
    de: &DualEncoder,
    data: &Phase2Data,
    batch: &[(usize, &Phase2Example)],
    grads: Option<(&mut EncoderGrads, &mut EncoderGrads)>,
) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for &(qi, ex) in batch {
        let q = de.query.encode(&data.queries[qi]);
        let doc_ids: Vec<&[TokenId]> = std::iter::once(ex.positive)
            .chain(ex.negatives.iter().copied())
            .map(|d| data.docs[d as usize].as_slice())
            .collect();
        let embs: Vec<Vec<f64>> = doc_ids.iter().map(|t| de.doc.encode(t)).collect();
        let negs: Vec<&[f64]> = embs[1..].iter().map(Vec::as_slice).collect();
        let out = losses::contrastive_loss(&q, &embs[0], &negs);
        total += out.loss;
        if let Some((gq, gd)) = grads.as_mut() {
            let up: Vec<f64> = out.anchor.iter().map(|x| x * scale).collect();
            de.query.accumulate_grad(&data.queries[qi], &up, gq);
            for (t, g) in doc_ids.iter().zip(&out.targets) {
                let up: Vec<f64> = g.iter().map(|x| x * scale).collect();
                de.doc.accumulate_grad(t, &up, gd);
            }
        }
    }
    total * scale
}

/// Phase 2: trains both sides of a dual encoder on judged queries for
/// `max_steps_phase2` updates, cycling through reshuffled training queries.
/// Negatives are resampled each time a query is visited; the eval examples
/// draw theirs once.
pub fn train_phase2_de(
    train: &[JudgedQuery],
    eval: &[JudgedQuery],
    docs: &[Document],
    init: &DualEncoder,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<DualEncoder>> {
    cfg.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::InvalidConfig("phase-2 train and eval queries must be non-empty".into()));
    }
    if train.iter().chain(eval).any(|q| q.relevant.is_empty()) {
        return Err(Error::EmptyRelevantSet);
    }
    let tok = init.tokenizer();
    let data = Phase2Data {
        queries: train.iter().chain(eval).map(|q| tok.query_ids(&q.text)).collect(),
        docs: docs.iter().map(|d| tok.doc_ids(&d.text)).collect(),
    };
    let mut neg_rng = rng_for(cfg.seed, "phase2/negatives");
    let mut eval_rng = rng_for(cfg.seed, "phase2/eval-negatives");
    let mut shuffle_rng = rng_for(cfg.seed, "phase2/shuffle");
    let eval_examples: Vec<Phase2Example> =
        eval.iter().map(|q| phase2_example(q, docs.len(), cfg.seed, &mut eval_rng)).collect::<Result<_>>()?;
    // Eval queries sit after the training queries in `data.queries`.
    let eval_batch: Vec<(usize, &Phase2Example)> =
        eval_examples.iter().enumerate().map(|(i, e)| (train.len() + i, e)).collect();
    let eval_loss = |de: &DualEncoder| phase2_batch(de, &data, &eval_batch, None);

    let mut de = init.clone();
    let mut sq = AdamState::new(&de.query);
    let mut sd = AdamState::new(&de.doc);
    let mut best = Best { ckpt: None };
    let mut log = Vec::new();
    let e0 = check_finite("phase2", 0, eval_loss(&de))?;
    best.offer(&de, 0, e0);
    log.push(LogRow { step: 0, train_loss: None, eval_loss: Some(e0) });

    let total = cfg.max_steps_phase2;
    let bs = cfg.batch_size.min(train.len());
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 0..total {
        let mut batch_q = Vec::with_capacity(bs);
        while batch_q.len() < bs {
            if cursor == order.len() {
                order = (0..train.len()).collect();
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            batch_q.push(order[cursor]);
            cursor += 1;
        }
        let examples: Vec<Phase2Example> =
            batch_q.iter().map(|&qi| phase2_example(&train[qi], docs.len(), cfg.seed, &mut neg_rng)).collect::<Result<_>>()?;
        let batch: Vec<(usize, &Phase2Example)> = batch_q.iter().copied().zip(&examples).collect();
        let mut gq = EncoderGrads::zeros(de.query.dim());
        let mut gd = EncoderGrads::zeros(de.doc.dim());
        let loss = check_finite("phase2", step, phase2_batch(&de, &data, &batch, Some((&mut gq, &mut gd))))?;
        let lr = cfg.lr_schedule.lr_at(cfg.lr, step, total);
        adam_step(&mut de.query, &gq, &mut sq, &cfg.adam, lr)?;
        adam_step(&mut de.doc, &gd, &mut sd, &cfg.adam, lr)?;
        let done = step + 1;
        let mut row = LogRow { step: done, train_loss: Some(loss), eval_loss: None };
        if done % cfg.eval_every_steps == 0 || done == total {
            let e = check_finite("phase2", done, eval_loss(&de))?;
            best.offer(&de, done, e);
            row.eval_loss = Some(e);
        }
        log.push(row);
    }
    Ok(TrainOutcome { best: best.ckpt.expect("evaluated at step 0"), last: de, log })
}
