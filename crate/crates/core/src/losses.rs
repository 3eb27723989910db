//! Training objectives over embeddings, with analytic gradients.
//!
//! * triplet: `max(0, ε − cos(p, p⁺) + cos(p, p⁻))`
//! * contrastive: `−log softmax` of `p·p⁺` against `p·p⁻ⱼ`
//! * inversed contrastive: `−log softmax` of `−p·p⁻` against `−p·p⁺ₖ` (own
//!   positives) and `−p·p⁻ⱼ` (in-batch negatives). Minimizing it pushes the
//!   anchor away from its primary negative.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Triplet margin.
    pub epsilon: f64,
    /// Positives per anchor in the inversed-contrastive loss.
    pub l: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { epsilon: 1.0, l: 2 }
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "dimension mismatch");
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Gradients of `cos(u, v)` with respect to `u` and `v`.
fn cosine_grads(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = dot(u, v) / (nu * nv);
    let gu = u.iter().zip(v).map(|(a, b)| b / (nu * nv) - c * a / (nu * nu)).collect();
    let gv = u.iter().zip(v).map(|(a, b)| a / (nu * nv) - c * b / (nv * nv)).collect();
    Ok((c, gu, gv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

pub fn triplet_loss(p: &[f64], pos: &[f64], neg: &[f64], epsilon: f64) -> Result<TripletOutput> {
    let (cp, gp_a, gp_p) = cosine_grads(p, pos)?;
    let (cn, gn_a, gn_n) = cosine_grads(p, neg)?;
    let margin = epsilon - cp + cn;
    let d = p.len();
    if margin <= 0.0 {
        return Ok(TripletOutput { loss: 0.0, anchor: vec![0.0; d], positive: vec![0.0; d], negative: vec![0.0; d] });
    }
    let anchor = gp_a.iter().zip(&gn_a).map(|(a, b)| b - a).collect();
    let positive = gp_p.iter().map(|x| -x).collect();
    Ok(TripletOutput { loss: margin, anchor, positive, negative: gn_n })
}

/// `−log softmax(logits)[0]` and its gradient, evaluated with a max shift.
fn softmax_xent(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[0];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[0] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxOutput {
    pub loss: f64,
    pub anchor: Vec<f64>,
    /// Gradient per target in input order; index 0 is the target being selected.
    pub targets: Vec<Vec<f64>>,
}

/// Shared core: logits are `sign · (p · targetᵢ)` and target 0 is the correct class.
fn softmax_over_dots(p: &[f64], targets: &[&[f64]], sign: f64) -> SoftmaxOutput {
    let logits: Vec<f64> = targets.iter().map(|t| sign * dot(p, t)).collect();
    let (loss, dlogits) = softmax_xent(&logits);
    let mut anchor = vec![0.0; p.len()];
    let mut grads = Vec::with_capacity(targets.len());
    for (t, g) in targets.iter().zip(&dlogits) {
        let ds = sign * g;
        for (a, ti) in anchor.iter_mut().zip(t.iter()) {
            *a += ds * ti;
        }
        grads.push(p.iter().map(|x| ds * x).collect());
    }
    SoftmaxOutput { loss, anchor, targets: grads }
}

/// Contrastive loss; `targets[0]` of the output is the positive, the rest
/// follow `negatives`.
pub fn contrastive_loss(p: &[f64], pos: &[f64], negatives: &[&[f64]]) -> SoftmaxOutput {
    assert!(!negatives.is_empty(), "contrastive loss needs at least one negative");
    let mut targets = Vec::with_capacity(1 + negatives.len());
    targets.push(pos);
    targets.extend_from_slice(negatives);
    softmax_over_dots(p, &targets, 1.0)
}

/// Inversed-contrastive loss; output `targets` are ordered primary negative,
/// positives, in-batch negatives.
pub fn inversed_contrastive_loss(
    p: &[f64],
    primary_negative: &[f64],
    positives: &[&[f64]],
    in_batch: &[&[f64]],
) -> SoftmaxOutput {
    assert!(!positives.is_empty(), "inversed-contrastive loss needs at least one positive");
    let mut targets = Vec::with_capacity(1 + positives.len() + in_batch.len());
    targets.push(primary_negative);
    targets.extend_from_slice(positives);
    targets.extend_from_slice(in_batch);
    softmax_over_dots(p, &targets, -1.0)
}

/// Embedding slots of one sample inside a flat batch table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSlots {
    pub anchor: usize,
    pub positives: Vec<usize>,
    /// The first entry is the primary negative.
    pub negatives: Vec<usize>,
}

/// Loss inputs for one anchor, as slots into the batch table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorInputs {
    pub anchor: usize,
    pub primary_negative: usize,
    pub positives: Vec<usize>,
    pub in_batch: Vec<usize>,
}

/// Builds per-anchor inputs: the anchor keeps its first `l` positives and its
/// primary negative; every positive and negative of the other samples becomes
/// an in-batch negative.
pub fn assemble_in_batch(samples: &[SampleSlots], l: usize) -> Result<Vec<AnchorInputs>> {
    if samples.len() < 2 {
        return Err(Error::BatchTooSmall(samples.len()));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| AnchorInputs {
            anchor: s.anchor,
            primary_negative: s.negatives[0],
            positives: s.positives.iter().take(l).copied().collect(),
            in_batch: samples
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, o)| o.positives.iter().chain(&o.negatives).copied())
                .collect(),
        })
        .collect())
}

/// Mean inversed-contrastive loss over a batch and the gradient for every
/// slot of `table`.
pub fn inversed_batch(table: &[Vec<f64>], inputs: &[AnchorInputs]) -> (f64, Vec<Vec<f64>>) {
    let d = table.first().map_or(0, Vec::len);
    let mut grads = vec![vec![0.0; d]; table.len()];
    let scale = 1.0 / inputs.len() as f64;
    let mut total = 0.0;
    for a in inputs {
        let pos: Vec<&[f64]> = a.positives.iter().map(|&k| table[k].as_slice()).collect();
        let inb: Vec<&[f64]> = a.in_batch.iter().map(|&k| table[k].as_slice()).collect();
        let out = inversed_contrastive_loss(&table[a.anchor], &table[a.primary_negative], &pos, &inb);
        total += out.loss;
        let slots = std::iter::once(a.primary_negative).chain(a.positives.iter().copied()).chain(a.in_batch.iter().copied());
        add_scaled(&mut grads[a.anchor], &out.anchor, scale);
        for (slot, g) in slots.zip(&out.targets) {
            add_scaled(&mut grads[slot], g, scale);
        }
    }
    (total * scale, grads)
}

/// Mean contrastive loss where each anchor's negatives are its primary
/// negative followed by its in-batch negatives, and the positive is its first.
pub fn contrastive_batch(table: &[Vec<f64>], inputs: &[AnchorInputs]) -> (f64, Vec<Vec<f64>>) {
    let d = table.first().map_or(0, Vec::len);
    let mut grads = vec![vec![0.0; d]; table.len()];
    let scale = 1.0 / inputs.len() as f64;
    let mut total = 0.0;
    for a in inputs {
        let negs: Vec<usize> = std::iter::once(a.primary_negative).chain(a.in_batch.iter().copied()).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(|&k| table[k].as_slice()).collect();
        let out = contrastive_loss(&table[a.anchor], &table[a.positives[0]], &neg_refs);
        total += out.loss;
        add_scaled(&mut grads[a.anchor], &out.anchor, scale);
        for (slot, g) in std::iter::once(a.positives[0]).chain(negs).zip(&out.targets) {
            add_scaled(&mut grads[slot], g, scale);
        }
    }
    (total * scale, grads)
}

pub(crate) fn add_scaled(acc: &mut [f64], g: &[f64], s: f64) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += s * b;
    }
}
