//! Adam with bias correction.
//!
//! Embedding rows that have never received a gradient keep zero moments and
//! therefore receive a zero update; they are skipped without changing the
//! result.

use crate::encoder::{EncoderGrads, EncoderParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    d: usize,
    m_embed: Vec<f64>,
    v_embed: Vec<f64>,
    touched: Vec<bool>,
    touched_rows: Vec<usize>,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let (d, n) = (params.dim(), params.n_buckets());
        AdamState {
            t: 0,
            d,
            m_embed: vec![0.0; n * d],
            v_embed: vec![0.0; n * d],
            touched: vec![false; n],
            touched_rows: Vec::new(),
            m_w: vec![0.0; d * d],
            v_w: vec![0.0; d * d],
            m_b: vec![0.0; d],
            v_b: vec![0.0; d],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

struct Coeffs {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl Coeffs {
    #[inline]
    fn apply(&self, p: &mut [f64], g: Option<&[f64]>, m: &mut [f64], v: &mut [f64]) {
        for i in 0..p.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = self.b1 * m[i] + (1.0 - self.b1) * gi;
            v[i] = self.b2 * v[i] + (1.0 - self.b2) * gi * gi;
            let m_hat = m[i] / self.c1;
            let v_hat = v[i] / self.c2;
            p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &EncoderGrads,
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<()> {
    let d = params.dim();
    if state.d != d
        || grads.proj_weight.len() != d * d
        || grads.proj_bias.len() != d
        || state.touched.len() != params.n_buckets()
    {
        return Err(Error::ShapeMismatch("gradients, optimizer state and parameters disagree".into()));
    }
    for (&row, g) in &grads.embed_rows {
        let row = row as usize;
        if row >= state.touched.len() || g.len() != d {
            return Err(Error::ShapeMismatch(format!("gradient row {row} out of range")));
        }
        if !state.touched[row] {
            state.touched[row] = true;
            state.touched_rows.push(row);
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let k = Coeffs {
        lr,
        b1: cfg.beta1,
        b2: cfg.beta2,
        eps: cfg.eps,
        c1: 1.0 - cfg.beta1.powi(t),
        c2: 1.0 - cfg.beta2.powi(t),
    };
    let [embed, weight, bias] = params.blocks_mut();
    for &row in &state.touched_rows {
        let span = row * d..(row + 1) * d;
        let g = grads.embed_rows.get(&(row as u32)).map(Vec::as_slice);
        k.apply(&mut embed[span.clone()], g, &mut state.m_embed[span.clone()], &mut state.v_embed[span]);
    }
    k.apply(weight, Some(&grads.proj_weight), &mut state.m_w, &mut state.v_w);
    k.apply(bias, Some(&grads.proj_bias), &mut state.m_b, &mut state.v_b);
    Ok(())
}
