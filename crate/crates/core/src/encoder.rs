//! Bag-of-hashed-tokens text encoder.
//!
//! `encode(ids) = tanh(W · mean(E[ids]) + b)` where `E` is an
//! `n_buckets × d` embedding table, `W` a `d × d` projection and `b` a bias.
//! Token ids come from feature hashing lowercase alphanumeric words.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{fnv1a64, rng_for};

pub const QUERY_MAX_LEN: usize = 64;
pub const DOC_MAX_LEN: usize = 256;
pub const DEFAULT_BUCKETS: usize = 32768;
pub const DEFAULT_DIM: usize = 64;
pub const INIT_RANGE: f64 = 0.05;

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    n_buckets: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { n_buckets: DEFAULT_BUCKETS }
    }
}

impl Tokenizer {
    pub fn new(n_buckets: usize) -> Result<Self> {
        if !n_buckets.is_power_of_two() || n_buckets > 1 << 31 {
            return Err(Error::InvalidConfig(format!("n_buckets must be a power of two, got {n_buckets}")));
        }
        Ok(Tokenizer { n_buckets })
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    /// All token ids of `text`, untruncated.
    pub fn terms(&self, text: &str) -> Vec<TokenId> {
        let mask = (self.n_buckets - 1) as u64;
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| (fnv1a64(w.to_lowercase().as_bytes()) & mask) as TokenId)
            .collect()
    }

    /// Token ids truncated to the first `max_len`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<TokenId> {
        let mut ids = self.terms(text);
        ids.truncate(max_len);
        ids
    }

    pub fn query_ids(&self, text: &str) -> Vec<TokenId> {
        self.tokenize(text, QUERY_MAX_LEN)
    }

    pub fn doc_ids(&self, text: &str) -> Vec<TokenId> {
        self.tokenize(text, DOC_MAX_LEN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    d: usize,
    n_buckets: usize,
    seed: u64,
    /// Row-major `n_buckets × d`.
    pub(crate) embed: Vec<f64>,
    /// Row-major `d × d`, output index first.
    pub(crate) proj_weight: Vec<f64>,
    pub(crate) proj_bias: Vec<f64>,
}

/// Gradients of one encoder. Only touched embedding rows are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub embed_rows: BTreeMap<TokenId, Vec<f64>>,
    pub proj_weight: Vec<f64>,
    pub proj_bias: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros(d: usize) -> Self {
        EncoderGrads { embed_rows: BTreeMap::new(), proj_weight: vec![0.0; d * d], proj_bias: vec![0.0; d] }
    }

    pub fn scale(&mut self, s: f64) {
        for row in self.embed_rows.values_mut() {
            row.iter_mut().for_each(|x| *x *= s);
        }
        self.proj_weight.iter_mut().for_each(|x| *x *= s);
        self.proj_bias.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_zero(&self) -> bool {
        self.embed_rows.values().flatten().chain(&self.proj_weight).chain(&self.proj_bias).all(|&x| x == 0.0)
    }
}

impl EncoderParams {
    pub fn init(seed: u64, d: usize, n_buckets: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidConfig(format!("embedding dim must be at least 2, got {d}")));
        }
        Tokenizer::new(n_buckets)?;
        let mut rng = rng_for(seed, "encoder/init");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect() };
        let embed = draw(n_buckets * d);
        let proj_weight = draw(d * d);
        let proj_bias = draw(d);
        Ok(EncoderParams { d, n_buckets, seed, embed, proj_weight, proj_bias })
    }

    pub(crate) fn from_parts(
        d: usize,
        n_buckets: usize,
        seed: u64,
        embed: Vec<f64>,
        proj_weight: Vec<f64>,
        proj_bias: Vec<f64>,
    ) -> Result<Self> {
        if embed.len() != n_buckets * d || proj_weight.len() != d * d || proj_bias.len() != d {
            return Err(Error::ShapeMismatch("encoder parameter blocks do not match dims".into()));
        }
        if embed.iter().chain(&proj_weight).chain(&proj_bias).any(|x| !x.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(EncoderParams { d, n_buckets, seed, embed, proj_weight, proj_bias })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer { n_buckets: self.n_buckets }
    }

    pub fn embed_row(&self, t: TokenId) -> &[f64] {
        let t = t as usize;
        &self.embed[t * self.d..(t + 1) * self.d]
    }

    pub fn proj_weight(&self) -> &[f64] {
        &self.proj_weight
    }

    pub fn proj_bias(&self) -> &[f64] {
        &self.proj_bias
    }

    /// Mutable view of every parameter as one flat sequence:
    /// embedding table, then projection weight, then bias.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.embed, &mut self.proj_weight, &mut self.proj_bias]
    }

    pub fn blocks(&self) -> [&[f64]; 3] {
        [&self.embed, &self.proj_weight, &self.proj_bias]
    }

    fn pooled(&self, ids: &[TokenId]) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        if ids.is_empty() {
            return x;
        }
        for &t in ids {
            for (xi, e) in x.iter_mut().zip(self.embed_row(t)) {
                *xi += e;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        x.iter_mut().for_each(|v| *v *= inv);
        x
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|i| {
                let row = &self.proj_weight[i * d..(i + 1) * d];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.proj_bias[i];
                z.tanh()
            })
            .collect()
    }

    /// Embeds a token sequence. The empty sequence pools to the zero vector.
    pub fn encode(&self, ids: &[TokenId]) -> Vec<f64> {
        self.project(&self.pooled(ids))
    }

    /// Gradient of `<upstream, encode(ids)>` with respect to every parameter.
    pub fn encode_grad(&self, ids: &[TokenId], upstream: &[f64]) -> EncoderGrads {
        let mut g = EncoderGrads::zeros(self.d);
        self.accumulate_grad(ids, upstream, &mut g);
        g
    }

    /// Adds the gradient of `<upstream, encode(ids)>` into `acc`.
    pub fn accumulate_grad(&self, ids: &[TokenId], upstream: &[f64], acc: &mut EncoderGrads) {
        let d = self.d;
        assert_eq!(upstream.len(), d, "upstream gradient has wrong dimension");
        if upstream.iter().all(|&u| u == 0.0) {
            return;
        }
        let x = self.pooled(ids);
        let y = self.project(&x);
        let gz: Vec<f64> = upstream.iter().zip(&y).map(|(u, y)| u * (1.0 - y * y)).collect();
        for ((bias, row), g) in acc.proj_bias.iter_mut().zip(acc.proj_weight.chunks_mut(d)).zip(&gz) {
            *bias += g;
            for (w, xj) in row.iter_mut().zip(&x) {
                *w += g * xj;
            }
        }
        if ids.is_empty() {
            return;
        }
        let mut gx = vec![0.0; d];
        for (i, gzi) in gz.iter().enumerate() {
            let row = &self.proj_weight[i * d..(i + 1) * d];
            for (g, w) in gx.iter_mut().zip(row) {
                *g += gzi * w;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        for &t in ids {
            let row = acc.embed_rows.entry(t).or_insert_with(|| vec![0.0; d]);
            for (r, g) in row.iter_mut().zip(&gx) {
                *r += g * inv;
            }
        }
    }
}

/// Query-side and document-side encoders sharing one tokenizer and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub query: EncoderParams,
    pub doc: EncoderParams,
}

impl DualEncoder {
    pub fn new(query: EncoderParams, doc: EncoderParams) -> Result<Self> {
        if query.d != doc.d || query.n_buckets != doc.n_buckets {
            return Err(Error::ShapeMismatch("dual encoder sides differ in shape".into()));
        }
        Ok(DualEncoder { query, doc })
    }

    /// Both sides start as copies of `shared`.
    pub fn from_shared(shared: &EncoderParams) -> Self {
        DualEncoder { query: shared.clone(), doc: shared.clone() }
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.query.tokenizer()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EncoderParams {
        EncoderParams::init(3, 4, 16).unwrap()
    }

    #[test]
    fn tokenizer_normalizes() {
        let tok = Tokenizer::default();
        let ids = tok.terms("Cat cat!");
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], ids[1]);
        assert!(tok.terms("").is_empty());
        assert!(tok.terms("  ?! ").is_empty());
        assert!(ids.iter().all(|&i| (i as usize) < tok.n_buckets()));
    }

    #[test]
    fn tokenizer_truncates() {
        let tok = Tokenizer::default();
        let text: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let text = text.join(" ");
        assert_eq!(tok.doc_ids(&text).len(), 256);
        assert_eq!(tok.query_ids(&text).len(), 64);
        assert_eq!(tok.terms(&text).len(), 300);
    }

    #[test]
    fn buckets_must_be_power_of_two() {
        assert!(Tokenizer::new(1000).is_err());
        assert!(EncoderParams::init(0, 1, 16).is_err());
    }

    #[test]
    fn init_contract() {
        let a = EncoderParams::init(9, 64, 32768).unwrap();
        let b = EncoderParams::init(9, 64, 32768).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.embed.len(), 32768 * 64);
        assert!(a.blocks().iter().all(|blk| blk.iter().all(|x| x.abs() <= INIT_RANGE)));
        assert_ne!(a, EncoderParams::init(10, 64, 32768).unwrap());
    }

    #[test]
    fn single_token_and_mean_idempotence() {
        let p = small();
        let t = 5;
        let d = p.dim();
        let expect: Vec<f64> = (0..d)
            .map(|i| {
                let z: f64 = (0..d).map(|j| p.proj_weight[i * d + j] * p.embed_row(t)[j]).sum::<f64>()
                    + p.proj_bias[i];
                z.tanh()
            })
            .collect();
        assert_eq!(p.encode(&[t]), expect);
        assert_eq!(p.encode(&[t, t]), p.encode(&[t]));
    }

    #[test]
    fn empty_input_is_tanh_bias() {
        let p = small();
        let expect: Vec<f64> = p.proj_bias.iter().map(|b| b.tanh()).collect();
        assert_eq!(p.encode(&[]), expect);
    }

    #[test]
    fn permutation_invariant() {
        let p = small();
        let a = p.encode(&[1, 2, 3, 9]);
        let b = p.encode(&[9, 3, 1, 2]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_zero_grad() {
        let p = small();
        let g = p.encode_grad(&[1, 2], &[0.0; 4]);
        assert!(g.is_zero());
    }

    #[test]
    fn untouched_rows_have_no_gradient() {
        let p = small();
        let g = p.encode_grad(&[1, 2, 2], &[0.3, -0.1, 0.2, 1.0]);
        assert_eq!(g.embed_rows.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let ids = [3, 7, 7, 1];
        let up = [0.4, -1.2, 0.7, 0.05];
        let p = small();
        let g = p.encode_grad(&ids, &up);
        let f = |q: &EncoderParams| -> f64 { q.encode(&ids).iter().zip(&up).map(|(a, b)| a * b).sum() };
        let h = 1e-4;
        let mut q = p.clone();
        for t in 0..16u32 {
            for j in 0..4 {
                let k = t as usize * 4 + j;
                let orig = q.embed[k];
                q.embed[k] = orig + h;
                let fp = f(&q);
                q.embed[k] = orig - h;
                let fm = f(&q);
                q.embed[k] = orig;
                let num = (fp - fm) / (2.0 * h);
                let ana = g.embed_rows.get(&t).map_or(0.0, |r| r[j]);
                assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-6), "E[{t}][{j}]");
            }
        }
        for k in 0..16 {
            let orig = q.proj_weight[k];
            q.proj_weight[k] = orig + h;
            let fp = f(&q);
            q.proj_weight[k] = orig - h;
            let fm = f(&q);
            q.proj_weight[k] = orig;
            let num = (fp - fm) / (2.0 * h);
            assert!((num - g.proj_weight[k]).abs() <= 1e-4 * num.abs().max(1e-6));
        }
    }

    #[test]
    fn dual_shapes_must_agree() {
        let a = EncoderParams::init(0, 4, 16).unwrap();
        let b = EncoderParams::init(0, 8, 16).unwrap();
        assert!(DualEncoder::new(a.clone(), b).is_err());
        let de = DualEncoder::from_shared(&a);
        assert_eq!(de.query, de.doc);
    }
}
