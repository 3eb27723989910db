//! Versioned binary container for encoder parameters.
//!
//! Layout (little endian):
//!
//! ```text
//! magic  b"SRNKCKPT"
//! u32    format version (1)
//! u8     kind: 1 = single encoder, 2 = dual encoder
//! u64    step
//! f64    eval loss
//! per encoder:
//!   u32 d, u32 n_buckets, u64 seed
//!   f64 × n_buckets·d   embedding table
//!   f64 × d·d           projection weight
//!   f64 × d             projection bias
//! ```

use std::path::Path;

use crate::encoder::{DualEncoder, EncoderParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SRNKCKPT";
const VERSION: u32 = 1;

/// Parameters selected during training together with where they were taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<P> {
    pub params: P,
    pub step: usize,
    pub eval_loss: f64,
}

/// Something storable in a checkpoint: a fixed number of encoders.
pub trait Model: Sized {
    const KIND: u8;
    fn encoders(&self) -> Vec<&EncoderParams>;
    fn from_encoders(encs: Vec<EncoderParams>) -> Result<Self>;
}

impl Model for EncoderParams {
    const KIND: u8 = 1;
    fn encoders(&self) -> Vec<&EncoderParams> {
        vec![self]
    }
    fn from_encoders(mut encs: Vec<EncoderParams>) -> Result<Self> {
        encs.pop().ok_or_else(|| Error::Checkpoint("missing encoder".into()))
    }
}

impl Model for DualEncoder {
    const KIND: u8 = 2;
    fn encoders(&self) -> Vec<&EncoderParams> {
        vec![&self.query, &self.doc]
    }
    fn from_encoders(mut encs: Vec<EncoderParams>) -> Result<Self> {
        let doc = encs.pop().ok_or_else(|| Error::Checkpoint("missing doc encoder".into()))?;
        let query = encs.pop().ok_or_else(|| Error::Checkpoint("missing query encoder".into()))?;
        DualEncoder::new(query, doc)
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.reserve(xs.len() * 8);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn to_bytes<P: Model>(ckpt: &Checkpoint<P>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(P::KIND);
    out.extend_from_slice(&(ckpt.step as u64).to_le_bytes());
    out.extend_from_slice(&ckpt.eval_loss.to_le_bytes());
    for enc in ckpt.params.encoders() {
        out.extend_from_slice(&(enc.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(enc.n_buckets() as u32).to_le_bytes());
        out.extend_from_slice(&enc.seed().to_le_bytes());
        for block in enc.blocks() {
            put_f64s(&mut out, block);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn from_bytes<P: Model>(buf: &[u8]) -> Result<Checkpoint<P>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    if kind != P::KIND {
        return Err(Error::Checkpoint(format!("expected kind {}, found {kind}", P::KIND)));
    }
    let step = r.u64()? as usize;
    let eval_loss = r.f64()?;
    let mut encs = Vec::new();
    for _ in 0..kind {
        let d = r.u32()? as usize;
        let n_buckets = r.u32()? as usize;
        let seed = r.u64()?;
        let embed = r.f64s(n_buckets.saturating_mul(d))?;
        let weight = r.f64s(d * d)?;
        let bias = r.f64s(d)?;
        encs.push(EncoderParams::from_parts(d, n_buckets, seed, embed, weight, bias)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { params: P::from_encoders(encs)?, step, eval_loss })
}

pub fn save<P: Model>(path: &Path, ckpt: &Checkpoint<P>) -> Result<()> {
    std::fs::write(path, to_bytes(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load<P: Model>(path: &Path) -> Result<Checkpoint<P>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
