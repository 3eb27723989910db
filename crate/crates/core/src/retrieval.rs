//! BM25, exact dense top-K and the set-algebra oracle.
//!
//! Every retriever returns a [`RankedList`] ordered by descending score with
//! ties broken by ascending doc id.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::path::Path;

use crate::corpus::{DocId, Document};
use crate::datagen::AttributeIndex;
use crate::encoder::{EncoderParams, TokenId, Tokenizer};
use crate::error::{Error, Result};
use crate::losses::dot;
use crate::query::BooleanQuery;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub entries: Vec<(DocId, f64)>,
    pub k: usize,
}

impl RankedList {
    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Strictly sorted under (−score, doc id), at most `k` long, no repeats.
    pub fn is_valid(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.entries.len() <= self.k
            && self.entries.iter().all(|e| seen.insert(e.0))
            && self.entries.windows(2).all(|w| rank_cmp(&w[0], &w[1]) == Ordering::Less)
    }
}

/// Orders better entries first: higher score, then lower doc id.
fn rank_cmp(a: &(DocId, f64), b: &(DocId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Heap key that compares greater for better-ranked entries.
#[derive(Debug, Clone, Copy)]
struct Key(DocId, f64);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(&(other.0, other.1), &(self.0, self.1))
    }
}

/// Keeps the `k` best of `scores` in a heap of size at most `k`.
pub fn top_k(scores: impl IntoIterator<Item = (DocId, f64)>, k: usize) -> RankedList {
    assert!(k >= 1, "K must be at least 1");
    let mut heap: BinaryHeap<Reverse<Key>> = BinaryHeap::with_capacity(k + 1);
    for (id, s) in scores {
        // -0.0 + 0.0 is +0.0, so signed zeros tie and fall back to doc id.
        let key = Key(id, s + 0.0);
        if heap.len() < k {
            heap.push(Reverse(key));
        } else if heap.peek().is_some_and(|worst| key > worst.0) {
            heap.pop();
            heap.push(Reverse(key));
        }
    }
    let mut entries: Vec<(DocId, f64)> = heap.into_iter().map(|Reverse(Key(id, s))| (id, s)).collect();
    entries.sort_by(rank_cmp);
    RankedList { entries, k }
}

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    /// Term → (doc id, term frequency), sorted by doc id.
    pub postings: BTreeMap<TokenId, Vec<(DocId, u32)>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub n_docs: usize,
    pub k1: f64,
    pub b: f64,
    tokenizer: Tokenizer,
}

pub fn build_bm25(corpus: &[Document], tokenizer: Tokenizer, k1: f64, b: f64) -> Result<Bm25Index> {
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("cannot index an empty corpus".into()));
    }
    let mut postings: BTreeMap<TokenId, Vec<(DocId, u32)>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    for d in corpus {
        let terms = tokenizer.terms(&d.text);
        doc_lengths.push(terms.len() as u32);
        let mut tf: BTreeMap<TokenId, u32> = BTreeMap::new();
        for t in terms {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            postings.entry(t).or_default().push((d.doc_id, n));
        }
    }
    for list in postings.values_mut() {
        list.sort_by_key(|p| p.0);
    }
    let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    let avg_doc_length = total as f64 / corpus.len() as f64;
    Ok(Bm25Index { postings, doc_lengths, avg_doc_length, n_docs: corpus.len(), k1, b, tokenizer })
}

impl Bm25Index {
    pub fn idf(&self, df: usize) -> f64 {
        let (n, df) = (self.n_docs as f64, df as f64);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores of every document containing at least one query term.
    pub fn scores(&self, query_text: &str) -> BTreeMap<DocId, f64> {
        let terms: BTreeSet<TokenId> = self.tokenizer.terms(query_text).into_iter().collect();
        let mut acc: BTreeMap<DocId, f64> = BTreeMap::new();
        for t in terms {
            let Some(list) = self.postings.get(&t) else { continue };
            let idf = self.idf(list.len());
            for &(doc, tf) in list {
                let tf = tf as f64;
                let dl = self.doc_lengths[doc as usize] as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * dl / self.avg_doc_length);
                *acc.entry(doc).or_default() += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        acc
    }
}

pub fn bm25_search(index: &Bm25Index, query_text: &str, k: usize) -> RankedList {
    top_k(index.scores(query_text), k)
}

/// Document embeddings, one row per corpus document.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub doc_ids: Vec<DocId>,
    d: usize,
    rows: Vec<f64>,
}

pub fn embed_corpus(doc_params: &EncoderParams, corpus: &[Document]) -> DenseIndex {
    let tok = doc_params.tokenizer();
    let d = doc_params.dim();
    let mut rows = Vec::with_capacity(corpus.len() * d);
    for doc in corpus {
        rows.extend(doc_params.encode(&tok.doc_ids(&doc.text)));
    }
    DenseIndex { doc_ids: corpus.iter().map(|c| c.doc_id).collect(), d, rows }
}

const INDEX_MAGIC: &[u8; 8] = b"SRNKDIDX";
const INDEX_VERSION: u32 = 1;

impl DenseIndex {
    pub fn from_rows(doc_ids: Vec<DocId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != doc_ids.len() || rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("index rows and ids disagree".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite embedding".into()));
        }
        Ok(DenseIndex { doc_ids, d, rows: rows.concat() })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    /// Dot-product scores of `q` against every row, in row order.
    pub fn scores(&self, q: &[f64]) -> impl Iterator<Item = (DocId, f64)> + '_ {
        assert_eq!(q.len(), self.d, "query embedding has wrong dimension");
        let q = q.to_vec();
        (0..self.len()).map(move |i| (self.doc_ids[i], dot(&q, self.row(i))))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.doc_ids.len() * 4 + self.rows.len() * 8);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.doc_ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for id in &self.doc_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for x in &self.rows {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("dense index: {m}"));
        if buf.len() < 24 || &buf[..8] != INDEX_MAGIC {
            return Err(bad("bad header"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != INDEX_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(buf[12..20].try_into().expect("8 bytes")) as usize;
        let d = u32::from_le_bytes(buf[20..24].try_into().expect("4 bytes")) as usize;
        let expect = n.checked_mul(4 + d * 8).and_then(|x| x.checked_add(24)).ok_or_else(|| bad("size overflow"))?;
        if buf.len() != expect {
            return Err(bad("length does not match header"));
        }
        let ids_end = 24 + n * 4;
        let doc_ids = buf[24..ids_end].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let rows: Vec<f64> =
            buf[ids_end..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite embedding"));
        }
        Ok(DenseIndex { doc_ids, d, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        DenseIndex::from_bytes(&buf)
    }
}

pub fn dense_search_embedding(q: &[f64], index: &DenseIndex, k: usize) -> RankedList {
    top_k(index.scores(q), k)
}

pub fn dense_search(query_params: &EncoderParams, query_text: &str, index: &DenseIndex, k: usize) -> RankedList {
    let q = query_params.encode(&query_params.tokenizer().query_ids(query_text));
    dense_search_embedding(&q, index, k)
}

/// Oracle answers with score 1.0 in doc id order, truncated to `k`.
pub fn oracle_search(query: &BooleanQuery, index: &AttributeIndex, k: usize) -> Result<RankedList> {
    assert!(k >= 1, "K must be at least 1");
    let answers = index.answers(query)?;
    Ok(RankedList { entries: answers.into_iter().take(k).map(|d| (d, 1.0)).collect(), k })
}
