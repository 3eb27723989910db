//! Seeded, rule-based generation of triplet training data and synthetic
//! retrieval benchmarks with exact relevance judgments.
//!
//! Triplet rules per operation (`A`, `B`, `C` are distinct concepts):
//!
//! * NOT: gold `A that are not B`; positives `A that are C`; negatives `A that are B`.
//! * AND: gold `A and B`; positives `B and A` plus paraphrases; negatives
//!   mention only one of the two constraints (`A`, `B`, `A and C`, `B and C`).
//! * OR: gold `A or B`; positives `A` alone or `B` alone; negatives are
//!   concepts unrelated to both.
//!
//! Paraphrase diversity comes from the vocabulary's synonym forms and a small
//! bank of connecting templates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{DocId, Document, JudgedQuery, Op, TripletSample};
use crate::error::{Error, Result};
use crate::query::{Atom, BooleanQuery, Template};
use crate::seed::rng_for;
use crate::vocab::Vocab;

const PAIR_TEMPLATES: [&str; 3] = ["{x} that are {y}", "{x} which are also {y}", "{x} that are also {y}"];
const NOT_GOLD_TEMPLATES: [&str; 2] = ["{x} that are not {y}", "{x} but not {y}"];
const DOC_SENTENCES: [&str; 5] = [
    "{t} is one of the {p}.",
    "It is counted among {p}.",
    "Critics list it with other {p}.",
    "It often appears in lists of {p}.",
    "{t} belongs with {p}.",
];
const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mir", "ta", "ven", "so", "rul", "den", "pa", "zi", "nor", "ba", "el", "qui", "dra", "mo",
];

/// Attempts to find a fresh anchor before giving up on a sample.
const MAX_SAMPLE_ATTEMPTS: usize = 1000;
/// Attempts per benchmark query before the slot is skipped.
pub const MAX_QUERY_ATTEMPTS: usize = 100;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seed: u64,
    pub samples_per_op: usize,
    pub positives_per_sample: usize,
    pub negatives_per_sample: usize,
    pub n_docs: usize,
    pub n_queries_per_template: usize,
    pub vocab: Vocab,
    pub split_ratio: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            samples_per_op: 2000,
            positives_per_sample: 2,
            negatives_per_sample: 3,
            n_docs: 500,
            n_queries_per_template: 40,
            vocab: Vocab::builtin(),
            split_ratio: 0.8,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.samples_per_op == 0 {
            return bad("samples_per_op must be at least 1");
        }
        if self.positives_per_sample == 0 || self.negatives_per_sample == 0 {
            return bad("samples need at least one positive and one negative");
        }
        if self.n_docs == 0 || self.n_queries_per_template == 0 {
            return bad("n_docs and n_queries_per_template must be positive");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie strictly between 0 and 1");
        }
        Ok(())
    }
}

/// Echo of the generation parameters stored alongside a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub samples_per_op: usize,
    pub positives_per_sample: usize,
    pub negatives_per_sample: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletDataset {
    pub samples: Vec<TripletSample>,
    pub provenance: Provenance,
}

fn fill(template: &str, x: &str, y: &str) -> String {
    template.replace("{x}", x).replace("{y}", y)
}

/// Gold sentence for a difference: `A that are not B`.
pub fn not_gold(a: &str, b: &str) -> String {
    fill(NOT_GOLD_TEMPLATES[0], a, b)
}

/// The order-swapped conjunction `B and A`, always a valid AND positive.
pub fn and_swapped(a: &str, b: &str) -> String {
    format!("{b} and {a}")
}

struct TripletGen<'a> {
    vocab: &'a Vocab,
    n_pos: usize,
    n_neg: usize,
    rng: ChaCha8Rng,
}

impl TripletGen<'_> {
    fn form(&mut self, concept: usize) -> String {
        self.vocab.concept(concept).forms.choose(&mut self.rng).expect("non-empty").clone()
    }

    fn pair(&mut self, x: usize, y: usize) -> String {
        let t = *PAIR_TEMPLATES.choose(&mut self.rng).expect("non-empty");
        let (fx, fy) = (self.form(x), self.form(y));
        fill(t, &fx, &fy)
    }

    /// `k` distinct concepts from `pool`, excluding `exclude`.
    fn others(&mut self, pool: &[usize], exclude: &[usize], k: usize) -> Vec<usize> {
        let candidates: Vec<usize> = pool.iter().copied().filter(|c| !exclude.contains(c)).collect();
        candidates.choose_multiple(&mut self.rng, k).copied().collect()
    }

    fn not_sample(&mut self, a: usize) -> TripletSample {
        let domain = self.vocab.same_domain(a).to_vec();
        let b = self.others(&domain, &[a], 1)[0];
        let t = *NOT_GOLD_TEMPLATES.choose(&mut self.rng).expect("non-empty");
        let (fa, fb) = (self.form(a), self.form(b));
        let anchor = fill(t, &fa, &fb);
        let cs = self.others(&domain, &[a, b], self.n_pos);
        let positives = cs.into_iter().map(|c| self.pair(a, c)).collect();
        let negatives = (0..self.n_neg).map(|_| self.pair(a, b)).collect();
        TripletSample { op: Op::Not, anchor, positives, negatives }
    }

    fn and_sample(&mut self, a: usize) -> TripletSample {
        let domain = self.vocab.same_domain(a).to_vec();
        let b = self.others(&domain, &[a], 1)[0];
        let (fa, fb) = (self.form(a), self.form(b));
        let anchor = format!("{fa} and {fb}");
        let mut positives = vec![and_swapped(&fa, &fb)];
        while positives.len() < self.n_pos {
            let p = if self.rng.gen_bool(0.5) { self.pair(a, b) } else { self.pair(b, a) };
            positives.push(p);
        }
        let negatives = (0..self.n_neg)
            .map(|_| {
                let keep = if self.rng.gen_bool(0.5) { a } else { b };
                match self.rng.gen_range(0..3) {
                    0 => self.form(keep),
                    1 => {
                        let c = self.others(&domain, &[a, b], 1)[0];
                        let (fk, fc) = (self.form(keep), self.form(c));
                        format!("{fk} and {fc}")
                    }
                    _ => {
                        let c = self.others(&domain, &[a, b], 1)[0];
                        self.pair(keep, c)
                    }
                }
            })
            .collect();
        TripletSample { op: Op::And, anchor, positives, negatives }
    }

    fn or_sample(&mut self, a: usize) -> TripletSample {
        let domain = self.vocab.same_domain(a).to_vec();
        let b = self.others(&domain, &[a], 1)[0];
        let (fa, fb) = (self.form(a), self.form(b));
        let anchor = format!("{fa} or {fb}");
        let positives = (0..self.n_pos)
            .map(|i| self.form(if i % 2 == 0 { a } else { b }))
            .collect();
        let all: Vec<usize> = (0..self.vocab.len()).collect();
        let cs = self.others(&all, &[a, b], self.n_neg);
        let negatives = cs.into_iter().map(|c| self.form(c)).collect();
        TripletSample { op: Op::Or, anchor, positives, negatives }
    }

    /// Concepts that can serve as `A` for `op` (their domain is large enough).
    fn eligible(&self, op: Op) -> Vec<usize> {
        let need = match op {
            Op::Not => 2 + self.n_pos,
            Op::And => 3,
            Op::Or => 2,
        };
        if op == Op::Or && self.vocab.len() < 2 + self.n_neg {
            return Vec::new();
        }
        (0..self.vocab.len()).filter(|&c| self.vocab.same_domain(c).len() >= need).collect()
    }
}

fn distinct_strings(s: &TripletSample) -> bool {
    let mut seen = HashSet::new();
    seen.insert(s.anchor.as_str());
    s.positives.iter().chain(&s.negatives).all(|x| seen.insert(x.as_str()))
}

pub fn gen_triplets(cfg: &GenConfig) -> Result<TripletDataset> {
    cfg.validate()?;
    let mut gen = TripletGen {
        vocab: &cfg.vocab,
        n_pos: cfg.positives_per_sample,
        n_neg: cfg.negatives_per_sample,
        rng: rng_for(cfg.seed, "datagen/triplets"),
    };
    let mut anchors = HashSet::new();
    let mut samples = Vec::with_capacity(cfg.samples_per_op * 3);
    for op in Op::ALL {
        let eligible = gen.eligible(op);
        if eligible.is_empty() {
            return Err(Error::VocabTooSmall(format!("no domain has enough concepts for {op} samples")));
        }
        for _ in 0..cfg.samples_per_op {
            let mut accepted = None;
            for _ in 0..MAX_SAMPLE_ATTEMPTS {
                let a = *eligible.choose(&mut gen.rng).expect("non-empty");
                let s = match op {
                    Op::Not => gen.not_sample(a),
                    Op::And => gen.and_sample(a),
                    Op::Or => gen.or_sample(a),
                };
                if distinct_strings(&s) && !anchors.contains(&s.anchor) {
                    accepted = Some(s);
                    break;
                }
            }
            let s = accepted.ok_or_else(|| {
                Error::VocabTooSmall(format!(
                    "could not find a new {op} anchor after {MAX_SAMPLE_ATTEMPTS} attempts"
                ))
            })?;
            anchors.insert(s.anchor.clone());
            samples.push(s);
        }
    }
    Ok(TripletDataset {
        samples,
        provenance: Provenance {
            seed: cfg.seed,
            samples_per_op: cfg.samples_per_op,
            positives_per_sample: cfg.positives_per_sample,
            negatives_per_sample: cfg.negatives_per_sample,
            vocab_size: cfg.vocab.len(),
        },
    })
}

/// Per-op stratified split. The overall train size is `round(ratio * N)`,
/// apportioned across ops by largest remainder.
pub fn split_dataset(
    samples: &[TripletSample],
    ratio: f64,
    seed: u64,
) -> (Vec<TripletSample>, Vec<TripletSample>) {
    assert!(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1)");
    let mut rng = rng_for(seed, "datagen/split");
    let mut by_op: BTreeMap<Op, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_op.entry(s.op).or_default().push(i);
    }
    let total = (ratio * samples.len() as f64).round() as usize;
    let mut quota: Vec<(Op, usize, f64)> = by_op
        .iter()
        .map(|(op, idx)| {
            let exact = ratio * idx.len() as f64;
            (*op, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&i, &j| quota[j].2.total_cmp(&quota[i].2).then(i.cmp(&j)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        quota[i].1 += 1;
    }
    let mut train_idx = Vec::new();
    for (op, n_train, _) in &quota {
        let mut idx = by_op[op].clone();
        idx.shuffle(&mut rng);
        train_idx.extend_from_slice(&idx[..*n_train]);
    }
    let train_set: HashSet<usize> = train_idx.into_iter().collect();
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if train_set.contains(&i) {
            train.push(s.clone());
        } else {
            eval.push(s.clone());
        }
    }
    (train, eval)
}

/// Attribute → documents carrying it.
#[derive(Debug, Clone)]
pub struct AttributeIndex {
    sets: HashMap<Atom, BTreeSet<DocId>>,
}

impl AttributeIndex {
    pub fn new(docs: &[Document]) -> Self {
        let mut sets: HashMap<Atom, BTreeSet<DocId>> = HashMap::new();
        for d in docs {
            for a in &d.attributes {
                sets.entry(a.clone()).or_default().insert(d.doc_id);
            }
        }
        AttributeIndex { sets }
    }

    fn set(&self, a: &Atom) -> Result<&BTreeSet<DocId>> {
        self.sets.get(a).ok_or_else(|| Error::UnknownAttribute(a.to_string()))
    }

    /// Exact set-algebra answer: atoms are membership sets, OR is union, AND
    /// is intersection, NOT subtracts the negated atom from the left side.
    pub fn answers(&self, q: &BooleanQuery) -> Result<BTreeSet<DocId>> {
        let sets = q.terms().iter().map(|a| self.set(a)).collect::<Result<Vec<_>>>()?;
        let out = match q.template() {
            Template::Atom => sets[0].clone(),
            Template::Or2 => sets[0] | sets[1],
            Template::And2 => sets[0] & sets[1],
            Template::Not2 => sets[0] - sets[1],
            Template::Or3 => &(sets[0] | sets[1]) | sets[2],
            Template::And3 => &(sets[0] & sets[1]) & sets[2],
            Template::AndNot3 => &(sets[0] & sets[1]) - sets[2],
        };
        Ok(out)
    }
}

pub fn oracle_answers(q: &BooleanQuery, corpus: &[Document]) -> Result<BTreeSet<DocId>> {
    AttributeIndex::new(corpus).answers(q)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmark {
    pub docs: Vec<Document>,
    pub queries: Vec<JudgedQuery>,
    /// Query slots dropped after exhausting their retry budget.
    pub skipped: usize,
}

fn title(rng: &mut ChaCha8Rng) -> String {
    let mut word = |n: usize| {
        let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        s[..1].make_ascii_uppercase();
        s
    };
    let first = word(2);
    let second = word(3);
    format!("{first} {second}")
}

fn sample_query(
    vocab: &Vocab,
    doc_concepts: &[Vec<usize>],
    template: Template,
    rng: &mut ChaCha8Rng,
) -> Option<BooleanQuery> {
    let attrs = doc_concepts.choose(rng)?;
    let domain = vocab.same_domain(attrs[0]);
    let outside: Vec<usize> = domain.iter().copied().filter(|c| !attrs.contains(c)).collect();
    let pick_in = |k: usize, rng: &mut ChaCha8Rng| -> Option<Vec<usize>> {
        (attrs.len() >= k).then(|| attrs.choose_multiple(rng, k).copied().collect())
    };
    let concepts: Vec<usize> = match template {
        Template::Atom => pick_in(1, rng)?,
        Template::And2 => pick_in(2, rng)?,
        Template::And3 => pick_in(3, rng)?,
        Template::Or2 | Template::Or3 => {
            let a = *attrs.choose(rng)?;
            let rest: Vec<usize> = domain.iter().copied().filter(|&c| c != a).collect();
            let k = template.arity() - 1;
            if rest.len() < k {
                return None;
            }
            let mut v = vec![a];
            v.extend(rest.choose_multiple(rng, k).copied());
            v.shuffle(rng);
            v
        }
        Template::Not2 | Template::AndNot3 => {
            let mut v = pick_in(template.arity() - 1, rng)?;
            v.push(*outside.choose(rng)?);
            v
        }
    };
    let atoms = concepts.iter().map(|&c| vocab.concept(c).atom.clone()).collect();
    BooleanQuery::new(template, atoms).ok()
}

pub fn gen_benchmark(cfg: &GenConfig) -> Result<Benchmark> {
    cfg.validate()?;
    let vocab = &cfg.vocab;
    let domains: Vec<&Vec<usize>> = vocab.domains().values().filter(|d| d.len() >= 2).collect();
    if domains.is_empty() {
        return Err(Error::VocabTooSmall("no domain has two or more concepts".into()));
    }
    let mut rng = rng_for(cfg.seed, "datagen/benchmark");
    let mut docs = Vec::with_capacity(cfg.n_docs);
    let mut doc_concepts = Vec::with_capacity(cfg.n_docs);
    for doc_id in 0..cfg.n_docs {
        let domain = *domains.choose(&mut rng).expect("non-empty");
        let k = rng.gen_range(2..=5).min(domain.len());
        let concepts: Vec<usize> = domain.choose_multiple(&mut rng, k).copied().collect();
        let title = title(&mut rng);
        let mut sentences = vec![format!("{title} is a {}.", vocab.concept(concepts[0]).domain)];
        for &c in &concepts {
            let form = vocab.concept(c).forms.choose(&mut rng).expect("non-empty");
            let t = DOC_SENTENCES.choose(&mut rng).expect("non-empty");
            sentences.push(t.replace("{t}", &title).replace("{p}", form));
        }
        sentences[1..].shuffle(&mut rng);
        docs.push(Document {
            doc_id: doc_id as DocId,
            title,
            text: sentences.join(" "),
            attributes: concepts.iter().map(|&c| vocab.concept(c).atom.clone()).collect(),
        });
        doc_concepts.push(concepts);
    }

    let index = AttributeIndex::new(&docs);
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    let mut skipped = 0;
    for _ in 0..cfg.n_queries_per_template {
        for template in Template::ALL {
            let mut found = None;
            for _ in 0..MAX_QUERY_ATTEMPTS {
                let Some(q) = sample_query(vocab, &doc_concepts, template, &mut rng) else {
                    continue;
                };
                let text = q.render();
                if seen.contains(&text) {
                    continue;
                }
                // Atoms carried by no document are resampled as well.
                let Ok(relevant) = index.answers(&q) else {
                    continue;
                };
                if relevant.is_empty() {
                    continue;
                }
                found = Some((q, text, relevant));
                break;
            }
            match found {
                Some((query, text, relevant)) => {
                    seen.insert(text.clone());
                    queries.push(JudgedQuery { query_id: queries.len() as u32, query, text, relevant });
                }
                None => skipped += 1,
            }
        }
    }
    Ok(Benchmark { docs, queries, skipped })
}

pub fn triplet_stats(samples: &[TripletSample]) -> String {
    let mut counts: BTreeMap<Op, (usize, usize, usize)> = BTreeMap::new();
    for s in samples {
        let e = counts.entry(s.op).or_default();
        e.0 += 1;
        e.1 += s.positives.len();
        e.2 += s.negatives.len();
    }
    let mut out = String::from("op\tsamples\tpositives\tnegatives\n");
    for (op, (n, p, q)) in &counts {
        let _ = writeln!(out, "{op}\t{n}\t{p}\t{q}");
    }
    let _ = writeln!(out, "total\t{}\t\t", samples.len());
    out
}

pub fn benchmark_stats(bench: &Benchmark) -> String {
    let mut out = format!("documents\t{}\nskipped_queries\t{}\n", bench.docs.len(), bench.skipped);
    out.push_str("template\tqueries\tmean_relevant\tmax_relevant\n");
    for t in Template::ALL {
        let rel: Vec<usize> =
            bench.queries.iter().filter(|q| q.template() == t).map(|q| q.relevant.len()).collect();
        if rel.is_empty() {
            continue;
        }
        let mean = rel.iter().sum::<usize>() as f64 / rel.len() as f64;
        let max = rel.iter().max().copied().unwrap_or(0);
        let _ = writeln!(out, "{}\t{}\t{mean:.1}\t{max}", t.label(), rel.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn small_cfg() -> GenConfig {
        GenConfig { samples_per_op: 100, n_docs: 200, n_queries_per_template: 10, ..GenConfig::default() }
    }

    fn doc(id: DocId, attrs: &[&str]) -> Document {
        Document {
            doc_id: id,
            title: format!("d{id}"),
            text: String::new(),
            attributes: attrs.iter().map(|a| Atom::new(a).unwrap()).collect(),
        }
    }

    #[test]
    fn not_and_examples() {
        let gold = not_gold("movies about vietnam", "war");
        assert_eq!(gold, "movies about vietnam that are not war");
        assert_eq!(
            and_swapped("british historical dramas", "1960s historical films"),
            "1960s historical films and british historical dramas"
        );
    }

    #[test]
    fn generation_rules_hold() {
        let cfg = small_cfg();
        let ds = gen_triplets(&cfg).unwrap();
        let v = &cfg.vocab;
        assert_eq!(ds.samples.len(), 300);
        for s in &ds.samples {
            s.validate().unwrap();
            assert_eq!(s.positives.len(), 2);
            assert_eq!(s.negatives.len(), 3);
            let involved: Vec<usize> = (0..v.len()).filter(|&c| v.mentions(&s.anchor, c)).collect();
            match s.op {
                Op::Not => {
                    assert_eq!(involved.len(), 2, "{}", s.anchor);
                    // B is whichever concept follows the negation.
                    let (_, tail) = s.anchor.rsplit_once(" not ").unwrap();
                    let b = involved.iter().copied().find(|&c| v.mentions(tail, c)).unwrap();
                    assert!(s.negatives.iter().all(|n| v.mentions(n, b)));
                    assert!(s.positives.iter().all(|p| !v.mentions(p, b)));
                }
                Op::And => {
                    let (a, b) = (involved[0], involved[1]);
                    assert!(s.positives.iter().all(|p| v.mentions(p, a) && v.mentions(p, b)));
                    assert!(s.negatives.iter().all(|n| !(v.mentions(n, a) && v.mentions(n, b))));
                }
                Op::Or => {
                    let (a, b) = (involved[0], involved[1]);
                    assert!(s.positives.iter().all(|p| v.mentions(p, a) ^ v.mentions(p, b)));
                    assert!(s.negatives.iter().all(|n| !v.mentions(n, a) && !v.mentions(n, b)));
                }
            }
        }
        let anchors: HashSet<&str> = ds.samples.iter().map(|s| s.anchor.as_str()).collect();
        assert_eq!(anchors.len(), ds.samples.len());
    }

    #[test]
    fn and_first_positive_is_swap() {
        let ds = gen_triplets(&small_cfg()).unwrap();
        for s in ds.samples.iter().filter(|s| s.op == Op::And) {
            let (a, b) = s.anchor.split_once(" and ").unwrap();
            assert_eq!(s.positives[0], and_swapped(a, b));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg();
        assert_eq!(gen_triplets(&cfg).unwrap(), gen_triplets(&cfg).unwrap());
        assert_eq!(gen_benchmark(&cfg).unwrap(), gen_benchmark(&cfg).unwrap());
        let other = GenConfig { seed: 1, ..small_cfg() };
        assert_ne!(gen_triplets(&cfg).unwrap(), gen_triplets(&other).unwrap());
    }

    #[test]
    fn too_many_samples_for_vocab() {
        let lines: Vec<String> = (0..20).map(|i| format!("d{i}\tthing{i}")).collect();
        let cfg = GenConfig { vocab: Vocab::parse(&lines.join("\n")).unwrap(), ..small_cfg() };
        assert!(matches!(gen_triplets(&cfg), Err(Error::VocabTooSmall(_))));

        let lines: Vec<String> = (0..20).map(|i| format!("d\tthing{i}")).collect();
        let cfg = GenConfig {
            vocab: Vocab::parse(&lines.join("\n")).unwrap(),
            samples_per_op: 5000,
            ..small_cfg()
        };
        assert!(matches!(gen_triplets(&cfg), Err(Error::VocabTooSmall(_))));
    }

    #[test]
    fn oracle_set_algebra() {
        let docs = vec![
            doc(0, &["x"]),
            doc(1, &["x", "z"]),
            doc(2, &["x", "z"]),
            doc(3, &["y", "w"]),
            doc(4, &["x", "y"]),
            doc(5, &["x", "y", "c"]),
        ];
        let q = |s: &str| oracle_answers(&parse_query(s).unwrap(), &docs).unwrap();
        let ids = |v: &[DocId]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(q("z or y"), ids(&[1, 2, 3, 4, 5]));
        assert_eq!(q("x and y"), ids(&[4, 5]));
        assert_eq!(q("x not y"), ids(&[0, 1, 2]));
        assert_eq!(q("x and y not c"), ids(&[4]));
        assert_eq!(q("x and y and w"), ids(&[]));
        assert!(matches!(
            oracle_answers(&parse_query("nope").unwrap(), &docs),
            Err(Error::UnknownAttribute(_))
        ));
    }

    #[test]
    fn oracle_disjoint_union() {
        let docs = vec![doc(0, &["q"]), doc(1, &["p"]), doc(2, &["p"]), doc(3, &["r"])];
        let got = oracle_answers(&parse_query("p or r").unwrap(), &docs).unwrap();
        assert_eq!(got, [1, 2, 3].into());
    }

    #[test]
    fn benchmark_contract() {
        let cfg = GenConfig { n_docs: 500, n_queries_per_template: 20, ..small_cfg() };
        let b = gen_benchmark(&cfg).unwrap();
        assert_eq!(b.docs.len(), 500);
        assert!(b.docs.iter().enumerate().all(|(i, d)| d.doc_id as usize == i));
        assert!(b.docs.iter().all(|d| (2..=5).contains(&d.attributes.len())));
        for d in &b.docs {
            for a in &d.attributes {
                let c = cfg.vocab.find(a).unwrap();
                assert!(cfg.vocab.mentions(&d.text, c), "{} lacks {a}", d.text);
            }
        }
        for q in &b.queries {
            assert!(!q.relevant.is_empty());
            let brute: BTreeSet<DocId> = b
                .docs
                .iter()
                .filter(|d| q.query.matches(|a| d.attributes.contains(a)))
                .map(|d| d.doc_id)
                .collect();
            assert_eq!(brute, q.relevant);
            assert_eq!(parse_query(&q.text).unwrap(), q.query);
        }
        for t in Template::ALL {
            assert!(b.queries.iter().any(|q| q.template() == t), "{t} missing");
        }
    }

    #[test]
    fn split_is_stratified() {
        let mut samples = Vec::new();
        for (op, n) in [(Op::And, 300), (Op::Or, 350), (Op::Not, 350)] {
            for i in 0..n {
                samples.push(TripletSample {
                    op,
                    anchor: format!("{op}{i}"),
                    positives: vec!["p".into()],
                    negatives: vec!["n".into()],
                });
            }
        }
        let (train, eval) = split_dataset(&samples, 0.8, 3);
        assert_eq!((train.len(), eval.len()), (800, 200));
        assert_eq!(train.iter().filter(|s| s.op == Op::And).count(), 240);
        let (train2, eval2) = split_dataset(&samples, 0.8, 3);
        assert_eq!(train, train2);
        assert_eq!(eval, eval2);
        let anchors: HashSet<&str> =
            train.iter().chain(&eval).map(|s| s.anchor.as_str()).collect();
        assert_eq!(anchors.len(), 1000);
    }

    #[test]
    fn split_rounding_keeps_total() {
        let samples: Vec<TripletSample> = (0..1000)
            .map(|i| TripletSample {
                op: Op::ALL[i % 3],
                anchor: i.to_string(),
                positives: vec!["p".into()],
                negatives: vec!["n".into()],
            })
            .collect();
        let (train, eval) = split_dataset(&samples, 0.8, 0);
        assert_eq!((train.len(), eval.len()), (800, 200));
    }
}
