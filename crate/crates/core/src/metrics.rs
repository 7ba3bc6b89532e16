//! Automatic metrics for generated explanations.
//!
//! * BLEU-4 with add-one smoothing on orders 2..4, applied only when some
//!   order has zero matches.
//! * ROUGE-L F-measure from the longest common subsequence.
//! * METEOR-lite: exact-match alignment only, `alpha = 0.9`, fragmentation
//!   penalty `0.5 * (chunks / m)^3`.
//! * CIDEr (plain, no length penalty), scaled by 10.
//! * A greedy-matching embedding F1 over a pluggable [`Embedder`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Lowercased, punctuation-trimmed tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    /// Builds a sequence from already-normalized tokens. Empty strings are
    /// skipped.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect())
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{201F}' | '\u{2026}' | '\u{00AB}' | '\u{00BB}' | '\u{00A1}' | '\u{00BF}' | '\u{3001}' | '\u{3002}'
        )
}

/// Lowercases, splits on Unicode whitespace, and strips leading and
/// trailing punctuation from each piece. Interior punctuation such as the
/// apostrophe in "don't" is kept.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.to_lowercase()
            .split_whitespace()
            .map(|w| w.trim_matches(is_punct))
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect(),
    )
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Sufficient statistics for BLEU; they add across sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..4 {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.candidate_len += o.candidate_len;
        self.reference_len += o.reference_len;
    }
}

impl BleuStats {
    pub fn collect(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::contract("BLEU needs at least one reference"));
        }
        let c = candidate.tokens();
        let mut s = BleuStats {
            candidate_len: c.len(),
            ..Default::default()
        };
        for n in 1..=4 {
            let cand = ngrams(c, n);
            let mut max_ref: BTreeMap<&[String], usize> = BTreeMap::new();
            for r in references {
                for (g, k) in ngrams(r.tokens(), n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            s.matches[n - 1] = cand
                .iter()
                .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
            s.totals[n - 1] = c.len().saturating_sub(n - 1);
        }
        // Closest reference length; ties go to the shorter one.
        s.reference_len = references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&r| (r.abs_diff(c.len()), r))
            .unwrap();
        Ok(s)
    }

    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let smooth = self.matches.contains(&0);
        let log_sum: f64 = (0..4)
            .map(|n| {
                let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
                if n > 0 && smooth {
                    ((m + 1.0) / (t + 1.0)).ln()
                } else {
                    (m / t).ln()
                }
            })
            .sum();
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        (bp * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
    }
}

pub fn bleu4(candidate: &TokenSeq, references: &[TokenSeq]) -> Result<f64> {
    Ok(BleuStats::collect(candidate, references)?.score())
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let lcs = lcs_len(candidate.tokens(), reference.tokens());
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Matches and chunk count of a METEOR alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

const ALIGN_STATE_BUDGET: usize = 1 << 20;

/// Exact alignment: maximum matches, then minimum chunks.
///
/// Dynamic programming over (candidate position, used reference positions,
/// reference position matched by the previous candidate token). The state
/// space is small unless the sentences repeat many words; past a budget of
/// 2^20 states, or with references longer than 128 tokens, a greedy
/// left-to-right aligner is used instead. The greedy aligner still finds the
/// maximum number of matches but may overcount chunks.
pub fn align(candidate: &[String], reference: &[String]) -> Alignment {
    if reference.len() <= 128 {
        let mut solver = AlignSolver {
            cand: candidate,
            positions: candidate
                .iter()
                .map(|t| (0..reference.len()).filter(|&j| &reference[j] == t).collect())
                .collect(),
            memo: HashMap::new(),
            exhausted: false,
        };
        let (m, c) = solver.best(0, 0, None);
        if !solver.exhausted {
            return Alignment { matches: m, chunks: c };
        }
    }
    greedy_align(candidate, reference)
}

struct AlignSolver<'a> {
    cand: &'a [String],
    positions: Vec<Vec<usize>>,
    memo: HashMap<(usize, u128, Option<usize>), (usize, usize)>,
    exhausted: bool,
}

impl AlignSolver<'_> {
    fn better(a: (usize, usize), b: (usize, usize)) -> bool {
        a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    fn best(&mut self, i: usize, used: u128, prev: Option<usize>) -> (usize, usize) {
        if i == self.cand.len() || self.exhausted {
            return (0, 0);
        }
        if let Some(&v) = self.memo.get(&(i, used, prev)) {
            return v;
        }
        if self.memo.len() >= ALIGN_STATE_BUDGET {
            self.exhausted = true;
            return (0, 0);
        }
        let mut best = self.best(i + 1, used, None);
        for k in 0..self.positions[i].len() {
            let j = self.positions[i][k];
            if used & (1u128 << j) != 0 {
                continue;
            }
            let (m, c) = self.best(i + 1, used | (1u128 << j), Some(j));
            let starts_chunk = !(j > 0 && prev == Some(j - 1));
            let cand = (m + 1, c + starts_chunk as usize);
            if Self::better(cand, best) {
                best = cand;
            }
        }
        self.memo.insert((i, used, prev), best);
        best
    }
}

fn greedy_align(candidate: &[String], reference: &[String]) -> Alignment {
    let mut used = vec![false; reference.len()];
    let mut prev: Option<usize> = None;
    let mut a = Alignment { matches: 0, chunks: 0 };
    for t in candidate {
        let next = prev.map(|p| p + 1).filter(|&j| j < reference.len() && !used[j] && &reference[j] == t);
        let pick = next.or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == t));
        match pick {
            Some(j) => {
                if next.is_none() {
                    a.chunks += 1;
                }
                used[j] = true;
                a.matches += 1;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    a
}

pub fn meteor_from_alignment(a: Alignment, cand_len: usize, ref_len: usize) -> f64 {
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / cand_len as f64;
    let r = m / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

pub fn meteor_lite(candidate: &TokenSeq, reference: &TokenSeq) -> f64 {
    let a = align(candidate.tokens(), reference.tokens());
    meteor_from_alignment(a, candidate.len(), reference.len())
}

type NgramVec<'a> = BTreeMap<&'a [String], f64>;

fn cosine(a: &NgramVec<'_>, b: &NgramVec<'_>) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, v)| b.get(g).map(|w| v * w)).sum();
    dot / (na * nb)
}

/// CIDEr of each candidate against its own references, with document
/// frequencies taken over the reference sets of the whole corpus.
pub fn cider_per_document(candidates: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<Vec<f64>> {
    if candidates.is_empty() || candidates.len() != references.len() {
        return Err(Error::contract(format!(
            "CIDEr needs matching non-empty corpora, got {} candidates and {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if references.iter().any(|r| r.is_empty()) {
        return Err(Error::contract("every CIDEr document needs at least one reference"));
    }
    let log_n = (references.len() as f64).ln();
    let mut scores = vec![0.0; candidates.len()];
    for n in 1..=4 {
        let mut df: HashMap<&[String], usize> = HashMap::new();
        for refs in references {
            let grams: BTreeSet<&[String]> = refs
                .iter()
                .flat_map(|r| ngrams(r.tokens(), n).into_keys())
                .collect();
            for g in grams {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        fn tfidf<'t>(t: &'t TokenSeq, n: usize, df: &HashMap<&[String], usize>, log_n: f64) -> NgramVec<'t> {
            ngrams(t.tokens(), n)
                .into_iter()
                .map(|(g, k)| {
                    let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
                    (g, k as f64 * (log_n - d.ln()))
                })
                .collect()
        }
        for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
            let cv = tfidf(cand, n, &df, log_n);
            let sim: f64 = refs.iter().map(|r| cosine(&cv, &tfidf(r, n, &df, log_n))).sum::<f64>() / refs.len() as f64;
            scores[i] += sim / 4.0;
        }
    }
    Ok(scores.into_iter().map(|s| 10.0 * s).collect())
}

/// Corpus CIDEr: the mean of the per-document scores.
pub fn cider(candidates: &[TokenSeq], references: &[Vec<TokenSeq>]) -> Result<f64> {
    let per = cider_per_document(candidates, references)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Maps a token to a fixed-width vector.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, token: &str) -> Result<Vec<f64>>;
}

/// One dimension per vocabulary entry; distinct tokens are orthogonal.
#[derive(Debug, Clone)]
pub struct OneHotEmbedder {
    index: HashMap<String, usize>,
}

impl OneHotEmbedder {
    pub fn fit<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let vocab: BTreeSet<&str> = tokens.into_iter().collect();
        OneHotEmbedder {
            index: vocab.into_iter().enumerate().map(|(i, t)| (t.to_string(), i)).collect(),
        }
    }

    /// Vocabulary built from the tokenization of every text.
    pub fn fit_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let seqs: Vec<TokenSeq> = texts.into_iter().map(tokenize).collect();
        OneHotEmbedder::fit(seqs.iter().flat_map(|s| s.tokens().iter().map(String::as_str)))
    }
}

impl Embedder for OneHotEmbedder {
    fn name(&self) -> &str {
        "one-hot"
    }

    fn dim(&self) -> usize {
        self.index.len()
    }

    fn embed(&self, token: &str) -> Result<Vec<f64>> {
        let i = *self
            .index
            .get(token)
            .ok_or_else(|| Error::backend("one-hot", format!("token {token:?} not in vocabulary"), None))?;
        let mut v = vec![0.0; self.index.len()];
        v[i] = 1.0;
        Ok(v)
    }
}

fn unit_vectors(seq: &TokenSeq, embedder: &dyn Embedder) -> Result<Vec<Vec<f64>>> {
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    seq.tokens()
        .iter()
        .map(|t| {
            if let Some(v) = cache.get(t.as_str()) {
                return Ok(v.clone());
            }
            let v = embedder.embed(t)?;
            if v.len() != embedder.dim() {
                return Err(Error::backend(embedder.name(), "embedding width mismatch", None));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::backend(embedder.name(), format!("degenerate embedding for {t:?}"), None));
            }
            let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
            cache.insert(t, v.clone());
            Ok(v)
        })
        .collect()
}

/// Greedy-matching embedding F1: recall averages, over reference tokens,
/// the best cosine against any candidate token; precision is symmetric.
pub fn semantic_score(candidate: &TokenSeq, reference: &TokenSeq, embedder: &dyn Embedder) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok(0.0);
    }
    let c = unit_vectors(candidate, embedder)?;
    let r = unit_vectors(reference, embedder)?;
    let sim: Vec<Vec<f64>> = r
        .iter()
        .map(|rv| c.iter().map(|cv| rv.iter().zip(cv).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let recall = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
        / r.len() as f64;
    let precision = (0..c.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / c.len() as f64;
    if precision + recall <= 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0))
}

/// One scored pair of texts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScores {
    pub id: String,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub semantic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub semantic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCounts {
    pub samples: usize,
    pub candidate_tokens: usize,
    pub reference_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_sample: Vec<SampleScores>,
    pub corpus: CorpusScores,
    pub counts: ReportCounts,
    /// Which variant each reported metric is.
    pub variants: BTreeMap<&'static str, &'static str>,
}

/// Scores every pair. Corpus BLEU pools n-gram counts and CIDEr is computed
/// corpus-wide; the other corpus figures are macro averages.
pub fn score_corpus(pairs: &[EvalPair], embedder: &dyn Embedder) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::input("cannot score an empty corpus"));
    }
    let mut seen = HashSet::new();
    let dups: BTreeSet<&str> = pairs.iter().filter(|p| !seen.insert(&p.id)).map(|p| p.id.as_str()).collect();
    if !dups.is_empty() {
        return Err(Error::input(format!("duplicate ids: {}", dups.into_iter().collect::<Vec<_>>().join(", "))));
    }

    let cands: Vec<TokenSeq> = pairs.iter().map(|p| tokenize(&p.candidate)).collect();
    let refs: Vec<TokenSeq> = pairs.iter().map(|p| tokenize(&p.reference)).collect();

    let rows: Vec<(SampleScores, BleuStats)> = pairs
        .par_iter()
        .zip(cands.par_iter().zip(refs.par_iter()))
        .map(|(p, (c, r))| {
            let stats = BleuStats::collect(c, std::slice::from_ref(r))?;
            Ok((
                SampleScores {
                    id: p.id.clone(),
                    bleu4: stats.score(),
                    rouge_l: rouge_l(c, r),
                    meteor: meteor_lite(c, r),
                    semantic: semantic_score(c, r, embedder)?,
                },
                stats,
            ))
        })
        .collect::<Result<_>>()?;

    let mut pooled = BleuStats::default();
    for (_, s) in &rows {
        pooled += *s;
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&SampleScores) -> f64| rows.iter().map(|(s, _)| f(s)).sum::<f64>() / n;
    let ref_sets: Vec<Vec<TokenSeq>> = refs.iter().map(|r| vec![r.clone()]).collect();
    let corpus = CorpusScores {
        bleu4: pooled.score(),
        rouge_l: mean(|s| s.rouge_l),
        meteor: mean(|s| s.meteor),
        cider: cider(&cands, &ref_sets)?,
        semantic: mean(|s| s.semantic),
    };
    let counts = ReportCounts {
        samples: rows.len(),
        candidate_tokens: cands.iter().map(TokenSeq::len).sum(),
        reference_tokens: refs.iter().map(TokenSeq::len).sum(),
    };
    let variants = BTreeMap::from([
        ("bleu4", "bleu-4, add-one smoothing on orders 2-4 when any order has no match"),
        ("cider", "cider (no length penalty), x10"),
        ("meteor", "meteor-lite, exact match only"),
        ("rouge_l", "rouge-l f-measure"),
        ("semantic", "greedy-matching embedding f1"),
    ]);
    Ok(MetricReport {
        per_sample: rows.into_iter().map(|(s, _)| s).collect(),
        corpus,
        counts,
        variants,
    })
}
