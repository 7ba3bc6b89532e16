//! Corpus model and construction tooling: cumulative clip concatenation,
//! near-duplicate frame removal, the annotator agreement gate with majority
//! vote, and corpus statistics.
//!
//! The corpus is JSON lines, one conversation per line:
//!
//! ```json
//! {"id":"c1",
//!  "utterances":[{"id":"u0","speaker":"Ross","text":"...","emotion":"neutral",
//!                 "video_ref":"c1_u0.ftc","start":0.0,"end":2.5}],
//!  "annotations":[{"utterance_id":"u0","annotator_a":"...","annotator_b":"...",
//!                  "votes":["a","b","a"],"final":null}]}
//! ```
//!
//! `annotations` and the annotation fields `votes` / `final` are optional.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::metrics::{semantic_score, tokenize, Embedder};

/// Agreement scores strictly above this go to a vote.
pub const AGREEMENT_THRESHOLD: f64 = 0.75;

/// Default mean-absolute-difference threshold (0..255 intensity units).
pub const DEFAULT_DEDUP_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub text: String,
    pub emotion: Emotion,
    pub video_ref: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
}

/// Annotation input as stored in the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAnnotation {
    pub utterance_id: String,
    pub annotator_a: String,
    pub annotator_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<Vec<Choice>>,
    /// Consensus text agreed in discussion.
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<RawAnnotation>,
}

impl Conversation {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (k, u) in self.utterances.iter().enumerate() {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::input(format!("conversation {}: duplicate utterance id {:?}", self.id, u.id)));
            }
            if !(u.start.is_finite() && u.end.is_finite() && u.end > u.start) {
                return Err(Error::input(format!(
                    "conversation {}: utterance {:?} has end {} not after start {}",
                    self.id, u.id, u.end, u.start
                )));
            }
            if k > 0 && u.start < self.utterances[k - 1].start {
                return Err(Error::input(format!(
                    "conversation {}: utterance {:?} starts before its predecessor",
                    self.id, u.id
                )));
            }
        }
        for a in &self.annotations {
            let target = self
                .utterance(&a.utterance_id)
                .ok_or_else(|| Error::input(format!("conversation {}: annotation for unknown utterance {:?}", self.id, a.utterance_id)))?;
            if target.emotion.is_neutral() {
                return Err(Error::input(format!(
                    "conversation {}: utterance {:?} is neutral and cannot be annotated",
                    self.id, a.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn utterance(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.utterances.iter().position(|u| u.id == id)
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped; errors name the
/// 1-based line.
pub fn parse_corpus(text: &str) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: Conversation = serde_json::from_str(line)
            .map_err(|e| Error::input(format!("line {}: {e}", i + 1)))?;
        c.validate().map_err(|e| Error::input(format!("line {}: {e}", i + 1)))?;
        if !ids.insert(c.id.clone()) {
            return Err(Error::input(format!("line {}: duplicate conversation id {:?}", i + 1, c.id)));
        }
        out.push(c);
    }
    Ok(out)
}

/// The utterances a clip is stitched from: `0..=target`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipSpec {
    pub conversation_id: String,
    pub target: String,
    pub utterance_ids: Vec<String>,
    pub video_refs: Vec<String>,
    pub start: f64,
    pub end: f64,
}

/// One clip per utterance, each covering that utterance and everything
/// before it.
pub fn cumulative_clips(c: &Conversation) -> Result<Vec<ClipSpec>> {
    if c.utterances.is_empty() {
        return Err(Error::input(format!("conversation {} has no utterances", c.id)));
    }
    Ok((0..c.utterances.len())
        .map(|k| {
            let span = &c.utterances[..=k];
            ClipSpec {
                conversation_id: c.id.clone(),
                target: span[k].id.clone(),
                utterance_ids: span.iter().map(|u| u.id.clone()).collect(),
                video_refs: span.iter().map(|u| u.video_ref.clone()).collect(),
                start: span[0].start,
                end: span[k].end,
            }
        })
        .collect())
}

fn mean_abs_diff(a: &[u8], b: &[u8]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u64).sum::<u64>() as f64 / a.len() as f64
}

/// Indices of the frames kept: the first frame, then every frame whose mean
/// absolute pixel difference to the last kept frame exceeds `threshold`.
/// Frames of different sizes always count as distinct.
pub fn dedup_frames(frames: &[Vec<u8>], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::input(format!("dedup threshold {threshold} must be a non-negative number")));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        match kept.last() {
            Some(&last) if mean_abs_diff(&frames[last], f) <= threshold => {}
            _ => kept.push(i),
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Vote,
    Discussion,
}

/// Strictly above [`AGREEMENT_THRESHOLD`] votes; everything else discusses.
pub fn route_for_score(score: f64) -> Route {
    if score > AGREEMENT_THRESHOLD {
        Route::Vote
    } else {
        Route::Discussion
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateDecision {
    pub agreement: f64,
    pub route: Route,
}

pub fn agreement_gate(a: &str, b: &str, embedder: &dyn Embedder) -> Result<GateDecision> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(Error::input("annotations must be non-empty"));
    }
    let agreement = semantic_score(&tokenize(a), &tokenize(b), embedder)?;
    Ok(GateDecision {
        agreement,
        route: route_for_score(agreement),
    })
}

/// Majority over exactly three votes.
pub fn resolve_vote<'a>(a: &'a str, b: &'a str, votes: &[Choice]) -> Result<&'a str> {
    if votes.len() != 3 {
        return Err(Error::input(format!("expected 3 votes, got {}", votes.len())));
    }
    let for_a = votes.iter().filter(|&&v| v == Choice::A).count();
    Ok(if for_a >= 2 { a } else { b })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationRecord {
    pub utterance_id: String,
    pub annotator_a: String,
    pub annotator_b: String,
    pub agreement: f64,
    pub route: Route,
    pub votes: Option<Vec<Choice>>,
    /// `None` while the record is still waiting for votes or a consensus.
    #[serde(rename = "final")]
    pub final_text: Option<String>,
}

/// Runs the gate and, when the inputs allow it, settles the final text:
/// voted records take the majority choice, discussed records take the
/// supplied consensus.
pub fn resolve_annotation(raw: &RawAnnotation, embedder: &dyn Embedder) -> Result<AnnotationRecord> {
    let gate = agreement_gate(&raw.annotator_a, &raw.annotator_b, embedder)?;
    let final_text = match gate.route {
        Route::Vote => match &raw.votes {
            Some(v) => Some(resolve_vote(&raw.annotator_a, &raw.annotator_b, v)?.to_string()),
            None => None,
        },
        Route::Discussion => raw.final_text.clone().filter(|t| !t.trim().is_empty()),
    };
    Ok(AnnotationRecord {
        utterance_id: raw.utterance_id.clone(),
        annotator_a: raw.annotator_a.clone(),
        annotator_b: raw.annotator_b.clone(),
        agreement: gate.agreement,
        route: gate.route,
        votes: raw.votes.clone(),
        final_text,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub emotion_histogram: BTreeMap<String, usize>,
    /// Only emotions that occur have an entry.
    pub length_stats: BTreeMap<String, LengthStats>,
    /// Word-length summary over all records.
    pub overall: Option<LengthStats>,
    pub instance_count: usize,
}

fn summarize(lengths: &[usize]) -> Option<LengthStats> {
    Some(LengthStats {
        min: *lengths.iter().min()?,
        max: *lengths.iter().max()?,
        mean: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
    })
}

/// Emotion histogram and per-emotion explanation lengths in words.
pub fn corpus_stats<'a>(records: impl IntoIterator<Item = (Emotion, &'a str)>) -> Result<CorpusStats> {
    let mut lengths: BTreeMap<Emotion, Vec<usize>> = BTreeMap::new();
    let mut all = Vec::new();
    for (e, cause) in records {
        if e.is_neutral() {
            return Err(Error::input("neutral is not an annotated emotion"));
        }
        let n = tokenize(cause).len();
        lengths.entry(e).or_default().push(n);
        all.push(n);
    }
    Ok(CorpusStats {
        emotion_histogram: Emotion::ANNOTATED
            .iter()
            .map(|e| (e.to_string(), lengths.get(e).map_or(0, Vec::len)))
            .collect(),
        length_stats: lengths
            .iter()
            .filter_map(|(e, l)| Some((e.to_string(), summarize(l)?)))
            .collect(),
        overall: summarize(&all),
        instance_count: all.len(),
    })
}

/// Like [`corpus_stats`] but with labels as text, rejecting anything
/// outside the six annotated emotions.
pub fn corpus_stats_labeled<'a>(records: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<CorpusStats> {
    let parsed: Vec<(Emotion, &str)> = records
        .into_iter()
        .map(|(label, cause)| {
            let e: Emotion = label.parse()?;
            if e.is_neutral() {
                return Err(Error::input("neutral is not an annotated emotion"));
            }
            Ok((e, cause))
        })
        .collect::<Result<_>>()?;
    corpus_stats(parsed)
}
