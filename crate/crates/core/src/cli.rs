//! Command implementations behind the `ecx` binary. Each command is a plain
//! function returning a serializable value; the binary only parses flags,
//! prints and maps errors to exit codes.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::container;
use crate::dataset::{self, AnnotationRecord, Conversation, Route};
use crate::detect::{self, CenterCellHead, ConstantHead, DetectionHead, GridContrastExtractor};
use crate::emotion::{
    attend, summarize_video_emotions, ClassifierHead, Emotion, FaceCrop, FacePrediction, GridMeanExtractor,
    MfnExtractor, VideoEmotionSummary,
};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalPair, MetricReport, OneHotEmbedder};
use crate::prompt::{self, assemble_prompt, generate_explanation, GenerationBackend, PromptBundle};
use crate::tensor::Tensor;
use crate::vision::{self, encoder_by_name, FrameEncoder, FrameSpec, Projection, VideoTokens};

/// Decoded `[T, H, W, C]` frames with integral intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub spec: FrameSpec,
    pub frames: Vec<Vec<u8>>,
}

impl Video {
    pub fn from_tensor(t: &Tensor, patch: usize) -> Result<Self> {
        let &[n, h, w, c] = t.shape() else {
            return Err(Error::input(format!("video container must be [T, H, W, C], got {:?}", t.shape())));
        };
        if n == 0 {
            return Err(Error::input("video has no frames"));
        }
        let spec = FrameSpec::new(h, w, c, patch)?;
        if let Some(i) = t.data().iter().position(|v| v.fract() != 0.0 || !(0.0..=255.0).contains(v)) {
            return Err(Error::input(format!(
                "video value {} at element {i} is not an integer in 0..=255",
                t.data()[i]
            )));
        }
        let frames = t
            .data()
            .chunks(spec.frame_len())
            .map(|f| f.iter().map(|&v| v as u8).collect())
            .collect();
        Ok(Video { spec, frames })
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.frames.iter().flatten().map(|&b| b as f64).collect();
        Tensor::new(
            vec![self.frames.len(), self.spec.height, self.spec.width, self.spec.channels],
            data,
        )
        .expect("pixel data is finite")
    }

    pub fn load(path: &Path, patch: usize) -> Result<Self> {
        let t = container::load(path)?;
        Video::from_tensor(&t, patch).map_err(|e| match e {
            Error::Input(m) => Error::input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Appends clips back to back. All parts must share one frame geometry.
    pub fn concat(parts: &[&Video]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::input("nothing to concatenate"))?;
        if let Some(p) = parts.iter().find(|p| p.spec != first.spec) {
            return Err(Error::input(format!(
                "clip geometry {}x{}x{} differs from {}x{}x{}",
                p.spec.height, p.spec.width, p.spec.channels, first.spec.height, first.spec.width, first.spec.channels
            )));
        }
        Ok(Video {
            spec: first.spec,
            frames: parts.iter().flat_map(|p| p.frames.iter().cloned()).collect(),
        })
    }

    /// Drops near-duplicate consecutive frames.
    pub fn dedup(&self, threshold: f64) -> Result<(Video, Vec<usize>)> {
        let kept = dataset::dedup_frames(&self.frames, threshold)?;
        let frames = kept.iter().map(|&i| self.frames[i].clone()).collect();
        Ok((Video { spec: self.spec, frames }, kept))
    }
}

/// Every stage wired from one configuration.
pub struct Pipeline {
    cfg: RunConfig,
    encoder: Box<dyn FrameEncoder>,
    projection: Projection,
    extractor: GridContrastExtractor,
    head: Box<dyn DetectionHead>,
    mfn: GridMeanExtractor,
    classifier: ClassifierHead,
}

/// Classifier weights draw from a stream separate from the projection's.
const CLASSIFIER_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = encoder_by_name(&cfg.encoder, cfg.embed_dim)?;
        let projection = match &cfg.projection_weights {
            Some(p) => {
                let w = container::load(p)?;
                if w.shape() != [cfg.embed_dim, cfg.token_dim] {
                    return Err(Error::input(format!(
                        "projection weights are {:?}, config needs [{}, {}]",
                        w.shape(),
                        cfg.embed_dim,
                        cfg.token_dim
                    )));
                }
                Projection::new(w)?
            }
            None => Projection::seeded(cfg.embed_dim, cfg.token_dim, cfg.seed),
        };
        let stride = cfg.anchor_stride as usize;
        let head: Box<dyn DetectionHead> = match cfg.detection_head.as_str() {
            "constant" => Box::new(ConstantHead {
                score: cfg.constant_head_score,
                deltas: Default::default(),
            }),
            _ => Box::new(CenterCellHead { stride: cfg.anchor_stride }),
        };
        let mfn = GridMeanExtractor {
            hf: cfg.feature_h,
            wf: cfg.feature_w,
            cf: cfg.feature_c,
        };
        let flat = cfg.feature_h * cfg.feature_w * cfg.feature_c;
        let classifier = match (&cfg.classifier_weights, &cfg.classifier_bias) {
            (Some(w), b) => {
                let bias = match b {
                    Some(b) => container::load(b)?,
                    None => Tensor::zeros(&[7]),
                };
                let w = container::load(w)?;
                if w.shape() != [flat, 7] {
                    return Err(Error::input(format!("classifier weights are {:?}, config needs [{flat}, 7]", w.shape())));
                }
                ClassifierHead::new(w, bias).map_err(|e| Error::input(e.to_string()))?
            }
            (None, Some(_)) => return Err(Error::input("classifier_bias given without classifier_weights")),
            (None, None) => ClassifierHead::seeded(flat, cfg.seed ^ CLASSIFIER_SEED_SALT),
        };
        Ok(Pipeline {
            encoder,
            projection,
            extractor: GridContrastExtractor { stride },
            head,
            mfn,
            classifier,
            cfg,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Frames to `(T + N) x K` language-space tokens.
    pub fn fuse(&self, v: &Video) -> Result<VideoTokens> {
        vision::video_tokens(&v.frames, &v.spec, self.encoder.as_ref(), &self.projection)
    }

    /// Detects faces on every frame and classifies each one.
    pub fn faces(&self, v: &Video) -> Result<VideoEmotionSummary> {
        let det_cfg = self.cfg.detector();
        let per_frame: Vec<Vec<FacePrediction>> = v
            .frames
            .par_iter()
            .enumerate()
            .map(|(i, frame)| {
                let dets = detect::detect_faces(frame, &v.spec, &self.extractor, self.head.as_ref(), &det_cfg)?;
                dets.into_iter()
                    .map(|d| {
                        let crop = FaceCrop::from_frame(frame, &v.spec, &d.bbox, i)?;
                        let f = self.mfn.extract(&crop)?;
                        let maps = attend(&f, &self.cfg.dda_kernel)?;
                        Ok(FacePrediction {
                            frame: i,
                            bbox: d.bbox,
                            face_score: d.face_score,
                            prediction: self.classifier.classify(&maps.fused)?,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(summarize_video_emotions(per_frame.into_iter().flatten().collect()))
    }
}

/// Dialogue text handed to the generator for one target utterance.
pub fn user_query(c: &Conversation, target: usize) -> String {
    let mut q = String::from("Conversation:\n");
    for u in &c.utterances[..=target] {
        q.push_str(&format!("{}: {}\n", u.speaker, u.text));
    }
    let t = &c.utterances[target];
    q.push_str(&format!(
        "Target utterance by {}: \"{}\" (emotion: {}). What caused this emotion?",
        t.speaker, t.text, t.emotion
    ));
    q
}

/// Primary output of `explain`. Latency is reported separately so that
/// reruns print identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainOutput {
    pub conversation_id: String,
    pub utterance_id: String,
    pub backend_id: String,
    pub explanation: String,
    pub facial_emotion: String,
    pub faces: usize,
    pub frames_in: usize,
    pub frames_kept: usize,
    pub token_shape: [usize; 2],
    pub prompt: String,
}

fn read_corpus(path: &Path) -> Result<Vec<Conversation>> {
    let text = std::fs::read_to_string(path)?;
    dataset::parse_corpus(&text).map_err(|e| match e {
        Error::Input(m) => Error::input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn corpus_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads each referenced clip once.
struct ClipCache<'a> {
    dir: &'a Path,
    patch: usize,
    loaded: HashMap<String, Video>,
}

impl<'a> ClipCache<'a> {
    fn new(dir: &'a Path, patch: usize) -> Self {
        ClipCache {
            dir,
            patch,
            loaded: HashMap::new(),
        }
    }

    fn stitched(&mut self, refs: &[String]) -> Result<Video> {
        for r in refs {
            if !self.loaded.contains_key(r) {
                let v = Video::load(&self.dir.join(r), self.patch)?;
                self.loaded.insert(r.clone(), v);
            }
        }
        let parts: Vec<&Video> = refs.iter().map(|r| &self.loaded[r]).collect();
        Video::concat(&parts)
    }
}

pub fn cmd_fuse(video: &Path, cfg: &RunConfig) -> Result<VideoTokens> {
    let p = Pipeline::new(cfg.clone())?;
    p.fuse(&Video::load(video, cfg.patch_size)?)
}

pub fn cmd_faces(video: &Path, cfg: &RunConfig) -> Result<VideoEmotionSummary> {
    let p = Pipeline::new(cfg.clone())?;
    p.faces(&Video::load(video, cfg.patch_size)?)
}

/// Explains one utterance (the last one when `utterance` is `None`).
/// Returns the output and the backend latency in milliseconds.
pub fn cmd_explain(
    corpus: &Path,
    conversation: &str,
    utterance: Option<&str>,
    cfg: &RunConfig,
) -> Result<(ExplainOutput, f64)> {
    let backend = prompt::backend_by_name(&cfg.backend, &cfg.endpoint, cfg.timeout())?;
    explain_with(corpus, conversation, utterance, cfg, backend.as_ref())
}

pub fn explain_with(
    corpus: &Path,
    conversation: &str,
    utterance: Option<&str>,
    cfg: &RunConfig,
    backend: &dyn GenerationBackend,
) -> Result<(ExplainOutput, f64)> {
    let convs = read_corpus(corpus)?;
    let c = convs
        .iter()
        .find(|c| c.id == conversation)
        .ok_or_else(|| Error::input(format!("no conversation {conversation:?} in {}", corpus.display())))?;
    let target = match utterance {
        Some(id) => c
            .position(id)
            .ok_or_else(|| Error::input(format!("conversation {conversation:?} has no utterance {id:?}")))?,
        None => c
            .utterances
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::input(format!("conversation {conversation:?} is empty")))?,
    };
    let p = Pipeline::new(cfg.clone())?;
    let dir = corpus_dir(corpus);
    let refs: Vec<String> = c.utterances[..=target].iter().map(|u| u.video_ref.clone()).collect();
    let clip = ClipCache::new(&dir, cfg.patch_size).stitched(&refs)?;
    let (video, _) = clip.dedup(cfg.dedup_threshold)?;

    let tokens = p.fuse(&video)?;
    let faces = p.faces(&video)?;
    let bundle = PromptBundle::new(cfg.instruction.clone(), user_query(c, target), tokens, faces.dominant)?;
    let rendered = assemble_prompt(&bundle)?;
    let result = generate_explanation(&bundle, backend)?;
    let out = ExplainOutput {
        conversation_id: c.id.clone(),
        utterance_id: c.utterances[target].id.clone(),
        backend_id: result.backend_id,
        explanation: result.explanation,
        facial_emotion: bundle.emotion_tag().to_string(),
        faces: faces.per_face.len(),
        frames_in: clip.frames.len(),
        frames_kept: video.frames.len(),
        token_shape: [bundle.video_tokens.rows(), bundle.video_tokens.width()],
        prompt: rendered.text(),
    };
    Ok((out, result.latency_ms))
}

/// One line of a predictions or references file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

pub fn parse_text_records(text: &str) -> Result<Vec<TextRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TextRecord =
            serde_json::from_str(line).map_err(|e| Error::input(format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// Pairs predictions with references by id, in prediction order.
pub fn align_records(preds: &[TextRecord], refs: &[TextRecord]) -> Result<Vec<EvalPair>> {
    let by_id: HashMap<&str, &TextRecord> = refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let pred_ids: BTreeSet<&str> = preds.iter().map(|r| r.id.as_str()).collect();
    let missing_ref: Vec<&str> = pred_ids.iter().copied().filter(|id| !by_id.contains_key(id)).collect();
    let missing_pred: BTreeSet<&str> = by_id.keys().copied().filter(|id| !pred_ids.contains(id)).collect();
    if !missing_ref.is_empty() || !missing_pred.is_empty() {
        let mut parts = Vec::new();
        if !missing_ref.is_empty() {
            parts.push(format!("no reference for: {}", missing_ref.join(", ")));
        }
        if !missing_pred.is_empty() {
            parts.push(format!(
                "no prediction for: {}",
                missing_pred.into_iter().collect::<Vec<_>>().join(", ")
            ));
        }
        return Err(Error::input(format!("id mismatch; {}", parts.join("; "))));
    }
    if refs.len() != by_id.len() {
        return Err(Error::input("duplicate ids in references"));
    }
    Ok(preds
        .iter()
        .map(|p| EvalPair {
            id: p.id.clone(),
            candidate: p.text.clone(),
            reference: by_id[p.id.as_str()].text.clone(),
        })
        .collect())
}

pub fn cmd_score(predictions: &Path, references: &Path, cfg: &RunConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let preds = parse_text_records(&std::fs::read_to_string(predictions)?)
        .map_err(|e| Error::input(format!("{}: {e}", predictions.display())))?;
    let refs = parse_text_records(&std::fs::read_to_string(references)?)
        .map_err(|e| Error::input(format!("{}: {e}", references.display())))?;
    let pairs = align_records(&preds, &refs)?;
    let embedder = OneHotEmbedder::fit_texts(pairs.iter().flat_map(|p| [p.candidate.as_str(), p.reference.as_str()]));
    metrics::score_corpus(&pairs, &embedder)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetCommand {
    Clips,
    Dedup,
    Gate,
    Stats,
}

/// JSON report plus human-readable notes for standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOutput {
    pub report: Value,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct GateRow<'a> {
    conversation_id: &'a str,
    #[serde(flatten)]
    record: AnnotationRecord,
}

fn file_stem_for(conv: &str, target: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' || ch == '_' { ch } else { '_' })
            .collect()
    };
    format!("{}__{}.ftc", clean(conv), clean(target))
}

/// `out` is the directory deduplicated containers are written to; only
/// `Dedup` uses it.
pub fn cmd_dataset(sub: DatasetCommand, corpus: &Path, cfg: &RunConfig, out: Option<&Path>) -> Result<DatasetOutput> {
    cfg.validate()?;
    let convs = read_corpus(corpus)?;
    let mut notes = Vec::new();
    let report = match sub {
        DatasetCommand::Clips => {
            let mut clips = Vec::new();
            for c in &convs {
                clips.extend(dataset::cumulative_clips(c)?);
            }
            json!({ "clips": clips })
        }
        DatasetCommand::Dedup => {
            let out = out.ok_or_else(|| Error::input("dataset dedup needs --out DIR"))?;
            std::fs::create_dir_all(out)?;
            let dir = corpus_dir(corpus);
            let mut cache = ClipCache::new(&dir, cfg.patch_size);
            let mut rows = Vec::new();
            let mut written = BTreeSet::new();
            for c in &convs {
                for clip in dataset::cumulative_clips(c)? {
                    let video = cache.stitched(&clip.video_refs)?;
                    let (deduped, kept) = video.dedup(cfg.dedup_threshold)?;
                    let name = file_stem_for(&clip.conversation_id, &clip.target);
                    if !written.insert(name.clone()) {
                        return Err(Error::input(format!("two clips map to output file {name}")));
                    }
                    container::save(&out.join(&name), &deduped.to_tensor())?;
                    rows.push(json!({
                        "conversation_id": clip.conversation_id,
                        "target": clip.target,
                        "frames_in": video.frames.len(),
                        "kept": kept,
                        "file": name,
                    }));
                }
            }
            json!({ "clips": rows, "threshold": cfg.dedup_threshold })
        }
        DatasetCommand::Gate => {
            let texts = convs
                .iter()
                .flat_map(|c| &c.annotations)
                .flat_map(|a| [a.annotator_a.as_str(), a.annotator_b.as_str()]);
            let embedder = OneHotEmbedder::fit_texts(texts);
            let mut rows = Vec::new();
            let (mut vote, mut discussion, mut unresolved) = (0usize, 0usize, 0usize);
            for c in &convs {
                for a in &c.annotations {
                    let record = dataset::resolve_annotation(a, &embedder)?;
                    match record.route {
                        Route::Vote => vote += 1,
                        Route::Discussion => discussion += 1,
                    }
                    if record.final_text.is_none() {
                        unresolved += 1;
                    }
                    rows.push(GateRow {
                        conversation_id: &c.id,
                        record,
                    });
                }
            }
            json!({
                "records": rows,
                "summary": { "vote": vote, "discussion": discussion, "unresolved": unresolved },
            })
        }
        DatasetCommand::Stats => {
            let texts = convs
                .iter()
                .flat_map(|c| &c.annotations)
                .flat_map(|a| [a.annotator_a.as_str(), a.annotator_b.as_str()]);
            let embedder = OneHotEmbedder::fit_texts(texts);
            let mut records: Vec<(Emotion, String)> = Vec::new();
            let mut skipped = 0;
            for c in &convs {
                for a in &c.annotations {
                    let r = dataset::resolve_annotation(a, &embedder)?;
                    let emotion = c.utterance(&a.utterance_id).expect("validated").emotion;
                    match r.final_text {
                        Some(t) => records.push((emotion, t)),
                        None => skipped += 1,
                    }
                }
            }
            if skipped > 0 {
                notes.push(format!("{skipped} unresolved annotation(s) left out of the statistics"));
            }
            serde_json::to_value(dataset::corpus_stats(records.iter().map(|(e, t)| (*e, t.as_str())))?)
                .expect("stats serialize")
        }
    };
    Ok(DatasetOutput { report, notes })
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("outputs serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// The single-line error object written to standard error.
pub fn error_json(e: &Error) -> String {
    let mut obj = json!({
        "kind": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    match e {
        Error::Format(f) => {
            obj["code"] = json!(f.kind.code());
            obj["offset"] = json!(f.offset);
        }
        Error::Backend { backend, payload, .. } => {
            obj["backend"] = json!(backend);
            if let Some(p) = payload {
                obj["payload"] = json!(p);
            }
        }
        _ => {}
    }
    serde_json::to_string(&json!({ "error": obj })).expect("error serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(frames: &[u8], h: usize, w: usize) -> Video {
        let t = Tensor::new(
            vec![frames.len(), h, w, 1],
            frames.iter().flat_map(|&v| std::iter::repeat_n(v as f64, h * w)).collect(),
        )
        .unwrap();
        Video::from_tensor(&t, 8).unwrap()
    }

    #[test]
    fn video_tensor_round_trip_and_validation() {
        let v = video(&[0, 128, 255], 16, 16);
        assert_eq!(v.frames.len(), 3);
        assert_eq!(Video::from_tensor(&v.to_tensor(), 8).unwrap(), v);
        let bad = Tensor::new(vec![1, 8, 8, 1], vec![0.5; 64]).unwrap();
        assert!(matches!(Video::from_tensor(&bad, 8), Err(Error::Input(_))));
        let bad = Tensor::new(vec![1, 8, 8, 1], vec![256.0; 64]).unwrap();
        assert!(Video::from_tensor(&bad, 8).is_err());
        assert!(Video::from_tensor(&Tensor::zeros(&[8, 8, 1]), 8).is_err());
    }

    #[test]
    fn fuse_shape_is_frames_plus_patches() {
        let p = Pipeline::new(RunConfig {
            patch_size: 8,
            ..RunConfig::default()
        })
        .unwrap();
        let v = video(&[10, 20, 30, 40], 16, 32);
        let tokens = p.fuse(&v).unwrap();
        assert_eq!((tokens.rows(), tokens.width()), (4 + 8, 8));
    }

    #[test]
    fn dark_video_has_no_faces() {
        let p = Pipeline::new(RunConfig::default()).unwrap();
        let s = p.faces(&video(&[0, 0], 32, 32)).unwrap();
        assert!(s.per_face.is_empty());
        assert_eq!(s.dominant, None);
    }

    #[test]
    fn constant_head_with_one_anchor_gives_one_face_per_frame() {
        // a single 32-pixel anchor centred in a 32x32 frame
        let cfg = RunConfig {
            detection_head: "constant".into(),
            anchor_scales: vec![32.0],
            anchor_stride: 32.0,
            patch_size: 8,
            ..RunConfig::default()
        };
        let p = Pipeline::new(cfg).unwrap();
        let s = p.faces(&video(&[5, 90, 200], 32, 32)).unwrap();
        assert_eq!(s.per_face.len(), 3);
        assert_eq!(s.per_face.iter().map(|f| f.frame).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn align_records_reports_offenders() {
        let r = |id: &str| TextRecord {
            id: id.into(),
            text: "x".into(),
        };
        let err = align_records(&[r("a"), r("b")], &[r("a"), r("c")]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no reference for: b") && msg.contains("no prediction for: c"), "{msg}");
        let pairs = align_records(&[r("b"), r("a")], &[r("a"), r("b")]).unwrap();
        assert_eq!(pairs.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), vec!["b", "a"]);
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        assert_eq!(to_json(&S { zeta: 1, alpha: 2 }), "{\n  \"alpha\": 2,\n  \"zeta\": 1\n}\n");
    }

    #[test]
    fn error_json_carries_code() {
        let e: Error = container::decode(b"NOPE").unwrap_err().into();
        let v: Value = serde_json::from_str(&error_json(&e)).unwrap();
        assert_eq!(v["error"]["kind"], "format");
        assert_eq!(v["error"]["exit_code"], 3);
        assert!(v["error"]["code"].is_string());
    }
}
