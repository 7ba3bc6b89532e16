//! Anchor-based face detection: multi-scale anchors over a feature grid,
//! a pluggable head that scores and regresses each anchor, box decoding,
//! and greedy non-maximum suppression.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};
use crate::vision::FrameSpec;

/// Axis-aligned box in corner form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub scale_index: usize,
}

impl Anchor {
    pub fn to_box(&self) -> BBox {
        BBox {
            x1: self.cx - self.width / 2.0,
            y1: self.cy - self.height / 2.0,
            x2: self.cx + self.width / 2.0,
            y2: self.cy + self.height / 2.0,
        }
    }
}

/// Regression offsets `(dx, dy, dw, dh)` relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Deltas {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub anchor: Anchor,
    pub face_score: f64,
    pub deltas: Deltas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub anchor_scales: Vec<f64>,
    pub anchor_stride: f64,
    pub score_threshold: f64,
    pub iou_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            anchor_scales: vec![16.0, 32.0],
            anchor_stride: 8.0,
            score_threshold: 0.5,
            iou_threshold: 0.5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::input(format!("iou_threshold {} not in (0, 1)", self.iou_threshold)));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::input(format!("score_threshold {} not in [0, 1]", self.score_threshold)));
        }
        if !(self.anchor_stride.is_finite() && self.anchor_stride > 0.0) {
            return Err(Error::input("anchor_stride must be positive"));
        }
        if self.anchor_scales.is_empty() || self.anchor_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::input("anchor_scales must be a non-empty list of positive sizes"));
        }
        Ok(())
    }
}

/// One square anchor per (cell, scale), cells in row-major order, scales
/// innermost. Centers sit at `(col + 0.5, row + 0.5) * stride`.
pub fn generate_anchors(feature_h: usize, feature_w: usize, cfg: &DetectorConfig) -> Vec<Anchor> {
    let s = cfg.anchor_stride;
    let mut out = Vec::with_capacity(feature_h * feature_w * cfg.anchor_scales.len());
    for row in 0..feature_h {
        for col in 0..feature_w {
            for (scale_index, &size) in cfg.anchor_scales.iter().enumerate() {
                out.push(Anchor {
                    cx: (col as f64 + 0.5) * s,
                    cy: (row as f64 + 0.5) * s,
                    width: size,
                    height: size,
                    scale_index,
                });
            }
        }
    }
    out
}

/// Produces the `[Hf, Wf, C]` feature map the detection head reads.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, frame: &[u8], spec: &FrameSpec) -> Result<Tensor>;
}

/// Pools the grayscale frame over `stride x stride` cells (partial cells at
/// the right and bottom edges average what they cover) and maps each mean
/// intensity `m` in `[0, 1]` to `2m - 1`, giving a `[ceil(H/s), ceil(W/s), 1]`
/// map where dark regions are negative and bright regions positive.
#[derive(Debug, Clone)]
pub struct GridContrastExtractor {
    pub stride: usize,
}

impl FeatureExtractor for GridContrastExtractor {
    fn extract(&self, frame: &[u8], spec: &FrameSpec) -> Result<Tensor> {
        if frame.len() != spec.frame_len() {
            return Err(Error::input(format!(
                "frame has {} bytes, spec needs {}",
                frame.len(),
                spec.frame_len()
            )));
        }
        if self.stride == 0 {
            return Err(Error::input("feature stride must be positive"));
        }
        let s = self.stride;
        let fh = spec.height.div_ceil(s);
        let fw = spec.width.div_ceil(s);
        let c = spec.channels;
        let mut out = Vec::with_capacity(fh * fw);
        for r in 0..fh {
            for col in 0..fw {
                let (y0, y1) = (r * s, ((r + 1) * s).min(spec.height));
                let (x0, x1) = (col * s, ((col + 1) * s).min(spec.width));
                let mut sum = 0.0;
                for y in y0..y1 {
                    let start = (y * spec.width + x0) * c;
                    let end = (y * spec.width + x1) * c;
                    sum += frame[start..end].iter().map(|&b| b as f64).sum::<f64>();
                }
                let count = ((y1 - y0) * (x1 - x0) * c) as f64;
                out.push(2.0 * (sum / count / 255.0) - 1.0);
            }
        }
        Tensor::new(vec![fh, fw, 1], out)
    }
}

/// Scores one anchor against the feature map: face probability and box
/// regression offsets.
pub trait DetectionHead: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, feature_map: &Tensor, anchor: &Anchor) -> Result<(f64, Deltas)>;
}

/// Same score and deltas for every anchor.
#[derive(Debug, Clone)]
pub struct ConstantHead {
    pub score: f64,
    pub deltas: Deltas,
}

impl DetectionHead for ConstantHead {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _: &Tensor, _: &Anchor) -> Result<(f64, Deltas)> {
        Ok((self.score, self.deltas))
    }
}

/// Score is the sigmoid of the channel-mean of the feature cell containing
/// the anchor center (`floor(c / stride)`, clamped to the map); deltas are
/// zero.
#[derive(Debug, Clone)]
pub struct CenterCellHead {
    pub stride: f64,
}

impl DetectionHead for CenterCellHead {
    fn name(&self) -> &str {
        "center-cell"
    }

    fn score(&self, fm: &Tensor, anchor: &Anchor) -> Result<(f64, Deltas)> {
        let [fh, fw, c] = match fm.shape() {
            [a, b, c] if *a > 0 && *b > 0 && *c > 0 => [*a, *b, *c],
            s => {
                return Err(Error::backend(
                    self.name(),
                    format!("feature map must be non-empty [H, W, C], got {s:?}"),
                    None,
                ))
            }
        };
        let cell = |v: f64, n: usize| ((v / self.stride).floor().max(0.0) as usize).min(n - 1);
        let (r, col) = (cell(anchor.cy, fh), cell(anchor.cx, fw));
        let start = (r * fw + col) * c;
        let mean = fm.data()[start..start + c].iter().sum::<f64>() / c as f64;
        Ok((sigmoid(mean), Deltas::default()))
    }
}

pub fn score_anchors(
    feature_map: &Tensor,
    anchors: &[Anchor],
    head: &dyn DetectionHead,
) -> Result<Vec<Detection>> {
    anchors
        .iter()
        .map(|a| {
            let (score, deltas) = head.score(feature_map, a)?;
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::backend(head.name(), format!("score {score} outside [0, 1]"), None));
            }
            Ok(Detection {
                bbox: a.to_box(),
                anchor: *a,
                face_score: score,
                deltas,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub detections: Vec<Detection>,
    /// Boxes that collapsed to zero area after clamping.
    pub dropped: usize,
}

/// Applies each detection's deltas to its anchor and clamps to the frame.
pub fn decode_boxes(detections: Vec<Detection>, frame: &FrameSpec) -> Result<DecodeOutcome> {
    let (w, h) = (frame.width as f64, frame.height as f64);
    let mut out = Vec::with_capacity(detections.len());
    let mut dropped = 0;
    for mut det in detections {
        let Deltas { dx, dy, dw, dh } = det.deltas;
        if ![dx, dy, dw, dh].iter().all(|v| v.is_finite()) {
            return Err(Error::contract("non-finite regression deltas"));
        }
        let a = det.anchor;
        let cx = a.cx + dx * a.width;
        let cy = a.cy + dy * a.height;
        let bw = a.width * dw.exp();
        let bh = a.height * dh.exp();
        let decoded = BBox::new(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0).clamp_to(w, h);
        if decoded.is_valid() {
            det.bbox = decoded;
            out.push(det);
        } else {
            dropped += 1;
        }
    }
    Ok(DecodeOutcome { detections: out, dropped })
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS. Detections scoring below `score_threshold` are discarded;
/// the rest are visited by descending score (ties: smaller area, then input
/// order) and kept when their IoU with every kept box is at most
/// `iou_threshold`.
pub fn nms(detections: &[Detection], cfg: &DetectorConfig) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len())
        .filter(|&i| detections[i].face_score >= cfg.score_threshold)
        .collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&detections[i], &detections[j]);
        b.face_score
            .partial_cmp(&a.face_score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.bbox.area().partial_cmp(&b.bbox.area()).unwrap_or(Ordering::Equal))
            .then(i.cmp(&j))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let cand = &detections[i];
        if kept.iter().all(|k| iou(&k.bbox, &cand.bbox) <= cfg.iou_threshold) {
            kept.push(cand.clone());
        }
    }
    kept
}

/// Detection for one frame: features, anchors, scoring, decoding and NMS.
pub fn detect_faces(
    frame: &[u8],
    spec: &FrameSpec,
    extractor: &dyn FeatureExtractor,
    head: &dyn DetectionHead,
    cfg: &DetectorConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let fm = extractor.extract(frame, spec)?;
    if fm.rank() != 3 {
        return Err(Error::backend("feature-extractor", format!("expected rank-3 map, got {:?}", fm.shape()), None));
    }
    let anchors = generate_anchors(fm.shape()[0], fm.shape()[1], cfg);
    let scored = score_anchors(&fm, &anchors, head)?;
    let decoded = decode_boxes(scored, spec)?;
    Ok(nms(&decoded.detections, cfg))
}
