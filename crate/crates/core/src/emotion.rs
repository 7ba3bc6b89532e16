//! Second detection stage: face crops become feature maps, two directional
//! attention maps are computed and fused with sigmoid gating, and a linear
//! head classifies the fused map into one of seven emotions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::detect::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vision::FrameSpec;

/// Emotion labels in their fixed tie-break order. `Neutral` is last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    /// The six labels an annotated utterance may carry.
    pub const ANNOTATED: [Emotion; 6] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_neutral(self) -> bool {
        self == Emotion::Neutral
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::input(format!("unknown emotion label {s:?}")))
    }
}

impl Serialize for Emotion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Emotion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pixels cut from a frame by a detection box.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCrop {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
    pub source_frame: usize,
    pub source_box: BBox,
}

impl FaceCrop {
    /// Cuts the pixel rectangle `[floor(x1), ceil(x2)) x [floor(y1), ceil(y2))`
    /// clamped to the frame.
    pub fn from_frame(frame: &[u8], spec: &FrameSpec, b: &BBox, source_frame: usize) -> Result<Self> {
        if frame.len() != spec.frame_len() {
            return Err(Error::input("frame size does not match spec"));
        }
        if !b.is_valid() {
            return Err(Error::contract(format!("invalid crop box {b:?}")));
        }
        let clamp = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi);
        let x0 = clamp(b.x1.floor(), spec.width);
        let x1 = clamp(b.x2.ceil(), spec.width);
        let y0 = clamp(b.y1.floor(), spec.height);
        let y1 = clamp(b.y2.ceil(), spec.height);
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::contract(format!("box {b:?} lies outside the frame")));
        }
        let c = spec.channels;
        let mut pixels = Vec::with_capacity((y1 - y0) * (x1 - x0) * c);
        for y in y0..y1 {
            let row = y * spec.width;
            pixels.extend_from_slice(&frame[(row + x0) * c..(row + x1) * c]);
        }
        Ok(FaceCrop {
            height: y1 - y0,
            width: x1 - x0,
            channels: c,
            pixels,
            source_frame,
            source_box: *b,
        })
    }
}

/// Maps a face crop to an `[Hf, Wf, Cf]` feature map.
pub trait MfnExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn extract(&self, crop: &FaceCrop) -> Result<Tensor>;
}

/// Reference extractor: grayscale intensities in `[0, 1]` averaged over an
/// `Hf x Wf` grid of bins and copied into each of `Cf` channels.
///
/// Bin `i` along an axis of length `L` covers
/// `[floor(i L / Hf), ceil((i + 1) L / Hf))`, so bins tile the crop exactly
/// when `L` is a multiple of the bin count and overlap by at most one pixel
/// otherwise.
#[derive(Debug, Clone)]
pub struct GridMeanExtractor {
    pub hf: usize,
    pub wf: usize,
    pub cf: usize,
}

impl Default for GridMeanExtractor {
    fn default() -> Self {
        GridMeanExtractor { hf: 7, wf: 7, cf: 4 }
    }
}

fn bin_range(i: usize, bins: usize, len: usize) -> (usize, usize) {
    let start = (i * len / bins).min(len - 1);
    let end = ((i + 1) * len).div_ceil(bins).clamp(start + 1, len);
    (start, end)
}

impl MfnExtractor for GridMeanExtractor {
    fn name(&self) -> &str {
        "grid-mean"
    }

    fn extract(&self, crop: &FaceCrop) -> Result<Tensor> {
        if crop.height == 0 || crop.width == 0 || crop.channels == 0 {
            return Err(Error::contract("empty face crop"));
        }
        if crop.pixels.len() != crop.height * crop.width * crop.channels {
            return Err(Error::contract("face crop pixel count does not match its dimensions"));
        }
        if self.hf == 0 || self.wf == 0 || self.cf == 0 {
            return Err(Error::input("feature map dimensions must be positive"));
        }
        let c = crop.channels;
        let gray = |y: usize, x: usize| {
            let at = (y * crop.width + x) * c;
            crop.pixels[at..at + c].iter().map(|&b| b as f64).sum::<f64>() / (c as f64 * 255.0)
        };
        let mut out = Vec::with_capacity(self.hf * self.wf * self.cf);
        for i in 0..self.hf {
            let (y0, y1) = bin_range(i, self.hf, crop.height);
            for j in 0..self.wf {
                let (x0, x1) = bin_range(j, self.wf, crop.width);
                let mut sum = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += gray(y, x);
                    }
                }
                let mean = sum / ((y1 - y0) * (x1 - x0)) as f64;
                out.extend(std::iter::repeat_n(mean, self.cf));
            }
        }
        Tensor::new(vec![self.hf, self.wf, self.cf], out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Horizontal: along the width axis.
    X,
    /// Vertical: along the height axis.
    Y,
}

/// Depthwise 1-D convolution of an `[H, W, C]` map along one axis, zero
/// padded so the output keeps the input shape. The same kernel is applied to
/// every channel: `out[i] = sum_k w[k] * in[i + k - r]` with `r = len / 2`.
pub fn dda_attention(f: &Tensor, direction: Direction, weights: &[f64]) -> Result<Tensor> {
    if weights.is_empty() || weights.len().is_multiple_of(2) {
        return Err(Error::contract(format!("kernel length {} must be odd", weights.len())));
    }
    let [h, w, c] = match f.shape() {
        [h, w, c] => [*h, *w, *c],
        s => return Err(Error::contract(format!("attention input must be [H, W, C], got {s:?}"))),
    };
    let r = (weights.len() / 2) as isize;
    let src = f.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wk) in weights.iter().enumerate() {
                    let off = k as isize - r;
                    let (yy, xx) = match direction {
                        Direction::X => (y as isize, x as isize + off),
                        Direction::Y => (y as isize + off, x as isize),
                    };
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    acc += wk * src[((yy as usize) * w + xx as usize) * c + ch];
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    Tensor::new(f.shape().to_vec(), out)
}

/// `max(fx, fy) * sigmoid(fx * fy)`, elementwise.
pub fn fuse_attention(fx: &Tensor, fy: &Tensor) -> Result<Tensor> {
    let gate = fx.elementwise_mul(fy)?.sigmoid();
    fx.elementwise_max(fy)?.elementwise_mul(&gate)
}

/// Horizontal, vertical and fused attention for one feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    pub fx: Tensor,
    pub fy: Tensor,
    pub fused: Tensor,
}

pub fn attend(f: &Tensor, kernel: &[f64]) -> Result<AttentionMaps> {
    let fx = dda_attention(f, Direction::X, kernel)?;
    let fy = dda_attention(f, Direction::Y, kernel)?;
    let fused = fuse_attention(&fx, &fy)?;
    Ok(AttentionMaps { fx, fy, fused })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionPrediction {
    pub label: Emotion,
    pub logits: Vec<f64>,
    pub confidence: f64,
}

/// Linear classifier over the flattened attention map.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    weights: Tensor,
    bias: Tensor,
}

impl ClassifierHead {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.rank() != 2 || weights.shape()[1] != 7 {
            return Err(Error::contract(format!("classifier weights must be [flat, 7], got {:?}", weights.shape())));
        }
        if bias.shape() != [7] {
            return Err(Error::contract(format!("classifier bias must be [7], got {:?}", bias.shape())));
        }
        Ok(ClassifierHead { weights, bias })
    }

    /// Uniform(-0.1, 0.1) weights and zero bias from a seeded ChaCha8 stream.
    pub fn seeded(flat: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..flat * 7).map(|_| rng.gen_range(-0.1..0.1)).collect();
        ClassifierHead {
            weights: Tensor::new(vec![flat, 7], data).expect("finite"),
            bias: Tensor::zeros(&[7]),
        }
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn classify(&self, f_att: &Tensor) -> Result<EmotionPrediction> {
        classify_emotion(f_att, &self.weights, &self.bias)
    }
}

pub fn classify_emotion(f_att: &Tensor, head: &Tensor, bias: &Tensor) -> Result<EmotionPrediction> {
    if head.rank() != 2 || head.shape()[0] != f_att.len() || head.shape()[1] != 7 || bias.shape() != [7] {
        return Err(Error::contract(format!(
            "classifier shapes do not fit: features {:?}, head {:?}, bias {:?}",
            f_att.shape(),
            head.shape(),
            bias.shape()
        )));
    }
    let flat = f_att.reshape(&[1, f_att.len()])?;
    let logits: Vec<f64> = flat
        .matmul(head)?
        .data()
        .iter()
        .zip(bias.data())
        .map(|(a, b)| a + b)
        .collect();
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    let peak = logits[best];
    let denom: f64 = logits.iter().map(|v| (v - peak).exp()).sum();
    Ok(EmotionPrediction {
        label: Emotion::ALL[best],
        confidence: 1.0 / denom,
        logits,
    })
}

/// A prediction tied to the frame and box it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacePrediction {
    pub frame: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub face_score: f64,
    #[serde(flatten)]
    pub prediction: EmotionPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoEmotionSummary {
    pub per_face: Vec<FacePrediction>,
    /// Label of the highest confidence-weighted non-neutral evidence, or
    /// `None` when every face is neutral or there are no faces.
    #[serde(serialize_with = "serialize_tag")]
    pub dominant: Option<Emotion>,
    pub histogram: BTreeMap<String, usize>,
}

fn serialize_tag<S: Serializer>(tag: &Option<Emotion>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(emotion_tag(*tag))
}

/// Text form of an optional emotion: the label, or `"none"`.
pub fn emotion_tag(e: Option<Emotion>) -> &'static str {
    e.map_or("none", Emotion::as_str)
}

pub fn summarize_video_emotions(preds: Vec<FacePrediction>) -> VideoEmotionSummary {
    let mut histogram: BTreeMap<String, usize> =
        Emotion::ALL.iter().map(|e| (e.as_str().to_string(), 0)).collect();
    let mut weights: [Vec<f64>; 7] = Default::default();
    for p in &preds {
        *histogram.get_mut(p.prediction.label.as_str()).unwrap() += 1;
        weights[p.prediction.label.index()].push(p.prediction.confidence);
    }
    // Summing in sorted order makes the totals independent of input order.
    let totals: Vec<f64> = weights
        .iter_mut()
        .map(|w| {
            w.sort_by(f64::total_cmp);
            w.iter().sum()
        })
        .collect();
    let mut dominant: Option<Emotion> = None;
    for e in Emotion::ANNOTATED {
        if weights[e.index()].is_empty() {
            continue;
        }
        if dominant.is_none_or(|d| totals[e.index()] > totals[d.index()]) {
            dominant = Some(e);
        }
    }
    VideoEmotionSummary {
        per_face: preds,
        dominant,
        histogram,
    }
}
