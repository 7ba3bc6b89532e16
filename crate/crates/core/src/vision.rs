//! Frame encoding and the video-level representation chain:
//! per-frame patch embeddings `[T, N, D]` are averaged over patches (one
//! row per frame) and over frames (one row per patch), the two results are
//! stacked into a `[(T + N), D]` matrix, and a linear map projects that
//! matrix to the language model's width `K`.
//!
//! Naming follows the pooled formulas rather than the prose labels: the
//! "temporal" representation averages the N patches of each frame, and the
//! "spatial" representation averages each patch across the T frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pixel geometry of a frame and the patch size used to tile it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
}

impl FrameSpec {
    pub fn new(height: usize, width: usize, channels: usize, patch: usize) -> Result<Self> {
        let spec = FrameSpec { height, width, channels, patch };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.patch == 0 {
            return Err(Error::input(format!("degenerate frame spec {self:?}")));
        }
        if !self.height.is_multiple_of(self.patch) || !self.width.is_multiple_of(self.patch) {
            return Err(Error::input(format!(
                "frame {}x{} is not divisible by patch size {}",
                self.height, self.width, self.patch
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::input(format!("unsupported channel count {}", self.channels)));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    pub fn patches(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Maps one frame (`H x W x C` bytes, row-major, channels interleaved) to
/// an `[N, D]` matrix of patch embeddings.
pub trait FrameEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, frame: &[u8], spec: &FrameSpec) -> Result<Tensor>;

    /// Whether `encode` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Reference encoder with no learned weights.
///
/// For each patch (row-major over the patch grid) it takes every byte in
/// the patch across all channels, scales it to `[0, 1]`, and computes
/// `[mean, population variance, min, max]`. Those four numbers are repeated
/// cyclically to fill the embedding width.
#[derive(Debug, Clone)]
pub struct PatchStatsEncoder {
    dim: usize,
}

impl PatchStatsEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("embedding width must be positive"));
        }
        Ok(PatchStatsEncoder { dim })
    }
}

impl FrameEncoder for PatchStatsEncoder {
    fn name(&self) -> &str {
        "patch-stats"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, frame: &[u8], spec: &FrameSpec) -> Result<Tensor> {
        if frame.len() != spec.frame_len() {
            return Err(Error::input(format!(
                "frame has {} bytes, spec needs {}",
                frame.len(),
                spec.frame_len()
            )));
        }
        let (gh, gw) = spec.grid();
        let p = spec.patch;
        let c = spec.channels;
        let mut out = Vec::with_capacity(gh * gw * self.dim);
        let mut values = Vec::with_capacity(p * p * c);
        for pr in 0..gh {
            for pc in 0..gw {
                values.clear();
                for y in pr * p..(pr + 1) * p {
                    let row = (y * spec.width + pc * p) * c;
                    values.extend(frame[row..row + p * c].iter().map(|&b| b as f64 / 255.0));
                }
                let n = values.len() as f64;
                // shifted by the first value so constant patches stay exact
                let v0 = values[0];
                let mean = v0 + values.iter().map(|v| v - v0).sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let stats = [mean, var, min, max];
                out.extend((0..self.dim).map(|i| stats[i % 4]));
            }
        }
        Tensor::new(vec![gh * gw, self.dim], out)
    }
}

/// Looks up a registered encoder by its configuration name.
pub fn encoder_by_name(name: &str, dim: usize) -> Result<Box<dyn FrameEncoder>> {
    match name {
        "patch-stats" => Ok(Box::new(PatchStatsEncoder::new(dim)?)),
        other => Err(Error::input(format!("unknown frame encoder {other:?}"))),
    }
}

/// Patch embeddings for a whole clip, shape `[T, N, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEmbedding {
    values: Tensor,
}

impl VideoEmbedding {
    pub fn new(values: Tensor) -> Result<Self> {
        match values.shape() {
            [t, n, d] if *t >= 1 && *n >= 1 && *d >= 1 => Ok(VideoEmbedding { values }),
            s => Err(Error::contract(format!("video embedding needs [T>=1, N>=1, D>=1], got {s:?}"))),
        }
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn patches(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

/// Stacked per-frame and per-patch rows, `[(T + N), D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation {
    values: Tensor,
    t_rows: usize,
    s_rows: usize,
}

impl FusedRepresentation {
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn t_rows(&self) -> usize {
        self.t_rows
    }

    pub fn s_rows(&self) -> usize {
        self.s_rows
    }

    /// Splits back into the per-frame and per-patch parts.
    pub fn split(&self) -> (Tensor, Tensor) {
        self.values.split_axis0(self.t_rows).expect("row counts are consistent")
    }
}

/// Projected video tokens, `[(T + N), K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTokens {
    values: Tensor,
}

impl VideoTokens {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::contract(format!("video tokens must be rank 2, got {:?}", values.shape())));
        }
        Ok(VideoTokens { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Runs `encoder` over every frame. Frames are encoded independently and in
/// parallel unless the encoder declares itself serial.
pub fn encode_frames(
    frames: &[Vec<u8>],
    spec: &FrameSpec,
    encoder: &dyn FrameEncoder,
) -> Result<VideoEmbedding> {
    spec.validate()?;
    if frames.is_empty() {
        return Err(Error::input("a clip needs at least one frame"));
    }
    if let Some(i) = frames.iter().position(|f| f.len() != spec.frame_len()) {
        return Err(Error::input(format!(
            "frame {i} has {} bytes, spec needs {}",
            frames[i].len(),
            spec.frame_len()
        )));
    }
    let n = spec.patches();
    let d = encoder.dim();
    let check = |i: usize, t: Tensor| -> Result<Tensor> {
        if t.shape() != [n, d] {
            return Err(Error::backend(
                encoder.name(),
                format!("frame {i}: expected [{n}, {d}] embedding, got {:?}", t.shape()),
                None,
            ));
        }
        Ok(t)
    };
    let per_frame: Vec<Tensor> = if encoder.concurrent() {
        frames
            .par_iter()
            .enumerate()
            .map(|(i, f)| encoder.encode(f, spec).and_then(|t| check(i, t)))
            .collect::<Result<_>>()?
    } else {
        frames
            .iter()
            .enumerate()
            .map(|(i, f)| encoder.encode(f, spec).and_then(|t| check(i, t)))
            .collect::<Result<_>>()?
    };
    let mut data = Vec::with_capacity(frames.len() * n * d);
    for t in per_frame {
        data.extend(t.into_data());
    }
    VideoEmbedding::new(Tensor::new(vec![frames.len(), n, d], data)?)
}

/// One row per frame: the mean of that frame's N patch embeddings.
pub fn temporal_pool(x: &VideoEmbedding) -> Tensor {
    x.values.mean_axis(1).expect("rank-3 embedding")
}

/// One row per patch: the mean of that patch's embedding over the T frames.
pub fn spatial_pool(x: &VideoEmbedding) -> Tensor {
    x.values.mean_axis(0).expect("rank-3 embedding")
}

pub fn fuse(rt: &Tensor, rs: &Tensor) -> Result<FusedRepresentation> {
    if rt.rank() != 2 || rs.rank() != 2 {
        return Err(Error::contract("fuse needs two rank-2 inputs"));
    }
    if rt.shape()[0] == 0 || rs.shape()[0] == 0 {
        return Err(Error::contract("fuse needs at least one frame row and one patch row"));
    }
    let values = rt.concat_axis0(rs)?;
    Ok(FusedRepresentation {
        values,
        t_rows: rt.shape()[0],
        s_rows: rs.shape()[0],
    })
}

/// Linear projection `g` from embedding width D to token width K.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    weights: Tensor,
}

impl Projection {
    pub fn new(weights: Tensor) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::contract(format!("projection must be [D, K], got {:?}", weights.shape())));
        }
        Ok(Projection { weights })
    }

    /// Uniform(-0.1, 0.1) weights from a ChaCha8 stream seeded with `seed`.
    pub fn seeded(d: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d * k).map(|_| rng.gen_range(-0.1..0.1)).collect();
        Projection {
            weights: Tensor::new(vec![d, k], data).expect("finite weights"),
        }
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

pub fn project_tokens(r: &FusedRepresentation, g: &Projection) -> Result<VideoTokens> {
    VideoTokens::new(r.values.matmul(&g.weights)?)
}

/// Full chain from raw frames to projected tokens.
pub fn video_tokens(
    frames: &[Vec<u8>],
    spec: &FrameSpec,
    encoder: &dyn FrameEncoder,
    g: &Projection,
) -> Result<VideoTokens> {
    let x = encode_frames(frames, spec, encoder)?;
    let r = fuse(&temporal_pool(&x), &spatial_pool(&x))?;
    project_tokens(&r, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedding(t: usize, n: usize, d: usize, data: &[f64]) -> VideoEmbedding {
        VideoEmbedding::new(Tensor::new(vec![t, n, d], data.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn frame_spec_validation() {
        assert!(FrameSpec::new(32, 32, 3, 16).is_ok());
        assert!(FrameSpec::new(30, 32, 3, 16).is_err());
        assert!(FrameSpec::new(32, 32, 2, 16).is_err());
        assert_eq!(FrameSpec::new(32, 48, 1, 16).unwrap().patches(), 6);
    }

    #[test]
    fn constant_frame_gives_identical_patches() {
        let spec = FrameSpec::new(32, 32, 3, 16).unwrap();
        let enc = PatchStatsEncoder::new(8).unwrap();
        let x = enc.encode(&vec![200u8; spec.frame_len()], &spec).unwrap();
        let rows: Vec<&[f64]> = x.data().chunks(8).collect();
        assert!(rows.iter().all(|r| *r == rows[0]));
        let m = 200.0 / 255.0;
        assert_eq!(rows[0], &[m, 0.0, m, m, m, 0.0, m, m]);
    }

    #[test]
    fn identical_frames_identical_rows() {
        let spec = FrameSpec::new(4, 4, 1, 2).unwrap();
        let frame: Vec<u8> = (0..16).map(|i| (i * 13) as u8).collect();
        let x = encode_frames(&[frame.clone(), frame], &spec, &PatchStatsEncoder::new(4).unwrap()).unwrap();
        let (a, b) = x.values().data().split_at(16);
        assert_eq!(a, b);
    }

    #[test]
    fn checkerboard_patch_statistics() {
        // 4x4 grayscale frame, 2x2 patches:
        //   patch (0,0) = [0, 255; 255, 0]     checkerboard
        //   patch (0,1) = [255 x4]              white
        //   patch (1,0) = [0 x4]                black
        //   patch (1,1) = [0, 51; 102, 255]
        #[rustfmt::skip]
        let frame: Vec<u8> = vec![
            0, 255, 255, 255,
            255, 0, 255, 255,
            0, 0, 0, 51,
            0, 0, 102, 255,
        ];
        let spec = FrameSpec::new(4, 4, 1, 2).unwrap();
        let x = PatchStatsEncoder::new(6).unwrap().encode(&frame, &spec).unwrap();
        assert_eq!(x.shape(), &[4, 6]);
        let rows: Vec<&[f64]> = x.data().chunks(6).collect();
        assert_eq!(rows[0], &[0.5, 0.25, 0.0, 1.0, 0.5, 0.25]);
        assert_eq!(rows[1], &[1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(rows[2], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // values 0, 0.2, 0.4, 1.0: mean 0.4, var (0.16+0.04+0+0.36)/4 = 0.14
        assert!((rows[3][0] - 0.4).abs() < 1e-12);
        assert!((rows[3][1] - 0.14).abs() < 1e-12);
        assert_eq!(rows[3][2], 0.0);
        assert_eq!(rows[3][3], 1.0);
    }

    #[test]
    fn encode_rejects_wrong_frame_size() {
        let spec = FrameSpec::new(4, 4, 1, 2).unwrap();
        let enc = PatchStatsEncoder::new(4).unwrap();
        assert!(matches!(encode_frames(&[vec![0; 15]], &spec, &enc), Err(Error::Input(_))));
        assert!(matches!(encode_frames(&[], &spec, &enc), Err(Error::Input(_))));
    }

    #[test]
    fn pooling_examples() {
        let x = embedding(2, 2, 1, &[1.0, 3.0, 5.0, 7.0]);
        assert_eq!(temporal_pool(&x).data(), &[2.0, 6.0]);
        assert_eq!(spatial_pool(&x).data(), &[3.0, 5.0]);

        let single_patch = embedding(3, 1, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(temporal_pool(&single_patch).data(), single_patch.values().data());
        let single_frame = embedding(1, 3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(spatial_pool(&single_frame).data(), single_frame.values().data());

        let c = embedding(2, 3, 2, &[0.25; 12]);
        assert!(temporal_pool(&c).data().iter().all(|&v| v == 0.25));
        assert!(spatial_pool(&c).data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn fuse_and_project_examples() {
        let rt = Tensor::new(vec![2, 1], vec![2.0, 6.0]).unwrap();
        let rs = Tensor::new(vec![2, 1], vec![3.0, 5.0]).unwrap();
        let r = fuse(&rt, &rs).unwrap();
        assert_eq!(r.values().shape(), &[4, 1]);
        assert_eq!(r.values().data(), &[2.0, 6.0, 3.0, 5.0]);
        assert_eq!(r.split(), (rt.clone(), rs.clone()));

        assert!(fuse(&Tensor::zeros(&[0, 1]), &rs).is_err());
        assert!(fuse(&rt, &Tensor::zeros(&[2, 2])).is_err());

        let g = Projection::new(Tensor::new(vec![1, 2], vec![2.0, -1.0]).unwrap()).unwrap();
        let q = project_tokens(&r, &g).unwrap();
        assert_eq!(q.values().shape(), &[4, 2]);
        assert_eq!(q.values().data(), &[4.0, -2.0, 12.0, -6.0, 6.0, -3.0, 10.0, -5.0]);

        let id = Projection::new(Tensor::identity(1)).unwrap();
        assert_eq!(project_tokens(&r, &id).unwrap().values(), r.values());
        let zero = Projection::new(Tensor::zeros(&[1, 3])).unwrap();
        assert!(project_tokens(&r, &zero).unwrap().values().data().iter().all(|&v| v == 0.0));
        let bad = Projection::new(Tensor::zeros(&[2, 3])).unwrap();
        assert!(project_tokens(&r, &bad).is_err());
    }

    #[test]
    fn seeded_projection_is_reproducible_and_bounded() {
        let a = Projection::seeded(8, 8, 7);
        assert_eq!(a, Projection::seeded(8, 8, 7));
        assert_ne!(a, Projection::seeded(8, 8, 8));
        assert!(a.weights().data().iter().all(|v| (-0.1..0.1).contains(v)));
    }

    struct Serial(PatchStatsEncoder);

    impl FrameEncoder for Serial {
        fn name(&self) -> &str {
            "serial"
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn encode(&self, frame: &[u8], spec: &FrameSpec) -> Result<Tensor> {
            self.0.encode(frame, spec)
        }
        fn concurrent(&self) -> bool {
            false
        }
    }

    #[test]
    fn serial_encoder_matches_parallel() {
        let spec = FrameSpec::new(4, 4, 3, 2).unwrap();
        let frames: Vec<Vec<u8>> = (0..5u8)
            .map(|k| (0..48).map(|i| (i as u8).wrapping_mul(k + 3)).collect())
            .collect();
        let enc = PatchStatsEncoder::new(5).unwrap();
        let par = encode_frames(&frames, &spec, &enc).unwrap();
        let ser = encode_frames(&frames, &spec, &Serial(enc)).unwrap();
        assert_eq!(par, ser);
    }
}
