//! The `FTC1` tensor container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0        magic   b"FTC1"
//! offset 4        rank    u32, at most 8
//! offset 8        dims    rank x u64
//! offset 8+8*rank payload product(dims) x f32, row-major
//! ```
//!
//! Values are widened to `f64` on load and narrowed on save, so
//! `decode(encode(t)) == t` holds bitwise for tensors whose values are
//! exactly representable as `f32`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FTC1";
pub const MAX_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    RankTooLarge,
    TruncatedHeader,
    TruncatedPayload,
    TrailingBytes,
    SizeOverflow,
    NonFinite,
}

impl FormatErrorKind {
    /// Stable error code reported by the CLI.
    pub fn code(self) -> &'static str {
        match self {
            FormatErrorKind::BadMagic => "FTC_BAD_MAGIC",
            FormatErrorKind::RankTooLarge => "FTC_RANK_TOO_LARGE",
            FormatErrorKind::TruncatedHeader => "FTC_TRUNCATED_HEADER",
            FormatErrorKind::TruncatedPayload => "FTC_TRUNCATED_PAYLOAD",
            FormatErrorKind::TrailingBytes => "FTC_TRAILING_BYTES",
            FormatErrorKind::SizeOverflow => "FTC_SIZE_OVERFLOW",
            FormatErrorKind::NonFinite => "FTC_NON_FINITE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} at byte {offset}: {detail}", kind.code())]
pub struct FormatError {
    pub kind: FormatErrorKind,
    pub offset: usize,
    pub detail: String,
}

impl FormatError {
    fn new(kind: FormatErrorKind, offset: usize, detail: impl Into<String>) -> Self {
        FormatError {
            kind,
            offset,
            detail: detail.into(),
        }
    }
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, FormatError> {
    use FormatErrorKind::*;

    if bytes.len() < 4 {
        return Err(FormatError::new(TruncatedHeader, bytes.len(), "missing magic"));
    }
    if &bytes[..4] != MAGIC {
        return Err(FormatError::new(BadMagic, 0, format!("expected FTC1, found {:?}", &bytes[..4])));
    }
    if bytes.len() < 8 {
        return Err(FormatError::new(TruncatedHeader, bytes.len(), "missing rank"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rank > MAX_RANK {
        return Err(FormatError::new(RankTooLarge, 4, format!("rank {rank} exceeds {MAX_RANK}")));
    }

    let header_len = 8 + 8 * rank;
    if bytes.len() < header_len {
        return Err(FormatError::new(
            TruncatedHeader,
            bytes.len(),
            format!("header needs {header_len} bytes"),
        ));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let at = 8 + 8 * i;
        let d = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let d = usize::try_from(d)
            .map_err(|_| FormatError::new(SizeOverflow, at, format!("dimension {d} too large")))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| FormatError::new(SizeOverflow, at, "element count overflows"))?;
        dims.push(d);
    }
    let payload_len = count
        .checked_mul(4)
        .ok_or_else(|| FormatError::new(SizeOverflow, 8, "payload size overflows"))?;

    let payload = &bytes[header_len..];
    if payload.len() < payload_len {
        return Err(FormatError::new(
            TruncatedPayload,
            bytes.len(),
            format!("payload needs {payload_len} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > payload_len {
        return Err(FormatError::new(
            TrailingBytes,
            header_len + payload_len,
            format!("{} bytes after payload", payload.len() - payload_len),
        ));
    }

    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::new(NonFinite, header_len + 4 * i, format!("value {v}")));
        }
        data.push(v as f64);
    }
    Ok(Tensor::new(dims, data).expect("validated above"))
}

pub fn load(path: &Path) -> crate::Result<Tensor> {
    let bytes = fs::read(path)?;
    Ok(decode(&bytes)?)
}

pub fn save(path: &Path, t: &Tensor) -> crate::Result<()> {
    fs::write(path, encode(t))?;
    Ok(())
}
