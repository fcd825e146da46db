//! Media access: videos and documents as indexed frame sequences.
//!
//! A [`MediaSource`] abstracts both kinds of input behind the same interface:
//! an ordered list of frames, each resolvable to an encoded image payload.
//! Frame order is presentation order (decode order for video, page order for
//! documents). Videos given as a single file are decoded into a frame
//! directory by an external decoder subprocess before use.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Whether a source is a video (frames in time order) or a document (pages).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Video,
    Document,
}

impl MediaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MediaKind::Video => "video",
            MediaKind::Document => "document",
        }
    }
}

impl std::str::FromStr for MediaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "video" => Ok(MediaKind::Video),
            "document" => Ok(MediaKind::Document),
            other => Err(format!("unknown media kind '{other}' (expected video or document)")),
        }
    }
}

/// Encoded raster format of a frame payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Jpeg,
}

impl ImageFormat {
    pub fn mime(&self) -> &'static str {
        match self {
            ImageFormat::Png => "image/png",
            ImageFormat::Jpeg => "image/jpeg",
        }
    }

    /// Recognize a supported format from a file extension.
    pub fn from_extension(ext: &str) -> Option<ImageFormat> {
        match ext.to_ascii_lowercase().as_str() {
            "png" => Some(ImageFormat::Png),
            "jpg" | "jpeg" => Some(ImageFormat::Jpeg),
            _ => None,
        }
    }
}

/// Encoded image bytes plus their format tag. Payloads are passed through to
/// the backend unmodified; no decoding or resizing happens on this side.
#[derive(Debug, Clone)]
pub struct ImagePayload {
    pub bytes: Vec<u8>,
    pub format: ImageFormat,
}

/// A video or document as an ordered, randomly accessible frame sequence.
///
/// Read-only after construction; frame retrieval is safe from multiple
/// threads at once.
#[derive(Debug, Clone)]
pub struct MediaSource {
    id: String,
    kind: MediaKind,
    frames: Vec<PathBuf>,
}

impl MediaSource {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> MediaKind {
        self.kind
    }

    /// Total number of frames T. Always at least 1 for an opened source.
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Path backing a frame index. Panics on out-of-range index.
    pub fn frame_path(&self, index: usize) -> &Path {
        &self.frames[index]
    }

    /// Load the encoded image payload for one frame.
    pub fn payload(&self, index: usize) -> Result<ImagePayload, MediaError> {
        let path = self.frames.get(index).ok_or(MediaError::FrameIndexOutOfRange {
            index,
            frame_count: self.frames.len(),
        })?;
        let format = image_format_of(path).ok_or_else(|| MediaError::UnsupportedImage {
            path: path.clone(),
        })?;
        let bytes = fs::read(path).map_err(|source| MediaError::UnreadableFrame {
            path: path.clone(),
            source,
        })?;
        if bytes.is_empty() {
            return Err(MediaError::EmptyFrame { path: path.clone() });
        }
        Ok(ImagePayload { bytes, format })
    }
}

/// One sampled frame under consideration for selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameProposal {
    pub media_id: String,
    /// Index into the source's frame sequence, in [0, T).
    pub frame_index: usize,
    /// Rank of this proposal in sampling order, in [0, N).
    pub ordinal: usize,
}

/// External decoder invocation for video files.
///
/// The template is split on whitespace into argv tokens; each token equal to
/// a placeholder is substituted whole, so paths containing spaces survive.
/// Placeholders: `{input}` (the video file), `{outdir}` (frame output
/// directory), `{fps}` (decode rate, frames per second of video).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub template: String,
    pub fps: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            template: "ffmpeg -y -loglevel error -i {input} -vf fps={fps} {outdir}/%08d.png"
                .to_string(),
            fps: 1.0,
        }
    }
}

/// Knobs for [`open_media`]. `decode_root` hosts per-video frame directories;
/// a directory is reused when it already holds frames from an earlier decode
/// with the same template and fps.
#[derive(Debug, Clone)]
pub struct OpenOptions {
    pub decoder: DecoderConfig,
    pub decode_root: PathBuf,
}

impl Default for OpenOptions {
    fn default() -> Self {
        OpenOptions {
            decoder: DecoderConfig::default(),
            decode_root: std::env::temp_dir().join("frag-decode"),
        }
    }
}

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("media path not found: {path}")]
    NotFound { path: PathBuf },
    #[error("no frames found in {path}")]
    NoFrames { path: PathBuf },
    #[error("document sources must be a directory of page images: {path}")]
    DocumentNotADirectory { path: PathBuf },
    #[error("decoder command is empty")]
    EmptyDecoderCommand,
    #[error("failed to launch decoder '{program}': {source}")]
    DecoderSpawn {
        program: String,
        source: std::io::Error,
    },
    #[error("decoder exited with {status}; stderr: {stderr}")]
    DecoderFailed { status: String, stderr: String },
    #[error("unsupported image file (expected png or jpeg): {path}")]
    UnsupportedImage { path: PathBuf },
    #[error("unreadable image file {path}: {source}")]
    UnreadableFrame {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("empty image file: {path}")]
    EmptyFrame { path: PathBuf },
    #[error("frame index {index} out of range for {frame_count} frames")]
    FrameIndexOutOfRange { index: usize, frame_count: usize },
    #[error("n_target must be at least 1")]
    InvalidSampleCount,
    #[error("failed to read directory {path}: {source}")]
    ReadDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Open a media path as an indexed frame sequence.
///
/// Accepted layouts:
/// - a directory of image files, ordered by numeric-aware filename sort
///   (used for both videos-as-frames and documents-as-pages);
/// - a video file, decoded into such a directory by the configured
///   decoder subprocess.
///
/// The source id is the path exactly as given.
pub fn open_media(path: &Path, kind: MediaKind, opts: &OpenOptions) -> Result<MediaSource, MediaError> {
    let id = path.display().to_string();
    if !path.exists() {
        return Err(MediaError::NotFound { path: path.to_path_buf() });
    }
    let frame_dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        match kind {
            MediaKind::Document => {
                return Err(MediaError::DocumentNotADirectory { path: path.to_path_buf() })
            }
            MediaKind::Video => decode_video(path, opts)?,
        }
    };
    let frames = discover_frames(&frame_dir)?;
    if frames.is_empty() {
        return Err(MediaError::NoFrames { path: frame_dir });
    }
    Ok(MediaSource { id, kind, frames })
}

/// List supported image files in a directory, sorted numeric-aware so that
/// `0002.jpg` precedes `0010.jpg`.
fn discover_frames(dir: &Path) -> Result<Vec<PathBuf>, MediaError> {
    let entries = fs::read_dir(dir).map_err(|source| MediaError::ReadDir {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut frames: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| MediaError::ReadDir {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && image_format_of(&path).is_some() {
            frames.push(path);
        }
    }
    frames.sort_by(|a, b| {
        let an = a.file_name().unwrap_or_default().to_string_lossy();
        let bn = b.file_name().unwrap_or_default().to_string_lossy();
        natural_cmp(&an, &bn)
    });
    Ok(frames)
}

fn image_format_of(path: &Path) -> Option<ImageFormat> {
    path.extension()
        .and_then(|e| e.to_str())
        .and_then(ImageFormat::from_extension)
}

/// Decode a video file into a frame directory under `decode_root`.
///
/// The output directory name is derived from the input path and decoder
/// settings, so a non-empty directory from an identical earlier invocation
/// is reused without re-running the decoder.
fn decode_video(input: &Path, opts: &OpenOptions) -> Result<PathBuf, MediaError> {
    let mut hasher = Sha256::new();
    hasher.update(input.display().to_string().as_bytes());
    hasher.update([0x1f]);
    hasher.update(opts.decoder.template.as_bytes());
    hasher.update([0x1f]);
    hasher.update(opts.decoder.fps.to_string().as_bytes());
    let digest = hasher.finalize();
    let tag = hex_prefix(&digest, 16);
    let outdir = opts.decode_root.join(tag);

    if outdir.is_dir() {
        if let Ok(existing) = discover_frames(&outdir) {
            if !existing.is_empty() {
                return Ok(outdir);
            }
        }
    }
    fs::create_dir_all(&outdir).map_err(|source| MediaError::ReadDir {
        path: outdir.clone(),
        source,
    })?;

    let fps = opts.decoder.fps.to_string();
    let argv: Vec<String> = opts
        .decoder
        .template
        .split_whitespace()
        .map(|tok| {
            tok.replace("{input}", &input.display().to_string())
                .replace("{outdir}", &outdir.display().to_string())
                .replace("{fps}", &fps)
        })
        .collect();
    let (program, args) = argv.split_first().ok_or(MediaError::EmptyDecoderCommand)?;

    let output = Command::new(program)
        .args(args)
        .output()
        .map_err(|source| MediaError::DecoderSpawn {
            program: program.clone(),
            source,
        })?;
    if !output.status.success() {
        return Err(MediaError::DecoderFailed {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    Ok(outdir)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// Compare strings with digit runs ordered by numeric value, so `2` sorts
/// before `10`. Ties (for example `1` vs `01`) fall back to byte order for
/// a deterministic total order.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let ab = a.as_bytes();
    let bb = b.as_bytes();
    let (mut i, mut j) = (0usize, 0usize);
    while i < ab.len() && j < bb.len() {
        let (ca, cb) = (ab[i], bb[j]);
        if ca.is_ascii_digit() && cb.is_ascii_digit() {
            let (da, ni) = digit_run(ab, i);
            let (db, nj) = digit_run(bb, j);
            let ord = cmp_digit_runs(da, db);
            if ord != Ordering::Equal {
                return ord;
            }
            i = ni;
            j = nj;
        } else {
            if ca != cb {
                return ca.cmp(&cb);
            }
            i += 1;
            j += 1;
        }
    }
    let rest = (ab.len() - i).cmp(&(bb.len() - j));
    if rest != Ordering::Equal {
        return rest;
    }
    a.cmp(b)
}

fn digit_run(bytes: &[u8], start: usize) -> (&[u8], usize) {
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    (&bytes[start..end], end)
}

/// Numeric comparison of two ASCII digit runs without parsing, which keeps
/// arbitrarily long runs safe from overflow.
fn cmp_digit_runs(a: &[u8], b: &[u8]) -> Ordering {
    let a = strip_leading_zeros(a);
    let b = strip_leading_zeros(b);
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

fn strip_leading_zeros(run: &[u8]) -> &[u8] {
    let nz = run.iter().position(|&d| d != b'0').unwrap_or(run.len());
    &run[nz..]
}

/// Evenly spaced sample of `n_target` indices from `[0, t)`, clamped to `t`.
///
/// Index j of N maps to floor((j + 0.5) * T / N), the center of the j-th of
/// N equal bins. Computed in integer arithmetic as (2j + 1) * T / (2N).
pub fn uniform_indices(t: usize, n_target: usize) -> Result<Vec<usize>, MediaError> {
    if n_target == 0 {
        return Err(MediaError::InvalidSampleCount);
    }
    let n = n_target.min(t);
    let mut indices = Vec::with_capacity(n);
    for j in 0..n {
        indices.push(((2 * j + 1) * t) / (2 * n));
    }
    // With N <= T the bin centers land in distinct bins, so duplicates are
    // impossible; a violation here means the formula itself is broken.
    for w in indices.windows(2) {
        assert!(w[0] < w[1], "uniform sampling produced non-increasing indices");
    }
    Ok(indices)
}

/// Uniformly downsample a source into at most `n_target` frame proposals.
///
/// Proposals come back in frame-index order with ordinals 0..N. Document
/// callers pass `n_target >= T` to get every page.
pub fn uniform_sample(
    source: &MediaSource,
    n_target: usize,
) -> Result<Vec<FrameProposal>, MediaError> {
    let indices = uniform_indices(source.frame_count(), n_target)?;
    Ok(indices
        .into_iter()
        .enumerate()
        .map(|(ordinal, frame_index)| FrameProposal {
            media_id: source.id().to_string(),
            frame_index,
            ordinal,
        })
        .collect())
}
