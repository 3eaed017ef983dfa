//! Feature container: `FEAT`, version, frame count, bin count, then
//! row-major little-endian f32 frames.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use streamformer_core::rng::{synth_features, FEATURE_BINS};
use streamformer_core::Matrix;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"FEAT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn write_features<W: Write>(mut w: W, m: &Matrix) -> io::Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| io::Error::other("too many frames"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| io::Error::other("too many bins"))?;
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for x in m.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

/// Reads one container. `expected_bins` rejects files of the wrong width.
pub fn read_features<R: Read>(
    mut r: R,
    context: &str,
    expected_bins: Option<usize>,
) -> Result<Matrix> {
    let mut header = [0u8; HEADER_LEN];
    read_exact(&mut r, &mut header, context)?;
    if header[..4] != FEATURE_MAGIC {
        return Err(Error::malformed(context, "not a feature file (bad magic)"));
    }
    let field =
        |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let (version, rows, cols) = (field(1), field(2) as usize, field(3) as usize);
    if version != FEATURE_VERSION {
        return Err(Error::malformed(
            context,
            format!("unsupported version {version}"),
        ));
    }
    if let Some(bins) = expected_bins {
        if cols != bins {
            return Err(Error::malformed(
                context,
                format!("expected {bins} bins, found {cols}"),
            ));
        }
    }
    let data = read_f32s(&mut r, rows * cols, context)?;
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => return Err(Error::malformed(context, "trailing bytes after frames")),
        Err(e) => return Err(Error::io(context, e)),
    }
    Ok(Matrix::new(rows, cols, data)?)
}

pub fn save_features(path: &Path, m: &Matrix) -> Result<()> {
    let ctx = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&ctx, e))?;
    write_features(BufWriter::new(file), m).map_err(|e| Error::io(&ctx, e))
}

pub fn load_features(path: &Path, expected_bins: Option<usize>) -> Result<Matrix> {
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&ctx, e))?;
    read_features(BufReader::new(file), &ctx, expected_bins)
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], context: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::malformed(context, "file is truncated")
        } else {
            Error::io(context, e)
        }
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, context: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, context)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize, context: &str) -> Result<Vec<f32>> {
    // Grow as bytes arrive so a corrupt count cannot force a huge allocation.
    let mut out = Vec::with_capacity(n.min(1 << 20));
    let mut chunk = vec![0u8; 4 * n.min(1 << 16)];
    let mut left = n;
    while left > 0 {
        let take = left.min(chunk.len() / 4);
        read_exact(r, &mut chunk[..4 * take], context)?;
        out.extend(
            chunk[..4 * take]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))),
        );
        left -= take;
    }
    Ok(out)
}

/// Where features come from: a container on disk or the seeded generator,
/// written `synth:SEED:FRAMES`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSource {
    File(PathBuf),
    Synth { seed: u64, frames: usize },
}

impl FromStr for FeatureSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let Some(spec) = s.strip_prefix("synth:") else {
            return Ok(FeatureSource::File(PathBuf::from(s)));
        };
        let (seed, frames) = spec
            .split_once(':')
            .ok_or_else(|| format!("expected synth:SEED:FRAMES, got {s:?}"))?;
        let seed = seed.parse().map_err(|_| format!("bad seed in {s:?}"))?;
        let frames = frames
            .parse()
            .map_err(|_| format!("bad frame count in {s:?}"))?;
        Ok(FeatureSource::Synth { seed, frames })
    }
}

impl FeatureSource {
    pub fn load(&self) -> Result<Matrix> {
        match self {
            FeatureSource::File(p) => load_features(p, Some(FEATURE_BINS)),
            FeatureSource::Synth { seed, frames } => Ok(synth_features(*seed, *frames)?),
        }
    }

    /// Short label used as the utterance id.
    pub fn id(&self) -> String {
        match self {
            FeatureSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            FeatureSource::Synth { seed, frames } => format!("synth-{seed}-{frames}"),
        }
    }
}
