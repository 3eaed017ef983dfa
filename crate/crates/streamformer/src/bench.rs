//! Per-segment cost table for the encoder stack.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use streamformer_core::encoder::Encoder;
use streamformer_core::rng::SeededRng;
use streamformer_core::stream::SegmentStream;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentCost {
    pub segment: usize,
    pub left: usize,
    pub center: usize,
    pub right: usize,
    pub memory_slots: usize,
    pub key_rows: usize,
    pub micros: u128,
}

/// Streams `num_segments` full segments of random encoder frames through
/// `encoder`, timing each one.
pub fn bench_segment_costs(
    encoder: &Encoder,
    num_segments: usize,
    seed: u64,
) -> Result<Vec<SegmentCost>> {
    if num_segments == 0 {
        return Err(Error::Config("need at least one segment".into()));
    }
    let cfg = encoder.config().segmenter;
    let mut rng = SeededRng::new(seed);
    let mut stream = SegmentStream::new(encoder);
    let dim = encoder.config().dim;
    stream.push_frames(&rng.uniform_matrix(cfg.right, dim, -1.0, 1.0))?;
    let mut out = Vec::with_capacity(num_segments);
    for _ in 0..num_segments {
        let frames = rng.uniform_matrix(cfg.center, dim, -1.0, 1.0);
        let start = Instant::now();
        stream.push_frames(&frames)?;
        let micros = start.elapsed().as_micros();
        let s = *stream.stats().last().expect("one segment per push");
        out.push(SegmentCost {
            segment: s.index,
            left: s.left,
            center: s.center,
            right: s.right,
            memory_slots: s.memory_slots,
            key_rows: s.key_rows,
            micros,
        });
    }
    Ok(out)
}

pub fn write_csv<W: Write>(w: W, rows: &[SegmentCost]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)
            .map_err(|e| Error::io("csv", std::io::Error::other(e)))?;
    }
    wr.flush().map_err(|e| Error::io("csv", e))
}
