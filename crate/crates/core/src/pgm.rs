//! Binary (P5) 8-bit PGM export, mapping `[0, 1]` linearly onto `0..=255`.

use std::io::Write;

use crate::numerics::Frame;
use crate::Result;

pub fn write_pgm<W: Write>(mut out: W, frame: &Frame) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.cols, frame.rows)?;
    let bytes: Vec<u8> = frame.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Rescales a non-negative map by its maximum before export.
pub fn write_pgm_autoscale<W: Write>(out: W, frame: &Frame) -> Result<()> {
    let max = frame.max();
    let scaled = if max > 0.0 {
        Frame { rows: frame.rows, cols: frame.cols, data: frame.data.iter().map(|v| v / max).collect() }
    } else {
        frame.clone()
    };
    write_pgm(out, &scaled)
}
