//! Intensity normalization and motion-based ROI extraction.
//!
//! The ROI center is found without supervision: the magnitude of the first
//! temporal harmonic highlights structures that move once per cycle, and a
//! gradient-voting circular Hough transform on that map peaks at the center
//! of the moving ring.

use serde::{Deserialize, Serialize};

use crate::numerics::{temporal_dft_magnitude, CineSequence, Frame, RealVolume};
use crate::{Error, Result};

/// Global affine rescale to `[0, 1]` over the whole sequence.
pub fn normalize(vol: &RealVolume) -> Result<CineSequence> {
    if vol.data().is_empty() {
        return Err(Error::DimensionMismatch("empty sequence".into()));
    }
    let (lo, hi) = vol
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Err(Error::DegenerateIntensity(lo));
    }
    let scale = 1.0 / (hi - lo);
    let data = vol.data().iter().map(|&v| ((v - lo) * scale).clamp(0.0, 1.0)).collect();
    CineSequence::new(RealVolume::new(vol.frames(), vol.rows(), vol.cols(), data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiConfig {
    /// Temporal frequency bin carrying the cardiac motion.
    pub bin: usize,
    /// Voting threshold on the gradient of the `[0, 1]`-normalized harmonic map.
    pub grad_threshold: f64,
    /// Minimum peak harmonic magnitude for the sequence to count as moving.
    pub motion_floor: f64,
    /// Voting radii `(r_min, r_max)`; `None` means `(4, min(H, W) / 4)`.
    pub radius_range: Option<(f64, f64)>,
    pub crop_size: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self { bin: 1, grad_threshold: 0.1, motion_floor: 1e-3, radius_range: None, crop_size: 80 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiResult {
    pub center: (usize, usize),
    pub crop_size: usize,
    /// Peak of the smoothed accumulator.
    pub vote_score: f64,
    /// Top-left corner of the crop window, clamped into the image.
    pub origin: (usize, usize),
}

/// Intermediate maps from ROI detection, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct RoiMaps {
    pub harmonic: Frame,
    pub accumulator: Frame,
}

fn clamp_window(center: usize, crop: usize, extent: usize) -> usize {
    (center as isize - (crop / 2) as isize).clamp(0, (extent - crop) as isize) as usize
}

pub fn find_roi_center(seq: &CineSequence, cfg: &RoiConfig) -> Result<RoiResult> {
    find_roi_center_with_maps(seq, cfg).map(|(r, _)| r)
}

pub fn find_roi_center_with_maps(seq: &CineSequence, cfg: &RoiConfig) -> Result<(RoiResult, RoiMaps)> {
    let (frames, rows, cols) = seq.dims();
    if frames < 4 {
        return Err(Error::InvalidRoi(format!("need at least 4 frames, got {frames}")));
    }
    if cfg.crop_size == 0 || cfg.crop_size > rows || cfg.crop_size > cols {
        return Err(Error::InvalidRoi(format!("crop {} does not fit {rows}x{cols}", cfg.crop_size)));
    }
    let half = rows.min(cols) as f64 / 2.0;
    let (r_min, r_max) = cfg.radius_range.unwrap_or((4.0, rows.min(cols) as f64 / 4.0));
    if !(r_min >= 0.0 && r_min <= r_max && r_max < half) {
        return Err(Error::InvalidRoi(format!("radius range ({r_min}, {r_max}) for {rows}x{cols}")));
    }

    let mut harmonic = temporal_dft_magnitude(seq, cfg.bin)?;
    let peak = harmonic.max();
    if peak < cfg.motion_floor {
        return Err(Error::NoMotionDetected(peak));
    }
    for v in &mut harmonic.data {
        *v /= peak;
    }

    let mut accum = Frame::zeros(rows, cols);
    let radii: Vec<f64> = (r_min.ceil() as usize..=r_max.floor() as usize).map(|r| r as f64).collect();
    for r in 0..rows {
        for c in 0..cols {
            let (gy, gx) = gradient(&harmonic, r, c);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag <= cfg.grad_threshold {
                continue;
            }
            let (dy, dx) = (gy / mag, gx / mag);
            for sign in [-1.0, 1.0] {
                for &rad in &radii {
                    let vr = (r as f64 + sign * dy * rad).round();
                    let vc = (c as f64 + sign * dx * rad).round();
                    if vr >= 0.0 && vc >= 0.0 && (vr as usize) < rows && (vc as usize) < cols {
                        accum.data[vr as usize * cols + vc as usize] += mag;
                    }
                }
            }
        }
    }

    let smoothed = box3(&accum);
    let mut best = (0usize, 0.0f64);
    for (i, &v) in smoothed.data.iter().enumerate() {
        // strict comparison keeps the lexicographically smallest index on ties
        if v > best.1 {
            best = (i, v);
        }
    }
    if best.1 <= 0.0 {
        return Err(Error::NoCircularStructure);
    }
    let center = (best.0 / cols, best.0 % cols);
    let origin = (clamp_window(center.0, cfg.crop_size, rows), clamp_window(center.1, cfg.crop_size, cols));
    let result = RoiResult { center, crop_size: cfg.crop_size, vote_score: best.1, origin };
    Ok((result, RoiMaps { harmonic, accumulator: smoothed }))
}

/// `(d/drow, d/dcol)` by central differences, one-sided at the borders.
fn gradient(m: &Frame, r: usize, c: usize) -> (f64, f64) {
    let diff = |lo: f64, hi: f64, span: usize| if span == 0 { 0.0 } else { (hi - lo) / span as f64 };
    let (r0, r1) = (r.saturating_sub(1), (r + 1).min(m.rows - 1));
    let (c0, c1) = (c.saturating_sub(1), (c + 1).min(m.cols - 1));
    (diff(m.at(r0, c), m.at(r1, c), r1 - r0), diff(m.at(r, c0), m.at(r, c1), c1 - c0))
}

fn box3(m: &Frame) -> Frame {
    let mut out = Frame::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        for c in 0..m.cols {
            let mut s = 0.0;
            for rr in r.saturating_sub(1)..=(r + 1).min(m.rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(m.cols - 1) {
                    s += m.at(rr, cc);
                }
            }
            out.data[r * m.cols + c] = s / 9.0;
        }
    }
    out
}

/// Copies the ROI window out of every frame. Never interpolates.
pub fn crop_roi(seq: &CineSequence, roi: &RoiResult) -> Result<CineSequence> {
    let (frames, rows, cols) = seq.dims();
    let (top, left) = roi.origin;
    let size = roi.crop_size;
    if size == 0 || top + size > rows || left + size > cols {
        return Err(Error::InvalidRoi(format!(
            "window {size}x{size} at ({top}, {left}) outside {rows}x{cols}"
        )));
    }
    let mut data = Vec::with_capacity(frames * size * size);
    for t in 0..frames {
        let frame = seq.frame(t);
        for r in top..top + size {
            data.extend_from_slice(&frame[r * cols + left..r * cols + left + size]);
        }
    }
    CineSequence::new(RealVolume::new(frames, size, size, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_cine, PhantomConfig};

    #[test]
    fn affine_midpoint() {
        let vol = RealVolume::new(1, 1, 3, vec![10.0, 15.0, 20.0]).unwrap();
        let n = normalize(&vol).unwrap();
        assert_eq!(n.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let vol = RealVolume::new(2, 1, 3, vec![0.0, 0.3, 0.7, 1.0, 0.25, 0.5]).unwrap();
        let n = normalize(&vol).unwrap();
        for (a, b) in n.data().iter().zip(vol.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_phantom_spans_unit_interval() {
        let cfg = PhantomConfig { noise_sigma: 0.05, ..Default::default() };
        let seq = generate_cine(&cfg).unwrap().0;
        let scaled: Vec<f64> = seq.data().iter().map(|v| 3.0 * v + 7.0).collect();
        let n = normalize(&RealVolume::new(seq.frames(), seq.rows(), seq.cols(), scaled).unwrap()).unwrap();
        let lo = n.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = n.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn constant_sequence_is_degenerate() {
        let vol = RealVolume::new(2, 2, 2, vec![0.4; 8]).unwrap();
        assert!(matches!(normalize(&vol), Err(Error::DegenerateIntensity(_))));
    }

    #[test]
    fn static_sequence_has_no_motion() {
        let cfg = PhantomConfig { pulsation_amplitude: 0.0, noise_sigma: 0.0, ..Default::default() };
        let seq = generate_cine(&cfg).unwrap().0;
        let roi = RoiConfig { crop_size: 32, ..Default::default() };
        assert!(matches!(find_roi_center(&seq, &roi), Err(Error::NoMotionDetected(_))));
    }

    #[test]
    fn finds_pulsating_center() {
        let cfg = PhantomConfig { center: (32.0, 32.0), base_radius: 10.0, pulsation_amplitude: 2.0, ..Default::default() };
        let seq = generate_cine(&cfg).unwrap().0;
        let roi = find_roi_center(&seq, &RoiConfig { crop_size: 48, ..Default::default() }).unwrap();
        let d = ((roi.center.0 as f64 - 32.0).powi(2) + (roi.center.1 as f64 - 32.0).powi(2)).sqrt();
        assert!(d <= 3.0, "detected {:?}", roi.center);
        assert!(roi.vote_score > 0.0);
    }

    #[test]
    fn window_clamped_near_border() {
        let cfg = PhantomConfig {
            center: (5.0, 32.0),
            base_radius: 4.0,
            pulsation_amplitude: 1.5,
            wall_thickness: 2.0,
            ..Default::default()
        };
        let seq = generate_cine(&cfg).unwrap().0;
        let roi = find_roi_center(&seq, &RoiConfig { crop_size: 48, ..Default::default() }).unwrap();
        assert!(roi.origin.0 + 48 <= 64 && roi.origin.1 + 48 <= 64);
        let cropped = crop_roi(&seq, &roi).unwrap();
        assert_eq!(cropped.dims(), (16, 48, 48));
    }

    #[test]
    fn translation_equivariance() {
        let base = RoiConfig { crop_size: 32, ..Default::default() };
        let detect = |center: (f64, f64)| {
            let cfg = PhantomConfig { center, seed: 4, ..Default::default() };
            find_roi_center(&generate_cine(&cfg).unwrap().0, &base).unwrap().center
        };
        let a = detect((30.0, 31.0));
        for (dr, dc) in [(3isize, -2isize), (-4, 5), (2, 2)] {
            let b = detect((30.0 + dr as f64, 31.0 + dc as f64));
            assert!(((b.0 as isize - a.0 as isize) - dr).abs() <= 2);
            assert!(((b.1 as isize - a.1 as isize) - dc).abs() <= 2);
        }
    }

    #[test]
    fn crop_copies_pixels() {
        let seq = generate_cine(&PhantomConfig::default()).unwrap().0;
        let roi = RoiResult { center: (30, 20), crop_size: 16, vote_score: 1.0, origin: (22, 12) };
        let out = crop_roi(&seq, &roi).unwrap();
        for t in 0..seq.frames() {
            for r in 0..16 {
                for c in 0..16 {
                    assert_eq!(out.at(t, r, c), seq.at(t, r + 22, c + 12));
                }
            }
        }
        let full = RoiResult { center: (32, 32), crop_size: 64, vote_score: 1.0, origin: (0, 0) };
        assert_eq!(crop_roi(&seq, &full).unwrap(), seq);
        let bad = RoiResult { origin: (50, 0), ..roi };
        assert!(matches!(crop_roi(&seq, &bad), Err(Error::InvalidRoi(_))));
    }
}
