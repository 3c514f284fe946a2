//! Dense real/complex containers and exact discrete Fourier transforms.
//!
//! Forward transforms are unnormalized and inverse transforms carry the
//! `1/N` factor, so `inverse(forward(x)) == x` and coefficient swapping is
//! independent of the convention.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// A `T x H x W` stack of real samples stored frame-major, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVolume {
    frames: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealVolume {
    pub fn new(frames: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {frames}x{rows}x{cols} volume",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume"));
        }
        Ok(Self { frames, rows, cols, data })
    }

    pub fn zeros(frames: usize, rows: usize, cols: usize) -> Self {
        Self { frames, rows, cols, data: vec![0.0; frames * rows * cols] }
    }

    /// Builds a volume from equally sized frames.
    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::DimensionMismatch("no frames".into()))?;
        let (rows, cols) = (first.rows, first.cols);
        let mut data = Vec::with_capacity(frames.len() * rows * cols);
        for f in frames {
            if (f.rows, f.cols) != (rows, cols) {
                return Err(Error::DimensionMismatch(format!(
                    "frame {}x{} among {rows}x{cols} frames",
                    f.rows, f.cols
                )));
            }
            data.extend_from_slice(&f.data);
        }
        Self::new(frames.len(), rows, cols, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(T, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_owned(&self, t: usize) -> Frame {
        Frame { rows: self.rows, cols: self.cols, data: self.frame(t).to_vec() }
    }

    #[inline]
    pub fn at(&self, t: usize, r: usize, c: usize) -> f64 {
        self.data[(t * self.rows + r) * self.cols + c]
    }
}

/// A [`RealVolume`] whose samples all lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CineSequence(RealVolume);

impl CineSequence {
    pub fn new(volume: RealVolume) -> Result<Self> {
        if let Some(v) = volume.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::DimensionMismatch(format!(
                "intensity {v} outside [0, 1] in a cine sequence"
            )));
        }
        Ok(Self(volume))
    }

    /// Clamps every sample into `[0, 1]`.
    pub fn clamped(mut volume: RealVolume) -> Self {
        for v in &mut volume.data {
            *v = v.clamp(0.0, 1.0);
        }
        Self(volume)
    }

    pub fn volume(&self) -> &RealVolume {
        &self.0
    }

    pub fn into_volume(self) -> RealVolume {
        self.0
    }
}

impl Deref for CineSequence {
    type Target = RealVolume;

    fn deref(&self) -> &RealVolume {
        &self.0
    }
}

/// A single `H x W` real image or map.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `H x W` complex samples, row-major. Rows are the phase-encode lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {rows}x{cols} grid",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("complex grid"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_in_place(buf: &mut [Complex64], direction: Direction) {
    let n = buf.len();
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let fft = match direction {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        };
        fft.process(buf);
    });
    if direction == Direction::Inverse {
        let scale = 1.0 / n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }
}

/// One-dimensional DFT of any length `N >= 1`.
pub fn dft1d(signal: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
    if signal.is_empty() {
        return Err(Error::InvalidLength);
    }
    let mut out = signal.to_vec();
    transform_in_place(&mut out, direction);
    Ok(out)
}

/// Separable 2D DFT: rows first, then columns.
pub fn dft2d(grid: &ComplexGrid, direction: Direction) -> Result<ComplexGrid> {
    let (rows, cols) = (grid.rows, grid.cols);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidLength);
    }
    let mut data = grid.data.clone();
    for row in data.chunks_exact_mut(cols) {
        transform_in_place(row, direction);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        transform_in_place(&mut column, direction);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
    Ok(ComplexGrid { rows, cols, data })
}

/// Per-pixel magnitude of temporal frequency `bin` of the length-`T` pixel trace.
pub fn temporal_dft_magnitude(seq: &RealVolume, bin: usize) -> Result<Frame> {
    let (frames, rows, cols) = seq.dims();
    if bin >= frames {
        return Err(Error::InvalidBin { bin, frames });
    }
    let n = rows * cols;
    let twiddles: Vec<Complex64> = (0..frames)
        .map(|t| {
            // reduce k*t mod T before scaling to keep the phase exact for large products
            let k = (bin * t) % frames;
            Complex64::from_polar(1.0, -2.0 * PI * k as f64 / frames as f64)
        })
        .collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for (t, w) in twiddles.iter().enumerate() {
        for (a, &x) in acc.iter_mut().zip(seq.frame(t)) {
            *a += w * x;
        }
    }
    Ok(Frame { rows, cols, data: acc.into_iter().map(|z| z.norm()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N^2) evaluation of the DFT definition.
    fn direct_dft(x: &[Complex64], direction: Direction) -> Vec<Complex64> {
        let n = x.len();
        let sign = match direction {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let scale = match direction {
            Direction::Forward => 1.0,
            Direction::Inverse => 1.0 / n as f64,
        };
        (0..n)
            .map(|k| {
                let s: Complex64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let ph = sign * 2.0 * PI * ((k * j) % n) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, ph)
                    })
                    .sum();
                s * scale
            })
            .collect()
    }

    fn random_signal(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let x: Vec<Complex64> = [1.0, 0.0, 0.0, 0.0].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spec = dft1d(&x, Direction::Forward).unwrap();
        for z in spec {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_is_dc_only() {
        let c = 0.37;
        let x = vec![Complex64::new(c, 0.0); 8];
        let spec = dft1d(&x, Direction::Forward).unwrap();
        assert!((spec[0] - Complex64::new(8.0 * c, 0.0)).norm() < 1e-14);
        assert!(spec[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn length_twelve_round_trip_matches_oracle() {
        let x = random_signal(12, 7);
        let fwd = dft1d(&x, Direction::Forward).unwrap();
        assert!(max_err(&fwd, &direct_dft(&x, Direction::Forward)) < 1e-10);
        let back = dft1d(&fwd, Direction::Inverse).unwrap();
        assert!(max_err(&back, &x) < 1e-10);
    }

    #[test]
    fn empty_signal_rejected() {
        assert!(matches!(dft1d(&[], Direction::Forward), Err(Error::InvalidLength)));
        let g = ComplexGrid::zeros(0, 3);
        assert!(matches!(dft2d(&g, Direction::Forward), Err(Error::InvalidLength)));
    }

    #[test]
    fn delta_2d_is_all_ones() {
        let mut data = vec![0.0; 12];
        data[0] = 1.0;
        let g = ComplexGrid::from_real(3, 4, &data).unwrap();
        let k = dft2d(&g, Direction::Forward).unwrap();
        assert!(k.data().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn constant_2d_is_dc_only() {
        let c = 0.25;
        let g = ComplexGrid::from_real(4, 4, &[c; 16]).unwrap();
        let k = dft2d(&g, Direction::Forward).unwrap();
        assert!((k.at(0, 0) - Complex64::new(16.0 * c, 0.0)).norm() < 1e-14);
        assert!(k.data()[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn grid_5x7_matches_separable_oracle_and_round_trips() {
        let x = random_signal(35, 11);
        let g = ComplexGrid::new(5, 7, x.clone()).unwrap();
        let k = dft2d(&g, Direction::Forward).unwrap();
        // oracle: direct 2D summation
        for u in 0..5 {
            for v in 0..7 {
                let mut s = Complex64::new(0.0, 0.0);
                for r in 0..5 {
                    for c in 0..7 {
                        let ph = -2.0 * PI * (((u * r) % 5) as f64 / 5.0 + ((v * c) % 7) as f64 / 7.0);
                        s += x[r * 7 + c] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((s - k.at(u, v)).norm() < 1e-10);
            }
        }
        let back = dft2d(&k, Direction::Inverse).unwrap();
        assert!(max_err(back.data(), &x) < 1e-10);
    }

    #[test]
    fn static_sequence_has_no_first_harmonic() {
        let frame: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        let data: Vec<f64> = (0..6).flat_map(|_| frame.clone()).collect();
        let vol = RealVolume::new(6, 3, 4, data).unwrap();
        let m = temporal_dft_magnitude(&vol, 1).unwrap();
        assert!(m.data.iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn single_tone_magnitude_is_half_length() {
        let t_len = 8;
        let mut data = vec![0.0; t_len * 4];
        for t in 0..t_len {
            data[t * 4 + 2] = (2.0 * PI * t as f64 / t_len as f64).cos();
        }
        let vol = RealVolume::new(t_len, 2, 2, data).unwrap();
        let m = temporal_dft_magnitude(&vol, 1).unwrap();
        assert!((m.data[2] - 4.0).abs() < 1e-12);
        assert!(m.data[0] < 1e-12);
    }

    #[test]
    fn bin_out_of_range() {
        let vol = RealVolume::zeros(4, 2, 2);
        assert!(matches!(temporal_dft_magnitude(&vol, 4), Err(Error::InvalidBin { bin: 4, frames: 4 })));
    }

    #[test]
    fn volume_rejects_bad_lengths_and_nan() {
        assert!(RealVolume::new(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(RealVolume::new(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(CineSequence::new(RealVolume::new(1, 1, 1, vec![1.5]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn linearity(n in 1usize..40, seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let x = random_signal(n, seed);
            let y = random_signal(n, seed.wrapping_add(1));
            let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
            let lhs = dft1d(&mix, Direction::Forward).unwrap();
            let fx = dft1d(&x, Direction::Forward).unwrap();
            let fy = dft1d(&y, Direction::Forward).unwrap();
            let rhs: Vec<Complex64> = fx.iter().zip(&fy).map(|(p, q)| p * a + q * b).collect();
            prop_assert!(max_err(&lhs, &rhs) < 1e-9);
        }

        #[test]
        fn parseval(n in 1usize..64, seed in any::<u64>()) {
            let x = random_signal(n, seed);
            let fx = dft1d(&x, Direction::Forward).unwrap();
            let e_time: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let e_freq: f64 = fx.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((e_time - e_freq).abs() <= 1e-9 * e_time.max(1e-300));
        }
    }
}
