//! Cartesian k-space line replacement.
//!
//! Every frame is taken to k-space and one in `z` phase-encode rows is
//! overwritten with the same rows of another cardiac phase. This mimics
//! mistriggering, where lines acquired during one phase are attributed to
//! another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{dft2d, CineSequence, ComplexGrid, Direction, Frame, RealVolume};
use crate::{Error, Result};

/// Frame offset used when borrowing lines from another phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    Fixed(usize),
    /// Drawn per frame from `1..T`.
    UniformRandom,
}

/// Which residue class modulo `z` gets replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhasePolicy {
    Fixed(usize),
    /// Drawn per frame from `0..z`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub z: usize,
    pub offset: OffsetPolicy,
    pub phase: PhasePolicy,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self { z: 3, offset: OffsetPolicy::UniformRandom, phase: PhasePolicy::Random, seed: 0 }
    }
}

impl CorruptionSpec {
    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.z == 0 {
            return Err(Error::InvalidSpec("z must be at least 1".into()));
        }
        match self.offset {
            OffsetPolicy::Fixed(j) if j >= frames => {
                return Err(Error::InvalidSpec(format!("offset {j} not below {frames} frames")))
            }
            OffsetPolicy::UniformRandom if frames < 2 => return Err(Error::InsufficientFrames(frames)),
            _ => {}
        }
        if let PhasePolicy::Fixed(p) = self.phase {
            if p >= self.z {
                return Err(Error::InvalidSpec(format!("line phase {p} not below z={}", self.z)));
            }
        }
        Ok(())
    }

    /// Per-frame `(offset, phase)` draws, generated in frame order.
    pub fn draws(&self, frames: usize) -> Result<Vec<(usize, usize)>> {
        self.validate(frames)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..frames)
            .map(|_| {
                let j = match self.offset {
                    OffsetPolicy::Fixed(j) => j,
                    OffsetPolicy::UniformRandom => rng.random_range(1..frames),
                };
                let phi = match self.phase {
                    PhasePolicy::Fixed(p) => p,
                    PhasePolicy::Random => rng.random_range(0..self.z),
                };
                (j, phi)
            })
            .collect())
    }
}

pub fn to_kspace(frame: &Frame) -> Result<ComplexGrid> {
    dft2d(&ComplexGrid::from_real(frame.rows, frame.cols, &frame.data)?, Direction::Forward)
}

/// Magnitude image of the inverse transform.
pub fn from_kspace(grid: &ComplexGrid) -> Result<Frame> {
    let img = dft2d(grid, Direction::Inverse)?;
    Ok(Frame { rows: grid.rows(), cols: grid.cols(), data: img.data().iter().map(|z| z.norm()).collect() })
}

/// Replaces rows `l` with `l % z == phase` of `target` by those of `source`.
pub fn replace_lines(target: &mut ComplexGrid, source: &ComplexGrid, z: usize, phase: usize) {
    for l in (phase..target.rows()).step_by(z) {
        target.row_mut(l).copy_from_slice(source.row(l));
    }
}

/// Applies line replacement to every frame and returns the clamped magnitude sequence.
pub fn corrupt_sequence(seq: &CineSequence, spec: &CorruptionSpec) -> Result<CineSequence> {
    let (frames, rows, cols) = seq.dims();
    let draws = spec.draws(frames)?;
    let spectra: Vec<ComplexGrid> =
        (0..frames).into_par_iter().map(|t| to_kspace(&seq.frame_owned(t))).collect::<Result<_>>()?;
    let out: Vec<Frame> = draws
        .par_iter()
        .enumerate()
        .map(|(i, &(j, phi))| {
            let mut k = spectra[i].clone();
            replace_lines(&mut k, &spectra[(i + j) % frames], spec.z, phi);
            from_kspace(&k)
        })
        .collect::<Result<_>>()?;
    debug_assert!(out.iter().all(|f| (f.rows, f.cols) == (rows, cols)));
    Ok(CineSequence::clamped(RealVolume::from_frames(&out)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_cine, PhantomConfig};

    fn phantom(seed: u64, amplitude: f64) -> CineSequence {
        let cfg = PhantomConfig {
            rows: 32,
            cols: 32,
            center: (16.0, 16.0),
            base_radius: 6.0,
            pulsation_amplitude: amplitude,
            wall_thickness: 2.0,
            seed,
            ..Default::default()
        };
        generate_cine(&cfg).unwrap().0
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_and_constant_frames() {
        let zero = Frame::zeros(4, 4);
        assert!(to_kspace(&zero).unwrap().data().iter().all(|z| z.norm() == 0.0));
        assert!(from_kspace(&ComplexGrid::zeros(4, 4)).unwrap().data.iter().all(|&v| v == 0.0));
        let c = Frame { rows: 4, cols: 4, data: vec![0.3; 16] };
        let k = to_kspace(&c).unwrap();
        assert!((k.at(0, 0).re - 16.0 * 0.3).abs() < 1e-14);
    }

    #[test]
    fn parseval_on_phantom_frame() {
        let f = phantom(3, 2.0).frame_owned(5);
        let k = to_kspace(&f).unwrap();
        let e_img: f64 = f.data.iter().map(|v| v * v).sum();
        let e_k: f64 = k.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / (f.rows * f.cols) as f64;
        assert!((e_img - e_k).abs() < 1e-9 * e_img);
    }

    #[test]
    fn magnitude_round_trip() {
        let f = phantom(4, 2.0).frame_owned(2);
        let back = from_kspace(&to_kspace(&f).unwrap()).unwrap();
        assert!(max_abs_diff(&back.data, &f.data) < 1e-9);
    }

    #[test]
    fn offset_zero_is_identity() {
        let seq = phantom(5, 2.0);
        let spec = CorruptionSpec { z: 3, offset: OffsetPolicy::Fixed(0), phase: PhasePolicy::Random, seed: 1 };
        let out = corrupt_sequence(&seq, &spec).unwrap();
        assert!(max_abs_diff(out.data(), seq.data()) < 1e-9);
    }

    #[test]
    fn full_replacement_shifts_frames() {
        let seq = phantom(6, 2.0);
        let j = 5;
        let spec = CorruptionSpec { z: 1, offset: OffsetPolicy::Fixed(j), phase: PhasePolicy::Fixed(0), seed: 0 };
        let out = corrupt_sequence(&seq, &spec).unwrap();
        for i in 0..seq.frames() {
            assert!(max_abs_diff(out.frame(i), seq.frame((i + j) % seq.frames())) < 1e-9);
        }
    }

    #[test]
    fn untouched_rows_are_exact() {
        let seq = phantom(7, 2.0);
        let a = to_kspace(&seq.frame_owned(0)).unwrap();
        let b = to_kspace(&seq.frame_owned(4)).unwrap();
        let mut k = a.clone();
        replace_lines(&mut k, &b, 3, 1);
        for l in 0..k.rows() {
            let expect = if l % 3 == 1 { b.row(l) } else { a.row(l) };
            assert_eq!(k.row(l), expect);
        }
    }

    #[test]
    fn moving_sequence_changes_more_than_static() {
        let spec = CorruptionSpec { seed: 12, ..Default::default() };
        let moving = phantom(8, 2.0);
        let still = phantom(8, 0.0);
        let mad = |a: &CineSequence, b: &CineSequence| {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64
        };
        let d_moving = mad(&corrupt_sequence(&moving, &spec).unwrap(), &moving);
        let d_still = mad(&corrupt_sequence(&still, &spec).unwrap(), &still);
        assert!(d_moving > 0.0);
        assert!(d_moving > d_still, "{d_moving} vs {d_still}");
    }

    #[test]
    fn corrupted_output_is_finite_and_clamped() {
        let out = corrupt_sequence(&phantom(9, 2.0), &CorruptionSpec::default()).unwrap();
        assert!(out.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn spec_validation() {
        let one = CineSequence::clamped(RealVolume::zeros(1, 4, 4));
        assert!(matches!(
            corrupt_sequence(&one, &CorruptionSpec::default()),
            Err(Error::InsufficientFrames(1))
        ));
        let seq = phantom(1, 2.0);
        for spec in [
            CorruptionSpec { z: 0, ..Default::default() },
            CorruptionSpec { offset: OffsetPolicy::Fixed(16), ..Default::default() },
            CorruptionSpec { phase: PhasePolicy::Fixed(3), ..Default::default() },
        ] {
            assert!(matches!(corrupt_sequence(&seq, &spec), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn random_offsets_skip_zero_and_are_deterministic() {
        let spec = CorruptionSpec { seed: 77, ..Default::default() };
        let d = spec.draws(50).unwrap();
        assert!(d.iter().all(|&(j, p)| (1..50).contains(&j) && p < 3));
        assert_eq!(d, spec.draws(50).unwrap());
        let seq = phantom(2, 2.0);
        assert_eq!(corrupt_sequence(&seq, &spec).unwrap(), corrupt_sequence(&seq, &spec).unwrap());
    }
}
