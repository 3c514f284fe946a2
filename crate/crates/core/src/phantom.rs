//! Synthetic short-axis cine phantoms: a pulsating annulus standing in for
//! the left ventricle, fixed background distractors and Gaussian noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::{CineSequence, Frame, RealVolume};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    /// Annulus center as fractional `(row, col)`.
    pub center: (f64, f64),
    /// Blood-pool radius at phase zero, in pixels.
    pub base_radius: f64,
    pub pulsation_amplitude: f64,
    pub wall_thickness: f64,
    pub myocardium_intensity: f64,
    pub blood_intensity: f64,
    pub background_intensity: f64,
    pub noise_sigma: f64,
    pub n_static_structures: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            rows: 64,
            cols: 64,
            center: (32.0, 32.0),
            base_radius: 10.0,
            pulsation_amplitude: 2.0,
            wall_thickness: 3.0,
            myocardium_intensity: 0.35,
            blood_intensity: 0.9,
            background_intensity: 0.15,
            noise_sigma: 0.02,
            n_static_structures: 3,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.frames == 0 || self.rows == 0 || self.cols == 0 {
            return bad(format!("empty dimensions {}x{}x{}", self.frames, self.rows, self.cols));
        }
        let half = self.rows.min(self.cols) as f64 / 2.0;
        let extent = self.base_radius + self.pulsation_amplitude + self.wall_thickness;
        if !(extent < half) {
            return bad(format!("annulus extent {extent} must be below {half}"));
        }
        if self.pulsation_amplitude < 0.0 || self.wall_thickness < 0.0 {
            return bad("amplitude and wall thickness must be non-negative".into());
        }
        if self.base_radius - self.pulsation_amplitude < 0.0 {
            return bad("blood-pool radius would become negative".into());
        }
        for (name, v) in [
            ("myocardium", self.myocardium_intensity),
            ("blood", self.blood_intensity),
            ("background", self.background_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} intensity {v} outside [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise sigma {}", self.noise_sigma));
        }
        let (cr, cc) = self.center;
        if !(0.0..self.rows as f64).contains(&cr) || !(0.0..self.cols as f64).contains(&cc) {
            return bad(format!("center ({cr}, {cc}) outside the image"));
        }
        Ok(())
    }

    /// Blood-pool radius of frame `t`.
    pub fn inner_radius(&self, t: usize) -> f64 {
        let phase = 2.0 * PI * (t % self.frames) as f64 / self.frames as f64;
        self.base_radius + self.pulsation_amplitude * phase.sin()
    }
}

/// Fraction of a pixel at distance `d` covered by a disc of radius `radius`,
/// ramping linearly over one pixel.
#[inline]
fn coverage(radius: f64, d: f64) -> f64 {
    (radius - d + 0.5).clamp(0.0, 1.0)
}

fn static_background(cfg: &PhantomConfig, rng: &mut ChaCha8Rng) -> Frame {
    let mut bg = Frame { rows: cfg.rows, cols: cfg.cols, data: vec![cfg.background_intensity; cfg.rows * cfg.cols] };
    let keep_out = cfg.base_radius + cfg.pulsation_amplitude + cfg.wall_thickness + 2.0;
    let (cr, cc) = cfg.center;
    for _ in 0..cfg.n_static_structures {
        let disc = rng.random_bool(0.5);
        let size = rng.random_range(2.0..5.0);
        let intensity = rng.random_range(0.2..0.8);
        // rejection-sample a position clear of the annulus
        let mut placed = None;
        for _ in 0..100 {
            let r = rng.random_range(size..(cfg.rows as f64 - size).max(size + 1e-9));
            let c = rng.random_range(size..(cfg.cols as f64 - size).max(size + 1e-9));
            let dist = ((r - cr).powi(2) + (c - cc).powi(2)).sqrt();
            if dist > keep_out + size * std::f64::consts::SQRT_2 {
                placed = Some((r, c));
                break;
            }
        }
        let Some((r0, c0)) = placed else { continue };
        for r in 0..cfg.rows {
            for c in 0..cfg.cols {
                let (dr, dc) = (r as f64 - r0, c as f64 - c0);
                let cov = if disc {
                    coverage(size, (dr * dr + dc * dc).sqrt())
                } else {
                    coverage(size, dr.abs()) * coverage(size, dc.abs())
                };
                let v = &mut bg.data[r * cfg.cols + c];
                *v = *v * (1.0 - cov) + intensity * cov;
            }
        }
    }
    bg
}

/// Renders the phantom and returns it together with the true annulus center.
pub fn generate_cine(cfg: &PhantomConfig) -> Result<(CineSequence, (f64, f64))> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bg = static_background(cfg, &mut rng);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (cr, cc) = cfg.center;
    let n = cfg.rows * cfg.cols;
    let mut data = Vec::with_capacity(cfg.frames * n);
    for t in 0..cfg.frames {
        let inner = cfg.inner_radius(t);
        let outer = inner + cfg.wall_thickness;
        for r in 0..cfg.rows {
            for c in 0..cfg.cols {
                let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
                let mut v = bg.at(r, c);
                let cov_out = coverage(outer, d);
                v = v * (1.0 - cov_out) + cfg.myocardium_intensity * cov_out;
                let cov_in = coverage(inner, d);
                v = v * (1.0 - cov_in) + cfg.blood_intensity * cov_in;
                if cfg.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    let vol = RealVolume::new(cfg.frames, cfg.rows, cfg.cols, data)?;
    Ok((CineSequence::new(vol)?, cfg.center))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::temporal_dft_magnitude;

    #[test]
    fn no_motion_no_noise_gives_identical_frames() {
        let cfg = PhantomConfig { pulsation_amplitude: 0.0, noise_sigma: 0.0, ..Default::default() };
        let (seq, _) = generate_cine(&cfg).unwrap();
        for t in 1..seq.frames() {
            assert_eq!(seq.frame(0), seq.frame(t));
        }
    }

    #[test]
    fn frame_zero_equals_half_cycle() {
        let cfg = PhantomConfig { noise_sigma: 0.0, ..Default::default() };
        let (seq, _) = generate_cine(&cfg).unwrap();
        assert_eq!(seq.frame(0), seq.frame(cfg.frames / 2));
        assert_ne!(seq.frame(0), seq.frame(cfg.frames / 4));
    }

    #[test]
    fn seeds_change_content_not_center() {
        let a = generate_cine(&PhantomConfig { seed: 1, ..Default::default() }).unwrap();
        let b = generate_cine(&PhantomConfig { seed: 2, ..Default::default() }).unwrap();
        assert_ne!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn reproducible_and_in_range() {
        let cfg = PhantomConfig { seed: 9, noise_sigma: 0.2, ..Default::default() };
        let a = generate_cine(&cfg).unwrap().0;
        let b = generate_cine(&cfg).unwrap().0;
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_oversized_annulus() {
        let cfg = PhantomConfig { base_radius: 28.0, ..Default::default() };
        assert!(matches!(generate_cine(&cfg), Err(Error::InvalidConfig(_))));
        let cfg = PhantomConfig { blood_intensity: 1.2, ..Default::default() };
        assert!(matches!(generate_cine(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn harmonic_peak_near_center() {
        for seed in 0..10 {
            let cfg = PhantomConfig {
                seed,
                noise_sigma: 0.05,
                center: (26.0 + seed as f64, 38.0 - seed as f64 * 0.7),
                ..Default::default()
            };
            let (seq, (cr, cc)) = generate_cine(&cfg).unwrap();
            let m = temporal_dft_magnitude(&seq, 1).unwrap();
            let (idx, _) = m
                .data
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let (r, c) = ((idx / m.cols) as f64, (idx % m.cols) as f64);
            let d = ((r - cr).powi(2) + (c - cc).powi(2)).sqrt();
            let bound = cfg.base_radius + cfg.pulsation_amplitude + cfg.wall_thickness;
            assert!(d <= bound, "seed {seed}: peak at distance {d}");
        }
    }
}
