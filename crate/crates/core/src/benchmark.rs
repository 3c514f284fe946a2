//! Labeled phantom datasets: clean sequences plus k-space corrupted ones
//! standing in for acquired artefacts.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{Label, LabeledSample};
use crate::kspace::{corrupt_sequence, CorruptionSpec};
use crate::phantom::{generate_cine, PhantomConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub n_clean: usize,
    pub n_artefact: usize,
    /// Template; center, radius, amplitude and seed are redrawn per sample.
    pub phantom: PhantomConfig,
    /// Maximum center displacement from the image middle, in pixels.
    pub center_jitter: f64,
    pub radius_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Seed is redrawn per corrupted sample.
    pub corruption: CorruptionSpec,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    /// 32x32, 16 frames, 100 clean and 100 corrupted with `z = 3`.
    fn default() -> Self {
        Self {
            n_clean: 100,
            n_artefact: 100,
            phantom: PhantomConfig {
                frames: 16,
                rows: 32,
                cols: 32,
                center: (16.0, 16.0),
                base_radius: 5.0,
                pulsation_amplitude: 1.5,
                wall_thickness: 2.0,
                n_static_structures: 2,
                ..PhantomConfig::default()
            },
            center_jitter: 4.0,
            radius_range: (4.0, 6.0),
            amplitude_range: (1.0, 2.0),
            corruption: CorruptionSpec::default(),
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 <= a && a <= b;
        if !ok_range(self.radius_range) || !ok_range(self.amplitude_range) || !(self.center_jitter >= 0.0) {
            return Err(Error::InvalidConfig("benchmark jitter ranges".into()));
        }
        self.phantom.validate()?;
        self.corruption.validate(self.phantom.frames)
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Clean samples first, then corrupted ones; all with origin `Real`.
pub fn generate_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mid = (cfg.phantom.rows as f64 / 2.0, cfg.phantom.cols as f64 / 2.0);
    let mut out = Vec::with_capacity(cfg.n_clean + cfg.n_artefact);
    for i in 0..cfg.n_clean + cfg.n_artefact {
        let j = cfg.center_jitter;
        let center = if j > 0.0 {
            (mid.0 + rng.random_range(-j..=j), mid.1 + rng.random_range(-j..=j))
        } else {
            mid
        };
        let phantom = PhantomConfig {
            center,
            base_radius: draw(&mut rng, cfg.radius_range),
            pulsation_amplitude: draw(&mut rng, cfg.amplitude_range),
            seed: rng.next_u64(),
            ..cfg.phantom.clone()
        };
        let corruption_seed = rng.next_u64();
        let (seq, _) = generate_cine(&phantom)?;
        if i < cfg.n_clean {
            out.push(LabeledSample::real(seq, Label::Good));
        } else {
            let spec = CorruptionSpec { seed: corruption_seed, ..cfg.corruption.clone() };
            out.push(LabeledSample::real(corrupt_sequence(&seq, &spec)?, Label::Artefact));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_labels_and_determinism() {
        let cfg = BenchmarkConfig { n_clean: 4, n_artefact: 3, ..Default::default() };
        let a = generate_benchmark(&cfg).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a.iter().filter(|s| s.label == Label::Artefact).count(), 3);
        assert!(a.iter().all(|s| s.seq.dims() == (16, 32, 32)));
        assert_eq!(a, generate_benchmark(&cfg).unwrap());
    }

    #[test]
    fn empty_benchmark_is_valid() {
        let cfg = BenchmarkConfig { n_clean: 0, n_artefact: 0, ..Default::default() };
        assert!(generate_benchmark(&cfg).unwrap().is_empty());
    }
}
