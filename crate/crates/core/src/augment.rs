//! Training-time augmentation: integer translations and k-space class
//! balancing. Nothing in here may ever produce test data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kspace::{corrupt_sequence, CorruptionSpec};
use crate::numerics::{CineSequence, RealVolume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Good,
    Artefact,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Good => 0,
            Label::Artefact => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Good),
            1 => Some(Label::Artefact),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Good => "good",
            Label::Artefact => "artefact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    SyntheticCorruption,
    Translated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub seq: CineSequence,
    pub label: Label,
    pub origin: Origin,
}

impl LabeledSample {
    pub fn real(seq: CineSequence, label: Label) -> Self {
        Self { seq, label, origin: Origin::Real }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    /// Shifts are drawn from `±floor(H * f)` rows and `±floor(W * f)` columns.
    pub max_shift_frac: f64,
    pub translate: bool,
    pub balance: bool,
    pub corruption_spec: CorruptionSpec,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { max_shift_frac: 0.2, translate: true, balance: true, corruption_spec: CorruptionSpec::default(), seed: 0 }
    }
}

impl AugmentPolicy {
    /// No translation and no balancing.
    pub fn none() -> Self {
        Self { translate: false, balance: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.max_shift_frac) {
            return Err(Error::InvalidPolicy(format!("max_shift_frac {} outside [0, 0.5)", self.max_shift_frac)));
        }
        Ok(())
    }

    /// Largest shift magnitude along an axis of `extent` pixels.
    pub fn max_shift(&self, extent: usize) -> usize {
        (extent as f64 * self.max_shift_frac).floor() as usize
    }
}

/// Shifts every frame by `(dr, dc)` pixels, zero-filling vacated pixels.
pub fn translate(seq: &CineSequence, dr: isize, dc: isize) -> CineSequence {
    let (frames, rows, cols) = seq.dims();
    let mut out = vec![0.0; frames * rows * cols];
    for t in 0..frames {
        let src = seq.frame(t);
        let dst = &mut out[t * rows * cols..(t + 1) * rows * cols];
        for r in 0..rows {
            let sr = r as isize - dr;
            if sr < 0 || sr >= rows as isize {
                continue;
            }
            let c_lo = dc.max(0) as usize;
            let c_hi = (cols as isize + dc.min(0)).max(0) as usize;
            if c_lo >= c_hi {
                continue;
            }
            let s_lo = (c_lo as isize - dc) as usize;
            let s_row = sr as usize * cols;
            dst[r * cols + c_lo..r * cols + c_hi].copy_from_slice(&src[s_row + s_lo..s_row + s_lo + (c_hi - c_lo)]);
        }
    }
    CineSequence::clamped(RealVolume::new(frames, rows, cols, out).expect("dimensions preserved"))
}

/// Uniform integer shift `(dr, dc)` within the policy bounds.
pub fn draw_shift<R: Rng + ?Sized>(rows: usize, cols: usize, policy: &AugmentPolicy, rng: &mut R) -> (isize, isize) {
    let max_r = policy.max_shift(rows) as i64;
    let max_c = policy.max_shift(cols) as i64;
    (rng.random_range(-max_r..=max_r) as isize, rng.random_range(-max_c..=max_c) as isize)
}

/// Draws one shift for the whole sequence and applies it.
pub fn random_translate<R: Rng + ?Sized>(seq: &CineSequence, policy: &AugmentPolicy, rng: &mut R) -> CineSequence {
    let (dr, dc) = draw_shift(seq.rows(), seq.cols(), policy, rng);
    translate(seq, dr, dc)
}

/// Tops up the artefact class with k-space corrupted copies of randomly drawn
/// good samples until both classes have the same size.
///
/// Only the artefact class can be synthesized, so a set with more artefact
/// than good samples is returned unchanged.
pub fn balance_training_set(samples: Vec<LabeledSample>, policy: &AugmentPolicy) -> Result<Vec<LabeledSample>> {
    let good: Vec<usize> = samples.iter().enumerate().filter(|(_, s)| s.label == Label::Good).map(|(i, _)| i).collect();
    let n_artefact = samples.len() - good.len();
    if good.is_empty() {
        return Err(Error::EmptyClass("good"));
    }
    if n_artefact == 0 {
        return Err(Error::EmptyClass("artefact"));
    }
    let deficit = good.len().saturating_sub(n_artefact);
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut draws = Vec::with_capacity(deficit);
    for _ in 0..deficit {
        let idx = good[rng.random_range(0..good.len())];
        let seed = rng.random::<u64>();
        draws.push((idx, seed));
    }
    let mut out = samples;
    out.reserve(deficit);
    for (idx, seed) in draws {
        let spec = CorruptionSpec { seed, ..policy.corruption_spec.clone() };
        let seq = corrupt_sequence(&out[idx].seq, &spec)?;
        out.push(LabeledSample { seq, label: Label::Artefact, origin: Origin::SyntheticCorruption });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(frames: usize, rows: usize, cols: usize) -> CineSequence {
        let n = frames * rows * cols;
        let data = (0..n).map(|i| (i % 97) as f64 / 96.0).collect();
        CineSequence::new(RealVolume::new(frames, rows, cols, data).unwrap()).unwrap()
    }

    fn tiny_set(n_good: usize, n_art: usize) -> Vec<LabeledSample> {
        (0..n_good + n_art)
            .map(|i| {
                let data = (0..4 * 6 * 6).map(|k| ((k * (i + 3)) % 17) as f64 / 16.0).collect();
                let seq = CineSequence::new(RealVolume::new(4, 6, 6, data).unwrap()).unwrap();
                LabeledSample::real(seq, if i < n_good { Label::Good } else { Label::Artefact })
            })
            .collect()
    }

    fn count(s: &[LabeledSample], l: Label) -> usize {
        s.iter().filter(|x| x.label == l).count()
    }

    #[test]
    fn zero_shift_is_identity() {
        let s = ramp(3, 5, 7);
        assert_eq!(translate(&s, 0, 0), s);
    }

    #[test]
    fn row_shift_definition() {
        let s = ramp(2, 8, 5);
        let out = translate(&s, 3, 0);
        for t in 0..2 {
            for r in 0..8 {
                for c in 0..5 {
                    let expect = if r >= 3 { s.at(t, r - 3, c) } else { 0.0 };
                    assert_eq!(out.at(t, r, c), expect);
                }
            }
        }
    }

    #[test]
    fn full_scale_shift_bound() {
        let policy = AugmentPolicy::default();
        assert_eq!(policy.max_shift(80), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shifts: Vec<_> = (0..2000).map(|_| draw_shift(80, 80, &policy, &mut rng)).collect();
        assert!(shifts.iter().all(|&(r, c)| r.abs() <= 16 && c.abs() <= 16));
        assert!(shifts.iter().any(|&(r, _)| r == -16) && shifts.iter().any(|&(_, c)| c == 16));
        assert!(AugmentPolicy { max_shift_frac: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn balances_hundred_to_ten() {
        let out = balance_training_set(tiny_set(100, 10), &AugmentPolicy::default()).unwrap();
        assert_eq!(count(&out, Label::Good), 100);
        assert_eq!(count(&out, Label::Artefact), 100);
        assert_eq!(out.iter().filter(|s| s.origin == Origin::SyntheticCorruption).count(), 90);
    }

    #[test]
    fn balances_scaled_clinical_ratio() {
        let out = balance_training_set(tiny_set(96, 3), &AugmentPolicy::default()).unwrap();
        assert_eq!((count(&out, Label::Good), count(&out, Label::Artefact)), (96, 96));
        assert_eq!(out.iter().filter(|s| s.origin != Origin::Real).count(), 93);
    }

    #[test]
    fn balanced_input_unchanged() {
        let input = tiny_set(5, 5);
        assert_eq!(balance_training_set(input.clone(), &AugmentPolicy::default()).unwrap(), input);
    }

    #[test]
    fn empty_class_errors() {
        assert!(matches!(balance_training_set(tiny_set(3, 0), &AugmentPolicy::default()), Err(Error::EmptyClass(_))));
        assert!(matches!(balance_training_set(tiny_set(0, 3), &AugmentPolicy::default()), Err(Error::EmptyClass(_))));
    }

    #[test]
    fn balancing_is_deterministic() {
        let p = AugmentPolicy { seed: 5, ..Default::default() };
        assert_eq!(balance_training_set(tiny_set(8, 2), &p).unwrap(), balance_training_set(tiny_set(8, 2), &p).unwrap());
    }

    proptest! {
        #[test]
        fn translation_never_adds_intensity(dr in -6isize..6, dc in -6isize..6) {
            let s = ramp(2, 9, 11);
            let out = translate(&s, dr, dc);
            let sum_in: f64 = s.data().iter().sum();
            let sum_out: f64 = out.data().iter().sum();
            prop_assert!(sum_out <= sum_in + 1e-12);
        }
    }
}
