//! Classical comparison methods: a variance-of-Laplacian blur score and
//! flattened-pixel classifiers (k-nearest neighbours, Gaussian naive Bayes,
//! linear SVM).
//!
//! All classifiers treat [`Label::Artefact`] as the positive class and
//! resolve exact ties in its favour.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::Label;
use crate::numerics::CineSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameAggregate {
    #[default]
    Mean,
    Max,
}

/// Variance of the 5-point Laplacian response over interior pixels,
/// aggregated over frames.
pub fn variance_of_laplacian(seq: &CineSequence, aggregate: FrameAggregate) -> Result<f64> {
    let (frames, rows, cols) = seq.dims();
    if rows < 3 || cols < 3 {
        return Err(Error::FrameTooSmall { h: rows, w: cols });
    }
    let n = ((rows - 2) * (cols - 2)) as f64;
    let mut per_frame = Vec::with_capacity(frames);
    for t in 0..frames {
        let f = seq.frame(t);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for r in 1..rows - 1 {
            for c in 1..cols - 1 {
                let i = r * cols + c;
                let v = f[i - cols] + f[i + cols] + f[i - 1] + f[i + 1] - 4.0 * f[i];
                sum += v;
                sum_sq += v * v;
            }
        }
        let mean = sum / n;
        per_frame.push((sum_sq / n - mean * mean).max(0.0));
    }
    Ok(match aggregate {
        FrameAggregate::Mean => per_frame.iter().sum::<f64>() / frames.max(1) as f64,
        FrameAggregate::Max => per_frame.iter().copied().fold(0.0, f64::max),
    })
}

pub fn flatten_features(seq: &CineSequence) -> Vec<f64> {
    seq.data().to_vec()
}

fn check_training(features: &[Vec<f64>], labels: &[Label]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows, {} labels", features.len(), labels.len())));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::DimensionMismatch("feature vectors differ in length".into()));
    }
    Ok(d)
}

fn require_both_classes(labels: &[Label]) -> Result<()> {
    for l in [Label::Good, Label::Artefact] {
        if !labels.contains(&l) {
            return Err(Error::EmptyClass(l.name()));
        }
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct KnnClassifier {
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
    k: usize,
}

impl KnnClassifier {
    pub fn fit(features: Vec<Vec<f64>>, labels: Vec<Label>, k: usize) -> Result<Self> {
        check_training(&features, &labels)?;
        if k == 0 || k > features.len() {
            return Err(Error::InvalidNeighbours { k, n: features.len() });
        }
        Ok(Self { features, labels, k })
    }

    /// Majority vote of the `k` nearest training points (Euclidean).
    /// Equal distances go to the lower training index.
    pub fn classify(&self, query: &[f64]) -> Label {
        let mut dist: Vec<(f64, usize)> = self.features.iter().enumerate().map(|(i, f)| (sq_dist(f, query), i)).collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let artefact_votes = dist[..self.k].iter().filter(|(_, i)| self.labels[*i] == Label::Artefact).count();
        if 2 * artefact_votes >= self.k {
            Label::Artefact
        } else {
            Label::Good
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl GaussianNb {
    pub const VAR_FLOOR: f64 = 1e-9;

    pub fn fit(features: &[Vec<f64>], labels: &[Label]) -> Result<Self> {
        let d = check_training(features, labels)?;
        require_both_classes(labels)?;
        let mut mean = [vec![0.0; d], vec![0.0; d]];
        let mut var = [vec![0.0; d], vec![0.0; d]];
        let mut count = [0usize; 2];
        for (f, l) in features.iter().zip(labels) {
            let c = l.index();
            count[c] += 1;
            for (m, x) in mean[c].iter_mut().zip(f) {
                *m += x;
            }
        }
        for c in 0..2 {
            for m in &mut mean[c] {
                *m /= count[c] as f64;
            }
        }
        for (f, l) in features.iter().zip(labels) {
            let c = l.index();
            for ((v, m), x) in var[c].iter_mut().zip(&mean[c]).zip(f) {
                *v += (x - m) * (x - m);
            }
        }
        for c in 0..2 {
            for v in &mut var[c] {
                *v = (*v / count[c] as f64).max(Self::VAR_FLOOR);
            }
        }
        let n = features.len() as f64;
        let log_prior = [(count[0] as f64 / n).ln(), (count[1] as f64 / n).ln()];
        Ok(Self { log_prior, mean, var })
    }

    /// Unnormalized log posteriors `[good, artefact]`.
    pub fn log_posteriors(&self, x: &[f64]) -> [f64; 2] {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut out = self.log_prior;
        for c in 0..2 {
            for ((xi, m), v) in x.iter().zip(&self.mean[c]).zip(&self.var[c]) {
                out[c] += -0.5 * (ln_2pi + v.ln() + (xi - m) * (xi - m) / v);
            }
        }
        out
    }

    pub fn classify(&self, x: &[f64]) -> Label {
        let lp = self.log_posteriors(x);
        if lp[1] >= lp[0] {
            Label::Artefact
        } else {
            Label::Good
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sign(label: Label) -> f64 {
    match label {
        Label::Artefact => 1.0,
        Label::Good => -1.0,
    }
}

impl LinearSvm {
    /// Stochastic subgradient descent on
    /// `lambda / 2 * |w|^2 + mean(max(0, 1 - y (w.x + b)))`
    /// with step `1 / (lambda * t + 1)`. The returned model is the average
    /// of the iterates over the second half of the epochs.
    pub fn fit(features: &[Vec<f64>], labels: &[Label], lambda: f64, epochs: usize, seed: u64) -> Result<Self> {
        let d = check_training(features, labels)?;
        require_both_classes(labels)?;
        if !(lambda > 0.0) || epochs == 0 {
            return Err(Error::DimensionMismatch(format!("svm lambda {lambda}, epochs {epochs}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut avg_w = vec![0.0; d];
        let mut avg_b = 0.0;
        let mut n_avg = 0usize;
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut t = 0usize;
        let avg_from = epochs / 2;
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64 + 1.0);
                let y = sign(labels[i]);
                let x = &features[i];
                let margin = y * (dot(&w, x) + b);
                let shrink = 1.0 - eta * lambda;
                if margin < 1.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj = shrink * *wj + eta * y * xj;
                    }
                    b += eta * y;
                } else {
                    for wj in w.iter_mut() {
                        *wj *= shrink;
                    }
                }
                if epoch >= avg_from {
                    n_avg += 1;
                    let k = 1.0 / n_avg as f64;
                    for (a, wj) in avg_w.iter_mut().zip(&w) {
                        *a += (wj - *a) * k;
                    }
                    avg_b += (b - avg_b) * k;
                }
            }
        }
        Ok(Self { weights: avg_w, bias: avg_b })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn classify(&self, x: &[f64]) -> Label {
        if self.decision(x) >= 0.0 {
            Label::Artefact
        } else {
            Label::Good
        }
    }

    pub fn objective(weights: &[f64], bias: f64, features: &[Vec<f64>], labels: &[Label], lambda: f64) -> f64 {
        let hinge: f64 = features
            .iter()
            .zip(labels)
            .map(|(x, &l)| (1.0 - sign(l) * (dot(weights, x) + bias)).max(0.0))
            .sum::<f64>()
            / features.len() as f64;
        0.5 * lambda * dot(weights, weights) + hinge
    }
}

/// Per-feature z-scoring fitted on training data.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let d = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            for (m, x) in mean.iter_mut().zip(f) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for f in features {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(f) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let inv_std = var.into_iter().map(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, inv_std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.inv_std).map(|((x, m), s)| (x - m) * s).collect()
    }
}
