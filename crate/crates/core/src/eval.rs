//! Stratified k-fold cross-validation and the accuracy / precision /
//! recall / F1 suite. Artefact is the positive class.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentPolicy, Label, LabeledSample, Origin};
use crate::baselines::{
    flatten_features, variance_of_laplacian, FrameAggregate, GaussianNb, KnnClassifier, LinearSvm, Standardizer,
};
use crate::cnn::{self, NetworkConfig, TrainConfig};
use crate::{json, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Seeded per-class shuffle followed by round-robin assignment. The fold
/// cursor carries over from one class to the next so fold sizes stay
/// within one of each other.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut warnings = Vec::new();
    let mut cursor = 0;
    for label in [Label::Good, Label::Artefact] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.len() < k {
            let msg = format!("class {} has {} members for {k} folds", label.name(), idx.len());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = cursor;
            cursor = (cursor + 1) % k;
        }
    }
    Ok(FoldAssignment { k, fold_of, warnings })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Artefact, Label::Artefact) => self.tp += 1,
            (Label::Good, Label::Artefact) => self.fp += 1,
            (Label::Good, Label::Good) => self.tn += 1,
            (Label::Artefact, Label::Good) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(c: &Confusion) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(Metrics { accuracy: ratio(c.tp + c.tn, total), precision, recall, f1 })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Metrics of the confusion pooled over folds.
    #[default]
    Micro,
    /// Mean of per-fold metrics.
    Macro,
}

fn default_lambdas() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2]
}

fn default_svm_epochs() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Cnn {
        network: NetworkConfig,
        train: TrainConfig,
    },
    Knn {
        k: usize,
    },
    Svm {
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
        #[serde(default = "default_svm_epochs")]
        epochs: usize,
    },
    NaiveBayes,
    /// Linear SVM on the standardized scalar blur score.
    VarianceOfLaplacian {
        #[serde(default)]
        aggregate: FrameAggregate,
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
        #[serde(default = "default_svm_epochs")]
        epochs: usize,
    },
    Constant {
        label: Label,
    },
}

impl Method {
    pub fn svm() -> Self {
        Method::Svm { lambdas: default_lambdas(), epochs: default_svm_epochs() }
    }

    pub fn vol() -> Self {
        Method::VarianceOfLaplacian { aggregate: FrameAggregate::Mean, lambdas: default_lambdas(), epochs: default_svm_epochs() }
    }

    pub fn name(&self) -> String {
        match self {
            Method::Cnn { .. } => "cnn".into(),
            Method::Knn { k } => format!("knn(k={k})"),
            Method::Svm { .. } => "linear_svm".into(),
            Method::NaiveBayes => "naive_bayes".into(),
            Method::VarianceOfLaplacian { .. } => "variance_of_laplacian".into(),
            Method::Constant { label } => format!("constant({})", label.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub averaging: Averaging,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { k: 10, seed: 0, averaging: Averaging::Micro }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: Confusion,
    /// Selected hyperparameter, when the method searches a grid.
    pub selected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub averaging: Averaging,
    pub folds: Vec<FoldReport>,
    pub pooled: Confusion,
    pub metrics: Metrics,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        json::to_canonical_string(self)
    }

    pub fn table(&self) -> String {
        format_table(std::slice::from_ref(self))
    }
}

/// Aligned plain-text table with one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max("Method".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}", "Method", "Accuracy", "Precision", "Recall", "F1");
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>9.3}",
            r.method, m.accuracy, m.precision, m.recall, m.f1
        );
    }
    out
}

/// Trained model for one fold.
enum Fitted {
    Cnn(cnn::Network),
    Knn(KnnClassifier),
    Nb(GaussianNb),
    Svm(Standardizer, LinearSvm),
    Vol(FrameAggregate, Standardizer, LinearSvm),
    Constant(Label),
}

impl Fitted {
    fn classify(&self, sample: &LabeledSample) -> Result<Label> {
        Ok(match self {
            Fitted::Cnn(net) => net.predict(&sample.seq)?.label,
            Fitted::Knn(m) => m.classify(&flatten_features(&sample.seq)),
            Fitted::Nb(m) => m.classify(&flatten_features(&sample.seq)),
            Fitted::Svm(z, m) => m.classify(&z.apply(&flatten_features(&sample.seq))),
            Fitted::Vol(agg, z, m) => m.classify(&z.apply(&[variance_of_laplacian(&sample.seq, *agg)?])),
            Fitted::Constant(l) => *l,
        })
    }
}

/// Stratified inner hold-out, `frac` of each class with at least two members.
fn inner_split(labels: &[Label], frac: f64, rng: &mut ChaCha8Rng) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut val = Vec::new();
    for label in [Label::Good, Label::Artefact] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.len() < 2 {
            return None;
        }
        idx.shuffle(rng);
        let n_val = ((frac * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
    }
    val.sort_unstable();
    let train = (0..labels.len()).filter(|i| val.binary_search(i).is_err()).collect();
    Some((train, val))
}

/// Picks the regularization strength with the best validation F1 (then
/// accuracy, then grid order) and refits on all of `features`.
fn fit_svm_grid(
    features: &[Vec<f64>],
    labels: &[Label],
    lambdas: &[f64],
    epochs: usize,
    seed: u64,
) -> Result<(Standardizer, LinearSvm, f64)> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = lambdas[0];
    if lambdas.len() > 1 {
        if let Some((tr, va)) = inner_split(labels, 0.2, &mut rng) {
            let tr_x: Vec<Vec<f64>> = tr.iter().map(|&i| features[i].clone()).collect();
            let tr_y: Vec<Label> = tr.iter().map(|&i| labels[i]).collect();
            let z = Standardizer::fit(&tr_x)?;
            let tr_x: Vec<Vec<f64>> = tr_x.iter().map(|x| z.apply(x)).collect();
            let mut best: Option<(f64, f64)> = None;
            for &lambda in lambdas {
                let svm = LinearSvm::fit(&tr_x, &tr_y, lambda, epochs, seed)?;
                let mut c = Confusion::default();
                for &i in &va {
                    c.record(labels[i], svm.classify(&z.apply(&features[i])));
                }
                let m = compute_metrics(&c)?;
                if best.is_none_or(|(f1, acc)| m.f1 > f1 || (m.f1 == f1 && m.accuracy > acc)) {
                    best = Some((m.f1, m.accuracy));
                    chosen = lambda;
                }
            }
        }
    }
    let z = Standardizer::fit(features)?;
    let xs: Vec<Vec<f64>> = features.iter().map(|x| z.apply(x)).collect();
    let svm = LinearSvm::fit(&xs, labels, chosen, epochs, seed)?;
    Ok((z, svm, chosen))
}

fn fit_fold(
    method: &Method,
    training: &[LabeledSample],
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<(Fitted, Option<f64>)> {
    let labels: Vec<Label> = training.iter().map(|s| s.label).collect();
    let pixels = || training.iter().map(|s| flatten_features(&s.seq)).collect::<Vec<_>>();
    Ok(match method {
        Method::Cnn { network, train } => {
            let mut net_cfg = network.clone();
            net_cfg.seed = seed;
            let tc = TrainConfig { seed, ..train.clone() };
            let pol = AugmentPolicy { seed: seed ^ 0x5EED, ..policy.clone() };
            (Fitted::Cnn(cnn::train(training, &net_cfg, &tc, &pol)?.network), None)
        }
        Method::Knn { k } => (Fitted::Knn(KnnClassifier::fit(pixels(), labels, *k)?), None),
        Method::NaiveBayes => (Fitted::Nb(GaussianNb::fit(&pixels(), &labels)?), None),
        Method::Svm { lambdas, epochs } => {
            let (z, svm, lambda) = fit_svm_grid(&pixels(), &labels, lambdas, *epochs, seed)?;
            (Fitted::Svm(z, svm), Some(lambda))
        }
        Method::VarianceOfLaplacian { aggregate, lambdas, epochs } => {
            let scores =
                training.iter().map(|s| Ok(vec![variance_of_laplacian(&s.seq, *aggregate)?])).collect::<Result<Vec<_>>>()?;
            let (z, svm, lambda) = fit_svm_grid(&scores, &labels, lambdas, *epochs, seed)?;
            (Fitted::Vol(*aggregate, z, svm), Some(lambda))
        }
        Method::Constant { label } => (Fitted::Constant(*label), None),
    })
}

/// Runs stratified k-fold cross-validation. Augmentation (for the CNN) only
/// ever touches the training side of a fold; the dataset must contain real
/// samples only.
pub fn cross_validate(
    method: &Method,
    dataset: &[LabeledSample],
    cv: &CvConfig,
    policy: &AugmentPolicy,
) -> Result<EvalReport> {
    if let Some(i) = dataset.iter().position(|s| s.origin != Origin::Real) {
        return Err(Error::AugmentedInTestFold(i));
    }
    let labels: Vec<Label> = dataset.iter().map(|s| s.label).collect();
    let folds = stratified_kfold(&labels, cv.k, cv.seed)?;
    let mut seed_rng = ChaCha8Rng::seed_from_u64(cv.seed);
    seed_rng.set_stream(2);
    let fold_seeds: Vec<u64> = (0..cv.k).map(|_| seed_rng.next_u64()).collect();

    let mut reports = Vec::with_capacity(cv.k);
    let mut pooled = Confusion::default();
    let mut per_fold_metrics = Vec::new();
    for fold in 0..cv.k {
        let test_idx = folds.test_indices(fold);
        let training: Vec<LabeledSample> = folds.train_indices(fold).into_iter().map(|i| dataset[i].clone()).collect();
        let (model, selected) = fit_fold(method, &training, policy, fold_seeds[fold])?;
        let predictions: Vec<Label> = test_idx
            .par_iter()
            .map(|&i| {
                let s = &dataset[i];
                if s.origin != Origin::Real {
                    return Err(Error::AugmentedInTestFold(i));
                }
                model.classify(s)
            })
            .collect::<Result<_>>()?;
        let mut confusion = Confusion::default();
        for (&i, &p) in test_idx.iter().zip(&predictions) {
            confusion.record(dataset[i].label, p);
        }
        if confusion.total() > 0 {
            per_fold_metrics.push(compute_metrics(&confusion)?);
        }
        pooled.merge(&confusion);
        log::info!("fold {fold}: {confusion:?}");
        reports.push(FoldReport { fold, n_train: training.len(), n_test: test_idx.len(), confusion, selected });
    }
    let metrics = match cv.averaging {
        Averaging::Micro => compute_metrics(&pooled)?,
        Averaging::Macro => {
            if per_fold_metrics.is_empty() {
                return Err(Error::EmptyEvaluation);
            }
            let n = per_fold_metrics.len() as f64;
            let mean = |f: fn(&Metrics) -> f64| per_fold_metrics.iter().map(f).sum::<f64>() / n;
            Metrics { accuracy: mean(|m| m.accuracy), precision: mean(|m| m.precision), recall: mean(|m| m.recall), f1: mean(|m| m.f1) }
        }
    };
    let name = match method {
        Method::Cnn { .. } => {
            let aug = match (policy.balance, policy.translate) {
                (true, true) => "k-space+translation",
                (true, false) => "k-space",
                (false, true) => "translation",
                (false, false) => "no augmentation",
            };
            format!("cnn ({aug})")
        }
        _ => method.name(),
    };
    Ok(EvalReport {
        method: name,
        k: cv.k,
        seed: cv.seed,
        averaging: cv.averaging,
        folds: reports,
        pooled,
        metrics,
        warnings: folds.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{CineSequence, RealVolume};
    use proptest::prelude::*;

    use Label::{Artefact as A, Good as G};

    fn labels(good: usize, art: usize) -> Vec<Label> {
        let mut v = vec![G; good];
        v.extend(vec![A; art]);
        v
    }

    fn per_fold(f: &FoldAssignment, labels: &[Label], label: Label) -> Vec<usize> {
        (0..f.k).map(|k| (0..labels.len()).filter(|&i| f.fold_of[i] == k && labels[i] == label).count()).collect()
    }

    #[test]
    fn exact_stratification() {
        let l = labels(10, 10);
        let f = stratified_kfold(&l, 5, 3).unwrap();
        assert_eq!(per_fold(&f, &l, G), vec![2; 5]);
        assert_eq!(per_fold(&f, &l, A), vec![2; 5]);
        let l = vec![G, G, A, A];
        let f = stratified_kfold(&l, 2, 0).unwrap();
        assert_eq!(per_fold(&f, &l, A), vec![1, 1]);
        assert_eq!(per_fold(&f, &l, G), vec![1, 1]);
    }

    #[test]
    fn clinical_class_counts() {
        let l = labels(3360, 105);
        let f = stratified_kfold(&l, 10, 7).unwrap();
        assert!(per_fold(&f, &l, A).iter().all(|&n| n == 10 || n == 11));
        assert_eq!(per_fold(&f, &l, A).iter().sum::<usize>(), 105);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn small_class_warns_and_k_checked() {
        let f = stratified_kfold(&labels(10, 2), 5, 0).unwrap();
        assert_eq!(f.warnings.len(), 1);
        assert!(matches!(stratified_kfold(&labels(4, 4), 1, 0), Err(Error::InvalidK(1))));
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(good in 0usize..60, art in 0usize..60, k in 2usize..11, seed in any::<u64>()) {
            let l = labels(good, art);
            let f = stratified_kfold(&l, k, seed).unwrap();
            prop_assert!(f.fold_of.iter().all(|&x| x < k));
            let union: usize = (0..k).map(|i| f.test_indices(i).len()).sum();
            prop_assert_eq!(union, l.len());
            for (label, n) in [(G, good), (A, art)] {
                let ideal = n as f64 / k as f64;
                for c in per_fold(&f, &l, label) {
                    prop_assert!((c as f64 - ideal).abs() < 1.0 + 1e-12);
                }
            }
            prop_assert_eq!(&f, &stratified_kfold(&l, k, seed).unwrap());
        }

        #[test]
        fn metrics_in_unit_interval(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let c = Confusion { tp, fp, tn, fn_ };
            if c.total() == 0 {
                prop_assert!(compute_metrics(&c).is_err());
            } else {
                let m = compute_metrics(&c).unwrap();
                for v in [m.accuracy, m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn hand_computed_metrics() {
        let m = compute_metrics(&Confusion { tp: 3, fp: 1, tn: 4, fn_: 2 }).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        let perfect = compute_metrics(&Confusion { tp: 5, fp: 0, tn: 5, fn_: 0 }).unwrap();
        assert_eq!((perfect.accuracy, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));
        let all_neg = compute_metrics(&Confusion { tp: 0, fp: 0, tn: 3360, fn_: 105 }).unwrap();
        assert!((all_neg.accuracy - 3360.0 / 3465.0).abs() < 1e-12);
        assert_eq!((all_neg.precision, all_neg.recall, all_neg.f1), (0.0, 0.0, 0.0));
        assert!(matches!(compute_metrics(&Confusion::default()), Err(Error::EmptyEvaluation)));
    }

    fn tiny_dataset(good: usize, art: usize) -> Vec<LabeledSample> {
        (0..good + art)
            .map(|i| {
                let label = if i < good { G } else { A };
                let base = if label == A { 0.7 } else { 0.3 };
                let data = (0..2 * 4 * 4).map(|j| base + 0.05 * (((i * 31 + j * 7) % 11) as f64 / 11.0 - 0.5)).collect();
                LabeledSample::real(CineSequence::new(RealVolume::new(2, 4, 4, data).unwrap()).unwrap(), label)
            })
            .collect()
    }

    #[test]
    fn constant_classifier_recall() {
        let data = tiny_dataset(12, 8);
        let cv = CvConfig { k: 4, seed: 1, averaging: Averaging::Micro };
        let pos = cross_validate(&Method::Constant { label: A }, &data, &cv, &AugmentPolicy::none()).unwrap();
        assert_eq!(pos.metrics.recall, 1.0);
        let neg = cross_validate(&Method::Constant { label: G }, &data, &cv, &AugmentPolicy::none()).unwrap();
        assert_eq!(neg.metrics.recall, 0.0);
        assert!(pos.folds.iter().all(|f| f.confusion.total() == f.n_test));
        assert_eq!(pos.pooled.total(), 20);
    }

    #[test]
    fn baselines_separate_easy_data_deterministically() {
        let data = tiny_dataset(15, 15);
        let cv = CvConfig { k: 3, seed: 9, averaging: Averaging::Micro };
        for method in [Method::Knn { k: 3 }, Method::NaiveBayes, Method::Svm { lambdas: vec![1e-3, 1e-2], epochs: 50 }] {
            let a = cross_validate(&method, &data, &cv, &AugmentPolicy::none()).unwrap();
            assert_eq!(a.metrics.f1, 1.0, "{}", a.method);
            let b = cross_validate(&method, &data, &cv, &AugmentPolicy::none()).unwrap();
            assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        }
    }

    #[test]
    fn macro_averaging_differs_from_micro_on_uneven_folds() {
        let data = tiny_dataset(9, 3);
        let micro = CvConfig { k: 3, seed: 0, averaging: Averaging::Micro };
        let macro_ = CvConfig { averaging: Averaging::Macro, ..micro };
        let a = cross_validate(&Method::Constant { label: A }, &data, &micro, &AugmentPolicy::none()).unwrap();
        let b = cross_validate(&Method::Constant { label: A }, &data, &macro_, &AugmentPolicy::none()).unwrap();
        assert!((a.metrics.precision - 0.25).abs() < 1e-12);
        assert!((b.metrics.precision - 0.25).abs() < 1e-12);
        assert_eq!(a.pooled, b.pooled);
    }

    #[test]
    fn synthetic_samples_rejected() {
        let mut data = tiny_dataset(4, 4);
        data[5].origin = Origin::SyntheticCorruption;
        let cv = CvConfig { k: 2, seed: 0, averaging: Averaging::Micro };
        assert!(matches!(
            cross_validate(&Method::NaiveBayes, &data, &cv, &AugmentPolicy::none()),
            Err(Error::AugmentedInTestFold(5))
        ));
    }

    #[test]
    fn table_has_header_and_row() {
        let data = tiny_dataset(4, 4);
        let cv = CvConfig { k: 2, seed: 0, averaging: Averaging::Micro };
        let r = cross_validate(&Method::Constant { label: A }, &data, &cv, &AugmentPolicy::none()).unwrap();
        let t = r.table();
        assert!(t.starts_with("Method"));
        assert!(t.contains("constant(artefact)"));
        assert_eq!(t.lines().count(), 2);
    }
}
