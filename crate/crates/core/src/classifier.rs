//! Built-in multinomial logistic regression and out-of-fold probability
//! estimation, so classifier-based quantifiers are self-contained.
//!
//! The optimizer is deterministic full-batch gradient descent with a
//! backtracking line search; fold assignment is stratified and seeded.
//! Externally computed probability matrices can replace all of this at the
//! quantifier layer.

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, ProbabilityMatrix, ProbabilitySource, ProportionVector};

/// Gradient-norm threshold at which training stops.
const GRAD_TOL: f64 = 1e-5;
/// Full-batch iteration cap.
const MAX_FIT_ITERATIONS: usize = 500;

/// How repeated cross-validation trials are combined: averaging the per-row
/// probabilities, or keeping every trial for row-stacked regression systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stacking {
    Average,
    Stack,
}

/// Cross-validation settings for out-of-fold probability estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValConfig {
    pub folds: usize,
    pub repeats: usize,
    pub rng_seed: u64,
    pub stacking: Stacking,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 1,
            rng_seed: 0,
            stacking: Stacking::Average,
        }
    }
}

impl CrossValConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs folds >= 2, got {}",
                self.folds
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("cross-validation needs repeats >= 1".into()));
        }
        Ok(())
    }
}

/// A fitted multinomial logistic model: per-class weight rows with the
/// intercept in the last column, plus the training proportions recorded at
/// fit time (needed later for posterior adjustment).
#[derive(Debug, Clone)]
pub struct LogisticModel {
    weights: Array2<f64>,
    regularization: f64,
    training_proportions: ProportionVector,
}

impl LogisticModel {
    /// Wraps externally obtained weights (K x (V+1), intercept last).
    pub fn from_weights(
        weights: Array2<f64>,
        regularization: f64,
        training_proportions: ProportionVector,
    ) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("model weights must be finite".into()));
        }
        if weights.nrows() != training_proportions.len() {
            return Err(Error::Contract(format!(
                "{} weight rows for {} classes",
                weights.nrows(),
                training_proportions.len()
            )));
        }
        Ok(Self {
            weights,
            regularization,
            training_proportions,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn training_proportions(&self) -> &ProportionVector {
        &self.training_proportions
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols() - 1
    }

    /// Softmax posteriors for every row of `data`.
    pub fn predict_proba(&self, data: &Dataset) -> Result<ProbabilityMatrix> {
        if data.n_features() != self.n_features() {
            return Err(Error::Contract(format!(
                "model expects {} features, dataset has {}",
                self.n_features(),
                data.n_features()
            )));
        }
        let scores = self.scores(data.features());
        ProbabilityMatrix::new(softmax_rows(scores), ProbabilitySource::FullModel)
    }

    fn scores(&self, x: &Array2<f64>) -> Array2<f64> {
        let v = self.n_features();
        let wf = self.weights.slice(s![.., ..v]);
        let b = self.weights.column(v);
        let mut scores = x.dot(&wf.t());
        for mut row in scores.rows_mut() {
            row += &b;
        }
        scores
    }
}

fn softmax_rows(mut scores: Array2<f64>) -> Array2<f64> {
    for mut row in scores.rows_mut() {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    scores
}

/// Fits an L2-regularized multinomial logistic regression by full-batch
/// gradient descent with backtracking line search. The intercept column is
/// not regularized, so `lambda -> inf` recovers the intercept-only fit whose
/// probabilities are the training proportions.
pub fn fit(training: &Dataset, lambda: f64) -> Result<LogisticModel> {
    let labels = training
        .labels()
        .ok_or_else(|| Error::Contract("fit requires labeled data".into()))?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Config(format!(
            "regularization must be finite and >= 0, got {lambda}"
        )));
    }
    if training.features().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("training features contain non-finite values".into()));
    }
    let counts = training.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass(format!(
            "class '{}' (index {k}) has no training rows",
            training.class_names()[k]
        )));
    }

    let n = training.n_rows();
    let v = training.n_features();
    let k = training.n_classes();
    let x = training.features();

    // Cross-entropy (sum over rows) and its gradient; intercept unregularized.
    let loss_at = |w: &Array2<f64>| -> f64 {
        let wf = w.slice(s![.., ..v]);
        let b = w.column(v);
        let mut scores = x.dot(&wf.t());
        let mut loss = 0.0;
        for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
            row += &b;
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &c| a.max(c));
            let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
        }
        loss + 0.5 * lambda * wf.iter().map(|w| w * w).sum::<f64>()
    };
    let grad_at = |w: &Array2<f64>| -> Array2<f64> {
        let wf = w.slice(s![.., ..v]);
        let b = w.column(v);
        let mut scores = x.dot(&wf.t());
        for mut row in scores.rows_mut() {
            row += &b;
        }
        let mut p = softmax_rows(scores);
        for (i, &y) in labels.iter().enumerate() {
            p[[i, y]] -= 1.0;
        }
        let mut grad = Array2::zeros((k, v + 1));
        grad.slice_mut(s![.., ..v]).assign(&(p.t().dot(x) + &(lambda * &wf)));
        let col_sums = p.t().dot(&Array1::ones(n));
        grad.column_mut(v).assign(&col_sums);
        grad
    };

    // Per-coordinate curvature bounds (softmax Hessian diagonal is at most
    // 0.25 sum_i x_ij^2, plus lambda on regularized entries) precondition the
    // descent direction, so intercepts keep moving when lambda is huge. The
    // line search covers any slack in the bound.
    let mut precond = Array1::<f64>::zeros(v + 1);
    for j in 0..v {
        precond[j] = 0.25 * x.column(j).iter().map(|a| a * a).sum::<f64>() + lambda;
    }
    precond[v] = 0.25 * n as f64;
    for p in precond.iter_mut() {
        if *p <= 0.0 {
            *p = 1.0;
        }
    }

    let mut w = Array2::<f64>::zeros((k, v + 1));
    let mut f = loss_at(&w);
    let mut g = grad_at(&w);
    let mut alpha = 1.0;
    for _ in 0..MAX_FIT_ITERATIONS {
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() <= GRAD_TOL {
            break;
        }
        let mut direction = g.clone();
        for mut row in direction.rows_mut() {
            for (d, &p) in row.iter_mut().zip(precond.iter()) {
                *d /= p;
            }
        }
        let slope: f64 = g.iter().zip(direction.iter()).map(|(a, b)| a * b).sum();
        let mut accepted = false;
        while alpha > 1e-18 {
            let cand = &w - &(alpha * &direction);
            let fc = loss_at(&cand);
            if fc <= f - 1e-4 * alpha * slope {
                w = cand;
                f = fc;
                g = grad_at(&w);
                alpha = (alpha * 2.0).min(1e4);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break; // no descent step representable; weights are as good as they get
        }
    }

    LogisticModel::from_weights(w, lambda, training.label_proportions()?)
}

/// Out-of-fold probabilities: the averaged per-row matrix plus each repeat's
/// own matrix (used when trials are stacked into one regression system).
#[derive(Debug, Clone)]
pub struct OutOfFoldProbs {
    pub averaged: ProbabilityMatrix,
    pub per_repeat: Vec<ProbabilityMatrix>,
}

/// Stratified fold assignment: per class, shuffled indices are dealt
/// round-robin, so every fold's class histogram deviates from the global
/// one by less than one row per class.
pub fn stratified_folds(
    labels: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            assignment[i] = j % folds;
        }
    }
    assignment
}

/// Probabilities for every training row from a model not trained on that
/// row. With `repeats > 1` the fold split is redrawn per repeat.
pub fn out_of_fold_proba(
    training: &Dataset,
    cv: &CrossValConfig,
    lambda: f64,
) -> Result<OutOfFoldProbs> {
    cv.validate()?;
    let labels = training
        .labels()
        .ok_or_else(|| Error::Contract("out-of-fold estimation requires labels".into()))?;
    let n = training.n_rows();
    let k = training.n_classes();
    if cv.folds > n {
        return Err(Error::Stratification(format!(
            "{} folds for {n} rows",
            cv.folds
        )));
    }

    let mut seed_rng = ChaCha8Rng::seed_from_u64(cv.rng_seed);
    let mut per_repeat = Vec::with_capacity(cv.repeats);
    for _ in 0..cv.repeats {
        let fold_seed: u64 = seed_rng.gen();
        let assignment = stratified_folds(labels, k, cv.folds, fold_seed);
        let mut probs = Array2::<f64>::zeros((n, k));
        for fold in 0..cv.folds {
            let held_out: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
            if held_out.is_empty() {
                continue;
            }
            let kept: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
            let mut kept_counts = vec![0usize; k];
            for &i in &kept {
                kept_counts[labels[i]] += 1;
            }
            if let Some(missing) = kept_counts.iter().position(|&c| c == 0) {
                return Err(Error::Stratification(format!(
                    "fold {fold} leaves no training rows for class '{}'",
                    training.class_names()[missing]
                )));
            }
            let sub = subset_dataset(training, &kept)?;
            let model = fit(&sub, lambda)?;
            let held_features = select_rows(training.features(), &held_out);
            let held =
                Dataset::unlabeled(held_features, training.class_names().to_vec(), false)?;
            let fold_probs = model.predict_proba(&held)?;
            for (j, &i) in held_out.iter().enumerate() {
                probs.row_mut(i).assign(&fold_probs.row(j));
            }
        }
        per_repeat.push(ProbabilityMatrix::new(probs, ProbabilitySource::OutOfFold)?);
    }

    let averaged = if cv.repeats == 1 {
        per_repeat[0].clone()
    } else {
        let mut sum = Array2::<f64>::zeros((n, k));
        for m in &per_repeat {
            sum += m.matrix();
        }
        sum /= cv.repeats as f64;
        ProbabilityMatrix::new(sum, ProbabilitySource::OutOfFold)?
    };
    Ok(OutOfFoldProbs {
        averaged,
        per_repeat,
    })
}

fn select_rows(features: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), features.ncols()));
    for (j, &i) in rows.iter().enumerate() {
        out.row_mut(j).assign(&features.row(i));
    }
    out
}

fn subset_dataset(data: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let labels = data.labels().expect("labeled");
    Dataset::labeled(
        select_rows(data.features(), rows),
        rows.iter().map(|&i| labels[i]).collect(),
        data.class_names().to_vec(),
        data.binary_features(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn two_class_1d() -> Dataset {
        let feats = array![[-2.0], [-1.5], [-0.7], [1.2], [1.8], [2.5]];
        Dataset::labeled(
            feats,
            vec![0, 0, 0, 1, 1, 1],
            vec!["neg".into(), "pos".into()],
            false,
        )
        .unwrap()
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let data = two_class_1d();
        let model = fit(&data, 0.1).unwrap();
        let probs = model.predict_proba(&data).unwrap();
        let labels = data.labels().unwrap();
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(probs.argmax_row(i), y);
        }
    }

    #[test]
    fn constant_features_give_uniform_probabilities() {
        let feats = Array2::from_elem((8, 1), 0.3);
        let data = Dataset::labeled(
            feats,
            vec![0, 1, 0, 1, 0, 1, 0, 1],
            vec!["a".into(), "b".into()],
            false,
        )
        .unwrap();
        let model = fit(&data, 1.0).unwrap();
        let probs = model.predict_proba(&data).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(probs.row(i)[0], 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn huge_regularization_recovers_training_proportions() {
        let feats = array![[0.1], [0.9], [0.4], [0.2], [0.8], [0.3], [0.6], [0.5]];
        let data = Dataset::labeled(
            feats,
            vec![0, 0, 0, 0, 0, 0, 1, 1],
            vec!["a".into(), "b".into()],
            false,
        )
        .unwrap();
        let model = fit(&data, 1e6).unwrap();
        let probs = model.predict_proba(&data).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(probs.row(i)[0], 0.75, epsilon = 1e-3);
        }
    }

    #[test]
    fn zero_weight_model_predicts_uniform() {
        let model = LogisticModel::from_weights(
            Array2::zeros((3, 2)),
            0.0,
            ProportionVector::uniform(3).unwrap(),
        )
        .unwrap();
        let data = Dataset::unlabeled(array![[5.0]], vec![], false).unwrap();
        let probs = model.predict_proba(&data).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(probs.row(0)[j], 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_margin_saturates_softmax() {
        let model = LogisticModel::from_weights(
            array![[50.0, 0.0], [-50.0, 0.0]],
            0.0,
            ProportionVector::uniform(2).unwrap(),
        )
        .unwrap();
        let data = Dataset::unlabeled(array![[1.0]], vec![], false).unwrap();
        let probs = model.predict_proba(&data).unwrap();
        assert!(probs.row(0)[0] > 1.0 - 1e-12);
    }

    #[test]
    fn prediction_rows_sum_to_one() {
        let data = two_class_1d();
        let model = fit(&data, 1.0).unwrap();
        let probs = model.predict_proba(&data).unwrap();
        for i in 0..data.n_rows() {
            assert_abs_diff_eq!(probs.row(i).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_rejects_width_mismatch() {
        let data = two_class_1d();
        let model = fit(&data, 1.0).unwrap();
        let wide = Dataset::unlabeled(array![[1.0, 2.0]], vec![], false).unwrap();
        assert!(matches!(
            model.predict_proba(&wide),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn stratified_fold_histograms_are_balanced() {
        let labels: Vec<usize> = (0..103).map(|i| i % 3).collect();
        let assignment = stratified_folds(&labels, 3, 5, 42);
        for fold in 0..5 {
            for class in 0..3 {
                let count = labels
                    .iter()
                    .zip(&assignment)
                    .filter(|&(&y, &f)| y == class && f == fold)
                    .count() as f64;
                let total = labels.iter().filter(|&&y| y == class).count() as f64;
                assert!((count - total / 5.0).abs() < 1.0);
            }
        }
    }

    #[test]
    fn leave_one_out_on_toy_set() {
        let feats = array![[-1.0], [-0.8], [0.9], [1.1]];
        let data = Dataset::labeled(
            feats,
            vec![0, 0, 1, 1],
            vec!["a".into(), "b".into()],
            false,
        )
        .unwrap();
        let cv = CrossValConfig {
            folds: 4,
            ..CrossValConfig::default()
        };
        let oof = out_of_fold_proba(&data, &cv, 0.1).unwrap();
        assert_eq!(oof.averaged.n_rows(), 4);
        for i in 0..4 {
            assert_abs_diff_eq!(oof.averaged.row(i).sum(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn out_of_fold_is_deterministic_per_seed() {
        let data = two_class_1d();
        let cv = CrossValConfig {
            folds: 3,
            repeats: 2,
            rng_seed: 7,
            stacking: Stacking::Average,
        };
        let a = out_of_fold_proba(&data, &cv, 1.0).unwrap();
        let b = out_of_fold_proba(&data, &cv, 1.0).unwrap();
        assert_eq!(a.averaged.matrix(), b.averaged.matrix());
        assert_eq!(a.per_repeat.len(), 2);
        for (x, y) in a.per_repeat.iter().zip(&b.per_repeat) {
            assert_eq!(x.matrix(), y.matrix());
        }
    }

    #[test]
    fn identical_fold_split_gives_identical_matrices() {
        let data = two_class_1d();
        let labels = data.labels().unwrap();
        let a = stratified_folds(labels, 2, 3, 123);
        let b = stratified_folds(labels, 2, 3, 123);
        assert_eq!(a, b);
    }

    #[test]
    fn separable_out_of_fold_accuracy_is_perfect() {
        let feats = array![
            [-2.0], [-1.8], [-1.5], [-1.2], [-1.0], [-0.8],
            [1.0], [1.2], [1.5], [1.8], [2.0], [2.2]
        ];
        let labels = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let data = Dataset::labeled(
            feats,
            labels.clone(),
            vec!["a".into(), "b".into()],
            false,
        )
        .unwrap();
        let cv = CrossValConfig {
            folds: 3,
            rng_seed: 3,
            ..CrossValConfig::default()
        };
        let oof = out_of_fold_proba(&data, &cv, 0.1).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(oof.averaged.argmax_row(i), y);
        }
    }
}
