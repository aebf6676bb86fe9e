//! Top-level quantification API: pick a method, assemble its regression
//! system, solve with the mapped loss, and return proportion estimates.
//! Also the post-quantification posterior adjustment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit, out_of_fold_proba, CrossValConfig, OutOfFoldProbs, Stacking};
use crate::error::{Error, Result};
use crate::linalg::design_singular_values;
use crate::solvers::{solve, Loss, SolverConfig};
use crate::transforms::{build_system, Method, TransformSpec};
use crate::types::{
    naive_estimate, Dataset, ProbabilityMatrix, ProportionVector, RegressionSystem, SolveResult,
};

/// A quantification method: one of the eight regression-based methods, or
/// the naive baseline that just averages classifier outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantMethod {
    #[serde(rename = "VA")]
    Va,
    #[serde(rename = "HDx")]
    Hdx,
    #[serde(rename = "FM")]
    Fm,
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "Prob")]
    Prob,
    #[serde(rename = "MM")]
    Mm,
    #[serde(rename = "HDy")]
    Hdy,
    #[serde(rename = "Naive")]
    Naive,
}

impl QuantMethod {
    pub const ALL: [QuantMethod; 9] = [
        QuantMethod::Va,
        QuantMethod::Hdx,
        QuantMethod::Fm,
        QuantMethod::Ac,
        QuantMethod::Ms,
        QuantMethod::Prob,
        QuantMethod::Mm,
        QuantMethod::Hdy,
        QuantMethod::Naive,
    ];

    /// The underlying transform, or `None` for the naive baseline.
    pub fn transform_method(self) -> Option<Method> {
        match self {
            QuantMethod::Va => Some(Method::Va),
            QuantMethod::Hdx => Some(Method::Hdx),
            QuantMethod::Fm => Some(Method::Fm),
            QuantMethod::Ac => Some(Method::Ac),
            QuantMethod::Ms => Some(Method::Ms),
            QuantMethod::Prob => Some(Method::Prob),
            QuantMethod::Mm => Some(Method::Mm),
            QuantMethod::Hdy => Some(Method::Hdy),
            QuantMethod::Naive => None,
        }
    }

    pub fn needs_classifier(self) -> bool {
        match self.transform_method() {
            Some(m) => m.needs_classifier(),
            None => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self.transform_method() {
            Some(m) => m.name(),
            None => "Naive",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        QuantMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown method '{name}'")))
    }
}

/// The loss each method uses unless overridden: VA and FM solve least
/// squares, MM least absolute deviation, HDy and HDx Hellinger divergence;
/// AC, MS and Prob default to least squares.
pub fn default_loss(method: Method) -> Loss {
    match method {
        Method::Va | Method::Fm | Method::Ac | Method::Ms | Method::Prob => Loss::LeastSquares,
        Method::Mm => Loss::LeastAbsoluteDeviation,
        Method::Hdx | Method::Hdy => Loss::Hellinger,
    }
}

/// Full configuration for one quantification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantifierConfig {
    pub method: QuantMethod,
    pub loss_override: Option<Loss>,
    /// Transform parameters; the `method` field in here is forced to match
    /// `self.method` when the system is assembled.
    pub transform: TransformSpec,
    pub solver: SolverConfig,
    pub cv: CrossValConfig,
    /// Regularization strength of the built-in logistic classifier.
    pub lambda: f64,
}

impl QuantifierConfig {
    pub fn new(method: QuantMethod) -> Self {
        Self {
            method,
            loss_override: None,
            transform: TransformSpec::new(
                method.transform_method().unwrap_or(Method::Prob),
            ),
            solver: SolverConfig::default(),
            cv: CrossValConfig::default(),
            lambda: 1.0,
        }
    }

    /// The loss the solve will use (the override, or the method default).
    pub fn resolved_loss(&self) -> Option<Loss> {
        self.method
            .transform_method()
            .map(|m| self.loss_override.unwrap_or_else(|| default_loss(m)))
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.cv.validate()?;
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if let (Some(Loss::Hellinger), Some(m)) =
            (self.resolved_loss(), self.method.transform_method())
        {
            if !m.distribution_valued() {
                return Err(Error::Config(format!(
                    "Hellinger loss requires a distribution-valued transform \
                     (HDy, HDx, VA), not {}",
                    m.name()
                )));
            }
        }
        Ok(())
    }
}

/// Result of one quantification run. `solve` is absent for the naive
/// baseline, `naive` is absent when no classifier probabilities exist
/// (feature-only methods without external matrices).
#[derive(Debug, Clone, Serialize)]
pub struct QuantificationResult {
    pub method: QuantMethod,
    pub estimate: ProportionVector,
    pub naive: Option<ProportionVector>,
    pub solve: Option<SolveResult>,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Classifier probabilities prepared for a quantification run: out-of-fold
/// estimates for the training rows, full-model estimates for the unlabeled
/// rows.
pub struct PreparedProbs<'a> {
    pub out_of_fold: &'a OutOfFoldProbs,
    pub unlabeled: &'a ProbabilityMatrix,
}

/// Runs a quantifier end to end. External probability matrices (out-of-fold
/// then unlabeled) substitute for the built-in classifier when provided.
pub fn quantify(
    config: &QuantifierConfig,
    training: &Dataset,
    unlabeled: &Dataset,
    external_probs: Option<(&ProbabilityMatrix, &ProbabilityMatrix)>,
) -> Result<QuantificationResult> {
    config.validate()?;
    check_schemas(training, unlabeled)?;

    if !config.method.needs_classifier() && external_probs.is_none() {
        return quantify_with_probs(config, training, unlabeled, None);
    }

    if let Some((oof_matrix, unl_matrix)) = external_probs {
        let oof = OutOfFoldProbs {
            averaged: oof_matrix.clone(),
            per_repeat: vec![oof_matrix.clone()],
        };
        return quantify_with_probs(
            config,
            training,
            unlabeled,
            Some(PreparedProbs {
                out_of_fold: &oof,
                unlabeled: unl_matrix,
            }),
        );
    }

    let model = fit(training, config.lambda)?;
    let unlabeled_probs = model.predict_proba(unlabeled)?;
    if config.method == QuantMethod::Naive {
        // The baseline needs no out-of-fold pass.
        let estimate = naive_estimate(&unlabeled_probs)?;
        return Ok(QuantificationResult {
            method: QuantMethod::Naive,
            estimate: estimate.clone(),
            naive: Some(estimate),
            solve: None,
            diagnostics: BTreeMap::new(),
        });
    }
    let oof = out_of_fold_proba(training, &config.cv, config.lambda)?;
    quantify_with_probs(
        config,
        training,
        unlabeled,
        Some(PreparedProbs {
            out_of_fold: &oof,
            unlabeled: &unlabeled_probs,
        }),
    )
}

/// The quantification core once probabilities are in hand; the evaluation
/// harness calls this directly so cross-validation runs once per suite.
pub fn quantify_with_probs(
    config: &QuantifierConfig,
    training: &Dataset,
    unlabeled: &Dataset,
    probs: Option<PreparedProbs<'_>>,
) -> Result<QuantificationResult> {
    config.validate()?;
    check_schemas(training, unlabeled)?;

    let naive = match &probs {
        Some(p) => Some(naive_estimate(p.unlabeled)?),
        None => None,
    };

    let Some(method) = config.method.transform_method() else {
        let p = probs.ok_or_else(|| {
            Error::Contract("naive estimation requires classifier probabilities".into())
        })?;
        let estimate = naive_estimate(p.unlabeled)?;
        return Ok(QuantificationResult {
            method: QuantMethod::Naive,
            estimate,
            naive,
            solve: None,
            diagnostics: BTreeMap::new(),
        });
    };

    if method.needs_classifier() && probs.is_none() {
        return Err(Error::Contract(format!(
            "{} requires classifier probabilities",
            method.name()
        )));
    }

    let spec = TransformSpec {
        method,
        ..config.transform.clone()
    };
    let system = assemble_system(&spec, config, training, unlabeled, probs.as_ref())?;

    let loss = config
        .resolved_loss()
        .expect("transform methods always resolve a loss");
    let solver_config = SolverConfig {
        loss,
        ..config.solver.clone()
    };
    let result = solve(&system, &solver_config)?;

    let mut diagnostics = BTreeMap::new();
    let sv = design_singular_values(system.design());
    if let (Some(&smax), Some(&smin)) = (sv.first(), sv.last()) {
        let cond = if smin > 0.0 { smax / smin } else { f64::MAX };
        diagnostics.insert("design_condition".to_string(), cond.min(f64::MAX));
    }
    let inf_norm = result.residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    diagnostics.insert("residual_inf_norm".to_string(), inf_norm);
    diagnostics.insert("loss_value".to_string(), result.loss_value);

    Ok(QuantificationResult {
        method: config.method,
        estimate: result.proportions.clone(),
        naive,
        solve: Some(result),
        diagnostics,
    })
}

fn assemble_system(
    spec: &TransformSpec,
    config: &QuantifierConfig,
    training: &Dataset,
    unlabeled: &Dataset,
    probs: Option<&PreparedProbs<'_>>,
) -> Result<RegressionSystem> {
    match probs {
        Some(p)
            if config.cv.stacking == Stacking::Stack
                && p.out_of_fold.per_repeat.len() > 1
                && spec.method.needs_classifier() =>
        {
            // Stack every repeat's trial into one regression problem.
            let systems: Vec<RegressionSystem> = p
                .out_of_fold
                .per_repeat
                .iter()
                .map(|m| build_system(spec, training, Some(m), unlabeled, Some(p.unlabeled)))
                .collect::<Result<_>>()?;
            RegressionSystem::stack(&systems)
        }
        Some(p) => build_system(
            spec,
            training,
            Some(&p.out_of_fold.averaged),
            unlabeled,
            Some(p.unlabeled),
        ),
        None => build_system(spec, training, None, unlabeled, None),
    }
}

fn check_schemas(training: &Dataset, unlabeled: &Dataset) -> Result<()> {
    if training.labels().is_none() {
        return Err(Error::Contract("training data must be labeled".into()));
    }
    if training.n_features() != unlabeled.n_features() {
        return Err(Error::Contract(format!(
            "feature width mismatch: training has {}, unlabeled has {}",
            training.n_features(),
            unlabeled.n_features()
        )));
    }
    Ok(())
}

/// Reweights posteriors by the estimated-to-training prior ratio and
/// renormalizes each row:
/// `p'_k = (pi_hat_k / pi_T_k) p_k / sum_l (pi_hat_l / pi_T_l) p_l`.
pub fn adjust_posteriors(
    probs: &ProbabilityMatrix,
    training_proportions: &ProportionVector,
    estimated_proportions: &ProportionVector,
) -> Result<ProbabilityMatrix> {
    let k = probs.n_classes();
    if training_proportions.len() != k || estimated_proportions.len() != k {
        return Err(Error::Contract(format!(
            "posterior adjustment dimensions disagree: {k} classes, {} training, \
             {} estimated proportions",
            training_proportions.len(),
            estimated_proportions.len()
        )));
    }
    let mut ratios = vec![0.0; k];
    for i in 0..k {
        let t = training_proportions[i];
        let e = estimated_proportions[i];
        if t <= 0.0 {
            if e > 0.0 {
                return Err(Error::DivisionByZero(format!(
                    "class {i} has zero training proportion but estimate {e}"
                )));
            }
            // Both zero: the class stays absent.
        } else {
            ratios[i] = e / t;
        }
    }

    let mut adjusted = probs.matrix().clone();
    for (row_idx, mut row) in adjusted.rows_mut().into_iter().enumerate() {
        let mut total = 0.0;
        for (v, &r) in row.iter_mut().zip(&ratios) {
            *v *= r;
            total += *v;
        }
        if total <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "row {row_idx}: every reweighted posterior is zero"
            )));
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    ProbabilityMatrix::new(adjusted, probs.source())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ProbabilitySource;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs(rows: Array2<f64>) -> ProbabilityMatrix {
        ProbabilityMatrix::new(rows, ProbabilitySource::External).unwrap()
    }

    #[test]
    fn adjustment_with_equal_priors_is_identity() {
        let m = probs(array![[0.6, 0.4], [0.1, 0.9]]);
        let pi = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        let out = adjust_posteriors(&m, &pi, &pi).unwrap();
        assert_eq!(out.matrix(), m.matrix());
        // And adjusting the output again is still the identity.
        let again = adjust_posteriors(&out, &pi, &pi).unwrap();
        assert_eq!(again.matrix(), out.matrix());
    }

    #[test]
    fn adjustment_matches_worked_example() {
        let m = probs(array![[0.6, 0.4]]);
        let pi_t = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        let pi_f = ProportionVector::new(vec![0.8, 0.2]).unwrap();
        let out = adjust_posteriors(&m, &pi_t, &pi_f).unwrap();
        assert_abs_diff_eq!(out.row(0)[0], 6.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.row(0)[1], 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_estimate_annihilates_a_class() {
        let m = probs(array![[0.6, 0.4], [0.2, 0.8]]);
        let pi_t = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        let pi_f = ProportionVector::new(vec![1.0, 0.0]).unwrap();
        let out = adjust_posteriors(&m, &pi_t, &pi_f).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(out.row(i)[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(out.row(i)[1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_training_proportion_with_mass_is_an_error() {
        let m = probs(array![[0.6, 0.4]]);
        let pi_t = ProportionVector::new(vec![1.0, 0.0]).unwrap();
        let pi_f = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            adjust_posteriors(&m, &pi_t, &pi_f),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn adjusted_rows_stay_stochastic() {
        let m = probs(array![[0.2, 0.5, 0.3], [0.7, 0.1, 0.2]]);
        let pi_t = ProportionVector::new(vec![0.4, 0.3, 0.3]).unwrap();
        let pi_f = ProportionVector::new(vec![0.1, 0.6, 0.3]).unwrap();
        let out = adjust_posteriors(&m, &pi_t, &pi_f).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(out.row(i).sum(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn uniform_priors_preserve_argmax() {
        let m = probs(array![[0.2, 0.5, 0.3], [0.7, 0.1, 0.2], [0.3, 0.3, 0.4]]);
        let pi = ProportionVector::uniform(3).unwrap();
        let out = adjust_posteriors(&m, &pi, &pi).unwrap();
        for i in 0..3 {
            assert_eq!(out.argmax_row(i), m.argmax_row(i));
        }
    }

    #[test]
    fn hellinger_override_on_point_transform_is_rejected() {
        let mut config = QuantifierConfig::new(QuantMethod::Prob);
        config.loss_override = Some(Loss::Hellinger);
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        // Distribution-valued methods accept it.
        let mut config = QuantifierConfig::new(QuantMethod::Hdy);
        config.loss_override = Some(Loss::Hellinger);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn default_losses_follow_the_method_table() {
        assert_eq!(default_loss(Method::Va), Loss::LeastSquares);
        assert_eq!(default_loss(Method::Fm), Loss::LeastSquares);
        assert_eq!(default_loss(Method::Ac), Loss::LeastSquares);
        assert_eq!(default_loss(Method::Ms), Loss::LeastSquares);
        assert_eq!(default_loss(Method::Prob), Loss::LeastSquares);
        assert_eq!(default_loss(Method::Mm), Loss::LeastAbsoluteDeviation);
        assert_eq!(default_loss(Method::Hdy), Loss::Hellinger);
        assert_eq!(default_loss(Method::Hdx), Loss::Hellinger);
    }

    /// A small binary-feature fixture with separable-ish classes.
    fn fixture(seed: u64) -> (Dataset, Dataset) {
        let k = 3;
        let v = 6;
        let n = 90;
        let prototypes = [
            [0.9, 0.8, 0.2, 0.1, 0.5, 0.2],
            [0.2, 0.1, 0.9, 0.8, 0.5, 0.3],
            [0.5, 0.2, 0.1, 0.4, 0.9, 0.8],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |class: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..v)
                .map(|j| if rng.gen_bool(prototypes[class][j]) { 1.0 } else { 0.0 })
                .collect()
        };
        let mut feats = Array2::zeros((n, v));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % k;
            labels.push(c);
            for (j, val) in draw(c, &mut rng).into_iter().enumerate() {
                feats[[i, j]] = val;
            }
        }
        let names = vec!["a".into(), "b".into(), "c".into()];
        let training = Dataset::labeled(feats, labels, names.clone(), true).unwrap();

        let mut ufeats = Array2::zeros((n, v));
        for i in 0..n {
            let c = if i % 2 == 0 { 0 } else { 1 };
            for (j, val) in draw(c, &mut rng).into_iter().enumerate() {
                ufeats[[i, j]] = val;
            }
        }
        let unlabeled = Dataset::unlabeled(ufeats, names, true).unwrap();
        (training, unlabeled)
    }

    #[test]
    fn every_method_dispatches_and_solves() {
        let (training, unlabeled) = fixture(21);
        for method in QuantMethod::ALL {
            let mut config = QuantifierConfig::new(method);
            config.cv.folds = 3;
            config.transform.subset_size = 3;
            config.transform.subset_count = 12;
            let result = quantify(&config, &training, &unlabeled, None)
                .unwrap_or_else(|e| panic!("{} failed: {e}", method.name()));
            let sum: f64 = result.estimate.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            assert!(result.estimate.iter().all(|&p| p >= 0.0));
            match method {
                QuantMethod::Naive => assert!(result.solve.is_none()),
                _ => assert!(result.solve.is_some()),
            }
        }
    }

    #[test]
    fn binary_ac_matches_classical_adjustment() {
        // Two classes, fabricated posteriors with known confusion behavior.
        let n = 200;
        let mut feats = Array2::zeros((n, 1));
        let mut labels = vec![0usize; n];
        let mut rows = Array2::zeros((n, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..n {
            let y = usize::from(i >= n / 2);
            labels[i] = y;
            feats[[i, 0]] = y as f64;
            // Class 0 predicted as 0 with rate 0.8; class 1 as 1 with rate 0.7.
            let predicted_zero = if y == 0 { rng.gen_bool(0.8) } else { rng.gen_bool(0.3) };
            rows[[i, 0]] = if predicted_zero { 1.0 } else { 0.0 };
            rows[[i, 1]] = 1.0 - rows[[i, 0]];
        }
        let training =
            Dataset::labeled(feats, labels, vec!["a".into(), "b".into()], false).unwrap();
        let unl_n = 100;
        let unlabeled =
            Dataset::unlabeled(Array2::zeros((unl_n, 1)), vec!["a".into(), "b".into()], false)
                .unwrap();
        let mut urows = Array2::zeros((unl_n, 2));
        for i in 0..unl_n {
            let predicted_zero = i < 35;
            urows[[i, 0]] = if predicted_zero { 1.0 } else { 0.0 };
            urows[[i, 1]] = 1.0 - urows[[i, 0]];
        }
        let oof = ProbabilityMatrix::new(rows, ProbabilitySource::External).unwrap();
        let unl = ProbabilityMatrix::new(urows, ProbabilitySource::External).unwrap();

        // Empirical rates from the fabricated matrix.
        let tpr = {
            let m = oof.matrix();
            (0..n / 2).map(|i| m[[i, 0]]).sum::<f64>() / (n / 2) as f64
        };
        let fpr = {
            let m = oof.matrix();
            (n / 2..n).map(|i| m[[i, 0]]).sum::<f64>() / (n / 2) as f64
        };
        let p_prime = 35.0 / unl_n as f64;
        let expected = crate::solvers::binary_adjusted_count(p_prime, tpr, fpr).unwrap();

        let mut config = QuantifierConfig::new(QuantMethod::Ac);
        config.solver.tolerance = 1e-15;
        config.solver.max_iterations = 200_000;
        let result = quantify(&config, &training, &unlabeled, Some((&oof, &unl))).unwrap();
        assert_abs_diff_eq!(result.estimate[0], expected, epsilon = 1e-6);
    }

    #[test]
    fn stacked_repeats_multiply_system_rows() {
        let (training, unlabeled) = fixture(44);
        let mut config = QuantifierConfig::new(QuantMethod::Prob);
        config.cv.folds = 3;
        config.cv.repeats = 2;
        config.cv.stacking = Stacking::Stack;
        let result = quantify(&config, &training, &unlabeled, None).unwrap();
        // Two repeats row-stacked: residual spans both trials' systems.
        let solve = result.solve.unwrap();
        assert_eq!(solve.residual.len(), 2 * training.n_classes());

        config.cv.stacking = Stacking::Average;
        let result = quantify(&config, &training, &unlabeled, None).unwrap();
        assert_eq!(result.solve.unwrap().residual.len(), training.n_classes());
    }

    #[test]
    fn no_shift_unlabeled_recovers_training_proportions() {
        let (training, _) = fixture(33);
        let unlabeled = training.without_labels();
        let pi_t = training.label_proportions().unwrap();
        for method in [QuantMethod::Prob, QuantMethod::Ac, QuantMethod::Hdy] {
            let mut config = QuantifierConfig::new(method);
            config.cv.folds = 3;
            let result = quantify(&config, &training, &unlabeled, None).unwrap();
            for (e, t) in result.estimate.iter().zip(pi_t.iter()) {
                assert!(
                    (e - t).abs() < 0.1,
                    "{}: estimate {e} vs training {t}",
                    method.name()
                );
            }
        }
    }

    #[test]
    fn diagnostics_flag_degenerate_designs() {
        // Identical class-conditionals: duplicate design columns.
        let feats = Array2::zeros((40, 2));
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let training =
            Dataset::labeled(feats.clone(), labels, vec!["a".into(), "b".into()], true).unwrap();
        let unlabeled = Dataset::unlabeled(feats, vec![], true).unwrap();
        let config = QuantifierConfig::new(QuantMethod::Hdx);
        let result = quantify(&config, &training, &unlabeled, None).unwrap();
        assert!(result.solve.as_ref().unwrap().non_unique);
        assert!(result.diagnostics["design_condition"] > 1e10);
    }
}
