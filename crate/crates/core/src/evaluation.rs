//! Evaluation harness: generate test-proportion scenarios, materialize test
//! sets from a labeled pool, run every quantifier, and score with MAD and
//! post-quantification accuracy.
//!
//! All randomness is seeded; per-case seeds are derived from the scenario
//! seed and the case index, so reports are reproducible regardless of how
//! cases are scheduled across threads.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit, out_of_fold_proba, CrossValConfig, LogisticModel, OutOfFoldProbs};
use crate::error::{Error, Result};
use crate::quantifiers::{
    adjust_posteriors, quantify_with_probs, PreparedProbs, QuantMethod, QuantifierConfig,
};
use crate::types::{naive_estimate, Dataset, ProbabilityMatrix, ProportionVector};

/// How test-case proportions are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Every lattice point on the simplex with the given step.
    Grid,
    /// A uniform sample (without replacement) of the grid.
    GridSample,
    /// A Dirichlet random walk drifting away from a start point.
    DirichletWalk,
}

/// Scenario settings. `sample_count` is the number of sampled grid points or
/// walk steps; `start` defaults to the training proportions for walks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub step: f64,
    pub sample_count: usize,
    pub walk_concentration: f64,
    pub rng_seed: u64,
    pub start: Option<ProportionVector>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Grid,
            step: 0.1,
            sample_count: 20,
            walk_concentration: 50.0,
            rng_seed: 0,
            start: None,
        }
    }
}

/// `1/step` as an integer, or a config error when step does not divide 1.
fn grid_resolution(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("grid step {step} outside (0, 1]")));
    }
    let m = (1.0 / step).round();
    if (m * step - 1.0).abs() > 1e-9 || m < 1.0 {
        return Err(Error::Config(format!("grid step {step} does not divide 1")));
    }
    Ok(m as usize)
}

/// Every composition of `1/step` into `k` parts, ordered with the first
/// coordinate descending: `(1, 0, ..)`, `(1 - step, step, ..)`, ...,
/// `(0, .., 1)`.
pub fn enumerate_grid(k: usize, step: f64) -> Result<Vec<ProportionVector>> {
    if k < 2 {
        return Err(Error::Config(format!("grid needs K >= 2 classes, got {k}")));
    }
    let m = grid_resolution(step)?;
    let mut out = Vec::new();
    let mut counts = vec![0usize; k];
    fill_compositions(&mut out, &mut counts, 0, m, m)?;
    Ok(out)
}

fn fill_compositions(
    out: &mut Vec<ProportionVector>,
    counts: &mut Vec<usize>,
    slot: usize,
    remaining: usize,
    resolution: usize,
) -> Result<()> {
    if slot == counts.len() - 1 {
        counts[slot] = remaining;
        let values: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / resolution as f64)
            .collect();
        out.push(ProportionVector::new(values)?);
        return Ok(());
    }
    for c in (0..=remaining).rev() {
        counts[slot] = c;
        fill_compositions(out, counts, slot + 1, remaining - c, resolution)?;
    }
    Ok(())
}

/// Uniform sample of `count` grid points without replacement.
pub fn sample_grid(
    k: usize,
    step: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<ProportionVector>> {
    let mut grid = enumerate_grid(k, step)?;
    if count > grid.len() {
        return Err(Error::Config(format!(
            "cannot sample {count} points from a grid of {}",
            grid.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let j = rng.gen_range(i..grid.len());
        grid.swap(i, j);
    }
    grid.truncate(count);
    Ok(grid)
}

/// Dirichlet random walk: each step samples
/// `pi_{t+1} ~ Dirichlet(concentration * pi_t + 1e-3)`, so proportions drift
/// gradually away from `start`. Zero coordinates of `start` are floored to
/// 1e-3 before the walk begins.
pub fn dirichlet_walk(
    start: &ProportionVector,
    steps: usize,
    concentration: f64,
    seed: u64,
) -> Result<Vec<ProportionVector>> {
    if steps == 0 {
        return Err(Error::Config("walk needs steps >= 1".into()));
    }
    if !concentration.is_finite() || concentration <= 0.0 {
        return Err(Error::Config(format!(
            "walk concentration must be positive, got {concentration}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = ProportionVector::new(
        start.iter().map(|&v| v.max(1e-3)).collect::<Vec<f64>>(),
    )?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        current = dirichlet_draw(&current, concentration, &mut rng)?;
        out.push(current.clone());
    }
    Ok(out)
}

fn dirichlet_draw(
    pi: &ProportionVector,
    concentration: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ProportionVector> {
    // Dirichlet via normalized Gamma draws, with 1e-3 smoothing so no
    // coordinate is absorbed at zero.
    for _attempt in 0..100 {
        let mut draws = Vec::with_capacity(pi.len());
        for &p in pi.iter() {
            let shape = concentration * p + 1e-3;
            let gamma = Gamma::new(shape, 1.0)
                .map_err(|e| Error::Numeric(format!("gamma({shape}): {e}")))?;
            draws.push(gamma.sample(rng));
        }
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return ProportionVector::new(draws);
        }
    }
    Err(Error::Numeric(
        "Dirichlet sampling kept producing zero total mass".into(),
    ))
}

/// Integer per-class counts for a target proportion vector by
/// largest-remainder apportionment; ties give the extra row to the lower
/// class index.
pub fn apportion_counts(target: &ProportionVector, size: usize) -> Vec<usize> {
    let k = target.len();
    let mut counts: Vec<usize> = Vec::with_capacity(k);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(k);
    let mut assigned = 0usize;
    for (i, &p) in target.iter().enumerate() {
        let quota = p * size as f64;
        let base = quota.floor() as usize;
        counts.push(base);
        assigned += base;
        remainders.push((i, quota - base as f64));
    }
    remainders.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite remainders")
            .then(a.0.cmp(&b.0))
    });
    for &(i, _) in remainders.iter().take(size.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Samples a test set from a labeled pool hitting the target proportions via
/// largest-remainder integer counts, without replacement. Labels are kept for
/// scoring; callers hide them before quantification.
pub fn materialize_test(
    pool: &Dataset,
    target: &ProportionVector,
    size: usize,
    seed: u64,
) -> Result<Dataset> {
    let labels = pool
        .labels()
        .ok_or_else(|| Error::Contract("test materialization needs a labeled pool".into()))?;
    let k = pool.n_classes();
    if target.len() != k {
        return Err(Error::Contract(format!(
            "target has {} classes, pool has {k}",
            target.len()
        )));
    }
    if size == 0 {
        return Err(Error::Config("test size must be >= 1".into()));
    }
    let counts = apportion_counts(target, size);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(i);
    }
    for (class, (&needed, available)) in counts.iter().zip(&per_class).enumerate() {
        if needed > available.len() {
            return Err(Error::PoolExhausted {
                class: pool.class_names()[class].clone(),
                needed,
                available: available.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(size);
    for (class, indices) in per_class.iter_mut().enumerate() {
        let needed = counts[class];
        for i in 0..needed {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        chosen.extend(indices.iter().take(needed).copied());
    }

    let mut features = Array2::zeros((size, pool.n_features()));
    let mut out_labels = Vec::with_capacity(size);
    for (row, &i) in chosen.iter().enumerate() {
        features.row_mut(row).assign(&pool.features().row(i));
        out_labels.push(labels[i]);
    }
    Dataset::labeled_partial(
        features,
        out_labels,
        pool.class_names().to_vec(),
        pool.binary_features(),
    )
}

/// Mean absolute deviation between two proportion vectors:
/// `(1/K) sum_k |a_k - b_k|`.
pub fn mad(estimate: &ProportionVector, truth: &ProportionVector) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Contract(format!(
            "MAD length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    let sum: f64 = estimate
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / estimate.len() as f64)
}

/// One method's scores on one test case; `error` is set (and the scores are
/// absent) when the method failed on that case.
#[derive(Debug, Clone, Serialize)]
pub struct MethodCaseResult {
    pub method: String,
    pub estimate: Option<ProportionVector>,
    pub mad: Option<f64>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Scores for one materialized test case. `true_proportions` are the
/// realized (post-apportionment) proportions of the sampled test set;
/// `shift_mad` is their MAD from the training proportions.
#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub case_index: usize,
    pub true_proportions: ProportionVector,
    pub shift_mad: f64,
    pub naive_mad: f64,
    pub naive_accuracy: f64,
    pub truth_accuracy: f64,
    pub methods: Vec<MethodCaseResult>,
}

/// Mean scores per method over all cases where the method succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct MethodAggregate {
    pub method: String,
    pub mean_mad: f64,
    pub mean_accuracy: f64,
    pub cases: usize,
}

/// Full evaluation output: per-case records plus per-method means, with
/// Naive and Truth baseline rows included in the aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub training_proportions: ProportionVector,
    pub test_size: usize,
    pub case_count: usize,
    pub error_count: usize,
    pub aggregates: Vec<MethodAggregate>,
    pub per_case: Vec<CaseResult>,
}

/// Expands a scenario into the list of target proportions.
pub fn scenario_proportions(
    spec: &ScenarioSpec,
    k: usize,
    default_start: &ProportionVector,
) -> Result<Vec<ProportionVector>> {
    match spec.kind {
        ScenarioKind::Grid => enumerate_grid(k, spec.step),
        ScenarioKind::GridSample => sample_grid(k, spec.step, spec.sample_count, spec.rng_seed),
        ScenarioKind::DirichletWalk => {
            let start = spec.start.as_ref().unwrap_or(default_start);
            if start.len() != k {
                return Err(Error::Config(format!(
                    "walk start has {} classes, data has {k}",
                    start.len()
                )));
            }
            dirichlet_walk(start, spec.sample_count, spec.walk_concentration, spec.rng_seed)
        }
    }
}

fn accuracy_of(probs: &ProbabilityMatrix, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| probs.argmax_row(i) == y)
        .count();
    correct as f64 / labels.len() as f64
}

fn mix_seed(base: u64, index: usize) -> u64 {
    base ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

/// Classifier artifacts shared across all cases of a suite: one model and
/// one out-of-fold pass per distinct (lambda, cv) setting.
struct SharedStats {
    scoring_model: LogisticModel,
    models: BTreeMap<u64, LogisticModel>,
    oof: BTreeMap<String, OutOfFoldProbs>,
}

fn oof_key(lambda: f64, cv: &CrossValConfig) -> String {
    format!(
        "{:x}/{}/{}/{}/{:?}",
        lambda.to_bits(),
        cv.folds,
        cv.repeats,
        cv.rng_seed,
        cv.stacking
    )
}

fn prepare_shared(
    training: &Dataset,
    methods: &[QuantifierConfig],
) -> Result<SharedStats> {
    // Scoring posteriors (naive / truth / accuracy) come from one model so
    // accuracy differences across methods reflect their estimates only.
    let scoring_lambda = methods.first().map_or(1.0, |m| m.lambda);
    let scoring_model = fit(training, scoring_lambda)?;
    let mut models = BTreeMap::new();
    models.insert(scoring_lambda.to_bits(), scoring_model.clone());
    let mut oof = BTreeMap::new();
    for config in methods {
        if !config.method.needs_classifier() {
            continue;
        }
        if let std::collections::btree_map::Entry::Vacant(slot) =
            models.entry(config.lambda.to_bits())
        {
            slot.insert(fit(training, config.lambda)?);
        }
        if let std::collections::btree_map::Entry::Vacant(slot) =
            oof.entry(oof_key(config.lambda, &config.cv))
        {
            slot.insert(out_of_fold_proba(training, &config.cv, config.lambda)?);
        }
    }
    Ok(SharedStats {
        scoring_model,
        models,
        oof,
    })
}

/// Runs the full evaluation protocol: for every scenario proportion,
/// materialize a test set, run every configured method plus the Naive and
/// Truth baselines, and aggregate MAD and post-quantification accuracy.
/// A method failing on one case is recorded in that case, not fatal.
pub fn run_suite(
    training: &Dataset,
    pool: &Dataset,
    scenario: &ScenarioSpec,
    methods: &[QuantifierConfig],
    test_size: usize,
) -> Result<EvalReport> {
    let pi_t = training.label_proportions()?;
    let targets = scenario_proportions(scenario, training.n_classes(), &pi_t)?;
    run_suite_with_targets(
        training,
        pool,
        &targets,
        methods,
        test_size,
        scenario.rng_seed,
    )
}

/// As [`run_suite`], but with an explicit list of target proportions.
pub fn run_suite_with_targets(
    training: &Dataset,
    pool: &Dataset,
    targets: &[ProportionVector],
    methods: &[QuantifierConfig],
    test_size: usize,
    seed: u64,
) -> Result<EvalReport> {
    if pool.labels().is_none() {
        return Err(Error::Contract("evaluation pool must be labeled".into()));
    }
    if training.n_features() != pool.n_features() {
        return Err(Error::Contract(format!(
            "feature width mismatch: training has {}, pool has {}",
            training.n_features(),
            pool.n_features()
        )));
    }
    if training.n_classes() != pool.n_classes() {
        return Err(Error::Contract(
            "training and pool class counts differ".into(),
        ));
    }
    for config in methods {
        config.validate()?;
    }
    let pi_t = training.label_proportions()?;
    let shared = prepare_shared(training, methods)?;

    let cases: Vec<CaseResult> = targets
        .par_iter()
        .enumerate()
        .map(|(index, target)| {
            evaluate_case(
                index,
                target,
                training,
                pool,
                methods,
                test_size,
                mix_seed(seed, index),
                &pi_t,
                &shared,
            )
        })
        .collect::<Result<_>>()?;

    let mut aggregates = Vec::new();
    let mean =
        |values: Vec<f64>| -> f64 { values.iter().sum::<f64>() / values.len().max(1) as f64 };
    aggregates.push(MethodAggregate {
        method: "Truth".to_string(),
        mean_mad: 0.0,
        mean_accuracy: mean(cases.iter().map(|c| c.truth_accuracy).collect()),
        cases: cases.len(),
    });
    for (mi, config) in methods.iter().enumerate() {
        let scored: Vec<&MethodCaseResult> = cases
            .iter()
            .map(|c| &c.methods[mi])
            .filter(|m| m.error.is_none())
            .collect();
        aggregates.push(MethodAggregate {
            method: config.method.name().to_string(),
            mean_mad: mean(scored.iter().filter_map(|m| m.mad).collect()),
            mean_accuracy: mean(scored.iter().filter_map(|m| m.accuracy).collect()),
            cases: scored.len(),
        });
    }
    aggregates.push(MethodAggregate {
        method: "Naive".to_string(),
        mean_mad: mean(cases.iter().map(|c| c.naive_mad).collect()),
        mean_accuracy: mean(cases.iter().map(|c| c.naive_accuracy).collect()),
        cases: cases.len(),
    });

    let error_count = cases
        .iter()
        .flat_map(|c| &c.methods)
        .filter(|m| m.error.is_some())
        .count();
    Ok(EvalReport {
        training_proportions: pi_t,
        test_size,
        case_count: cases.len(),
        error_count,
        aggregates,
        per_case: cases,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_case(
    index: usize,
    target: &ProportionVector,
    training: &Dataset,
    pool: &Dataset,
    methods: &[QuantifierConfig],
    test_size: usize,
    seed: u64,
    pi_t: &ProportionVector,
    shared: &SharedStats,
) -> Result<CaseResult> {
    let test = materialize_test(pool, target, test_size, seed)?;
    let test_labels = test.labels().expect("materialized sets keep labels");
    let realized = ProportionVector::new(
        test.class_counts().iter().map(|&c| c as f64).collect(),
    )?;
    let hidden = test.without_labels();

    let scoring_probs = shared.scoring_model.predict_proba(&hidden)?;
    let naive = naive_estimate(&scoring_probs)?;
    let naive_mad = mad(&naive, &realized)?;
    let naive_accuracy = accuracy_of(&scoring_probs, test_labels);
    let truth_adjusted = adjust_posteriors(&scoring_probs, pi_t, &realized)?;
    let truth_accuracy = accuracy_of(&truth_adjusted, test_labels);

    let mut method_results = Vec::with_capacity(methods.len());
    for config in methods {
        let outcome = run_method_on_case(config, training, &hidden, shared)
            .and_then(|estimate| {
                let m = mad(&estimate, &realized)?;
                let adjusted = adjust_posteriors(&scoring_probs, pi_t, &estimate)?;
                Ok((estimate, m, accuracy_of(&adjusted, test_labels)))
            });
        method_results.push(match outcome {
            Ok((estimate, m, acc)) => MethodCaseResult {
                method: config.method.name().to_string(),
                estimate: Some(estimate),
                mad: Some(m),
                accuracy: Some(acc),
                error: None,
            },
            Err(e) => MethodCaseResult {
                method: config.method.name().to_string(),
                estimate: None,
                mad: None,
                accuracy: None,
                error: Some(e.to_string()),
            },
        });
    }

    Ok(CaseResult {
        case_index: index,
        shift_mad: mad(&realized, pi_t)?,
        true_proportions: realized,
        naive_mad,
        naive_accuracy,
        truth_accuracy,
        methods: method_results,
    })
}

fn run_method_on_case(
    config: &QuantifierConfig,
    training: &Dataset,
    hidden_test: &Dataset,
    shared: &SharedStats,
) -> Result<ProportionVector> {
    if !config.method.needs_classifier() {
        let result = quantify_with_probs(config, training, hidden_test, None)?;
        return Ok(result.estimate);
    }
    let model = shared
        .models
        .get(&config.lambda.to_bits())
        .expect("model prepared for every method lambda");
    let test_probs = model.predict_proba(hidden_test)?;
    if config.method == QuantMethod::Naive {
        return naive_estimate(&test_probs);
    }
    let oof = shared
        .oof
        .get(&oof_key(config.lambda, &config.cv))
        .expect("out-of-fold stats prepared for every method");
    let result = quantify_with_probs(
        config,
        training,
        hidden_test,
        Some(PreparedProbs {
            out_of_fold: oof,
            unlabeled: &test_probs,
        }),
    )?;
    Ok(result.estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binomial(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        let mut result = 1usize;
        for i in 0..k.min(n - k) {
            result = result * (n - i) / (i + 1);
        }
        result
    }

    #[test]
    fn grid_counts_match_closed_form() {
        for (k, step) in [
            (2usize, 0.5f64),
            (2, 0.25),
            (3, 0.2),
            (3, 0.1),
            (4, 0.25),
            (5, 0.2),
            (6, 0.5),
        ] {
            let m = (1.0 / step).round() as usize;
            let grid = enumerate_grid(k, step).unwrap();
            assert_eq!(grid.len(), binomial(m + k - 1, k - 1), "K={k} step={step}");
        }
    }

    #[test]
    fn tiny_grid_enumeration_by_hand() {
        let grid = enumerate_grid(2, 0.5).unwrap();
        let points: Vec<Vec<f64>> = grid.iter().map(|p| p.to_vec()).collect();
        assert_eq!(
            points,
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]
        );
    }

    #[test]
    fn grid_rejects_non_dividing_step() {
        assert!(matches!(
            enumerate_grid(3, 0.3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grid_points_are_valid_proportions() {
        for p in enumerate_grid(4, 0.25).unwrap() {
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn exhaustive_sample_is_a_permutation() {
        let full = enumerate_grid(3, 0.5).unwrap();
        let sampled = sample_grid(3, 0.5, full.len(), 9).unwrap();
        assert_eq!(sampled.len(), full.len());
        for p in &full {
            assert!(sampled.iter().any(|q| q == p));
        }
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let a = sample_grid(3, 0.1, 20, 4).unwrap();
        let b = sample_grid(3, 0.1, 20, 4).unwrap();
        assert_eq!(a.len(), 20);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
        assert!(sample_grid(2, 0.5, 10, 4).is_err());
    }

    #[test]
    fn sampled_grid_points_are_distinct() {
        let pts = sample_grid(10, 0.1, 1001, 123).unwrap();
        assert_eq!(pts.len(), 1001);
        let mut keys: Vec<String> = pts
            .iter()
            .map(|p| {
                p.iter()
                    .map(|v| format!("{:.3}", v))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 1001);
    }

    #[test]
    fn walk_with_huge_concentration_stays_put() {
        let start = ProportionVector::new(vec![0.4, 0.35, 0.25]).unwrap();
        for run in 0..100 {
            let walk = dirichlet_walk(&start, 3, 1e6, run).unwrap();
            for step in &walk {
                for (a, b) in step.iter().zip(start.iter()) {
                    assert!((a - b).abs() < 0.01, "run {run}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn walk_single_step_is_on_simplex() {
        let start = ProportionVector::new(vec![0.7, 0.3]).unwrap();
        let walk = dirichlet_walk(&start, 1, 50.0, 7).unwrap();
        assert_eq!(walk.len(), 1);
        assert_abs_diff_eq!(walk[0].iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn walk_one_step_mean_matches_dirichlet_mean() {
        let start = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        let mut total = 0.0;
        let n = 10_000;
        for seed in 0..n {
            let walk = dirichlet_walk(&start, 1, 50.0, seed).unwrap();
            total += walk[0][0];
        }
        assert!((total / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn walk_is_deterministic() {
        let start = ProportionVector::new(vec![0.6, 0.4]).unwrap();
        let a = dirichlet_walk(&start, 5, 30.0, 11).unwrap();
        let b = dirichlet_walk(&start, 5, 30.0, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn apportionment_examples() {
        let t = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        // Tie on remainders 0.5/0.5: the lower index gets the extra row.
        assert_eq!(apportion_counts(&t, 11), vec![6, 5]);
        let t = ProportionVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(apportion_counts(&t, 10), vec![10, 0]);
    }

    #[test]
    fn apportionment_stays_within_one_over_size() {
        let t = ProportionVector::new(vec![0.21, 0.33, 0.46]).unwrap();
        for size in [7usize, 50, 173] {
            let counts = apportion_counts(&t, size);
            assert_eq!(counts.iter().sum::<usize>(), size);
            for (c, &p) in counts.iter().zip(t.iter()) {
                assert!((*c as f64 / size as f64 - p).abs() < 1.0 / size as f64);
            }
        }
    }

    #[test]
    fn mad_examples() {
        let a = ProportionVector::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(mad(&a, &a).unwrap(), 0.0, epsilon = 1e-15);
        let b = ProportionVector::new(vec![0.7, 0.3]).unwrap();
        assert_abs_diff_eq!(mad(&a, &b).unwrap(), 0.2, epsilon = 1e-12);
        let c = ProportionVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let d = ProportionVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(mad(&c, &d).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert!(mad(&a, &c).is_err());
    }
}
