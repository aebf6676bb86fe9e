//! Domain types shared by every module: simplex vectors, datasets,
//! probability matrices, and the regression system a quantifier solves.
//!
//! Class identity is positional everywhere: classes are indices `0..K-1`
//! with a parallel name table on [`Dataset`]. All numeric code talks in
//! indices; names only matter at the file-format boundary.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance for internal simplex invariants (sums produced by our own arithmetic).
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Tolerance for user-supplied probability rows (external data is noisier).
pub const ROW_SUM_TOL: f64 = 1e-6;
/// Negative entries above this are treated as numerical noise and clamped.
pub const NEGATIVE_NOISE: f64 = -1e-12;

/// A point on the K-simplex: entries nonnegative, summing to one, K >= 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProportionVector {
    values: Vec<f64>,
}

impl ProportionVector {
    /// Builds a proportion vector from raw values, clamping negative noise
    /// (entries in `[-1e-12, 0)`) to zero and renormalizing to sum one.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "proportion vector needs K >= 2 classes, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "proportion vector contains non-finite entries".into(),
            ));
        }
        if let Some(v) = raw.iter().find(|&&v| v < NEGATIVE_NOISE) {
            return Err(Error::DegenerateInput(format!(
                "proportion entry {v} is negative beyond noise tolerance"
            )));
        }
        let mut values: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateInput(
                "proportion vector has zero total mass".into(),
            ));
        }
        for v in &mut values {
            *v /= sum;
        }
        // Absorb the last few ulps of rounding into the largest entry so the
        // stored vector sums to one exactly.
        let residual = 1.0 - values.iter().sum::<f64>();
        let (imax, _) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .expect("non-empty");
        values[imax] += residual;
        Ok(Self { values })
    }

    /// The uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }
}

impl std::ops::Index<usize> for ProportionVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::Deref for ProportionVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl<'de> serde::Deserialize<'de> for ProportionVector {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        ProportionVector::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Where a probability matrix came from. Quantifiers require out-of-fold
/// probabilities on the training side and full-model probabilities on the
/// unlabeled side; external matrices are accepted for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilitySource {
    OutOfFold,
    FullModel,
    External,
}

/// Per-row posterior estimates: an N x K row-stochastic matrix.
#[derive(Debug, Clone)]
pub struct ProbabilityMatrix {
    probs: Array2<f64>,
    source: ProbabilitySource,
}

impl ProbabilityMatrix {
    pub fn new(mut probs: Array2<f64>, source: ProbabilitySource) -> Result<Self> {
        if probs.ncols() < 2 {
            return Err(Error::Contract(format!(
                "probability matrix needs K >= 2 columns, got {}",
                probs.ncols()
            )));
        }
        for v in probs.iter_mut() {
            if !v.is_finite() {
                return Err(Error::Numeric(
                    "probability matrix contains non-finite entries".into(),
                ));
            }
            if *v < -1e-9 || *v > 1.0 + 1e-9 {
                return Err(Error::Range(format!(
                    "probability entry {v} outside [0, 1]"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        for (i, row) in probs.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Range(format!(
                    "probability row {i} sums to {s}, expected 1 within {ROW_SUM_TOL}"
                )));
            }
        }
        Ok(Self { probs, source })
    }

    pub fn n_rows(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn source(&self) -> ProbabilitySource {
        self.source
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.probs.row(i)
    }

    /// Index of the largest entry in row `i`; ties go to the lowest class index.
    pub fn argmax_row(&self, i: usize) -> usize {
        argmax(self.probs.row(i).as_slice().expect("contiguous row"))
    }
}

/// First index of the maximum entry (ties resolved toward the lowest index).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Labeled or unlabeled feature matrix with class metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    class_names: Vec<String>,
    binary_features: bool,
}

impl Dataset {
    /// A labeled dataset where every class must have at least one row
    /// (required wherever per-class statistics are computed).
    pub fn labeled(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        binary_features: bool,
    ) -> Result<Self> {
        let ds = Self::labeled_partial(features, labels, class_names, binary_features)?;
        let counts = ds.class_counts();
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::DegenerateClass(format!(
                "class '{}' (index {k}) has no rows",
                ds.class_names[k]
            )));
        }
        Ok(ds)
    }

    /// A labeled dataset that may leave some classes empty. Materialized
    /// test slices at extreme proportions (e.g. target `(1, 0)`) are the
    /// intended use; training-side operations reject empty classes themselves.
    pub fn labeled_partial(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        binary_features: bool,
    ) -> Result<Self> {
        Self::validate_shape(&features)?;
        if class_names.len() < 2 {
            return Err(Error::Contract(format!(
                "labeled dataset needs K >= 2 class names, got {}",
                class_names.len()
            )));
        }
        if labels.len() != features.nrows() {
            return Err(Error::Contract(format!(
                "{} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Contract(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if binary_features {
            Self::validate_binary(&features)?;
        }
        Ok(Self {
            features,
            labels: Some(labels),
            class_names,
            binary_features,
        })
    }

    /// An unlabeled dataset. Class names may be empty when unknown.
    pub fn unlabeled(
        features: Array2<f64>,
        class_names: Vec<String>,
        binary_features: bool,
    ) -> Result<Self> {
        Self::validate_shape(&features)?;
        if binary_features {
            Self::validate_binary(&features)?;
        }
        Ok(Self {
            features,
            labels: None,
            class_names,
            binary_features,
        })
    }

    fn validate_shape(features: &Array2<f64>) -> Result<()> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Contract(format!(
                "dataset must have N >= 1 rows and V >= 1 features, got {}x{}",
                features.nrows(),
                features.ncols()
            )));
        }
        Ok(())
    }

    fn validate_binary(features: &Array2<f64>) -> Result<()> {
        if let Some(v) = features.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::BinaryFeaturesRequired(format!(
                "binary_features set but found value {v}"
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn binary_features(&self) -> bool {
        self.binary_features
    }

    /// Rows per class (zero vector if unlabeled).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        if let Some(labels) = &self.labels {
            for &y in labels {
                counts[y] += 1;
            }
        }
        counts
    }

    /// Empirical class proportions of a labeled dataset.
    pub fn label_proportions(&self) -> Result<ProportionVector> {
        if self.labels.is_none() {
            return Err(Error::Contract(
                "label proportions requested on unlabeled dataset".into(),
            ));
        }
        let counts = self.class_counts();
        ProportionVector::new(counts.iter().map(|&c| c as f64).collect())
    }

    /// A copy with labels stripped, for handing a scored test set to a quantifier.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: None,
            class_names: self.class_names.clone(),
            binary_features: self.binary_features,
        }
    }
}

/// The assembled regression problem: design matrix X (one column per class),
/// target vector y, and optional per-row weights.
#[derive(Debug, Clone)]
pub struct RegressionSystem {
    design: Array2<f64>,
    target: Array1<f64>,
    row_weights: Option<Array1<f64>>,
}

impl RegressionSystem {
    pub fn new(
        design: Array2<f64>,
        target: Array1<f64>,
        row_weights: Option<Array1<f64>>,
    ) -> Result<Self> {
        if design.ncols() < 2 {
            return Err(Error::Contract(format!(
                "design needs K >= 2 columns, got {}",
                design.ncols()
            )));
        }
        if target.len() != design.nrows() {
            return Err(Error::Contract(format!(
                "target length {} does not match design row count {}",
                target.len(),
                design.nrows()
            )));
        }
        if let Some(w) = &row_weights {
            if w.len() != design.nrows() {
                return Err(Error::Contract(format!(
                    "row_weights length {} does not match design row count {}",
                    w.len(),
                    design.nrows()
                )));
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::Range(
                    "row weights must be finite and nonnegative".into(),
                ));
            }
        }
        if design.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "regression system contains non-finite entries".into(),
            ));
        }
        Ok(Self {
            design,
            target,
            row_weights,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    pub fn row_weights(&self) -> Option<&Array1<f64>> {
        self.row_weights.as_ref()
    }

    /// Row weights with the uniform default filled in.
    pub fn effective_weights(&self) -> Array1<f64> {
        match &self.row_weights {
            Some(w) => w.clone(),
            None => Array1::ones(self.n_rows()),
        }
    }

    /// `target - design * proportions`, entrywise.
    pub fn residual_for(&self, proportions: &ProportionVector) -> Array1<f64> {
        let pi = Array1::from_vec(proportions.to_vec());
        &self.target - &self.design.dot(&pi)
    }

    /// Stacks several systems (e.g. repeated cross-validation trials) into one
    /// regression problem by concatenating rows.
    pub fn stack(systems: &[RegressionSystem]) -> Result<RegressionSystem> {
        let first = systems
            .first()
            .ok_or_else(|| Error::Contract("cannot stack zero systems".into()))?;
        let k = first.n_classes();
        if systems.iter().any(|s| s.n_classes() != k) {
            return Err(Error::Contract(
                "stacked systems must share the class count".into(),
            ));
        }
        let total_rows: usize = systems.iter().map(|s| s.n_rows()).sum();
        let mut design = Array2::zeros((total_rows, k));
        let mut target = Array1::zeros(total_rows);
        let any_weights = systems.iter().any(|s| s.row_weights.is_some());
        let mut weights = Array1::ones(total_rows);
        let mut at = 0;
        for s in systems {
            for i in 0..s.n_rows() {
                design.row_mut(at + i).assign(&s.design.row(i));
                target[at + i] = s.target[i];
            }
            if let Some(w) = &s.row_weights {
                for i in 0..s.n_rows() {
                    weights[at + i] = w[i];
                }
            }
            at += s.n_rows();
        }
        RegressionSystem::new(design, target, any_weights.then_some(weights))
    }
}

/// Outcome of one simplex-constrained solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub proportions: ProportionVector,
    /// `target - design * proportions`, entrywise.
    pub residual: Vec<f64>,
    pub loss_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the design has numerically deficient column rank, so other
    /// simplex points achieve (nearly) the same loss.
    pub non_unique: bool,
}

impl SolveResult {
    /// Assembles a result, deriving the residual from the system so the
    /// residual identity holds by construction.
    pub fn from_solution(
        system: &RegressionSystem,
        proportions: ProportionVector,
        loss_value: f64,
        iterations: usize,
        converged: bool,
        non_unique: bool,
    ) -> Self {
        let residual = system.residual_for(&proportions).to_vec();
        Self {
            proportions,
            residual,
            loss_value: loss_value.max(0.0),
            iterations,
            converged,
            non_unique,
        }
    }
}

/// Mean of the classifier's probability outputs over the unlabeled set:
/// the baseline estimate that is biased under prior shift.
pub fn naive_estimate(probs: &ProbabilityMatrix) -> Result<ProportionVector> {
    if probs.n_rows() == 0 {
        return Err(Error::DegenerateInput(
            "naive estimate of an empty probability matrix".into(),
        ));
    }
    let n = probs.n_rows() as f64;
    let means: Vec<f64> = probs
        .matrix()
        .columns()
        .into_iter()
        .map(|c| c.sum() / n)
        .collect();
    ProportionVector::new(means)
}
