//! Feature-transformation functions and regression-system assembly.
//!
//! Each quantification method is a choice of row transform `f(x)`. The
//! design matrix column for class `k` is the mean transform over training
//! rows of that class; the target is the mean transform over the unlabeled
//! rows. Classifier-based methods transform the posterior row instead of
//! the feature row, so the same assembly covers both families.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{argmax, Dataset, ProbabilityMatrix, ProportionVector, RegressionSystem};

/// The quantification methods, named by their established acronyms:
/// probability-output transforms (FM, AC, MS, Prob, MM, HDy) and direct
/// feature-distribution transforms (HDx, VA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
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
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Va,
        Method::Hdx,
        Method::Fm,
        Method::Ac,
        Method::Ms,
        Method::Prob,
        Method::Mm,
        Method::Hdy,
    ];

    /// Whether the transform consumes classifier posteriors.
    pub fn needs_classifier(self) -> bool {
        !matches!(self, Method::Va | Method::Hdx)
    }

    /// Whether the transform emits per-block probability distributions,
    /// the only systems the Hellinger loss accepts.
    pub fn distribution_valued(self) -> bool {
        matches!(self, Method::Hdy | Method::Hdx | Method::Va)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Va => "VA",
            Method::Hdx => "HDx",
            Method::Fm => "FM",
            Method::Ac => "AC",
            Method::Ms => "MS",
            Method::Prob => "Prob",
            Method::Mm => "MM",
            Method::Hdy => "HDy",
        }
    }
}

/// Parameterized choice of row transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformSpec {
    pub method: Method,
    /// Probability-histogram bin count (MM, HDy).
    pub bins: usize,
    /// Decision thresholds (MS); strictly increasing, each in (0, 1).
    pub thresholds: Vec<f64>,
    /// Feature-subset size (VA).
    pub subset_size: usize,
    /// Number of sampled feature subsets (VA).
    pub subset_count: usize,
    /// Seed for VA subset sampling; both sides of a system share it.
    pub rng_seed: u64,
}

impl TransformSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            bins: 10,
            thresholds: default_thresholds(),
            subset_size: 5,
            subset_count: 50,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Mm | Method::Hdy => {
                if self.bins < 2 {
                    return Err(Error::Config(format!(
                        "{} needs bins >= 2, got {}",
                        self.method.name(),
                        self.bins
                    )));
                }
            }
            Method::Ms => {
                if self.thresholds.is_empty() {
                    return Err(Error::Config("MS needs at least one threshold".into()));
                }
                for w in self.thresholds.windows(2) {
                    if w[1] <= w[0] {
                        return Err(Error::Config(
                            "MS thresholds must be strictly increasing".into(),
                        ));
                    }
                }
                if self
                    .thresholds
                    .iter()
                    .any(|&t| !(t > 0.0 && t < 1.0))
                {
                    return Err(Error::Config(
                        "MS thresholds must lie strictly inside (0, 1)".into(),
                    ));
                }
            }
            Method::Va => {
                if self.subset_size == 0 || self.subset_size > 16 {
                    return Err(Error::Config(format!(
                        "VA subset_size must be in 1..=16, got {}",
                        self.subset_size
                    )));
                }
                if self.subset_count == 0 {
                    return Err(Error::Config("VA needs subset_count >= 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Flattened transform length for `K` classes and `V` features.
    pub fn output_len(&self, n_classes: usize, n_features: usize) -> usize {
        match self.method {
            Method::Fm | Method::Ac | Method::Prob => n_classes,
            Method::Ms => n_classes * self.thresholds.len(),
            Method::Mm | Method::Hdy => n_classes * self.bins,
            Method::Hdx => 2 * n_features,
            Method::Va => self.subset_count * (1usize << self.subset_size),
        }
    }
}

/// The default MS threshold grid: 0.05, 0.10, ..., 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// One-hot encoding of `p` into `B` equal-width bins over [0, 1]; the top
/// bin is right-closed so `p = 1` lands in bin `B - 1`.
pub fn bin_onehot(p: f64, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("bin input {p} outside [0, 1]")));
    }
    let idx = ((p * bins as f64).floor() as usize).min(bins - 1);
    let mut out = vec![0.0; bins];
    out[idx] = 1.0;
    Ok(out)
}

/// Running prefix sums.
pub fn cumsum(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

/// One-hot encoding of a binary tuple into a vector of size `2^n`, indexed
/// big-endian (the first entry is the most significant bit).
pub fn ntuple_onehot(bits: &[f64]) -> Result<Vec<f64>> {
    if bits.is_empty() || bits.len() > 16 {
        return Err(Error::Contract(format!(
            "ntuple needs 1..=16 entries, got {}",
            bits.len()
        )));
    }
    let mut idx = 0usize;
    for &b in bits {
        if b != 0.0 && b != 1.0 {
            return Err(Error::BinaryFeaturesRequired(format!(
                "ntuple entry {b} is not 0/1"
            )));
        }
        idx = (idx << 1) | (b as usize);
    }
    let mut out = vec![0.0; 1usize << bits.len()];
    out[idx] = 1.0;
    Ok(out)
}

/// Deterministic VA feature subsets: `count` subsets of `n` distinct indices
/// from `0..v`, drawn with one seeded generator.
pub fn sample_feature_subsets(
    v: usize,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 || n > v {
        return Err(Error::Config(format!(
            "subset size {n} invalid for {v} features"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..v).collect();
    let mut subsets = Vec::with_capacity(count);
    for _ in 0..count {
        let mut subset: Vec<usize> = all
            .choose_multiple(&mut rng, n)
            .copied()
            .collect();
        subset.sort_unstable();
        subsets.push(subset);
    }
    Ok(subsets)
}

/// Applies the spec's transform to one row. `probs_row` is required for the
/// classifier-based methods; `training_proportions` only for FM. For VA the
/// feature subsets are regenerated from `spec.rng_seed`, so repeated calls
/// are deterministic.
pub fn transform_row(
    spec: &TransformSpec,
    x: ArrayView1<'_, f64>,
    probs_row: Option<&[f64]>,
    training_proportions: Option<&ProportionVector>,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let subsets = match spec.method {
        Method::Va => Some(sample_feature_subsets(
            x.len(),
            spec.subset_size,
            spec.subset_count,
            spec.rng_seed,
        )?),
        _ => None,
    };
    transform_row_inner(spec, subsets.as_deref(), x, probs_row, training_proportions)
}

fn transform_row_inner(
    spec: &TransformSpec,
    subsets: Option<&[Vec<usize>]>,
    x: ArrayView1<'_, f64>,
    probs_row: Option<&[f64]>,
    training_proportions: Option<&ProportionVector>,
) -> Result<Vec<f64>> {
    let need_probs = || {
        probs_row.ok_or_else(|| {
            Error::Contract(format!(
                "{} requires classifier probabilities",
                spec.method.name()
            ))
        })
    };
    match spec.method {
        Method::Prob => Ok(need_probs()?.to_vec()),
        Method::Ac => {
            let p = need_probs()?;
            // I(P_l >= P_yhat) as a one-hot: ties go to the lowest index.
            let mut out = vec![0.0; p.len()];
            out[argmax(p)] = 1.0;
            Ok(out)
        }
        Method::Fm => {
            let p = need_probs()?;
            let pi_t = training_proportions.ok_or_else(|| {
                Error::Contract("FM requires the training proportions".into())
            })?;
            if pi_t.len() != p.len() {
                return Err(Error::Contract(format!(
                    "FM proportions length {} != class count {}",
                    pi_t.len(),
                    p.len()
                )));
            }
            Ok(p.iter()
                .zip(pi_t.iter())
                .map(|(&pl, &tl)| if pl >= tl { 1.0 } else { 0.0 })
                .collect())
        }
        Method::Ms => {
            let p = need_probs()?;
            let mut out = Vec::with_capacity(p.len() * spec.thresholds.len());
            for &pl in p {
                for &alpha in &spec.thresholds {
                    out.push(if pl >= alpha { 1.0 } else { 0.0 });
                }
            }
            Ok(out)
        }
        Method::Mm => {
            let p = need_probs()?;
            let mut out = Vec::with_capacity(p.len() * spec.bins);
            for &pl in p {
                out.extend(cumsum(&bin_onehot(pl, spec.bins)?));
            }
            Ok(out)
        }
        Method::Hdy => {
            let p = need_probs()?;
            let mut out = Vec::with_capacity(p.len() * spec.bins);
            for &pl in p {
                out.extend(bin_onehot(pl, spec.bins)?);
            }
            Ok(out)
        }
        Method::Hdx => {
            let mut out = Vec::with_capacity(2 * x.len());
            for &v in x.iter() {
                out.extend(ntuple_onehot(&[v])?);
            }
            Ok(out)
        }
        Method::Va => {
            let subsets = subsets.expect("VA subsets precomputed");
            let mut out = Vec::with_capacity(spec.subset_count * (1 << spec.subset_size));
            let mut bits = vec![0.0; spec.subset_size];
            for subset in subsets {
                for (slot, &j) in bits.iter_mut().zip(subset.iter()) {
                    *slot = x[j];
                }
                out.extend(ntuple_onehot(&bits)?);
            }
            Ok(out)
        }
    }
}

/// Assembles the regression system for a method: design column `k` is the
/// mean transform over training rows of class `k` (posteriors taken from
/// the out-of-fold matrix), the target is the mean transform over the
/// unlabeled rows (posteriors from the full-model matrix).
pub fn build_system(
    spec: &TransformSpec,
    training: &Dataset,
    training_probs: Option<&ProbabilityMatrix>,
    unlabeled: &Dataset,
    unlabeled_probs: Option<&ProbabilityMatrix>,
) -> Result<RegressionSystem> {
    spec.validate()?;
    let labels = training
        .labels()
        .ok_or_else(|| Error::Contract("build_system requires labeled training data".into()))?;
    let k = training.n_classes();
    let v = training.n_features();
    if unlabeled.n_features() != v {
        return Err(Error::Contract(format!(
            "feature width mismatch: training has {v}, unlabeled has {}",
            unlabeled.n_features()
        )));
    }
    let counts = training.class_counts();
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass(format!(
            "class '{}' (index {c}) has no training rows",
            training.class_names()[c]
        )));
    }

    if spec.method.needs_classifier() {
        let tp = training_probs.ok_or_else(|| {
            Error::Contract(format!(
                "{} requires out-of-fold training probabilities",
                spec.method.name()
            ))
        })?;
        let up = unlabeled_probs.ok_or_else(|| {
            Error::Contract(format!(
                "{} requires unlabeled probabilities",
                spec.method.name()
            ))
        })?;
        if tp.n_rows() != training.n_rows() || up.n_rows() != unlabeled.n_rows() {
            return Err(Error::Contract(
                "probability matrix row counts do not match datasets".into(),
            ));
        }
        if tp.n_classes() != k || up.n_classes() != k {
            return Err(Error::Contract(format!(
                "probability matrices must have {k} columns"
            )));
        }
    } else if !training.binary_features() || !unlabeled.binary_features() {
        return Err(Error::BinaryFeaturesRequired(format!(
            "{} works on binary feature matrices",
            spec.method.name()
        )));
    }
    if spec.method == Method::Va && spec.subset_size > v.min(16) {
        return Err(Error::Config(format!(
            "VA subset_size {} exceeds min(V, 16) = {}",
            spec.subset_size,
            v.min(16)
        )));
    }

    let training_proportions = match spec.method {
        Method::Fm => Some(training.label_proportions()?),
        _ => None,
    };
    let subsets = match spec.method {
        Method::Va => Some(sample_feature_subsets(
            v,
            spec.subset_size,
            spec.subset_count,
            spec.rng_seed,
        )?),
        _ => None,
    };

    let len = spec.output_len(k, v);
    let mut design = Array2::<f64>::zeros((len, k));
    for (i, &y) in labels.iter().enumerate() {
        let row = transform_row_inner(
            spec,
            subsets.as_deref(),
            training.feature_row(i),
            training_probs.map(|m| m.row(i).to_slice().expect("contiguous")),
            training_proportions.as_ref(),
        )?;
        for (l, val) in row.iter().enumerate() {
            design[[l, y]] += val;
        }
    }
    for (kk, &count) in counts.iter().enumerate() {
        let scale = 1.0 / count as f64;
        design.column_mut(kk).mapv_inplace(|v| v * scale);
    }

    let mut target = Array1::<f64>::zeros(len);
    for i in 0..unlabeled.n_rows() {
        let row = transform_row_inner(
            spec,
            subsets.as_deref(),
            unlabeled.feature_row(i),
            unlabeled_probs.map(|m| m.row(i).to_slice().expect("contiguous")),
            training_proportions.as_ref(),
        )?;
        for (l, val) in row.iter().enumerate() {
            target[l] += val;
        }
    }
    let scale = 1.0 / unlabeled.n_rows() as f64;
    target.mapv_inplace(|v| v * scale);

    RegressionSystem::new(design, target, None)
}
