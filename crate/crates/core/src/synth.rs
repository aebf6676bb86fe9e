//! Synthetic benchmark data: class-conditional Bernoulli feature matrices
//! that satisfy the prior-shift assumption by construction (the same
//! per-class feature distribution generates training and pool rows).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::apportion_counts;
use crate::types::{Dataset, ProportionVector};

/// How class prototypes are laid out over the feature axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePattern {
    /// Class `k` owns features `j` with `j % K == k`; at separation 1 the
    /// class supports are disjoint and the problem is perfectly separable.
    Disjoint,
    /// Random 0/1 prototype per class; classes overlap, and `separation`
    /// tunes how well a classifier can do.
    Prototype,
}

/// Generator settings. Feature `j` of a class-`k` row is Bernoulli with
/// `p = 0.5 + separation * (prototype[k][j] - 0.5)`: separation 0 makes all
/// classes identical, separation 1 makes features deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub features: usize,
    pub train_size: usize,
    pub pool_size: usize,
    pub separation: f64,
    pub pattern: FeaturePattern,
    /// Training class proportions; uniform when absent.
    pub training_proportions: Option<ProportionVector>,
    /// Pool class proportions; uniform when absent.
    pub pool_proportions: Option<ProportionVector>,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.features == 0 {
            return Err(Error::Config("need at least 1 feature".into()));
        }
        if self.train_size < self.classes {
            return Err(Error::Config(format!(
                "train_size {} cannot cover {} classes",
                self.train_size, self.classes
            )));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(Error::Config(format!(
                "separation {} outside [0, 1]",
                self.separation
            )));
        }
        for (name, props) in [
            ("training_proportions", &self.training_proportions),
            ("pool_proportions", &self.pool_proportions),
        ] {
            if let Some(p) = props {
                if p.len() != self.classes {
                    return Err(Error::Config(format!(
                        "{name} has {} entries for {} classes",
                        p.len(),
                        self.classes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Zero-padded class names `c0..c{K-1}` (`c00..` once K exceeds 10), so the
/// lexicographic order used by the CSV loader matches the index order.
pub fn class_names(k: usize) -> Vec<String> {
    let width = (k - 1).to_string().len();
    (0..k).map(|i| format!("c{i:0width$}")).collect()
}

/// Per-class Bernoulli feature probabilities for a config.
pub fn feature_probabilities(config: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xA076_1D64_78BD_642F);
    (0..config.classes)
        .map(|k| {
            (0..config.features)
                .map(|j| {
                    let bit = match config.pattern {
                        FeaturePattern::Disjoint => f64::from(j % config.classes == k),
                        FeaturePattern::Prototype => f64::from(rng.gen_bool(0.5)),
                    };
                    0.5 + config.separation * (bit - 0.5)
                })
                .collect()
        })
        .collect()
}

/// Generates the labeled training set and evaluation pool.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let k = config.classes;
    let names = class_names(k);
    let probs = feature_probabilities(config);
    let uniform = ProportionVector::uniform(k)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_props = config.training_proportions.as_ref().unwrap_or(&uniform);
    let train_counts = apportion_counts(train_props, config.train_size);
    if let Some(c) = train_counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!(
            "train_size {} leaves class '{}' empty; raise it or adjust proportions",
            config.train_size, names[c]
        )));
    }
    let training = sample_block(config, &probs, &train_counts, &names, &mut rng, true)?;

    let pool_props = config.pool_proportions.as_ref().unwrap_or(&uniform);
    let pool_counts = apportion_counts(pool_props, config.pool_size);
    let pool = sample_block(config, &probs, &pool_counts, &names, &mut rng, false)?;
    Ok((training, pool))
}

fn sample_block(
    config: &SynthConfig,
    probs: &[Vec<f64>],
    counts: &[usize],
    names: &[String],
    rng: &mut ChaCha8Rng,
    strict: bool,
) -> Result<Dataset> {
    let total: usize = counts.iter().sum();
    let mut features = Array2::zeros((total, config.features));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            labels.push(class);
            for j in 0..config.features {
                features[[row, j]] = f64::from(rng.gen_bool(probs[class][j]));
            }
            row += 1;
        }
    }
    if strict {
        Dataset::labeled(features, labels, names.to_vec(), true)
    } else {
        Dataset::labeled_partial(features, labels, names.to_vec(), true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::fit;

    fn base_config() -> SynthConfig {
        SynthConfig {
            classes: 2,
            features: 8,
            train_size: 60,
            pool_size: 120,
            separation: 1.0,
            pattern: FeaturePattern::Disjoint,
            training_proportions: None,
            pool_proportions: None,
            seed: 17,
        }
    }

    #[test]
    fn disjoint_supports_are_perfectly_separable() {
        let (training, pool) = generate(&base_config()).unwrap();
        let model = fit(&training, 0.1).unwrap();
        let probs = model.predict_proba(&pool).unwrap();
        let labels = pool.labels().unwrap();
        let correct = labels
            .iter()
            .enumerate()
            .filter(|&(i, &y)| probs.argmax_row(i) == y)
            .count();
        assert_eq!(correct, pool.n_rows());
    }

    #[test]
    fn identical_class_conditionals_at_zero_separation() {
        let config = SynthConfig {
            separation: 0.0,
            ..base_config()
        };
        let probs = feature_probabilities(&config);
        assert_eq!(probs[0], probs[1]);
    }

    #[test]
    fn generation_is_deterministic() {
        let config = base_config();
        let (a_train, a_pool) = generate(&config).unwrap();
        let (b_train, b_pool) = generate(&config).unwrap();
        assert_eq!(a_train.features(), b_train.features());
        assert_eq!(a_pool.features(), b_pool.features());
        assert_eq!(a_train.labels(), b_train.labels());
    }

    #[test]
    fn proportions_shape_the_label_histogram() {
        let config = SynthConfig {
            training_proportions: Some(ProportionVector::new(vec![0.75, 0.25]).unwrap()),
            ..base_config()
        };
        let (training, _) = generate(&config).unwrap();
        assert_eq!(training.class_counts(), vec![45, 15]);
    }

    #[test]
    fn padded_class_names_sort_in_index_order() {
        let names = class_names(12);
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names[10], "c10");
        assert_eq!(names[2], "c02");
    }

    #[test]
    fn undersized_training_set_is_rejected() {
        let config = SynthConfig {
            train_size: 3,
            training_proportions: Some(ProportionVector::new(vec![0.99, 0.01]).unwrap()),
            ..base_config()
        };
        assert!(matches!(generate(&config), Err(Error::Config(_))));
    }
}
