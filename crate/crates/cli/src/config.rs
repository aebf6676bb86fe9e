//! The TOML run-configuration format: one section per command, every key
//! defaulted, unknown keys rejected so typos cannot silently skew a study.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use quantify_core::classifier::{CrossValConfig, Stacking};
use quantify_core::error::{Error, Result};
use quantify_core::evaluation::{ScenarioKind, ScenarioSpec};
use quantify_core::quantifiers::{QuantMethod, QuantifierConfig};
use quantify_core::solvers::{Loss, SolverConfig};
use quantify_core::synth::{FeaturePattern, SynthConfig};
use quantify_core::transforms::{default_thresholds, Method, TransformSpec};
use quantify_core::types::ProportionVector;

/// Whole config file: a section per command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub quantify: Option<QuantifySection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
    #[serde(default, rename = "probs-export")]
    pub probs_export: Option<ProbsExportSection>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Classifier, solver, and transform settings shared by the quantify and
/// evaluate sections.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSettings {
    pub bins: usize,
    pub thresholds: Vec<f64>,
    pub subset_size: usize,
    pub subset_count: usize,
    pub folds: usize,
    pub repeats: usize,
    pub stacking: Stacking,
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub hellinger_floor: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        let solver = SolverConfig::default();
        let cv = CrossValConfig::default();
        let transform = TransformSpec::new(Method::Prob);
        Self {
            bins: transform.bins,
            thresholds: default_thresholds(),
            subset_size: transform.subset_size,
            subset_count: transform.subset_count,
            folds: cv.folds,
            repeats: cv.repeats,
            stacking: cv.stacking,
            lambda: 1.0,
            tolerance: solver.tolerance,
            max_iterations: solver.max_iterations,
            hellinger_floor: solver.hellinger_floor,
        }
    }
}

impl EngineSettings {
    /// Builds the per-method configuration with all seeds set to `seed`.
    pub fn quantifier_config(
        &self,
        method: QuantMethod,
        loss_override: Option<Loss>,
        seed: u64,
    ) -> QuantifierConfig {
        QuantifierConfig {
            method,
            loss_override,
            transform: TransformSpec {
                method: method.transform_method().unwrap_or(Method::Prob),
                bins: self.bins,
                thresholds: self.thresholds.clone(),
                subset_size: self.subset_size,
                subset_count: self.subset_count,
                rng_seed: seed,
            },
            solver: SolverConfig {
                loss: Loss::LeastSquares, // replaced by the resolved loss at solve time
                tolerance: self.tolerance,
                max_iterations: self.max_iterations,
                hellinger_floor: self.hellinger_floor,
            },
            cv: CrossValConfig {
                folds: self.folds,
                repeats: self.repeats,
                rng_seed: seed,
                stacking: self.stacking,
            },
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantifySection {
    pub method: String,
    /// Loss override: "least_squares", "least_absolute_deviation", "hellinger".
    pub loss: Option<String>,
    pub seed: u64,
    /// Optional external probability matrices (CSV), replacing the built-in
    /// classifier: out-of-fold probabilities for the training rows and
    /// full-model probabilities for the unlabeled rows. Give both or neither.
    pub oof_probs: Option<PathBuf>,
    pub unlabeled_probs: Option<PathBuf>,
    #[serde(flatten)]
    pub engine: EngineSettings,
}

impl Default for QuantifySection {
    fn default() -> Self {
        Self {
            method: "Prob".to_string(),
            loss: None,
            seed: 0,
            oof_probs: None,
            unlabeled_probs: None,
            engine: EngineSettings::default(),
        }
    }
}

pub fn parse_loss(name: &str) -> Result<Loss> {
    match name {
        "least_squares" | "L2" | "l2" => Ok(Loss::LeastSquares),
        "least_absolute_deviation" | "L1" | "l1" => Ok(Loss::LeastAbsoluteDeviation),
        "hellinger" => Ok(Loss::Hellinger),
        other => Err(Error::Config(format!(
            "unknown loss '{other}' (expected least_squares, \
             least_absolute_deviation, or hellinger)"
        ))),
    }
}

impl QuantifySection {
    pub fn quantifier_config(&self, seed: u64) -> Result<QuantifierConfig> {
        let method = QuantMethod::parse(&self.method)?;
        let loss_override = self.loss.as_deref().map(parse_loss).transpose()?;
        Ok(self.engine.quantifier_config(method, loss_override, seed))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Methods to evaluate; Naive and Truth baselines are always scored.
    pub methods: Vec<String>,
    /// "grid", "grid_sample", or "dirichlet_walk".
    pub scenario: String,
    pub step: f64,
    pub sample_count: usize,
    pub walk_concentration: f64,
    pub walk_start: Option<Vec<f64>>,
    pub test_size: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub engine: EngineSettings,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            methods: vec![
                "Prob".into(),
                "MM".into(),
                "AC".into(),
                "FM".into(),
                "MS".into(),
                "HDy".into(),
                "HDx".into(),
                "VA".into(),
            ],
            scenario: "grid".to_string(),
            step: 0.1,
            sample_count: 20,
            walk_concentration: 50.0,
            walk_start: None,
            test_size: 500,
            seed: 0,
            engine: EngineSettings::default(),
        }
    }
}

impl EvaluateSection {
    pub fn scenario_spec(&self, seed: u64) -> Result<ScenarioSpec> {
        let kind = match self.scenario.as_str() {
            "grid" => ScenarioKind::Grid,
            "grid_sample" => ScenarioKind::GridSample,
            "dirichlet_walk" => ScenarioKind::DirichletWalk,
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario '{other}' (expected grid, grid_sample, \
                     or dirichlet_walk)"
                )))
            }
        };
        let start = self
            .walk_start
            .clone()
            .map(ProportionVector::new)
            .transpose()?;
        Ok(ScenarioSpec {
            kind,
            step: self.step,
            sample_count: self.sample_count,
            walk_concentration: self.walk_concentration,
            rng_seed: seed,
            start,
        })
    }

    pub fn method_configs(&self, seed: u64) -> Result<Vec<QuantifierConfig>> {
        self.methods
            .iter()
            .map(|name| {
                let method = QuantMethod::parse(name)?;
                Ok(self.engine.quantifier_config(method, None, seed))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub classes: usize,
    pub features: usize,
    pub train_size: usize,
    pub pool_size: usize,
    pub separation: f64,
    /// "disjoint" or "prototype".
    pub pattern: FeaturePattern,
    pub training_proportions: Option<Vec<f64>>,
    pub pool_proportions: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            classes: 5,
            features: 40,
            train_size: 500,
            pool_size: 5000,
            separation: 0.35,
            pattern: FeaturePattern::Prototype,
            training_proportions: None,
            pool_proportions: None,
            seed: 0,
        }
    }
}

impl SynthSection {
    pub fn synth_config(&self, seed: u64) -> Result<SynthConfig> {
        Ok(SynthConfig {
            classes: self.classes,
            features: self.features,
            train_size: self.train_size,
            pool_size: self.pool_size,
            separation: self.separation,
            pattern: self.pattern,
            training_proportions: self
                .training_proportions
                .clone()
                .map(ProportionVector::new)
                .transpose()?,
            pool_proportions: self
                .pool_proportions
                .clone()
                .map(ProportionVector::new)
                .transpose()?,
            seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbsExportSection {
    pub folds: usize,
    pub repeats: usize,
    pub lambda: f64,
    pub stacking: Stacking,
    pub seed: u64,
}

impl Default for ProbsExportSection {
    fn default() -> Self {
        let cv = CrossValConfig::default();
        Self {
            folds: cv.folds,
            repeats: cv.repeats,
            lambda: 1.0,
            stacking: cv.stacking,
            seed: 0,
        }
    }
}

impl ProbsExportSection {
    pub fn cv_config(&self, seed: u64) -> CrossValConfig {
        CrossValConfig {
            folds: self.folds,
            repeats: self.repeats,
            rng_seed: seed,
            stacking: self.stacking,
        }
    }
}
