//! `quantify`: class-proportion estimation under prior shift.
//!
//! Subcommands: `quantify` (estimate proportions of an unlabeled file),
//! `evaluate` (run the scenario/scoring harness), `synth` (generate
//! synthetic benchmark data), `probs-export` (dump out-of-fold
//! probabilities). Exit codes: 0 success, 1 usage/config error, 2 data
//! error, 3 solver failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use quantify_core::classifier::{fit, out_of_fold_proba};
use quantify_core::error::{Error, Result};
use quantify_core::evaluation::run_suite;
use quantify_core::io::{
    read_dataset_csv, read_probability_csv, write_dataset_csv, write_probability_csv,
    write_report_csv, LabelPolicy,
};
use quantify_core::quantifiers::quantify;
use quantify_core::synth::generate;
use quantify_core::types::{Dataset, ProbabilitySource};

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "quantify",
    version,
    about = "Multi-class quantification: estimate class proportions of \
             unlabeled data under prior shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration (sections per command; unknown keys rejected).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the section being run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for per-case parallelism (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate class proportions of an unlabeled CSV from a labeled training CSV.
    Quantify {
        /// Labeled training data (CSV with a `label` column).
        #[arg(long)]
        train: PathBuf,
        /// Unlabeled data (a `label` column, if present, is ignored).
        #[arg(long)]
        unlabeled: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the evaluation protocol over generated test-proportion scenarios.
    Evaluate {
        /// Labeled training data.
        #[arg(long)]
        train: PathBuf,
        /// Labeled pool the per-scenario test sets are sampled from.
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate synthetic class-conditional Bernoulli datasets.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Export out-of-fold probabilities of the built-in classifier as CSV.
    ProbsExport {
        /// Labeled training data.
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version exit 0; everything else is a usage error.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 1,
        Error::SolverFailure(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Quantify {
            train,
            unlabeled,
            common,
        } => cmd_quantify(&train, &unlabeled, &common),
        Command::Evaluate {
            train,
            pool,
            common,
        } => cmd_evaluate(&train, &pool, &common),
        Command::Synth { common } => cmd_synth(&common),
        Command::ProbsExport { train, common } => cmd_probs_export(&train, &common),
    }
}

fn setup(common: &CommonArgs) -> Result<FileConfig> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Data(format!("{}: {e}", common.out.display())))?;
    FileConfig::load(common.config.as_deref())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn load_training(path: &Path) -> Result<(Dataset, Vec<String>)> {
    let loaded = read_dataset_csv(path, LabelPolicy::Required)?;
    let counts = loaded.dataset.class_counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "{}: class '{}' has no rows",
            path.display(),
            loaded.dataset.class_names()[k]
        )));
    }
    Ok((loaded.dataset, loaded.warnings))
}

fn cmd_quantify(train_path: &Path, unlabeled_path: &Path, common: &CommonArgs) -> Result<()> {
    let file_config = setup(common)?;
    let section = file_config.quantify.clone().unwrap_or_default();
    let seed = common.seed.unwrap_or(section.seed);
    println!("resolved seed: {seed}");
    let config = section.quantifier_config(seed)?;

    let (training, mut warnings) = load_training(train_path)?;
    let unlabeled_loaded = read_dataset_csv(unlabeled_path, LabelPolicy::IgnoreWithWarning)?;
    warnings.extend(unlabeled_loaded.warnings);
    let unlabeled = unlabeled_loaded.dataset;
    print_warnings(&warnings);

    let external = match (&section.oof_probs, &section.unlabeled_probs) {
        (Some(oof_path), Some(unl_path)) => {
            let (oof, _) = read_probability_csv(oof_path, ProbabilitySource::External)?;
            let (unl, _) = read_probability_csv(unl_path, ProbabilitySource::External)?;
            Some((oof, unl))
        }
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "oof_probs and unlabeled_probs must be given together".into(),
            ))
        }
    };

    let result = quantify(
        &config,
        &training,
        &unlabeled,
        external.as_ref().map(|(a, b)| (a, b)),
    )?;

    println!("method: {}", result.method.name());
    for (name, value) in training.class_names().iter().zip(result.estimate.iter()) {
        println!("  {name}: {value:.6}");
    }
    let output = json!({
        "command": "quantify",
        "seed": seed,
        "config": section,
        "inputs": {
            "train": train_path.display().to_string(),
            "unlabeled": unlabeled_path.display().to_string(),
        },
        "class_names": training.class_names(),
        "warnings": warnings,
        "result": result,
    });
    let out_path = common.out.join("quantify_result.json");
    write_json(&out_path, &output)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn cmd_evaluate(train_path: &Path, pool_path: &Path, common: &CommonArgs) -> Result<()> {
    let file_config = setup(common)?;
    let section = file_config.evaluate.clone().unwrap_or_default();
    let seed = common.seed.unwrap_or(section.seed);
    println!("resolved seed: {seed}");
    let scenario = section.scenario_spec(seed)?;
    let methods = section.method_configs(seed)?;

    let (training, mut warnings) = load_training(train_path)?;
    let (pool, pool_warnings) = load_training(pool_path)?;
    warnings.extend(pool_warnings);
    print_warnings(&warnings);

    let report = run_suite(&training, &pool, &scenario, &methods, section.test_size)?;
    if report.error_count > 0 {
        eprintln!(
            "warning: {} method/case evaluations failed (recorded in the report)",
            report.error_count
        );
    }
    for agg in &report.aggregates {
        println!(
            "{:>6}: mean MAD {:>8.5}  mean accuracy {:>7.4}  ({} cases)",
            agg.method, agg.mean_mad, agg.mean_accuracy, agg.cases
        );
    }

    let output = json!({
        "command": "evaluate",
        "seed": seed,
        "config": section,
        "inputs": {
            "train": train_path.display().to_string(),
            "pool": pool_path.display().to_string(),
        },
        "report": report,
    });
    let json_path = common.out.join("eval_report.json");
    write_json(&json_path, &output)?;
    let csv_path = common.out.join("eval_report.csv");
    write_report_csv(&report, &csv_path)?;
    println!("wrote {}", json_path.display());
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_synth(common: &CommonArgs) -> Result<()> {
    let file_config = setup(common)?;
    let section = file_config.synth.clone().unwrap_or_default();
    let seed = common.seed.unwrap_or(section.seed);
    println!("resolved seed: {seed}");
    let config = section.synth_config(seed)?;
    let (training, pool) = generate(&config)?;

    let train_path = common.out.join("train.csv");
    let pool_path = common.out.join("pool.csv");
    write_dataset_csv(&training, &train_path)?;
    write_dataset_csv(&pool, &pool_path)?;
    let meta = json!({
        "command": "synth",
        "seed": seed,
        "config": section,
        "train_rows": training.n_rows(),
        "pool_rows": pool.n_rows(),
        "features": training.n_features(),
        "class_names": training.class_names(),
    });
    write_json(&common.out.join("synth_meta.json"), &meta)?;
    println!(
        "wrote {} ({} rows) and {} ({} rows)",
        train_path.display(),
        training.n_rows(),
        pool_path.display(),
        pool.n_rows()
    );
    Ok(())
}

fn cmd_probs_export(train_path: &Path, common: &CommonArgs) -> Result<()> {
    let file_config = setup(common)?;
    let section = file_config.probs_export.clone().unwrap_or_default();
    let seed = common.seed.unwrap_or(section.seed);
    println!("resolved seed: {seed}");

    let (training, warnings) = load_training(train_path)?;
    print_warnings(&warnings);
    let cv = section.cv_config(seed);
    let oof = out_of_fold_proba(&training, &cv, section.lambda)?;
    let oof_path = common.out.join("oof_probs.csv");
    write_probability_csv(&oof.averaged, training.class_names(), &oof_path)?;

    // Full-model probabilities on the training rows, for completeness.
    let model = fit(&training, section.lambda)?;
    let full = model.predict_proba(&training.without_labels())?;
    let full_path = common.out.join("full_model_probs.csv");
    write_probability_csv(&full, training.class_names(), &full_path)?;

    let meta = json!({
        "command": "probs-export",
        "seed": seed,
        "config": section,
        "inputs": { "train": train_path.display().to_string() },
        "rows": training.n_rows(),
        "class_names": training.class_names(),
    });
    write_json(&common.out.join("probs_export_meta.json"), &meta)?;
    println!("wrote {}", oof_path.display());
    println!("wrote {}", full_path.display());
    Ok(())
}
