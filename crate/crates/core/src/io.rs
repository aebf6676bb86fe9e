//! File formats: dataset CSV, probability-matrix CSV, and evaluation
//! report serialization (JSON plus a flat per-case CSV for plotting).
//!
//! Dataset CSV layout: a header row with an optional leading `label` column
//! (string class names) followed by feature columns `f0..f{V-1}`; UTF-8,
//! `.` decimal separator. Class indices are assigned by sorting the distinct
//! label strings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::types::{Dataset, ProbabilityMatrix, ProbabilitySource};

/// What to do with a `label` column when loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    /// The file must carry labels (training data, evaluation pools).
    Required,
    /// Labels are dropped if present; a warning records that they were.
    IgnoreWithWarning,
}

/// A parsed dataset plus any non-fatal loader warnings.
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

fn data_err(path: &Path, line: usize, what: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}:{line}: {what}", path.display()))
}

/// Reads a dataset CSV. Feature columns must be named `f0..f{V-1}` in
/// order; the optional `label` column must come first.
pub fn read_dataset_csv(path: &Path, policy: LabelPolicy) -> Result<LoadedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let mut fields = headers.iter();
    let first = fields
        .next()
        .ok_or_else(|| data_err(path, 1, "empty header row"))?;
    let has_labels = first == "label";
    let feature_names: Vec<&str> = if has_labels {
        fields.collect()
    } else {
        headers.iter().collect()
    };
    if feature_names.is_empty() {
        return Err(data_err(path, 1, "no feature columns"));
    }
    for (j, name) in feature_names.iter().enumerate() {
        let expected = format!("f{j}");
        if *name != expected {
            return Err(data_err(
                path,
                1,
                format!("feature column {j} is named '{name}', expected '{expected}'"),
            ));
        }
    }
    let v = feature_names.len();

    let mut label_strings: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| data_err(path, line, e))?;
        let expected_len = v + usize::from(has_labels);
        if record.len() != expected_len {
            return Err(data_err(
                path,
                line,
                format!("{} fields, expected {expected_len}", record.len()),
            ));
        }
        let mut iter = record.iter();
        if has_labels {
            label_strings.push(iter.next().expect("checked length").to_string());
        }
        let mut row = Vec::with_capacity(v);
        for (j, raw) in iter.enumerate() {
            let value: f64 = raw.trim().parse().map_err(|_| {
                data_err(path, line, format!("field 'f{j}': cannot parse '{raw}' as a number"))
            })?;
            if !value.is_finite() {
                return Err(data_err(path, line, format!("field 'f{j}': non-finite value")));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err(path, 2, "no data rows"));
    }

    let n = rows.len();
    let mut features = Array2::zeros((n, v));
    for (i, row) in rows.iter().enumerate() {
        for (j, &val) in row.iter().enumerate() {
            features[[i, j]] = val;
        }
    }
    let binary = features.iter().all(|&x| x == 0.0 || x == 1.0);

    let mut warnings = Vec::new();
    let keep_labels = match (has_labels, policy) {
        (true, LabelPolicy::Required) => true,
        (true, LabelPolicy::IgnoreWithWarning) => {
            warnings.push(format!(
                "{}: label column ignored for quantification input",
                path.display()
            ));
            false
        }
        (false, LabelPolicy::Required) => {
            return Err(Error::Data(format!(
                "{}: a 'label' column is required",
                path.display()
            )));
        }
        (false, LabelPolicy::IgnoreWithWarning) => false,
    };

    let dataset = if keep_labels {
        let mut names: Vec<String> = label_strings.clone();
        names.sort();
        names.dedup();
        if names.len() < 2 {
            return Err(Error::Data(format!(
                "{}: labeled data needs at least 2 distinct classes, found {}",
                path.display(),
                names.len()
            )));
        }
        let labels: Vec<usize> = label_strings
            .iter()
            .map(|s| names.binary_search(s).expect("name from this list"))
            .collect();
        Dataset::labeled_partial(features, labels, names, binary)?
    } else {
        Dataset::unlabeled(features, Vec::new(), binary)?
    };
    Ok(LoadedDataset { dataset, warnings })
}

/// Writes a dataset CSV; labeled datasets get a leading `label` column with
/// class names. Values use the shortest round-trip decimal form.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let v = dataset.n_features();
    let mut header = Vec::with_capacity(v + 1);
    if dataset.labels().is_some() {
        header.push("label".to_string());
    }
    header.extend((0..v).map(|j| format!("f{j}")));
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..dataset.n_rows() {
        let mut fields = Vec::with_capacity(v + 1);
        if let Some(labels) = dataset.labels() {
            fields.push(dataset.class_names()[labels[i]].clone());
        }
        fields.extend(dataset.feature_row(i).iter().map(|x| format!("{x}")));
        writeln!(w, "{}", fields.join(",")).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Writes a probability matrix as CSV with the class names as header.
pub fn write_probability_csv(
    probs: &ProbabilityMatrix,
    class_names: &[String],
    path: &Path,
) -> Result<()> {
    if class_names.len() != probs.n_classes() {
        return Err(Error::Contract(format!(
            "{} class names for {} probability columns",
            class_names.len(),
            probs.n_classes()
        )));
    }
    let file = File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", class_names.join(",")).map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..probs.n_rows() {
        let fields: Vec<String> = probs.row(i).iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", fields.join(",")).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Reads a probability matrix CSV written by `write_probability_csv`.
pub fn read_probability_csv(
    path: &Path,
    source: ProbabilitySource,
) -> Result<(ProbabilityMatrix, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let class_names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let k = class_names.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| data_err(path, line, e))?;
        if record.len() != k {
            return Err(data_err(
                path,
                line,
                format!("{} fields, expected {k}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(k);
        for (j, raw) in record.iter().enumerate() {
            let value: f64 = raw.trim().parse().map_err(|_| {
                data_err(
                    path,
                    line,
                    format!("column '{}': cannot parse '{raw}'", class_names[j]),
                )
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err(path, 2, "no probability rows"));
    }
    let mut matrix = Array2::zeros((rows.len(), k));
    for (i, row) in rows.iter().enumerate() {
        for (j, &val) in row.iter().enumerate() {
            matrix[[i, j]] = val;
        }
    }
    Ok((ProbabilityMatrix::new(matrix, source)?, class_names))
}

/// Flat per-case CSV of an evaluation report: one row per case and method
/// (including the Naive and Truth baselines), with the true and estimated
/// proportions spread over numbered columns.
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let k = report.training_proportions.len();
    let mut header = vec![
        "case_index".to_string(),
        "method".to_string(),
        "shift_mad".to_string(),
        "mad".to_string(),
        "accuracy".to_string(),
        "error".to_string(),
    ];
    header.extend((0..k).map(|i| format!("true_{i}")));
    header.extend((0..k).map(|i| format!("estimate_{i}")));
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::Data(e.to_string()))?;

    let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for case in &report.per_case {
        let truth: Vec<String> = case.true_proportions.iter().map(|x| format!("{x}")).collect();
        let mut emit = |method: &str,
                        mad: Option<f64>,
                        accuracy: Option<f64>,
                        error: &Option<String>,
                        estimate: Option<&[f64]>|
         -> Result<()> {
            let mut fields = vec![
                case.case_index.to_string(),
                method.to_string(),
                format!("{}", case.shift_mad),
                fmt_opt(mad),
                fmt_opt(accuracy),
                error.clone().unwrap_or_default().replace(',', ";"),
            ];
            fields.extend(truth.iter().cloned());
            match estimate {
                Some(e) => fields.extend(e.iter().map(|x| format!("{x}"))),
                None => fields.extend(std::iter::repeat_n(String::new(), k)),
            }
            writeln!(w, "{}", fields.join(",")).map_err(|e| Error::Data(e.to_string()))
        };
        emit(
            "Truth",
            Some(0.0),
            Some(case.truth_accuracy),
            &None,
            Some(case.true_proportions.as_slice()),
        )?;
        for m in &case.methods {
            emit(
                &m.method,
                m.mad,
                m.accuracy,
                &m.error,
                m.estimate.as_ref().map(|e| e.as_slice()),
            )?;
        }
        emit("Naive", Some(case.naive_mad), Some(case.naive_accuracy), &None, None)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}
