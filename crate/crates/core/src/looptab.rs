//! Iterative soft pseudo-labeling over a pluggable in-context base predictor,
//! plus tabular CSV ingestion.
//!
//! The loop fits the base on the labeled rows, scores the unlabeled rows into
//! soft labels clipped to [-1, 1], then repeatedly refits on labeled plus
//! pseudo-labeled rows. A model is retained only when the validation risk of
//! its own soft labels strictly decreases, so the initial fit can survive as
//! the final choice.

use crate::attention::{stack_forward_stats, AttnStack, ContextStats};
use crate::error::{Error, Result};
use crate::estimators::{top_eigenvector, POWER_MAX_ITER, POWER_TOL};
use crate::scalar::Real;
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::Serialize;
use std::path::Path;

/// An in-context learner: fit on the context rows, score the queries.
///
/// Context labels are soft values in [-1, 1] with 0 marking an unlabeled row.
/// Implementations must be pure so loops can run datasets in parallel.
pub trait InContextPredictor<F: Real>: Sync {
    fn predict(
        &self,
        context_x: &Array2<F>,
        context_y: &Array1<F>,
        queries: &Array2<F>,
    ) -> Array1<F>;
}

/// The infinite-order semi-supervised plug-in as an in-context base learner.
///
/// The supervised part weights rows by their soft labels; the covariance part
/// uses every context row. Scores are signed distances along the estimated
/// mean direction.
#[derive(Debug, Clone)]
pub struct SspiInfBase<F> {
    pub alpha: F,
    pub sigma: F,
}

impl<F: Real> InContextPredictor<F> for SspiInfBase<F> {
    fn predict(
        &self,
        context_x: &Array2<F>,
        context_y: &Array1<F>,
        queries: &Array2<F>,
    ) -> Array1<F> {
        let weight: F = context_y.iter().map(|y| y.abs()).sum();
        if weight == F::zero() {
            return Array1::zeros(queries.nrows());
        }
        let mu_hat = context_x.t().dot(context_y) / weight;
        let d = context_x.ncols();
        let n = F::cast_usize(context_x.nrows());
        let mut m = context_x.t().dot(context_x) / n;
        for i in 0..d {
            m[[i, i]] -= self.sigma * self.sigma;
        }
        let eigen = top_eigenvector(&m, Some(&mu_hat), F::cast(POWER_TOL), POWER_MAX_ITER);
        let proj = eigen.vector.dot(&mu_hat);
        let est = &mu_hat * self.alpha + &(&eigen.vector * (proj * (F::one() - self.alpha)));
        let norm = est.dot(&est).sqrt();
        if norm == F::zero() {
            return Array1::zeros(queries.nrows());
        }
        queries.dot(&est) / norm
    }
}

/// A fixed attention stack as an in-context base learner.
#[derive(Debug, Clone)]
pub struct AttnStackBase<F> {
    pub stack: AttnStack<F>,
}

impl<F: Real> InContextPredictor<F> for AttnStackBase<F> {
    fn predict(
        &self,
        context_x: &Array2<F>,
        context_y: &Array1<F>,
        queries: &Array2<F>,
    ) -> Array1<F> {
        let ctx = ContextStats::new(context_x, context_y);
        Array1::from_iter(
            queries
                .rows()
                .into_iter()
                .map(|q| stack_forward_stats(&ctx, &q.to_owned(), &self.stack)),
        )
    }
}

/// Labeled, unlabeled, and held-out test rows with a shared feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSplit<F> {
    feature_names: Vec<String>,
    labeled_x: Array2<F>,
    labeled_y: Array1<F>,
    unlabeled_x: Array2<F>,
    test_x: Array2<F>,
    test_y: Array1<F>,
}

impl<F: Real> TabularSplit<F> {
    /// Assembles a split, validating shapes and hard labels.
    pub fn from_arrays(
        feature_names: Vec<String>,
        labeled_x: Array2<F>,
        labeled_y: Array1<F>,
        unlabeled_x: Array2<F>,
        test_x: Array2<F>,
        test_y: Array1<F>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::EmptySplit("no feature columns".into()));
        }
        for (name, cols) in [
            ("labeled", labeled_x.ncols()),
            ("unlabeled", unlabeled_x.ncols()),
            ("test", test_x.ncols()),
        ] {
            if cols != d {
                return Err(Error::InvalidSplit(format!(
                    "{name} rows have {cols} features, expected {d}"
                )));
            }
        }
        if labeled_y.len() != labeled_x.nrows() || test_y.len() != test_x.nrows() {
            return Err(Error::InvalidSplit("label count mismatch".into()));
        }
        for y in labeled_y.iter().chain(test_y.iter()) {
            if *y != F::one() && *y != -F::one() {
                return Err(Error::InvalidSplit("labels must be +1 or -1".into()));
            }
        }
        Ok(Self {
            feature_names,
            labeled_x,
            labeled_y,
            unlabeled_x,
            test_x,
            test_y,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labeled_x(&self) -> &Array2<F> {
        &self.labeled_x
    }

    pub fn labeled_y(&self) -> &Array1<F> {
        &self.labeled_y
    }

    pub fn unlabeled_x(&self) -> &Array2<F> {
        &self.unlabeled_x
    }

    pub fn test_x(&self) -> &Array2<F> {
        &self.test_x
    }

    pub fn test_y(&self) -> &Array1<F> {
        &self.test_y
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Mean distance of soft labels from the nearest hard label,
/// `mean(min(|s - 1|, |s + 1|))`.
pub fn val_risk<F: Real>(soft_labels: &[F]) -> Result<F> {
    if soft_labels.is_empty() {
        return Err(Error::UndefinedRisk);
    }
    let total: F = soft_labels
        .iter()
        .map(|&s| (s - F::one()).abs().min((s + F::one()).abs()))
        .sum();
    Ok(total / F::cast_usize(soft_labels.len()))
}

/// Validation risk and test accuracy of one loop iteration. The accuracy is
/// absent when the split carries no test rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopIteration<F> {
    pub val_risk: F,
    pub test_accuracy: Option<F>,
}

/// Trace of a pseudo-labeling loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopResult<F> {
    pub per_iteration: Vec<LoopIteration<F>>,
    pub best_iteration: usize,
    pub best_val_risk: F,
}

impl<F: Real> LoopResult<F> {
    /// Test accuracy of the retained-best iteration.
    pub fn best_test_accuracy(&self) -> Option<F> {
        self.per_iteration[self.best_iteration].test_accuracy
    }
}

fn clip_unit<F: Real>(v: &mut Array1<F>) {
    v.mapv_inplace(|s| s.min(F::one()).max(-F::one()));
}

fn test_accuracy<F: Real>(scores: &Array1<F>, labels: &Array1<F>) -> Option<F> {
    if labels.is_empty() {
        return None;
    }
    let correct = scores
        .iter()
        .zip(labels.iter())
        .filter(|(s, y)| (**s >= F::zero()) == (**y > F::zero()))
        .count();
    Some(F::cast_usize(correct) / F::cast_usize(labels.len()))
}

/// Column-wise z-scoring fitted on the labeled and unlabeled rows together.
/// Constant columns are centered but left unscaled.
fn fit_standardizer<F: Real>(split: &TabularSplit<F>) -> (Array1<F>, Array1<F>) {
    let d = split.n_features();
    let total = split.labeled_x.nrows() + split.unlabeled_x.nrows();
    let count = F::cast_usize(total.max(1));
    let mut mean = Array1::<F>::zeros(d);
    for x in [&split.labeled_x, &split.unlabeled_x] {
        for row in x.rows() {
            mean = mean + row;
        }
    }
    mean /= count;
    let mut var = Array1::<F>::zeros(d);
    for x in [&split.labeled_x, &split.unlabeled_x] {
        for row in x.rows() {
            let delta = &row - &mean;
            var += &(&delta * &delta);
        }
    }
    var /= count;
    let scale = var.mapv(|v| {
        let s = v.sqrt();
        if s > F::zero() {
            s
        } else {
            F::one()
        }
    });
    (mean, scale)
}

fn apply_standardizer<F: Real>(x: &Array2<F>, mean: &Array1<F>, scale: &Array1<F>) -> Array2<F> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        row -= mean;
        row /= scale;
    }
    out
}

/// Runs `loops` pseudo-labeling iterations with a risk-gated best model.
///
/// Iteration 0 fits on the labeled rows alone and assigns clipped soft labels
/// to the unlabeled rows. Every later iteration refits on labeled plus
/// pseudo-labeled rows, reassigns the soft labels, and replaces the retained
/// model only when the validation risk strictly decreases. With no unlabeled
/// rows the risk is pinned at 1, the gate never fires, and every iteration
/// reduces to the base predictor on the labeled rows.
pub fn loop_tab_fm<F: Real, P: InContextPredictor<F>>(
    split: &TabularSplit<F>,
    loops: usize,
    base: &P,
) -> Result<LoopResult<F>> {
    if split.labeled_x.nrows() == 0 {
        return Err(Error::InvalidSplit("no labeled rows".into()));
    }
    let has_pos = split.labeled_y.iter().any(|&y| y > F::zero());
    let has_neg = split.labeled_y.iter().any(|&y| y < F::zero());
    if !has_pos || !has_neg {
        return Err(Error::InvalidSplit(
            "labeled rows must contain both classes".into(),
        ));
    }

    let (mean, scale) = fit_standardizer(split);
    let labeled_x = apply_standardizer(&split.labeled_x, &mean, &scale);
    let unlabeled_x = apply_standardizer(&split.unlabeled_x, &mean, &scale);
    let test_x = apply_standardizer(&split.test_x, &mean, &scale);
    let n_unlabeled = unlabeled_x.nrows();

    let risk_of = |soft: &Array1<F>| -> Result<F> {
        if n_unlabeled == 0 {
            Ok(F::one())
        } else {
            val_risk(soft.as_slice().expect("contiguous"))
        }
    };

    // Iteration 0: labeled rows only.
    let mut soft = base.predict(&labeled_x, &split.labeled_y, &unlabeled_x);
    clip_unit(&mut soft);
    let mut best_risk = risk_of(&soft)?;
    let mut best_iteration = 0;
    let mut per_iteration = vec![LoopIteration {
        val_risk: best_risk,
        test_accuracy: test_accuracy(
            &base.predict(&labeled_x, &split.labeled_y, &test_x),
            &split.test_y,
        ),
    }];

    for iteration in 1..=loops {
        let context_x = concatenate(Axis(0), &[labeled_x.view(), unlabeled_x.view()])
            .expect("feature dimensions agree");
        let context_y = concatenate(Axis(0), &[split.labeled_y.view(), soft.view()])
            .expect("vectors concatenate");
        let mut new_soft = base.predict(&context_x, &context_y, &unlabeled_x);
        clip_unit(&mut new_soft);
        let risk = risk_of(&new_soft)?;
        per_iteration.push(LoopIteration {
            val_risk: risk,
            test_accuracy: test_accuracy(
                &base.predict(&context_x, &context_y, &test_x),
                &split.test_y,
            ),
        });
        if risk < best_risk {
            best_risk = risk;
            best_iteration = iteration;
        }
        soft = new_soft;
    }

    Ok(LoopResult {
        per_iteration,
        best_iteration,
        best_val_risk: best_risk,
    })
}

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    /// Label cell marking an unlabeled row. Defaults to the empty string.
    pub missing_label_token: String,
    /// Fraction of the labeled rows held out as the test set.
    pub test_fraction: f64,
    /// Seed for the held-out shuffle.
    pub seed: u64,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            missing_label_token: String::new(),
            test_fraction: 0.0,
            seed: 0,
        }
    }
}

/// Reads a comma-separated file with a header row into a [`TabularSplit`].
///
/// Every column except the label column is parsed as a real-valued feature.
/// Label cells must be `+1`/`1`, `-1`, or the missing-label token; rows with
/// the missing token go to the unlabeled set. A positive `test_fraction`
/// holds out that share of the labeled rows by a seeded shuffle.
pub fn load_csv<F: Real>(path: impl AsRef<Path>, options: &CsvOptions) -> Result<TabularSplit<F>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == options.label_column)
        .ok_or_else(|| {
            Error::InvalidSplit(format!("label column `{}` not found", options.label_column))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::EmptySplit("no feature columns".into()));
    }

    let mut labeled_rows: Vec<(Vec<F>, F)> = Vec::new();
    let mut unlabeled_rows: Vec<Vec<F>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1; // 1-based data row, header excluded
        let mut features = Vec::with_capacity(feature_names.len());
        for (col, cell) in record.iter().enumerate() {
            if col == label_col {
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| Error::FeatureParse {
                row,
                column: headers.get(col).unwrap_or("?").to_string(),
                value: cell.to_string(),
            })?;
            features.push(F::cast(value));
        }
        let label_cell = record.get(label_col).unwrap_or("");
        if label_cell == options.missing_label_token {
            unlabeled_rows.push(features);
        } else {
            match label_cell.trim().parse::<i64>() {
                Ok(1) => labeled_rows.push((features, F::one())),
                Ok(-1) => labeled_rows.push((features, -F::one())),
                _ => {
                    return Err(Error::LabelSchema {
                        row,
                        value: label_cell.to_string(),
                    })
                }
            }
        }
    }
    if labeled_rows.is_empty() && unlabeled_rows.is_empty() {
        return Err(Error::EmptySplit(
            "file contains a header but no rows".into(),
        ));
    }

    let mut order: Vec<usize> = (0..labeled_rows.len()).collect();
    let test_count = if options.test_fraction > 0.0 {
        order.shuffle(&mut crate::rng::substream(options.seed, 0));
        ((labeled_rows.len() as f64) * options.test_fraction).floor() as usize
    } else {
        0
    };
    let test_set: std::collections::HashSet<usize> = order[..test_count].iter().copied().collect();

    let d = feature_names.len();
    let pack = |rows: Vec<&(Vec<F>, F)>| -> (Array2<F>, Array1<F>) {
        let mut x = Array2::zeros((rows.len(), d));
        let mut y = Array1::zeros(rows.len());
        for (i, (features, label)) in rows.iter().enumerate() {
            for (j, v) in features.iter().enumerate() {
                x[[i, j]] = *v;
            }
            y[i] = *label;
        }
        (x, y)
    };
    // Test rows in shuffle order; remaining labeled rows keep file order.
    let test_rows: Vec<&(Vec<F>, F)> = order[..test_count]
        .iter()
        .map(|&i| &labeled_rows[i])
        .collect();
    let kept_rows: Vec<&(Vec<F>, F)> = (0..labeled_rows.len())
        .filter(|i| !test_set.contains(i))
        .map(|i| &labeled_rows[i])
        .collect();
    let (labeled_x, labeled_y) = pack(kept_rows);
    let (test_x, test_y) = pack(test_rows);
    let mut unlabeled_x = Array2::zeros((unlabeled_rows.len(), d));
    for (i, features) in unlabeled_rows.iter().enumerate() {
        for (j, v) in features.iter().enumerate() {
            unlabeled_x[[i, j]] = *v;
        }
    }

    TabularSplit::from_arrays(
        feature_names,
        labeled_x,
        labeled_y,
        unlabeled_x,
        test_x,
        test_y,
    )
}

/// Writes a split back to CSV: labeled rows, then test rows (with their
/// labels), then unlabeled rows carrying the missing token.
pub fn write_csv<F: Real>(
    path: impl AsRef<Path>,
    split: &TabularSplit<F>,
    label_column: &str,
    missing_label_token: &str,
) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<&str> = split.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    writer.write_record(&header)?;

    let label_str = |y: F| if y > F::zero() { "1" } else { "-1" };
    for (row, y) in split
        .labeled_x
        .rows()
        .into_iter()
        .zip(split.labeled_y.iter())
    {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        record.push(label_str(*y).to_string());
        writer.write_record(&record)?;
    }
    for (row, y) in split.test_x.rows().into_iter().zip(split.test_y.iter()) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        record.push(label_str(*y).to_string());
        writer.write_record(&record)?;
    }
    for row in split.unlabeled_x.rows() {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        record.push(missing_label_token.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
