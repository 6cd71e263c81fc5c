//! Baseline-vs-stimulation classification over feature vectors with three
//! from-scratch classifiers (random forest, RBF-kernel SVM with Platt
//! calibration, L2 logistic regression), fold metrics, and leakage-safe
//! feature standardization.

pub mod forest;
pub mod logistic;
pub mod metrics;
pub mod standardize;
pub mod svm;

pub use forest::RandomForest;
pub use logistic::LogisticModel;
pub use metrics::{evaluate_fold, FoldMetrics};
pub use standardize::{standardize_features, ColumnStats};
pub use svm::SvmRbf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("feature matrix is empty")]
    EmptyFeatureSet,
    #[error("training labels contain only one class")]
    SingleClass,
    #[error("row {row} has {got} features, expected {want}")]
    RaggedRows { row: usize, got: usize, want: usize },
    #[error("labels length {labels} does not match {rows} rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("feature matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("solver failed to produce finite parameters")]
    SolverDiverged,
}

/// Which of the three classifier families to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    RandomForest,
    SvmRbf,
    LogisticRegression,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::SvmRbf => "svm_rbf",
            ClassifierKind::LogisticRegression => "logistic_regression",
        }
    }
}

/// Classifier family plus the seed that fixes every stochastic choice.
/// Hyperparameters are pinned: forest of 100 bootstrap trees, Gini splits,
/// sqrt(d) features per node, unlimited depth; SVM with C = 1 and
/// gamma = 1/(d * pooled variance), Platt-calibrated; logistic regression
/// with L2 penalty 1, iteration cap 1000, tolerance 1e-6.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub seed: u64,
}

/// A fitted model exposing positive-class (stimulation) probabilities.
#[derive(Debug, Clone)]
pub enum Classifier {
    Forest(RandomForest),
    Svm(SvmRbf),
    Logistic(LogisticModel),
}

impl Classifier {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Forest(m) => m.predict_proba(x),
            Classifier::Svm(m) => m.predict_proba(x),
            Classifier::Logistic(m) => m.predict_proba(x),
        }
    }
}

pub(crate) fn validate_xy(x: &[Vec<f64>], y: &[bool]) -> Result<usize, ClassifyError> {
    if x.is_empty() {
        return Err(ClassifyError::EmptyFeatureSet);
    }
    if x.len() != y.len() {
        return Err(ClassifyError::LabelMismatch {
            labels: y.len(),
            rows: x.len(),
        });
    }
    let d = x[0].len();
    for (r, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(ClassifyError::RaggedRows {
                row: r,
                got: row.len(),
                want: d,
            });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(ClassifyError::NonFinite { row: r, col: c });
        }
    }
    Ok(d)
}

/// Fits the classifier named by `spec` on standardized features. Labels
/// are `true` for the stimulation (positive) class.
pub fn train_classifier(
    spec: &ClassifierSpec,
    x: &[Vec<f64>],
    y: &[bool],
) -> Result<Classifier, ClassifyError> {
    let _ = validate_xy(x, y)?;
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(ClassifyError::SingleClass);
    }
    Ok(match spec.kind {
        ClassifierKind::RandomForest => Classifier::Forest(RandomForest::fit(x, y, spec.seed)?),
        ClassifierKind::SvmRbf => Classifier::Svm(SvmRbf::fit(x, y)?),
        ClassifierKind::LogisticRegression => Classifier::Logistic(LogisticModel::fit(x, y)?),
    })
}
