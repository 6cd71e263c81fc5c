//! Per-column z-scoring with train-fold statistics, applied to both the
//! train and test matrices so no test information leaks into scaling.

/// Per-column mean and population standard deviation fitted on the train
/// fold. Columns whose train values are constant are flagged; they map to
/// all-zero columns rather than dividing by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

/// Standardizes both matrices in place with statistics fitted on `train`
/// only. Returns the fitted statistics; `stats.constant` marks columns
/// that were degenerate on the train fold (zeroed everywhere).
pub fn standardize_features(train: &mut [Vec<f64>], test: &mut [Vec<f64>]) -> ColumnStats {
    let d = train.first().map_or(0, Vec::len);
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    let mut constant = vec![false; d];
    for c in 0..d {
        let m = train.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = train.iter().map(|r| (r[c] - m) * (r[c] - m)).sum::<f64>() / n;
        mean[c] = m;
        std[c] = var.sqrt();
        if !(std[c] > 0.0) {
            constant[c] = true;
        }
    }
    for rows in [train, test] {
        for row in rows.iter_mut() {
            for c in 0..d {
                row[c] = if constant[c] {
                    0.0
                } else {
                    (row[c] - mean[c]) / std[c]
                };
            }
        }
    }
    ColumnStats {
        mean,
        std,
        constant,
    }
}
