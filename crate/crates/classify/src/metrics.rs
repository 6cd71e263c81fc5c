//! Per-fold evaluation: probability threshold at 0.5 (stimulation is the
//! positive class), confusion-derived rates in percent, and rank-based AUC.

use crate::{Classifier, ClassifyError};
use skna_core::stats::auroc;

/// Metrics for one held-out fold. Rates are percentages; `auc` is `None`
/// when the fold holds only one class, since ranking quality is undefined
/// there. Raw probabilities and labels are kept for ROC plotting and
/// pooled summaries.
#[derive(Debug, Clone)]
pub struct FoldMetrics {
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub probabilities: Vec<f64>,
    pub labels: Vec<bool>,
}

fn pct(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}

/// Scores `model` on a held-out fold. A predicted probability strictly
/// above 0.5 counts as stimulation.
pub fn evaluate_fold(
    model: &Classifier,
    x_test: &[Vec<f64>],
    y_test: &[bool],
) -> Result<FoldMetrics, ClassifyError> {
    crate::validate_xy(x_test, y_test)?;
    let probabilities: Vec<f64> = x_test.iter().map(|r| model.predict_proba(r)).collect();

    let (mut tp, mut fp, mut tn, mut fnn) = (0usize, 0usize, 0usize, 0usize);
    for (p, &y) in probabilities.iter().zip(y_test) {
        match (*p > 0.5, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fnn += 1,
        }
    }

    let pos: Vec<f64> = probabilities
        .iter()
        .zip(y_test)
        .filter(|(_, &y)| y)
        .map(|(p, _)| *p)
        .collect();
    let neg: Vec<f64> = probabilities
        .iter()
        .zip(y_test)
        .filter(|(_, &y)| !y)
        .map(|(p, _)| *p)
        .collect();
    let auc = auroc(&pos, &neg).ok();

    let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fnn as f64);
    Ok(FoldMetrics {
        auc,
        accuracy: pct(tpf + tnf, tpf + fpf + tnf + fnf),
        sensitivity: pct(tpf, tpf + fnf),
        specificity: pct(tnf, tnf + fpf),
        f1: pct(2.0 * tpf, 2.0 * tpf + fpf + fnf),
        true_pos: tp,
        false_pos: fp,
        true_neg: tn,
        false_neg: fnn,
        probabilities,
        labels: y_test.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LogisticModel;

    /// One feature passed straight through a sigmoid, so a test row with
    /// value logit(p) scores probability p.
    fn passthrough() -> Classifier {
        Classifier::Logistic(LogisticModel::from_params(vec![1.0], 0.0))
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn a_perfect_fold_scores_ceiling_on_every_metric() {
        let model = passthrough();
        let x: Vec<Vec<f64>> = vec![vec![-4.0], vec![-3.0], vec![3.0], vec![4.0]];
        let y = vec![false, false, true, true];
        let m = evaluate_fold(&model, &x, &y).unwrap();
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.sensitivity, 100.0);
        assert_eq!(m.specificity, 100.0);
        assert_eq!(m.f1, 100.0);
        assert_eq!((m.true_pos, m.true_neg), (2, 2));
    }

    #[test]
    fn an_uninformative_constant_scorer_sits_at_chance() {
        // p = 0.5 everywhere is not strictly above threshold, so every row
        // is called baseline: half right on a balanced fold, AUC 0.5.
        let model = Classifier::Logistic(LogisticModel::from_params(vec![0.0], 0.0));
        let x: Vec<Vec<f64>> = (0..6).map(|v| vec![v as f64]).collect();
        let y = vec![false, false, false, true, true, true];
        let m = evaluate_fold(&model, &x, &y).unwrap();
        assert_eq!(m.accuracy, 50.0);
        assert_eq!(m.sensitivity, 0.0);
        assert_eq!(m.specificity, 100.0);
        assert_eq!(m.auc, Some(0.5));
    }

    #[test]
    fn confusion_counts_reproduce_hand_computed_rates() {
        // 23 stimulation rows (21 scored 0.9, 2 scored 0.1) and 23 baseline
        // rows (22 scored 0.1, 1 scored 0.9): TP=21 FN=2 TN=22 FP=1.
        let model = passthrough();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..21 {
            x.push(vec![logit(0.9)]);
            y.push(true);
        }
        for _ in 0..2 {
            x.push(vec![logit(0.1)]);
            y.push(true);
        }
        for _ in 0..22 {
            x.push(vec![logit(0.1)]);
            y.push(false);
        }
        x.push(vec![logit(0.9)]);
        y.push(false);

        let m = evaluate_fold(&model, &x, &y).unwrap();
        assert_eq!(
            (m.true_pos, m.false_neg, m.true_neg, m.false_pos),
            (21, 2, 22, 1)
        );
        assert!((m.sensitivity - 100.0 * 21.0 / 23.0).abs() < 1e-9);
        assert!((m.specificity - 100.0 * 22.0 / 23.0).abs() < 1e-9);
        assert!((m.accuracy - 100.0 * 43.0 / 46.0).abs() < 1e-9);
        assert!((m.f1 - 100.0 * 42.0 / 45.0).abs() < 1e-9);
        // Two decimal places: 91.30 / 95.65 / 93.48 / 93.33.
        assert_eq!((m.sensitivity * 100.0).round() / 100.0, 91.30);
        assert_eq!((m.specificity * 100.0).round() / 100.0, 95.65);
        assert_eq!((m.accuracy * 100.0).round() / 100.0, 93.48);
        assert_eq!((m.f1 * 100.0).round() / 100.0, 93.33);
    }

    #[test]
    fn fold_auc_agrees_with_the_rank_statistic_on_the_same_scores() {
        let model = passthrough();
        let x: Vec<Vec<f64>> = vec![
            vec![0.3],
            vec![-0.7],
            vec![0.9],
            vec![-0.2],
            vec![0.4],
            vec![-0.5],
        ];
        let y = vec![true, false, true, false, true, false];
        let m = evaluate_fold(&model, &x, &y).unwrap();
        let pos: Vec<f64> = m
            .probabilities
            .iter()
            .zip(&m.labels)
            .filter(|(_, &l)| l)
            .map(|(p, _)| *p)
            .collect();
        let neg: Vec<f64> = m
            .probabilities
            .iter()
            .zip(&m.labels)
            .filter(|(_, &l)| !l)
            .map(|(p, _)| *p)
            .collect();
        assert_eq!(m.auc, Some(auroc(&pos, &neg).unwrap()));
    }

    #[test]
    fn a_single_class_fold_reports_no_auc() {
        let model = passthrough();
        let x: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0]];
        let y = vec![true, true];
        let m = evaluate_fold(&model, &x, &y).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.specificity, 0.0); // no negatives present
    }

    #[test]
    fn an_empty_fold_is_rejected() {
        let model = passthrough();
        assert!(matches!(
            evaluate_fold(&model, &[], &[]),
            Err(ClassifyError::EmptyFeatureSet)
        ));
    }
}
