//! Deterministic CSV emission for every report table.
//!
//! All floats are written with six decimal places and every table starts
//! with provenance comments (`# config_hash=…`, `# master_seed=…`), so two
//! runs of the same configuration produce byte-identical files. Wall-clock
//! timings never appear here; they go to a separate timings file.

use std::io::{self, Write};

use skna_core::features::SignalType;
use skna_core::stats::{capped_snr, MetricBlock};

use crate::experiment::{FeatureStatRow, FoldOutput, LosoOutcome};

/// Fixed-precision float field: six decimals, with explicit `inf`/`nan`
/// spellings so the format never depends on platform `Display` quirks.
pub fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Optional float field; empty when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// Leading provenance comments tying a table to its configuration.
pub fn provenance(w: &mut impl Write, config_hash: &str, master_seed: u64) -> io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "# master_seed={master_seed}")
}

/// The three traces scored against the clean reference in each fold.
const SCORED_SIGNALS: [&str; 3] = ["noisy", "bpf", "recon"];

fn fold_block<'a>(fold: &'a FoldOutput, signal: &str, scope: &str) -> Option<&'a MetricBlock> {
    let m = match signal {
        "noisy" => &fold.metrics_noisy,
        "bpf" => &fold.metrics_bpf,
        _ => &fold.metrics_recon,
    };
    match scope {
        "overall" => Some(&m.overall),
        "baseline" => m.baseline.as_ref(),
        _ => m.stimulation.as_ref(),
    }
}

const SCOPES: [&str; 3] = ["overall", "baseline", "stimulation"];

/// Per-fold agreement with the clean reference, one row per
/// (SNR, subject, signal, scope).
pub fn write_recon_metrics(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(
        w,
        "target_snr_db,subject,signal,scope,corr,corr_iskna,mse,mae,snr_db,n"
    )?;
    for b in &out.blocks {
        for f in &b.folds {
            for signal in SCORED_SIGNALS {
                for scope in SCOPES {
                    let Some(m) = fold_block(f, signal, scope) else {
                        continue;
                    };
                    writeln!(
                        w,
                        "{},{},{signal},{scope},{},{},{},{},{},{}",
                        fmt_f(b.target_snr_db),
                        f.subject,
                        fmt_f(m.corr),
                        fmt_f(m.corr_iskna),
                        fmt_f(m.mse),
                        fmt_f(m.mae),
                        fmt_f(m.snr_db),
                        m.n
                    )?;
                }
            }
        }
    }
    Ok(())
}

const SUMMARY_METRICS: [&str; 5] = ["corr", "corr_iskna", "mse", "mae", "snr_db"];

fn metric_value(m: &MetricBlock, name: &str) -> f64 {
    match name {
        "corr" => m.corr,
        "corr_iskna" => m.corr_iskna,
        "mse" => m.mse,
        "mae" => m.mae,
        // SNR can be +inf on a perfect match; cap it so means stay finite.
        _ => capped_snr(m.snr_db),
    }
}

/// Across-fold mean, sample standard deviation, and 95% CI of every
/// reconstruction metric, in long format.
pub fn write_recon_summary(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(
        w,
        "target_snr_db,signal,scope,metric,folds,mean,std,ci_lo,ci_hi"
    )?;
    for b in &out.blocks {
        for signal in SCORED_SIGNALS {
            for scope in SCOPES {
                for metric in SUMMARY_METRICS {
                    let values: Vec<f64> = b
                        .folds
                        .iter()
                        .filter_map(|f| fold_block(f, signal, scope))
                        .map(|m| metric_value(m, metric))
                        .collect();
                    if values.is_empty() {
                        continue;
                    }
                    let (mean, sd, half) = spread(&values);
                    writeln!(
                        w,
                        "{},{signal},{scope},{metric},{},{},{},{},{}",
                        fmt_f(b.target_snr_db),
                        values.len(),
                        fmt_f(mean),
                        fmt_f(sd),
                        fmt_f(mean - half),
                        fmt_f(mean + half)
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Mean, sample SD and 95% CI half-width; degenerate cases collapse to
/// (value, 0, 0).
fn spread(values: &[f64]) -> (f64, f64, f64) {
    match skna_core::stats::mean_ci95(values) {
        Ok(v) => v,
        Err(_) => (values[0], 0.0, 0.0),
    }
}

/// Per-fold achieved contamination levels and the plan's global gain.
pub fn write_achieved_snr(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(
        w,
        "target_snr_db,subject,achieved_train_db,achieved_test_db,achieved_pooled_db,global_gain"
    )?;
    for b in &out.blocks {
        for f in &b.folds {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f(b.target_snr_db),
                f.subject,
                fmt_f(f.achieved_train_db),
                fmt_f(f.achieved_test_db),
                fmt_f(f.achieved_pooled_db),
                fmt_f(f.plan.global_gain)
            )?;
        }
    }
    Ok(())
}

/// Baseline-vs-stimulation test battery for one SNR block.
pub fn write_feature_stats(
    w: &mut impl Write,
    config_hash: &str,
    master_seed: u64,
    stats: &[FeatureStatRow],
) -> io::Result<()> {
    provenance(w, config_hash, master_seed)?;
    writeln!(
        w,
        "signal_type,feature,kw_h,kw_p,kw_n,wilcoxon_w,wilcoxon_p,auroc,fisher,stars"
    )?;
    for s in stats {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            s.signal_type,
            s.feature,
            fmt_f(s.kw_h),
            fmt_f(s.kw_p),
            s.kw_n,
            fmt_opt(s.wilcoxon_w),
            fmt_opt(s.wilcoxon_p),
            fmt_f(s.auroc),
            fmt_opt(s.fisher),
            s.stars
        )?;
    }
    Ok(())
}

fn snr_label(st: SignalType, target_snr_db: f64) -> String {
    // Clean results do not depend on the contamination level.
    if st == SignalType::Clean {
        "clean".to_string()
    } else {
        fmt_f(target_snr_db)
    }
}

/// Per-fold classification scores, one row per
/// (SNR, signal type, classifier, held-out subject).
pub fn write_classification(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(
        w,
        "target_snr_db,signal_type,classifier,subject,accuracy,sensitivity,specificity,f1,auc,true_pos,false_pos,true_neg,false_neg"
    )?;
    for b in &out.blocks {
        for r in &b.class_rows {
            let m = &r.metrics;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                snr_label(r.signal_type, b.target_snr_db),
                r.signal_type,
                r.classifier.as_str(),
                r.subject,
                fmt_f(m.accuracy),
                fmt_f(m.sensitivity),
                fmt_f(m.specificity),
                fmt_f(m.f1),
                fmt_opt(m.auc),
                m.true_pos,
                m.false_pos,
                m.true_neg,
                m.false_neg
            )?;
        }
    }
    Ok(())
}

/// Across-fold classification summary.
pub fn write_classification_summary(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(
        w,
        "target_snr_db,signal_type,classifier,folds,mean_accuracy,std_accuracy,mean_auc,mean_sensitivity,mean_specificity,mean_f1"
    )?;
    for b in &out.blocks {
        for s in &b.class_summaries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                snr_label(s.signal_type, b.target_snr_db),
                s.signal_type,
                s.classifier.as_str(),
                s.folds,
                fmt_f(s.mean_accuracy),
                fmt_f(s.std_accuracy),
                fmt_opt(s.mean_auc),
                fmt_f(s.mean_sensitivity),
                fmt_f(s.mean_specificity),
                fmt_f(s.mean_f1)
            )?;
        }
    }
    Ok(())
}

/// Every held-out window's predicted probability and true label, enough
/// to rebuild ROC curves without re-running the experiment.
pub fn write_classification_probs(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(
        w,
        "target_snr_db,signal_type,classifier,subject,window,probability,label"
    )?;
    for b in &out.blocks {
        for r in &b.class_rows {
            for (i, (&p, &label)) in r
                .metrics
                .probabilities
                .iter()
                .zip(&r.metrics.labels)
                .enumerate()
            {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    snr_label(r.signal_type, b.target_snr_db),
                    r.signal_type,
                    r.classifier.as_str(),
                    r.subject,
                    i,
                    fmt_f(p),
                    u8::from(label)
                )?;
            }
        }
    }
    Ok(())
}

/// Per-epoch training losses for every fold.
pub fn write_train_losses(w: &mut impl Write, out: &LosoOutcome) -> io::Result<()> {
    provenance(w, &out.config_hash, out.master_seed)?;
    writeln!(w, "target_snr_db,subject,epoch,loss")?;
    for b in &out.blocks {
        for f in &b.folds {
            for (e, &loss) in f.train_report.epoch_losses.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f(b.target_snr_db),
                    f.subject,
                    e + 1,
                    fmt_f(loss)
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{ClassFoldRow, ClassSummary, FoldOutput, SnrBlock};
    use skna_classify::{ClassifierKind, FoldMetrics};
    use skna_core::features::FeatureTable;
    use skna_core::mix::MixPlan;
    use skna_core::stats::ReconMetrics;
    use skna_denoiser::TrainReport;
    use std::collections::BTreeMap;

    fn block_of(v: f64) -> MetricBlock {
        MetricBlock {
            corr: v,
            corr_iskna: v / 2.0,
            mse: 0.25,
            mae: 0.5,
            snr_db: 3.0,
            n: 10,
        }
    }

    fn tiny_outcome() -> LosoOutcome {
        let fold = FoldOutput {
            subject: "s01".into(),
            target_snr_db: -4.0,
            plan: MixPlan {
                target_snr_db: -4.0,
                test_subject: "s01".into(),
                test_noise_subject: "emg02".into(),
                train_noise_subjects: vec!["emg01".into()],
                record_shifts: BTreeMap::new(),
                train_pairs: vec![],
                test_pairs: vec![],
                global_gain: 1.5,
                window_len: 8,
                fs: 8.0,
            },
            achieved_train_db: -4.1,
            achieved_test_db: -3.9,
            achieved_pooled_db: -4.0,
            train_report: TrainReport {
                epoch_losses: vec![0.9, 0.5],
                wall_s: 1.0,
                steps: 4,
            },
            metrics_noisy: ReconMetrics {
                overall: block_of(0.2),
                baseline: None,
                stimulation: None,
            },
            metrics_bpf: ReconMetrics {
                overall: block_of(0.3),
                baseline: None,
                stimulation: None,
            },
            metrics_recon: ReconMetrics {
                overall: block_of(0.8),
                baseline: Some(block_of(0.7)),
                stimulation: None,
            },
            features: FeatureTable::default(),
            traces: None,
            model: None,
        };
        let class_row = ClassFoldRow {
            signal_type: SignalType::Recon,
            classifier: ClassifierKind::RandomForest,
            subject: "s01".into(),
            metrics: FoldMetrics {
                auc: Some(0.9),
                accuracy: 87.5,
                sensitivity: 100.0,
                specificity: 75.0,
                f1: 88.888888,
                true_pos: 4,
                false_pos: 1,
                true_neg: 3,
                false_neg: 0,
                probabilities: vec![0.9, 0.1],
                labels: vec![true, false],
            },
        };
        let summary = ClassSummary {
            signal_type: SignalType::Recon,
            classifier: ClassifierKind::RandomForest,
            folds: 1,
            mean_accuracy: 87.5,
            std_accuracy: 0.0,
            mean_auc: Some(0.9),
            mean_sensitivity: 100.0,
            mean_specificity: 75.0,
            mean_f1: 88.888888,
        };
        LosoOutcome {
            config_hash: "deadbeefdeadbeef".into(),
            master_seed: 7,
            subjects: vec!["s01".into()],
            clean_features: FeatureTable::default(),
            blocks: vec![SnrBlock {
                target_snr_db: -4.0,
                tag: "m4_00dB".into(),
                folds: vec![fold],
                aborted: vec![],
                features: FeatureTable::default(),
                stats: vec![],
                class_rows: vec![class_row],
                class_summaries: vec![summary],
                traces: None,
            }],
            wall_s: 2.0,
        }
    }

    #[test]
    fn float_fields_have_fixed_width_and_explicit_specials() {
        assert_eq!(fmt_f(1.0), "1.000000");
        assert_eq!(fmt_f(-4.0), "-4.000000");
        assert_eq!(fmt_f(f64::INFINITY), "inf");
        assert_eq!(fmt_f(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f(f64::NAN), "nan");
        assert_eq!(fmt_opt(None), "");
        assert_eq!(fmt_opt(Some(0.5)), "0.500000");
    }

    #[test]
    fn recon_metrics_table_matches_the_expected_layout() {
        let out = tiny_outcome();
        let mut buf = Vec::new();
        write_recon_metrics(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash=deadbeefdeadbeef");
        assert_eq!(lines[1], "# master_seed=7");
        assert_eq!(
            lines[2],
            "target_snr_db,subject,signal,scope,corr,corr_iskna,mse,mae,snr_db,n"
        );
        // noisy overall, bpf overall, recon overall, recon baseline.
        assert_eq!(lines.len(), 3 + 4);
        assert_eq!(
            lines[3],
            "-4.000000,s01,noisy,overall,0.200000,0.100000,0.250000,0.500000,3.000000,10"
        );
        assert_eq!(
            lines[6],
            "-4.000000,s01,recon,baseline,0.700000,0.350000,0.250000,0.500000,3.000000,10"
        );
    }

    #[test]
    fn single_fold_summary_collapses_spread_to_zero() {
        let out = tiny_outcome();
        let mut buf = Vec::new();
        write_recon_summary(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text
            .lines()
            .find(|l| l.starts_with("-4.000000,recon,overall,corr,"))
            .expect("summary row present");
        assert_eq!(row, "-4.000000,recon,overall,corr,1,0.800000,0.000000,0.800000,0.800000");
    }

    #[test]
    fn classification_tables_round_missing_auc_to_empty() {
        let mut out = tiny_outcome();
        out.blocks[0].class_rows[0].metrics.auc = None;
        out.blocks[0].class_summaries[0].mean_auc = None;
        let mut buf = Vec::new();
        write_classification(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.contains("-4.000000,recon,random_forest,s01,87.500000,100.000000,75.000000,88.888888,,4,1,3,0"),
            "got: {text}"
        );
        let mut buf = Vec::new();
        write_classification_summary(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().last().unwrap().contains(",,100.000000,"));
    }

    #[test]
    fn probability_rows_carry_window_index_and_binary_label() {
        let out = tiny_outcome();
        let mut buf = Vec::new();
        write_classification_probs(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[3], "-4.000000,recon,random_forest,s01,0,0.900000,1");
        assert_eq!(lines[4], "-4.000000,recon,random_forest,s01,1,0.100000,0");
    }

    #[test]
    fn train_loss_rows_are_one_per_epoch() {
        let out = tiny_outcome();
        let mut buf = Vec::new();
        write_train_losses(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "target_snr_db,subject,epoch,loss");
        assert_eq!(lines[3], "-4.000000,s01,1,0.900000");
        assert_eq!(lines[4], "-4.000000,s01,2,0.500000");
    }

    #[test]
    fn achieved_snr_table_reports_the_plan_gain() {
        let out = tiny_outcome();
        let mut buf = Vec::new();
        write_achieved_snr(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .last()
            .unwrap()
            .ends_with("-4.100000,-3.900000,-4.000000,1.500000"));
    }
}
