//! Report emission and figure re-rendering.
//!
//! [`emit_report`] writes every table, figure, mixing plan, and checkpoint
//! of a finished run into one directory. All tables carry provenance
//! comments; wall-clock timings go to a separate text file so the CSV set
//! is byte-reproducible. [`reload_figures`] re-renders the data-backed
//! figures (boxplots, ROC, classification bars) from those CSVs alone.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::json;

use skna_classify::{ClassifierKind, FoldMetrics};
use skna_core::features::{FeatureTable, SignalType, FEATURE_NAMES};
use skna_denoiser::save_model;

use crate::config::{parse_snr_tag, ExperimentConfig};
use crate::experiment::{ClassFoldRow, ClassSummary, FeatureStatRow, LosoOutcome};
use crate::tables::{self, fmt_f};
use crate::{figures, CliError};

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("writing {}: {e}", path.display()))
}

fn emit_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let mut w = File::create(path).map(BufWriter::new).map_err(io_err(path))?;
    write(&mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes the complete report: configuration echo, CSV tables, mixing
/// plans, per-SNR figures, the figure fold's model checkpoint, timing
/// notes, and (when folds aborted) an abort log.
pub fn emit_report(
    outcome: &mut LosoOutcome,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))?;

    let cfg_text = toml::to_string_pretty(cfg)
        .map_err(|e| CliError::Config(format!("serializing configuration: {e}")))?;
    emit_file(&dir.join("config.toml"), |w| {
        writeln!(w, "# config_hash={}", outcome.config_hash)?;
        w.write_all(cfg_text.as_bytes())
    })?;

    emit_file(&dir.join("recon_metrics.csv"), |w| {
        tables::write_recon_metrics(w, outcome)
    })?;
    emit_file(&dir.join("recon_summary.csv"), |w| {
        tables::write_recon_summary(w, outcome)
    })?;
    emit_file(&dir.join("achieved_snr.csv"), |w| {
        tables::write_achieved_snr(w, outcome)
    })?;
    emit_file(&dir.join("classification.csv"), |w| {
        tables::write_classification(w, outcome)
    })?;
    emit_file(&dir.join("classification_summary.csv"), |w| {
        tables::write_classification_summary(w, outcome)
    })?;
    emit_file(&dir.join("classification_probs.csv"), |w| {
        tables::write_classification_probs(w, outcome)
    })?;
    emit_file(&dir.join("train_losses.csv"), |w| {
        tables::write_train_losses(w, outcome)
    })?;

    let plans = json!({
        "config_hash": outcome.config_hash,
        "master_seed": outcome.master_seed,
        "blocks": outcome.blocks.iter().map(|b| json!({
            "target_snr_db": b.target_snr_db,
            "tag": b.tag,
            "plans": b.folds.iter().map(|f| &f.plan).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    emit_file(&dir.join("mix_plans.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &plans)
            .map_err(|e| io::Error::other(e.to_string()))?;
        writeln!(w)
    })?;

    // Timings are deliberately outside the CSV set: they vary run to run.
    emit_file(&dir.join("timings.txt"), |w| {
        writeln!(w, "total_wall_s {:.3}", outcome.wall_s)?;
        for b in &outcome.blocks {
            for f in &b.folds {
                writeln!(
                    w,
                    "fold snr_db={} subject={} train_wall_s={:.3} steps={}",
                    fmt_f(b.target_snr_db),
                    f.subject,
                    f.train_report.wall_s,
                    f.train_report.steps
                )?;
            }
        }
        Ok(())
    })?;

    let aborted: Vec<String> = outcome
        .blocks
        .iter()
        .flat_map(|b| {
            b.aborted.iter().map(move |a| {
                format!(
                    "snr_db={} subject={} stage={} message={}",
                    fmt_f(b.target_snr_db),
                    a.subject,
                    a.stage,
                    a.message
                )
            })
        })
        .collect();
    if !aborted.is_empty() {
        emit_file(&dir.join("aborts.txt"), |w| {
            for line in &aborted {
                writeln!(w, "{line}")?;
            }
            Ok(())
        })?;
    }

    let kinds = cfg.classifier_kinds();
    for bi in 0..outcome.blocks.len() {
        let tag = outcome.blocks[bi].tag.clone();
        {
            let b = &outcome.blocks[bi];
            let path = dir.join(format!("features_{tag}.csv"));
            emit_file(&path, |w| {
                tables::provenance(w, &outcome.config_hash, outcome.master_seed)?;
                b.features
                    .write_csv(&mut *w)
                    .map_err(|e| io::Error::other(e.to_string()))
            })?;
            emit_file(&dir.join(format!("feature_stats_{tag}.csv")), |w| {
                tables::write_feature_stats(w, &outcome.config_hash, outcome.master_seed, &b.stats)
            })?;

            let write_figure = |name: &str, svg: Option<String>| -> Result<(), CliError> {
                let path = dir.join(name);
                match svg {
                    Some(text) => emit_file(&path, |w| w.write_all(text.as_bytes())),
                    None => {
                        eprintln!("notice: skipping figure {name}: nothing to draw");
                        Ok(())
                    }
                }
            };
            match &b.traces {
                Some(tr) => {
                    write_figure(
                        &format!("triptych_{tag}.svg"),
                        figures::fig_iskna_triptych(tr, cfg.features.tau_s),
                    )?;
                    write_figure(
                        &format!("signals_{tag}.svg"),
                        figures::fig_signal_grid(
                            tr,
                            cfg.features.tau_s,
                            cfg.features.askna_window_s,
                        ),
                    )?;
                }
                None => eprintln!(
                    "notice: no held-out traces at {} dB; skipping trace figures",
                    b.target_snr_db
                ),
            }
            for feature in FEATURE_NAMES {
                write_figure(
                    &format!("boxplot_{feature}_{tag}.svg"),
                    figures::fig_feature_box(&b.features, feature, &b.stats),
                )?;
            }
            write_figure(&format!("roc_{tag}.svg"), figures::fig_roc(&b.class_rows, &kinds))?;
            write_figure(
                &format!("classification_{tag}.svg"),
                figures::fig_class_bars(&b.class_summaries, &kinds),
            )?;
        }

        let extra = json!({
            "config_hash": outcome.config_hash,
            "target_snr_db": outcome.blocks[bi].target_snr_db,
        });
        let block = &mut outcome.blocks[bi];
        if let Some(fold) = block.folds.iter_mut().find(|f| f.model.is_some()) {
            let subject = fold.subject.clone();
            let model = fold.model.as_mut().expect("fold filtered on model presence");
            let path = dir.join(format!("model_{tag}.ckpt"));
            let extra = match extra {
                serde_json::Value::Object(mut o) => {
                    o.insert("subject".into(), json!(subject));
                    serde_json::Value::Object(o)
                }
                v => v,
            };
            save_model(&path, model, &extra)
                .map_err(|e| CliError::Data(format!("saving {}: {e}", path.display())))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Figure re-rendering from an existing report directory
// ---------------------------------------------------------------------------

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))
}

/// Data lines of a provenance-commented CSV, header dropped.
fn csv_rows(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for line in open(path)?.lines() {
        let line = line.map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        rows.push(t.split(',').map(str::to_string).collect());
    }
    Ok(rows)
}

fn field_err(path: &Path, what: &str) -> CliError {
    CliError::Data(format!("{}: malformed {what}", path.display()))
}

fn parse_f(path: &Path, s: &str, what: &str) -> Result<f64, CliError> {
    s.parse::<f64>().map_err(|_| field_err(path, what))
}

fn parse_opt_f(path: &Path, s: &str, what: &str) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f(path, s, what).map(Some)
    }
}

fn static_stars(s: &str) -> &'static str {
    match s {
        "***" => "***",
        "**" => "**",
        "*" => "*",
        _ => "n.s.",
    }
}

fn static_feature(name: &str) -> Option<&'static str> {
    FEATURE_NAMES.iter().copied().find(|f| *f == name)
}

fn parse_stats_file(path: &Path) -> Result<Vec<FeatureStatRow>, CliError> {
    let mut out = Vec::new();
    for row in csv_rows(path)? {
        if row.len() != 10 {
            return Err(field_err(path, "row width"));
        }
        let st = SignalType::parse(&row[0]).ok_or_else(|| field_err(path, "signal type"))?;
        let feature = static_feature(&row[1]).ok_or_else(|| field_err(path, "feature name"))?;
        out.push(FeatureStatRow {
            signal_type: st,
            feature,
            kw_h: parse_f(path, &row[2], "kw_h")?,
            kw_p: parse_f(path, &row[3], "kw_p")?,
            kw_n: row[4].parse().map_err(|_| field_err(path, "kw_n"))?,
            wilcoxon_w: parse_opt_f(path, &row[5], "wilcoxon_w")?,
            wilcoxon_p: parse_opt_f(path, &row[6], "wilcoxon_p")?,
            auroc: parse_f(path, &row[7], "auroc")?,
            fisher: parse_opt_f(path, &row[8], "fisher")?,
            stars: static_stars(&row[9]),
        });
    }
    Ok(out)
}

/// Probability rows grouped back into per-fold classification rows. The
/// key's first element is the SNR label (`fmt_f(snr)` or `"clean"`).
fn parse_probs_file(path: &Path) -> Result<Vec<(String, ClassFoldRow)>, CliError> {
    let mut out: Vec<(String, ClassFoldRow)> = Vec::new();
    for row in csv_rows(path)? {
        if row.len() != 7 {
            return Err(field_err(path, "row width"));
        }
        let st = SignalType::parse(&row[1]).ok_or_else(|| field_err(path, "signal type"))?;
        let kind = crate::config::parse_classifier(&row[2])
            .ok_or_else(|| field_err(path, "classifier"))?;
        let prob = parse_f(path, &row[5], "probability")?;
        let label = match row[6].as_str() {
            "1" => true,
            "0" => false,
            _ => return Err(field_err(path, "label")),
        };
        let key_matches = |e: &(String, ClassFoldRow)| {
            e.0 == row[0]
                && e.1.signal_type == st
                && e.1.classifier == kind
                && e.1.subject == row[3]
        };
        // Rows arrive grouped; the last entry is almost always the match.
        if let Some(entry) = out.iter_mut().rev().find(|e| key_matches(e)) {
            entry.1.metrics.probabilities.push(prob);
            entry.1.metrics.labels.push(label);
        } else {
            out.push((
                row[0].clone(),
                ClassFoldRow {
                    signal_type: st,
                    classifier: kind,
                    subject: row[3].clone(),
                    metrics: FoldMetrics {
                        auc: None,
                        accuracy: 0.0,
                        sensitivity: 0.0,
                        specificity: 0.0,
                        f1: 0.0,
                        true_pos: 0,
                        false_pos: 0,
                        true_neg: 0,
                        false_neg: 0,
                        probabilities: vec![prob],
                        labels: vec![label],
                    },
                },
            ));
        }
    }
    Ok(out)
}

fn parse_summary_file(path: &Path) -> Result<Vec<(String, ClassSummary)>, CliError> {
    let mut out = Vec::new();
    for row in csv_rows(path)? {
        if row.len() != 10 {
            return Err(field_err(path, "row width"));
        }
        let st = SignalType::parse(&row[1]).ok_or_else(|| field_err(path, "signal type"))?;
        let kind = crate::config::parse_classifier(&row[2])
            .ok_or_else(|| field_err(path, "classifier"))?;
        out.push((
            row[0].clone(),
            ClassSummary {
                signal_type: st,
                classifier: kind,
                folds: row[3].parse().map_err(|_| field_err(path, "folds"))?,
                mean_accuracy: parse_f(path, &row[4], "mean_accuracy")?,
                std_accuracy: parse_f(path, &row[5], "std_accuracy")?,
                mean_auc: parse_opt_f(path, &row[6], "mean_auc")?,
                mean_sensitivity: parse_f(path, &row[7], "mean_sensitivity")?,
                mean_specificity: parse_f(path, &row[8], "mean_specificity")?,
                mean_f1: parse_f(path, &row[9], "mean_f1")?,
            },
        ));
    }
    Ok(out)
}

/// Re-renders every data-backed figure (boxplots, ROC curves,
/// classification bars) from the CSV tables in `dir`. Trace figures need
/// the held-out signals, which are not persisted, so they are left
/// untouched. Returns the number of figures written.
pub fn reload_figures(dir: &Path) -> Result<usize, CliError> {
    let mut tags: Vec<String> = fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("listing {}: {e}", dir.display())))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            let tag = name.strip_prefix("feature_stats_")?.strip_suffix(".csv")?;
            Some(tag.to_string())
        })
        .collect();
    tags.sort();
    if tags.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no feature_stats_<tag>.csv tables; is it a report directory?",
            dir.display()
        )));
    }

    let prob_rows = parse_probs_file(&dir.join("classification_probs.csv"))?;
    let summaries = parse_summary_file(&dir.join("classification_summary.csv"))?;
    let kinds: Vec<ClassifierKind> = [
        ClassifierKind::RandomForest,
        ClassifierKind::SvmRbf,
        ClassifierKind::LogisticRegression,
    ]
    .into_iter()
    .filter(|k| summaries.iter().any(|(_, s)| s.classifier == *k))
    .collect();

    let mut written = 0usize;
    for tag in &tags {
        let snr = parse_snr_tag(tag)
            .ok_or_else(|| CliError::Data(format!("unrecognized SNR tag '{tag}'")))?;
        let label = fmt_f(snr);
        let features_path = dir.join(format!("features_{tag}.csv"));
        let features = FeatureTable::read_csv(open(&features_path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", features_path.display())))?;
        let stats = parse_stats_file(&dir.join(format!("feature_stats_{tag}.csv")))?;

        let block_rows: Vec<ClassFoldRow> = prob_rows
            .iter()
            .filter(|(l, _)| *l == label || l == "clean")
            .map(|(_, r)| r.clone())
            .collect();
        let block_summaries: Vec<ClassSummary> = summaries
            .iter()
            .filter(|(l, _)| *l == label || l == "clean")
            .map(|(_, s)| s.clone())
            .collect();

        let mut write_figure = |name: String, svg: Option<String>| -> Result<(), CliError> {
            let path = dir.join(&name);
            match svg {
                Some(text) => {
                    emit_file(&path, |w| w.write_all(text.as_bytes()))?;
                    written += 1;
                    Ok(())
                }
                None => {
                    eprintln!("notice: skipping figure {name}: nothing to draw");
                    Ok(())
                }
            }
        };
        for feature in FEATURE_NAMES {
            write_figure(
                format!("boxplot_{feature}_{tag}.svg"),
                figures::fig_feature_box(&features, feature, &stats),
            )?;
        }
        write_figure(format!("roc_{tag}.svg"), figures::fig_roc(&block_rows, &kinds))?;
        write_figure(
            format!("classification_{tag}.svg"),
            figures::fig_class_bars(&block_summaries, &kinds),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_loso, tiny_config_for_tests};

    #[test]
    fn report_round_trips_through_emission_and_figure_reload() {
        let cfg = tiny_config_for_tests();
        let mut out = run_loso(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&mut out, &cfg, dir.path()).unwrap();

        let expect = [
            "config.toml",
            "recon_metrics.csv",
            "recon_summary.csv",
            "achieved_snr.csv",
            "classification.csv",
            "classification_summary.csv",
            "classification_probs.csv",
            "train_losses.csv",
            "mix_plans.json",
            "timings.txt",
            "features_m4_00dB.csv",
            "feature_stats_m4_00dB.csv",
            "triptych_m4_00dB.svg",
            "signals_m4_00dB.svg",
            "boxplot_burst_count_m4_00dB.svg",
            "boxplot_mean_iskna_m4_00dB.svg",
            "roc_m4_00dB.svg",
            "classification_m4_00dB.svg",
            "model_m4_00dB.ckpt",
        ];
        for name in expect {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        // No fold aborted, so no abort log.
        assert!(!dir.path().join("aborts.txt").exists());

        // Config echo parses back to an equivalent configuration.
        let echoed = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
        assert_eq!(echoed.config_hash(), out.config_hash);

        // Deleting the data-backed figures and reloading restores them
        // byte-for-byte from the CSVs alone.
        let roc = dir.path().join("roc_m4_00dB.svg");
        let box_path = dir.path().join("boxplot_burst_count_m4_00dB.svg");
        let before_roc = fs::read(&roc).unwrap();
        let before_box = fs::read(&box_path).unwrap();
        fs::remove_file(&roc).unwrap();
        fs::remove_file(&box_path).unwrap();
        let written = reload_figures(dir.path()).unwrap();
        assert!(written >= 8, "rewrote {written} figures");
        assert_eq!(fs::read(&roc).unwrap(), before_roc);
        assert_eq!(fs::read(&box_path).unwrap(), before_box);
    }
}
