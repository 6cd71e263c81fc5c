//! `skna` — command-line front-end for the SKNA denoising experiment
//! harness. Every subcommand is a thin wrapper over the `skna_cli`
//! library; the full pipeline lives behind `skna loso`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use skna_cli::config::{snr_tag, DatasetSource, ExperimentConfig, Overrides};
use skna_cli::experiment::{
    achieved_levels, burst_feature_table, classify_loso, feature_stats, load_dataset,
    preprocess_container, run_loso, Experiment, FoldAbort, FoldTraining,
};
use skna_cli::{emit_report, reload_figures, tables, CliError, EXIT_PARTIAL};
use skna_core::container::{Record, RecordRole, RecordingContainer};
use skna_core::dsp::{normalize_apply, segment};
use skna_core::features::{FeatureTable, SignalType};
use skna_core::mix::mix_dataset;
use skna_core::seeds::derive_seed;
use skna_denoiser::{denoise_segments, load_model, overlap_add, save_model};

#[derive(Parser)]
#[command(
    name = "skna",
    version,
    about = "Denoising toolkit for skin sympathetic nerve activity recordings"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Materialize the configured dataset into a recording container file.
    Synth {
        /// Experiment config (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the dataset generation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output container path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the acquisition front-end filters to every record.
    Preprocess {
        /// Input recording container.
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output container path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Contaminate one held-out subject's recording at a target SNR.
    #[command(allow_negative_numbers = true)]
    Mix {
        /// Dataset container (defaults to the configured dataset).
        dataset: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Target SNR in dB (defaults to the first configured target).
        #[arg(long)]
        snr: Option<f64>,
        /// Held-out subject (defaults to the first fold subject).
        #[arg(long)]
        subjects: Option<String>,
        /// Output directory for the plan and the contaminated recording.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one fold's denoiser and save a checkpoint.
    #[command(allow_negative_numbers = true)]
    Train {
        /// Dataset container (defaults to the configured dataset).
        dataset: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Target SNR in dB (defaults to the first configured target).
        #[arg(long)]
        snr: Option<f64>,
        /// Held-out subject (defaults to the first fold subject).
        #[arg(long)]
        subjects: Option<String>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Denoise every nerve-activity record in a container with a checkpoint.
    Denoise {
        /// Input recording container.
        input: PathBuf,
        /// Trained model checkpoint.
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output container path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract windowed burst features from every nerve-activity record.
    Features {
        /// Input recording container.
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Label for the extracted rows: bpf, recon, or clean.
        #[arg(long = "signal-type")]
        signal_type: String,
        /// Output feature CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank-based condition statistics over a feature table.
    Stats {
        /// Feature CSV produced by `features` or `loso`.
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to one signal type (default: every type present).
        #[arg(long = "signal-type")]
        signal_type: Option<String>,
        /// Output statistics CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-subject-out classification over a feature table.
    Classify {
        /// Feature CSV produced by `features` or `loso`.
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to one signal type (default: every type present).
        #[arg(long = "signal-type")]
        signal_type: Option<String>,
        /// Fold-level CSV output (the summary always prints to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: mix, train, denoise, score, test, classify, report.
    #[command(allow_negative_numbers = true)]
    Loso {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the target SNR list (comma-separated dB values).
        #[arg(long, value_delimiter = ',')]
        snr: Option<Vec<f64>>,
        /// Report directory (overrides the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only these subjects serve as held-out folds (comma-separated).
        #[arg(long, value_delimiter = ',')]
        subjects: Option<Vec<String>>,
        /// Number of folds trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-render the figures of an existing report directory.
    Report {
        /// Report directory written by `loso`.
        dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code as i32);
}

fn run(cmd: Cmd) -> Result<u8, CliError> {
    match cmd {
        Cmd::Synth { config, seed, out } => synth_cmd(config, seed, &out),
        Cmd::Preprocess { input, config, out } => preprocess_cmd(&input, config, &out),
        Cmd::Mix {
            dataset,
            config,
            seed,
            snr,
            subjects,
            out,
        } => mix_cmd(dataset, config, seed, snr, subjects, &out),
        Cmd::Train {
            dataset,
            config,
            seed,
            snr,
            subjects,
            out,
        } => train_cmd(dataset, config, seed, snr, subjects, &out),
        Cmd::Denoise {
            input,
            checkpoint,
            config,
            out,
        } => denoise_cmd(&input, &checkpoint, config, &out),
        Cmd::Features {
            input,
            config,
            signal_type,
            out,
        } => features_cmd(&input, config, &signal_type, &out),
        Cmd::Stats {
            features,
            config,
            signal_type,
            out,
        } => stats_cmd(&features, config, signal_type.as_deref(), &out),
        Cmd::Classify {
            features,
            config,
            seed,
            signal_type,
            out,
        } => classify_cmd(&features, config, seed, signal_type.as_deref(), out),
        Cmd::Loso {
            config,
            seed,
            snr,
            out,
            subjects,
            jobs,
        } => loso_cmd(config, seed, snr, out, subjects, jobs),
        Cmd::Report { dir } => report_cmd(&dir),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_container(path: &Path) -> Result<RecordingContainer, CliError> {
    RecordingContainer::load(path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))
}

fn save_container(container: &RecordingContainer, path: &Path) -> Result<(), CliError> {
    container
        .save(path)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

fn read_feature_table(path: &Path) -> Result<FeatureTable, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    FeatureTable::read_csv(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("parsing {}: {e}", path.display())))
}

fn emit_csv(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

fn parse_signal_type(s: &str) -> Result<SignalType, CliError> {
    SignalType::parse(s).ok_or_else(|| {
        CliError::Config(format!(
            "unknown signal type '{s}' (expected bpf, recon, or clean)"
        ))
    })
}

/// Signal types to process: the explicit flag, or every type with rows.
fn select_types(table: &FeatureTable, flag: Option<&str>) -> Result<Vec<SignalType>, CliError> {
    match flag {
        Some(s) => Ok(vec![parse_signal_type(s)?]),
        None => {
            let present: Vec<SignalType> = SignalType::ALL
                .iter()
                .copied()
                .filter(|st| table.rows.iter().any(|r| r.signal_type == *st))
                .collect();
            if present.is_empty() {
                return Err(CliError::Data("feature table has no rows".into()));
            }
            Ok(present)
        }
    }
}

fn abort_to_error(a: FoldAbort) -> CliError {
    CliError::Data(format!(
        "fold '{}' aborted during {}: {}",
        a.subject, a.stage, a.message
    ))
}

/// Everything `mix` and `train` share: the prepared experiment, the resolved
/// SNR target with its derived seed, and the validated held-out subject.
/// The seed matches what a full `loso` run derives for the same fold, so a
/// single fold reproduced here is bit-identical to its in-run counterpart.
fn fold_context(
    dataset: Option<PathBuf>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    snr: Option<f64>,
    subjects: Option<String>,
) -> Result<(Experiment, f64, u64, String), CliError> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(path) = dataset {
        cfg.dataset = DatasetSource::Path { path };
    }
    let exp = Experiment::prepare(&cfg)?;
    let target = snr.unwrap_or(exp.cfg.target_snr_db[0]);
    let si = exp
        .cfg
        .target_snr_db
        .iter()
        .position(|&v| v == target)
        .unwrap_or(0);
    let snr_seed = derive_seed(exp.cfg.master_seed, "snr", si as u64);
    let subject = match subjects {
        Some(s) => {
            let s = s.trim().to_string();
            if s.contains(',') {
                return Err(CliError::Config(
                    "exactly one held-out subject expected (got a list)".into(),
                ));
            }
            if !exp.all_subjects.contains(&s) {
                return Err(CliError::Config(format!(
                    "unknown subject '{s}' (dataset has: {})",
                    exp.all_subjects.join(", ")
                )));
            }
            s
        }
        None => exp
            .fold_subjects()?
            .first()
            .cloned()
            .ok_or_else(|| CliError::Config("dataset has no subjects".into()))?,
    };
    Ok((exp, target, snr_seed, subject))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn synth_cmd(config: Option<PathBuf>, seed: Option<u64>, out: &Path) -> Result<u8, CliError> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(s) = seed {
        if let DatasetSource::Generate(spec) = &mut cfg.dataset {
            spec.seed = s;
        }
    }
    let data = load_dataset(&cfg)?;
    save_container(&data, out)?;
    println!("wrote {} records to {}", data.records.len(), out.display());
    Ok(0)
}

fn preprocess_cmd(input: &Path, config: Option<PathBuf>, out: &Path) -> Result<u8, CliError> {
    let cfg = load_config(config.as_deref())?;
    let raw = load_container(input)?;
    let processed = preprocess_container(&raw, &cfg.preprocess)?;
    save_container(&processed, out)?;
    println!(
        "preprocessed {} records into {}",
        processed.records.len(),
        out.display()
    );
    Ok(0)
}

fn mix_cmd(
    dataset: Option<PathBuf>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    snr: Option<f64>,
    subjects: Option<String>,
    out: &Path,
) -> Result<u8, CliError> {
    let (exp, target, snr_seed, subject) = fold_context(dataset, config, seed, snr, subjects)?;
    let ord = exp
        .all_subjects
        .iter()
        .position(|s| *s == subject)
        .expect("subject validated against the roster") as u64;
    let mix_seed = derive_seed(snr_seed, "mix", ord);
    let mix = mix_dataset(&exp.clean_set, &exp.processed, mix_seed, target, &subject)
        .map_err(|e| CliError::Data(format!("mixing: {e}")))?;
    let (train_db, test_db, pooled_db) = achieved_levels(&exp.clean_set, &mix);

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", out.display())))?;
    let tag = snr_tag(target);
    let plan_path = out.join(format!("mix_plan_{subject}_{tag}.json"));
    let text = serde_json::to_string_pretty(&mix.plan)
        .map_err(|e| CliError::Data(format!("encoding mix plan: {e}")))?;
    std::fs::write(&plan_path, text)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", plan_path.display())))?;

    let trace = overlap_add(&mix.test_noisy, None)
        .map_err(|e| CliError::Data(format!("rebuilding the contaminated recording: {e}")))?;
    let mut container = RecordingContainer::new(
        exp.processed.fs,
        json!({
            "config_hash": exp.config_hash,
            "target_snr_db": target,
            "subject": subject,
            "achieved_db": { "train": train_db, "test": test_db, "pooled": pooled_db },
        }),
    );
    container
        .push(Record {
            subject_id: subject.clone(),
            role: RecordRole::Skna,
            signal: trace,
        })
        .map_err(|e| CliError::Data(format!("assembling output container: {e}")))?;
    let noisy_path = out.join(format!("noisy_{subject}_{tag}.skna"));
    save_container(&container, &noisy_path)?;

    println!(
        "achieved SNR: train {train_db:.3} dB, test {test_db:.3} dB, pooled {pooled_db:.3} dB"
    );
    println!("wrote {}", plan_path.display());
    println!("wrote {}", noisy_path.display());
    Ok(0)
}

fn train_cmd(
    dataset: Option<PathBuf>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    snr: Option<f64>,
    subjects: Option<String>,
    out: &Path,
) -> Result<u8, CliError> {
    let (exp, target, snr_seed, subject) = fold_context(dataset, config, seed, snr, subjects)?;
    let training = exp
        .train_fold(target, snr_seed, &subject)
        .map_err(abort_to_error)?;
    let FoldTraining {
        plan,
        mut model,
        report,
        achieved_pooled_db,
        ..
    } = training;
    let extra = json!({
        "config_hash": exp.config_hash,
        "target_snr_db": target,
        "subject": subject,
        "final_loss": report.final_loss(),
        "global_gain": plan.global_gain,
    });
    save_model(out, &mut model, &extra)
        .map_err(|e| CliError::Data(format!("writing checkpoint {}: {e}", out.display())))?;
    println!(
        "trained fold '{subject}' at {target} dB: {} epochs, final loss {:.6}, pooled achieved {achieved_pooled_db:.3} dB",
        report.epoch_losses.len(),
        report.final_loss(),
    );
    println!("wrote {}", out.display());
    Ok(0)
}

fn denoise_cmd(
    input: &Path,
    checkpoint: &Path,
    config: Option<PathBuf>,
    out: &Path,
) -> Result<u8, CliError> {
    let cfg = load_config(config.as_deref())?;
    let container = load_container(input)?;
    let (mut model, meta) = load_model(checkpoint)
        .map_err(|e| CliError::Data(format!("reading checkpoint {}: {e}", checkpoint.display())))?;
    let stats = model.norm_stats.ok_or_else(|| {
        CliError::Data("checkpoint lacks normalization statistics; train with the harness".into())
    })?;
    let window_s = model.window_len as f64 / container.fs;

    let mut manifest = container.manifest.clone();
    if let Some(obj) = manifest.as_object_mut() {
        obj.insert(
            "denoise".to_string(),
            json!({
                "checkpoint": checkpoint.display().to_string(),
                "window_len": model.window_len,
                "meta": meta,
            }),
        );
    }
    let mut output = RecordingContainer::new(container.fs, manifest);
    let mut denoised = 0usize;
    for r in &container.records {
        if r.role != RecordRole::Skna {
            continue;
        }
        let mut set = segment(
            &r.signal,
            &r.subject_id,
            window_s,
            cfg.segmentation.test_overlap,
        )
        .map_err(|e| CliError::Data(format!("windowing '{}': {e}", r.subject_id)))?;
        normalize_apply(&mut set, &stats);
        let outputs = denoise_segments(&mut model, &set)
            .map_err(|e| CliError::Data(format!("denoising '{}': {e}", r.subject_id)))?;
        let trace = overlap_add(&outputs, Some(&stats))
            .map_err(|e| CliError::Data(format!("blending '{}': {e}", r.subject_id)))?;
        output
            .push(Record {
                subject_id: r.subject_id.clone(),
                role: RecordRole::Skna,
                signal: trace,
            })
            .map_err(|e| CliError::Data(format!("assembling output container: {e}")))?;
        denoised += 1;
    }
    if denoised == 0 {
        return Err(CliError::Data(
            "input container has no nerve-activity records".into(),
        ));
    }
    save_container(&output, out)?;
    println!("denoised {denoised} records into {}", out.display());
    Ok(0)
}

fn features_cmd(
    input: &Path,
    config: Option<PathBuf>,
    signal_type: &str,
    out: &Path,
) -> Result<u8, CliError> {
    let cfg = load_config(config.as_deref())?;
    let st = parse_signal_type(signal_type)?;
    let container = load_container(input)?;
    let mut table = FeatureTable::default();
    let mut records = 0usize;
    for r in &container.records {
        if r.role != RecordRole::Skna {
            continue;
        }
        let tbl = burst_feature_table(
            &r.signal,
            &r.subject_id,
            st,
            cfg.features.tau_s,
            cfg.features.window_s,
        )?;
        table.extend(tbl);
        records += 1;
    }
    if records == 0 {
        return Err(CliError::Data(
            "input container has no nerve-activity records".into(),
        ));
    }
    emit_csv(out, |w| {
        tables::provenance(w, &cfg.config_hash(), cfg.master_seed)?;
        table
            .write_csv(&mut *w)
            .map_err(|e| io::Error::other(e.to_string()))
    })?;
    println!(
        "wrote {} feature windows from {records} records to {}",
        table.rows.len(),
        out.display()
    );
    Ok(0)
}

fn stats_cmd(
    features: &Path,
    config: Option<PathBuf>,
    signal_type: Option<&str>,
    out: &Path,
) -> Result<u8, CliError> {
    let cfg = load_config(config.as_deref())?;
    let table = read_feature_table(features)?;
    let mut rows = Vec::new();
    for st in select_types(&table, signal_type)? {
        rows.extend(feature_stats(&table, st)?);
    }
    emit_csv(out, |w| {
        tables::write_feature_stats(w, &cfg.config_hash(), cfg.master_seed, &rows)
    })?;
    println!("wrote {} statistic rows to {}", rows.len(), out.display());
    Ok(0)
}

fn classify_cmd(
    features: &Path,
    config: Option<PathBuf>,
    seed: Option<u64>,
    signal_type: Option<&str>,
    out: Option<PathBuf>,
) -> Result<u8, CliError> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let table = read_feature_table(features)?;
    let kinds = cfg.classifier_kinds();
    let mut all_rows = Vec::new();
    let mut all_summaries = Vec::new();
    for st in select_types(&table, signal_type)? {
        let seed_base = derive_seed(cfg.master_seed, &format!("classify-{st}"), 0);
        let (rows, summaries) = classify_loso(&table, st, &kinds, seed_base)?;
        all_rows.extend(rows);
        all_summaries.extend(summaries);
    }
    for s in &all_summaries {
        let auc = match s.mean_auc {
            Some(a) => format!(", AUC {a:.3}"),
            None => String::new(),
        };
        println!(
            "{} + {}: accuracy {:.3} \u{b1} {:.3}{auc} ({} folds)",
            s.signal_type,
            s.classifier.as_str(),
            s.mean_accuracy,
            s.std_accuracy,
            s.folds
        );
    }
    if let Some(path) = out {
        emit_csv(&path, |w| {
            tables::provenance(w, &cfg.config_hash(), cfg.master_seed)?;
            writeln!(
                w,
                "signal_type,classifier,fold_subject,auc,accuracy,sensitivity,specificity,f1"
            )?;
            for r in &all_rows {
                let m = &r.metrics;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.signal_type,
                    r.classifier.as_str(),
                    r.subject,
                    tables::fmt_opt(m.auc),
                    tables::fmt_f(m.accuracy),
                    tables::fmt_f(m.sensitivity),
                    tables::fmt_f(m.specificity),
                    tables::fmt_f(m.f1)
                )?;
            }
            Ok(())
        })?;
        println!("wrote {} fold rows to {}", all_rows.len(), path.display());
    }
    Ok(0)
}

fn loso_cmd(
    config: Option<PathBuf>,
    seed: Option<u64>,
    snr: Option<Vec<f64>>,
    out: Option<PathBuf>,
    subjects: Option<Vec<String>>,
    jobs: usize,
) -> Result<u8, CliError> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let mut cfg = load_config(config.as_deref())?;
    cfg.apply(&Overrides {
        seed,
        snr,
        out,
        subjects,
    });
    cfg.validate()?;
    let mut outcome = run_loso(&cfg, jobs)?;
    emit_report(&mut outcome, &cfg, &cfg.out_dir)?;
    for b in &outcome.blocks {
        println!(
            "{} dB: {} folds completed, {} aborted",
            b.target_snr_db,
            b.folds.len(),
            b.aborted.len()
        );
    }
    println!("report: {}", cfg.out_dir.display());
    println!("wall time: {:.1} s", outcome.wall_s);
    if outcome.is_partial() {
        eprintln!("warning: some folds aborted; the report is partial");
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn report_cmd(dir: &Path) -> Result<u8, CliError> {
    let n = reload_figures(dir)?;
    println!("re-rendered {n} figures in {}", dir.display());
    Ok(0)
}
