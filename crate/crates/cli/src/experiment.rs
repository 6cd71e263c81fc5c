//! Leave-one-subject-out experiment driver.
//!
//! Prepares the dataset (load or synthesize, then filter), runs one fold
//! per held-out subject at each target SNR — contaminate, train the
//! denoiser on the other subjects, reconstruct the held-out recording,
//! measure agreement with the clean reference, extract burst features —
//! then pools features for statistics and classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde_json::json;

use skna_classify::{
    evaluate_fold, standardize_features, train_classifier, ClassifierKind, ClassifierSpec,
    FoldMetrics,
};
use skna_core::container::{Record, RecordRole, RecordingContainer};
use skna_core::dsp::{
    bandpass_filter, normalize_apply, normalize_fit, notch_filter, resample, segment,
};
use skna_core::features::{
    burst_threshold, extract_features, iskna, FeatureRow, FeatureTable, SignalType, FEATURE_NAMES,
};
use skna_core::mix::{mix_dataset, MixOutput, MixPlan, PairRecord};
use skna_core::seeds::derive_seed;
use skna_core::signal::{Condition, Period, SampledSignal, SegmentSet};
use skna_core::stats::{
    auroc, fishers_ratio, kruskal_wallis, recon_metrics, stars_for, wilcoxon_signed_rank,
    ReconMetrics,
};
use skna_core::synth::gen_dataset;
use skna_denoiser::{
    build_model_for, denoise_segments, overlap_add, train, DenoiserModel, TrainConfig, TrainReport,
};

use crate::config::{snr_tag, DatasetSource, ExperimentConfig, PreprocessParams};
use crate::CliError;

// ---------------------------------------------------------------------------
// Dataset preparation
// ---------------------------------------------------------------------------

/// Loads the configured dataset: either an existing container file or an
/// inline synthesis request.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<RecordingContainer, CliError> {
    match &cfg.dataset {
        DatasetSource::Path { path } => RecordingContainer::load(path)
            .map_err(|e| CliError::Data(format!("reading dataset {}: {e}", path.display()))),
        DatasetSource::Generate(spec) => {
            let dcfg = spec.dataset_config()?;
            gen_dataset(&dcfg, None).map_err(|e| CliError::Data(format!("synthesizing dataset: {e}")))
        }
    }
}

/// Applies the acquisition front-end to every record: nerve-activity
/// records are band-passed and notch-filtered; interference records are
/// first resampled to the container rate so they can be mixed sample-
/// for-sample, then pushed through the same filters so their energy lies
/// in the analysis band.
pub fn preprocess_container(
    raw: &RecordingContainer,
    p: &PreprocessParams,
) -> Result<RecordingContainer, CliError> {
    let fs = raw.fs;
    let chain = |sig: &SampledSignal, subject: &str| -> Result<SampledSignal, CliError> {
        let b = bandpass_filter(sig, p.band_lo_hz, p.band_hi_hz)
            .map_err(|e| CliError::Config(format!("band-pass for '{subject}': {e}")))?;
        notch_filter(&b, p.notch_hz, p.notch_q)
            .map_err(|e| CliError::Config(format!("notch for '{subject}': {e}")))
    };
    let mut manifest = raw.manifest.clone();
    if let Some(obj) = manifest.as_object_mut() {
        obj.insert(
            "preprocess".to_string(),
            json!({
                "band_lo_hz": p.band_lo_hz,
                "band_hi_hz": p.band_hi_hz,
                "notch_hz": p.notch_hz,
                "notch_q": p.notch_q,
            }),
        );
    }
    let mut out = RecordingContainer::new(fs, manifest);
    for r in &raw.records {
        let sig = match r.role {
            RecordRole::Skna => chain(&r.signal, &r.subject_id)?,
            RecordRole::Emg => {
                let rs = resample(&r.signal, fs).map_err(|e| {
                    CliError::Data(format!("resampling '{}' to {fs} Hz: {e}", r.subject_id))
                })?;
                chain(&rs, &r.subject_id)?
            }
        };
        out.push(Record {
            subject_id: r.subject_id.clone(),
            role: r.role,
            signal: sig,
        })
        .map_err(|e| CliError::Data(format!("assembling preprocessed container: {e}")))?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Experiment state shared across folds
// ---------------------------------------------------------------------------

/// Immutable inputs shared by every fold: preprocessed records, the pooled
/// clean training segmentation, and per-subject clean traces.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub config_hash: String,
    pub processed: RecordingContainer,
    pub window_len: usize,
    /// Clean training windows from all subjects at the training overlap.
    pub clean_set: SegmentSet,
    pub clean_traces: BTreeMap<String, SampledSignal>,
    /// Every nerve-activity subject in the dataset, sorted.
    pub all_subjects: Vec<String>,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
        cfg.validate()?;
        let raw = load_dataset(cfg)?;
        let processed = preprocess_container(&raw, &cfg.preprocess)?;
        drop(raw);

        let fs = processed.fs;
        let window_len = (cfg.segmentation.window_s * fs).round() as usize;
        if window_len < 8 || window_len % 4 != 0 {
            return Err(CliError::Config(format!(
                "window of {} s at {} Hz is {} samples; the denoiser needs a multiple of 4, at least 8",
                cfg.segmentation.window_s, fs, window_len
            )));
        }

        let mut all_subjects: Vec<String> = processed
            .records_with_role(RecordRole::Skna)
            .map(|r| r.subject_id.clone())
            .collect();
        all_subjects.sort();
        if all_subjects.len() < 2 {
            return Err(CliError::Data(format!(
                "dataset holds {} nerve-activity record(s); need at least 2 for leave-one-subject-out",
                all_subjects.len()
            )));
        }

        let mut clean_set = SegmentSet::new(fs, window_len, cfg.segmentation.train_overlap);
        let mut clean_traces = BTreeMap::new();
        for subject in &all_subjects {
            let record = processed
                .find(subject)
                .expect("subject listed from this container");
            let set = segment(
                &record.signal,
                subject,
                cfg.segmentation.window_s,
                cfg.segmentation.train_overlap,
            )
            .map_err(|e| CliError::Config(format!("segmenting '{subject}': {e}")))?;
            if set.is_empty() {
                return Err(CliError::Data(format!(
                    "subject '{subject}' has no period long enough for a {} s window",
                    cfg.segmentation.window_s
                )));
            }
            for (meta, samples) in set.iter() {
                clean_set
                    .push(subject, meta.condition, meta.start, samples)
                    .expect("windows from segment() match the configured length");
            }
            clean_traces.insert(subject.clone(), record.signal.clone());
        }

        Ok(Experiment {
            config_hash: cfg.config_hash(),
            cfg: cfg.clone(),
            processed,
            window_len,
            clean_set,
            clean_traces,
            all_subjects,
        })
    }

    /// The subjects to hold out, in sorted order: the configured subset
    /// when given, otherwise every subject in the dataset.
    pub fn fold_subjects(&self) -> Result<Vec<String>, CliError> {
        match &self.cfg.subjects {
            None => Ok(self.all_subjects.clone()),
            Some(list) => {
                let mut picked = Vec::new();
                for s in list {
                    if !self.all_subjects.contains(s) {
                        return Err(CliError::Config(format!(
                            "subject '{s}' is not in the dataset (available: {})",
                            self.all_subjects.join(", ")
                        )));
                    }
                    if !picked.contains(s) {
                        picked.push(s.clone());
                    }
                }
                picked.sort();
                Ok(picked)
            }
        }
    }

    /// Stable per-subject ordinal (position in the sorted dataset roster),
    /// so per-fold seeds do not depend on which subset of folds runs.
    fn subject_ordinal(&self, subject: &str) -> u64 {
        self.all_subjects
            .iter()
            .position(|s| s == subject)
            .expect("fold subject is in the roster") as u64
    }

    /// Burst features of the clean (uncontaminated) recordings for the
    /// given subjects. Independent of SNR, so computed once per run.
    pub fn clean_feature_table(&self, subjects: &[String]) -> Result<FeatureTable, CliError> {
        let tau = self.cfg.features.tau_s;
        let fw = self.cfg.features.window_s;
        let mut table = FeatureTable::default();
        for subject in subjects {
            let trace = &self.clean_traces[subject];
            let tbl = burst_feature_table(trace, subject, SignalType::Clean, tau, fw)?;
            table.extend(tbl);
        }
        Ok(table)
    }

    /// Contaminates every recording at the target SNR with the held-out
    /// subject's noise record reserved, then trains the denoiser on the
    /// remaining subjects' paired windows.
    pub fn train_fold(
        &self,
        target_snr_db: f64,
        snr_seed: u64,
        subject: &str,
    ) -> Result<FoldTraining, FoldAbort> {
        let fail = |stage: &'static str, e: &dyn Display| FoldAbort {
            subject: subject.to_string(),
            stage,
            message: e.to_string(),
        };
        let ord = self.subject_ordinal(subject);
        let mix_seed = derive_seed(snr_seed, "mix", ord);
        let model_seed = derive_seed(snr_seed, "model", ord);
        let train_seed = derive_seed(snr_seed, "train", ord);

        let mix = mix_dataset(
            &self.clean_set,
            &self.processed,
            mix_seed,
            target_snr_db,
            subject,
        )
        .map_err(|e| fail("mix", &e))?;
        let (achieved_train_db, achieved_test_db, achieved_pooled_db) =
            achieved_levels(&self.clean_set, &mix);

        let MixOutput {
            train_noisy,
            test_noisy,
            plan,
        } = mix;
        let mut train_noisy = train_noisy;
        let mut train_clean = gather_clean_rows(&self.clean_set, &plan.train_pairs);
        let stats = normalize_fit(&train_noisy).map_err(|e| fail("normalize", &e))?;
        normalize_apply(&mut train_noisy, &stats);
        normalize_apply(&mut train_clean, &stats);
        let mut model = build_model_for(model_seed, self.window_len);
        model.norm_stats = Some(stats);
        let tcfg = TrainConfig {
            epochs: self.cfg.train.epochs,
            batch_size: self.cfg.train.batch_size,
            lr: self.cfg.train.lr,
            seed: train_seed,
        };
        let report =
            train(&mut model, &train_noisy, &train_clean, &tcfg).map_err(|e| fail("train", &e))?;

        Ok(FoldTraining {
            plan,
            test_noisy,
            model,
            report,
            achieved_train_db,
            achieved_test_db,
            achieved_pooled_db,
        })
    }

    /// Runs one leave-one-subject-out fold: contaminate every recording at
    /// the target SNR, train the denoiser on the other subjects' windows,
    /// rebuild and denoise the held-out recording, and score it.
    pub fn run_fold(
        &self,
        target_snr_db: f64,
        snr_seed: u64,
        subject: &str,
        keep_traces: bool,
    ) -> Result<FoldOutput, FoldAbort> {
        let fail = |stage: &'static str, e: &dyn Display| FoldAbort {
            subject: subject.to_string(),
            stage,
            message: e.to_string(),
        };
        let FoldTraining {
            plan,
            test_noisy,
            mut model,
            report: train_report,
            achieved_train_db,
            achieved_test_db,
            achieved_pooled_db,
        } = self.train_fold(target_snr_db, snr_seed, subject)?;
        let stats = model.norm_stats.expect("training attaches normalization");

        // --- Rebuild the held-out recording ---------------------------------
        let clean_test = gather_clean_rows(&self.clean_set, &plan.test_pairs);
        let clean_trace = overlap_add(&clean_test, None).map_err(|e| fail("reconstruct", &e))?;
        let noisy_trace = overlap_add(&test_noisy, None).map_err(|e| fail("reconstruct", &e))?;
        let bpf_trace = bandpass_filter(
            &noisy_trace,
            self.cfg.preprocess.band_lo_hz,
            self.cfg.preprocess.band_hi_hz,
        )
        .and_then(|b| notch_filter(&b, self.cfg.preprocess.notch_hz, self.cfg.preprocess.notch_q))
        .map_err(|e| fail("reconstruct", &e))?;

        // Deployment path: window the continuous noisy trace, denoise each
        // window, and blend the outputs back into a trace.
        let mut test_set = segment(
            &noisy_trace,
            subject,
            self.cfg.segmentation.window_s,
            self.cfg.segmentation.test_overlap,
        )
        .map_err(|e| fail("reconstruct", &e))?;
        normalize_apply(&mut test_set, &stats);
        let outputs =
            denoise_segments(&mut model, &test_set).map_err(|e| fail("reconstruct", &e))?;
        let recon_trace =
            overlap_add(&outputs, model.norm_stats.as_ref()).map_err(|e| fail("reconstruct", &e))?;

        let n = clean_trace
            .len()
            .min(noisy_trace.len())
            .min(bpf_trace.len())
            .min(recon_trace.len());
        let clean_cl = clip_trace(&clean_trace, n);
        let noisy_cl = clip_trace(&noisy_trace, n);
        let bpf_cl = clip_trace(&bpf_trace, n);
        let recon_cl = clip_trace(&recon_trace, n);

        // --- Score -----------------------------------------------------------
        let tau = self.cfg.features.tau_s;
        let metrics_noisy =
            recon_metrics(&noisy_cl, &clean_cl, tau).map_err(|e| fail("metrics", &e))?;
        let metrics_bpf =
            recon_metrics(&bpf_cl, &clean_cl, tau).map_err(|e| fail("metrics", &e))?;
        let metrics_recon =
            recon_metrics(&recon_cl, &clean_cl, tau).map_err(|e| fail("metrics", &e))?;

        let mut features = FeatureTable::default();
        for (ty, trace) in [(SignalType::Recon, &recon_cl), (SignalType::Bpf, &bpf_cl)] {
            let tbl = burst_feature_table(trace, subject, ty, tau, self.cfg.features.window_s)
                .map_err(|e| fail("features", &e))?;
            features.extend(tbl);
        }

        let (traces, kept_model) = if keep_traces {
            (
                Some(FoldTraces {
                    subject: subject.to_string(),
                    clean: clean_cl,
                    noisy: noisy_cl,
                    bpf: bpf_cl,
                    recon: recon_cl,
                }),
                Some(Box::new(model)),
            )
        } else {
            (None, None)
        };

        Ok(FoldOutput {
            subject: subject.to_string(),
            target_snr_db,
            plan,
            achieved_train_db,
            achieved_test_db,
            achieved_pooled_db,
            train_report,
            metrics_noisy,
            metrics_bpf,
            metrics_recon,
            features,
            traces,
            model: kept_model,
        })
    }
}

/// Integrates a trace, fixes the burst threshold from its pooled baseline
/// samples, and extracts windowed burst features.
pub fn burst_feature_table(
    trace: &SampledSignal,
    subject: &str,
    ty: SignalType,
    tau_s: f64,
    window_s: f64,
) -> Result<FeatureTable, CliError> {
    let fail = |e: &dyn Display| CliError::Data(format!("features for '{subject}' ({ty}): {e}"));
    let isk = iskna(trace, tau_s).map_err(|e| fail(&e))?;
    let baseline: Vec<f64> = isk
        .periods
        .iter()
        .filter(|p| p.condition == Condition::Baseline)
        .flat_map(|p| isk.samples[p.start..p.end].iter().copied())
        .collect();
    let thr = burst_threshold(&baseline, subject, ty).map_err(|e| fail(&e))?;
    extract_features(&isk, &thr, window_s).map_err(|e| fail(&e))
}

/// Clean rows referenced by a mixing plan, in plan order, so the result is
/// row-for-row paired with the plan's contaminated set.
fn gather_clean_rows(clean: &SegmentSet, pairs: &[PairRecord]) -> SegmentSet {
    let mut out = SegmentSet::new(clean.fs, clean.window_len, clean.overlap);
    for p in pairs {
        let meta = clean.meta(p.clean_index);
        out.push(
            clean.subject_name(p.clean_index),
            meta.condition,
            meta.start,
            clean.segment(p.clean_index),
        )
        .expect("rows copied between sets with the same window length");
    }
    out
}

/// Contamination levels actually realised by a mixing plan, measured
/// against the paired clean rows: train-side, test-side, and pooled dB.
pub fn achieved_levels(clean: &SegmentSet, mix: &MixOutput) -> (f64, f64, f64) {
    let (train_sig, train_err) = pair_powers(clean, &mix.train_noisy, &mix.plan.train_pairs);
    let (test_sig, test_err) = pair_powers(clean, &mix.test_noisy, &mix.plan.test_pairs);
    (
        power_db(train_sig, train_err),
        power_db(test_sig, test_err),
        power_db(train_sig + test_sig, train_err + test_err),
    )
}

/// Sums signal power and contamination power over the paired rows.
fn pair_powers(clean: &SegmentSet, mixed: &SegmentSet, pairs: &[PairRecord]) -> (f64, f64) {
    let mut p_sig = 0.0;
    let mut p_err = 0.0;
    for (row, pair) in pairs.iter().enumerate() {
        let c = clean.segment(pair.clean_index);
        let m = mixed.segment(row);
        for (&cv, &mv) in c.iter().zip(m) {
            p_sig += cv * cv;
            let e = mv - cv;
            p_err += e * e;
        }
    }
    (p_sig, p_err)
}

fn power_db(p_sig: f64, p_err: f64) -> f64 {
    10.0 * (p_sig / p_err).log10()
}

/// Truncates a trace to its first `n` samples, clipping periods to match.
fn clip_trace(sig: &SampledSignal, n: usize) -> SampledSignal {
    if sig.len() == n {
        return sig.clone();
    }
    let samples = sig.samples[..n].to_vec();
    let periods: Vec<Period> = sig
        .periods
        .iter()
        .filter(|p| p.start < n)
        .map(|p| Period {
            start: p.start,
            end: p.end.min(n),
            condition: p.condition,
        })
        .collect();
    SampledSignal::new(sig.fs, samples, periods).expect("clipped periods remain valid")
}

// ---------------------------------------------------------------------------
// Fold outputs
// ---------------------------------------------------------------------------

/// The training half of a fold: the mixing plan, the held-out contaminated
/// windows, and the trained model, ready for reconstruction and scoring.
#[derive(Debug)]
pub struct FoldTraining {
    pub plan: MixPlan,
    pub test_noisy: SegmentSet,
    pub model: DenoiserModel,
    pub report: TrainReport,
    pub achieved_train_db: f64,
    pub achieved_test_db: f64,
    pub achieved_pooled_db: f64,
}

/// A fold that could not complete; the run continues without it.
#[derive(Debug, Clone)]
pub struct FoldAbort {
    pub subject: String,
    pub stage: &'static str,
    pub message: String,
}

/// Held-out traces kept for figures (first fold subject only).
#[derive(Debug, Clone)]
pub struct FoldTraces {
    pub subject: String,
    pub clean: SampledSignal,
    pub noisy: SampledSignal,
    pub bpf: SampledSignal,
    pub recon: SampledSignal,
}

/// Everything measured on one completed fold.
#[derive(Debug)]
pub struct FoldOutput {
    pub subject: String,
    pub target_snr_db: f64,
    pub plan: MixPlan,
    pub achieved_train_db: f64,
    pub achieved_test_db: f64,
    pub achieved_pooled_db: f64,
    pub train_report: TrainReport,
    pub metrics_noisy: ReconMetrics,
    pub metrics_bpf: ReconMetrics,
    pub metrics_recon: ReconMetrics,
    /// Burst features of the reconstructed and band-pass-only traces.
    pub features: FeatureTable,
    pub traces: Option<FoldTraces>,
    /// Trained network of the fold that also keeps traces, persisted as a
    /// checkpoint alongside the report.
    pub model: Option<Box<DenoiserModel>>,
}

// ---------------------------------------------------------------------------
// Pooled statistics
// ---------------------------------------------------------------------------

/// One feature's baseline-vs-stimulation test battery for one signal type.
#[derive(Debug, Clone)]
pub struct FeatureStatRow {
    pub signal_type: SignalType,
    pub feature: &'static str,
    pub kw_h: f64,
    pub kw_p: f64,
    /// Pooled windows entering the rank test.
    pub kw_n: usize,
    /// Paired per-subject test; run only when the omnibus test rejects.
    pub wilcoxon_w: Option<f64>,
    pub wilcoxon_p: Option<f64>,
    pub auroc: f64,
    pub fisher: Option<f64>,
    pub stars: &'static str,
}

/// Baseline-vs-stimulation statistics for every feature of one signal
/// type: Kruskal-Wallis on pooled windows, a paired signed-rank test on
/// per-subject means when the omnibus test rejects at 0.05, discrimination
/// AUROC (stimulation positive), and Fisher's ratio.
pub fn feature_stats(
    table: &FeatureTable,
    st: SignalType,
) -> Result<Vec<FeatureStatRow>, CliError> {
    let rows: Vec<&FeatureRow> = table.filter(|r| r.signal_type == st).collect();
    let mut out = Vec::new();
    for feature in FEATURE_NAMES {
        let pick = |cond: Condition| -> Vec<f64> {
            rows.iter()
                .filter(|r| r.condition == cond)
                .map(|r| r.feature(feature).expect("known feature name"))
                .collect()
        };
        let base = pick(Condition::Baseline);
        let stim = pick(Condition::Stimulation);
        if base.is_empty() || stim.is_empty() {
            return Err(CliError::Data(format!(
                "cannot test '{feature}' for {st}: a condition has no feature windows"
            )));
        }
        let kw = kruskal_wallis(&[&base, &stim])
            .map_err(|e| CliError::Data(format!("rank test for '{feature}' ({st}): {e}")))?;
        let auc = auroc(&stim, &base)
            .map_err(|e| CliError::Data(format!("AUROC for '{feature}' ({st}): {e}")))?;
        let fisher = fishers_ratio(&stim, &base).ok();

        let (wilcoxon_w, wilcoxon_p) = if kw.p_value < 0.05 {
            let (x, y) = paired_subject_means(&rows, feature);
            match wilcoxon_signed_rank(&x, &y) {
                Ok(w) => (Some(w.statistic), Some(w.p_value)),
                Err(_) => (None, None),
            }
        } else {
            (None, None)
        };
        let stars = match wilcoxon_p {
            Some(p) => stars_for(p),
            None => "n.s.",
        };
        out.push(FeatureStatRow {
            signal_type: st,
            feature,
            kw_h: kw.statistic,
            kw_p: kw.p_value,
            kw_n: kw.n,
            wilcoxon_w,
            wilcoxon_p,
            auroc: auc,
            fisher,
            stars,
        });
    }
    Ok(out)
}

/// Per-subject mean feature under each condition, for subjects having
/// windows of both; returns (stimulation means, baseline means) aligned by
/// subject in sorted order.
fn paired_subject_means(rows: &[&FeatureRow], feature: &str) -> (Vec<f64>, Vec<f64>) {
    #[derive(Default)]
    struct Acc {
        base_sum: f64,
        base_n: usize,
        stim_sum: f64,
        stim_n: usize,
    }
    let mut accs: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in rows {
        let a = accs.entry(r.subject.as_str()).or_default();
        let v = r.feature(feature).expect("known feature name");
        match r.condition {
            Condition::Baseline => {
                a.base_sum += v;
                a.base_n += 1;
            }
            Condition::Stimulation => {
                a.stim_sum += v;
                a.stim_n += 1;
            }
        }
    }
    let mut stim = Vec::new();
    let mut base = Vec::new();
    for a in accs.values() {
        if a.base_n > 0 && a.stim_n > 0 {
            stim.push(a.stim_sum / a.stim_n as f64);
            base.push(a.base_sum / a.base_n as f64);
        }
    }
    (stim, base)
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// One held-out subject's scores for one classifier on one signal type.
#[derive(Debug, Clone)]
pub struct ClassFoldRow {
    pub signal_type: SignalType,
    pub classifier: ClassifierKind,
    pub subject: String,
    pub metrics: FoldMetrics,
}

/// Across-fold summary for one classifier on one signal type.
#[derive(Debug, Clone)]
pub struct ClassSummary {
    pub signal_type: SignalType,
    pub classifier: ClassifierKind,
    pub folds: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Mean over folds that had both classes in the test set.
    pub mean_auc: Option<f64>,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
    pub mean_f1: f64,
}

/// Leave-one-subject-out classification of baseline vs stimulation windows
/// for one signal type: per fold, standardize on the training subjects,
/// fit each classifier, and score the held-out subject's windows.
pub fn classify_loso(
    table: &FeatureTable,
    st: SignalType,
    kinds: &[ClassifierKind],
    seed_base: u64,
) -> Result<(Vec<ClassFoldRow>, Vec<ClassSummary>), CliError> {
    let rows: Vec<&FeatureRow> = table.filter(|r| r.signal_type == st).collect();
    let subjects: Vec<&str> = rows
        .iter()
        .map(|r| r.subject.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < 2 {
        return Err(CliError::Data(format!(
            "classification for {st} needs at least 2 subjects with feature windows, found {}",
            subjects.len()
        )));
    }

    let mut fold_rows = Vec::new();
    let mut summaries = Vec::new();
    for &kind in kinds {
        let mut per_kind = Vec::new();
        for (fi, &subj) in subjects.iter().enumerate() {
            let mut x_tr = Vec::new();
            let mut y_tr = Vec::new();
            let mut x_te = Vec::new();
            let mut y_te = Vec::new();
            for r in &rows {
                let x = r.vector().to_vec();
                let y = r.condition == Condition::Stimulation;
                if r.subject == subj {
                    x_te.push(x);
                    y_te.push(y);
                } else {
                    x_tr.push(x);
                    y_tr.push(y);
                }
            }
            standardize_features(&mut x_tr, &mut x_te);
            let spec = ClassifierSpec {
                kind,
                seed: derive_seed(seed_base, kind.as_str(), fi as u64),
            };
            let model = train_classifier(&spec, &x_tr, &y_tr).map_err(|e| {
                CliError::Data(format!("training {} for {st}, fold '{subj}': {e}", kind.as_str()))
            })?;
            let metrics = evaluate_fold(&model, &x_te, &y_te).map_err(|e| {
                CliError::Data(format!("scoring {} for {st}, fold '{subj}': {e}", kind.as_str()))
            })?;
            per_kind.push(ClassFoldRow {
                signal_type: st,
                classifier: kind,
                subject: subj.to_string(),
                metrics,
            });
        }

        let n = per_kind.len();
        let accs: Vec<f64> = per_kind.iter().map(|r| r.metrics.accuracy).collect();
        let mean_accuracy = accs.iter().sum::<f64>() / n as f64;
        let std_accuracy = if n > 1 {
            (accs
                .iter()
                .map(|a| (a - mean_accuracy) * (a - mean_accuracy))
                .sum::<f64>()
                / (n - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let aucs: Vec<f64> = per_kind.iter().filter_map(|r| r.metrics.auc).collect();
        let mean = |f: fn(&FoldMetrics) -> f64| -> f64 {
            per_kind.iter().map(|r| f(&r.metrics)).sum::<f64>() / n as f64
        };
        summaries.push(ClassSummary {
            signal_type: st,
            classifier: kind,
            folds: n,
            mean_accuracy,
            std_accuracy,
            mean_auc: if aucs.is_empty() {
                None
            } else {
                Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
            },
            mean_sensitivity: mean(|m| m.sensitivity),
            mean_specificity: mean(|m| m.specificity),
            mean_f1: mean(|m| m.f1),
        });
        fold_rows.extend(per_kind);
    }
    Ok((fold_rows, summaries))
}

// ---------------------------------------------------------------------------
// Whole-run orchestration
// ---------------------------------------------------------------------------

/// Results at one target SNR: folds, pooled features (clean rows
/// included), statistics, and classification.
pub struct SnrBlock {
    pub target_snr_db: f64,
    pub tag: String,
    pub folds: Vec<FoldOutput>,
    pub aborted: Vec<FoldAbort>,
    pub features: FeatureTable,
    pub stats: Vec<FeatureStatRow>,
    pub class_rows: Vec<ClassFoldRow>,
    pub class_summaries: Vec<ClassSummary>,
    /// Held-out traces of the first fold subject, for figures.
    pub traces: Option<FoldTraces>,
}

/// A complete leave-one-subject-out run over every configured SNR.
pub struct LosoOutcome {
    pub config_hash: String,
    pub master_seed: u64,
    pub subjects: Vec<String>,
    pub clean_features: FeatureTable,
    pub blocks: Vec<SnrBlock>,
    pub wall_s: f64,
}

impl LosoOutcome {
    /// True when any fold aborted.
    pub fn is_partial(&self) -> bool {
        self.blocks.iter().any(|b| !b.aborted.is_empty())
    }
}

/// Runs the full experiment: one fold per (SNR, held-out subject), then
/// pooled statistics and classification per SNR. `jobs` bounds the number
/// of folds trained concurrently; results are identical for any value.
pub fn run_loso(cfg: &ExperimentConfig, jobs: usize) -> Result<LosoOutcome, CliError> {
    let t0 = Instant::now();
    let exp = Experiment::prepare(cfg)?;
    let fold_subjects = exp.fold_subjects()?;
    let kinds = cfg.classifier_kinds();

    let clean_features = exp.clean_feature_table(&fold_subjects)?;
    let (clean_rows, clean_summaries) = classify_loso(
        &clean_features,
        SignalType::Clean,
        &kinds,
        derive_seed(cfg.master_seed, "classify-clean", 0),
    )?;

    let mut blocks = Vec::new();
    for (si, &snr) in cfg.target_snr_db.iter().enumerate() {
        let snr_seed = derive_seed(cfg.master_seed, "snr", si as u64);
        let results = run_folds(&exp, snr, snr_seed, &fold_subjects, jobs);
        let mut folds = Vec::new();
        let mut aborted = Vec::new();
        for r in results {
            match r {
                Ok(f) => folds.push(f),
                Err(a) => {
                    eprintln!(
                        "warning: fold '{}' at {} dB aborted during {}: {}",
                        a.subject, snr, a.stage, a.message
                    );
                    aborted.push(a);
                }
            }
        }

        let mut features = clean_features.clone();
        for f in &folds {
            features.extend(f.features.clone());
        }

        let mut stats = Vec::new();
        let mut class_rows = clean_rows.clone();
        let mut class_summaries = clean_summaries.clone();
        for st in [SignalType::Clean, SignalType::Bpf, SignalType::Recon] {
            if !features.rows.iter().any(|r| r.signal_type == st) {
                eprintln!("warning: no {st} feature windows at {snr} dB; skipping its statistics");
                continue;
            }
            stats.extend(feature_stats(&features, st)?);
            if st != SignalType::Clean {
                let seed_base = derive_seed(snr_seed, st.as_str(), 0);
                let (r, s) = classify_loso(&features, st, &kinds, seed_base)?;
                class_rows.extend(r);
                class_summaries.extend(s);
            }
        }

        let traces = folds.iter_mut().find_map(|f| f.traces.take());
        blocks.push(SnrBlock {
            target_snr_db: snr,
            tag: snr_tag(snr),
            folds,
            aborted,
            features,
            stats,
            class_rows,
            class_summaries,
            traces,
        });
    }

    Ok(LosoOutcome {
        config_hash: exp.config_hash.clone(),
        master_seed: cfg.master_seed,
        subjects: fold_subjects,
        clean_features,
        blocks,
        wall_s: t0.elapsed().as_secs_f64(),
    })
}

/// Executes the folds of one SNR over a small worker pool. Work is pulled
/// from an atomic counter and written into an index-keyed slot, so the
/// result order (and every seed) is independent of scheduling.
fn run_folds(
    exp: &Experiment,
    snr: f64,
    snr_seed: u64,
    subjects: &[String],
    jobs: usize,
) -> Vec<Result<FoldOutput, FoldAbort>> {
    let n = subjects.len();
    let workers = jobs.clamp(1, n.max(1));
    let slots: Mutex<Vec<Option<Result<FoldOutput, FoldAbort>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let keep = i == 0;
                let out = exp.run_fold(snr, snr_seed, &subjects[i], keep);
                if out.is_ok() {
                    eprintln!("fold '{}' at {snr} dB finished", subjects[i]);
                }
                slots.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker threads joined")
        .into_iter()
        .map(|o| o.expect("every fold slot filled"))
        .collect()
}

// ---------------------------------------------------------------------------

/// Two subjects, 12 s baseline + 12 s stimulation, one SNR, one epoch:
/// small enough to run in seconds while exercising the whole pipeline.
#[cfg(test)]
pub(crate) fn tiny_config_for_tests() -> ExperimentConfig {
    use crate::config::GenerateSpec;
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = DatasetSource::Generate(GenerateSpec {
        n_subjects: 2,
        seed: 99,
        fs: 2048.0,
        steps: vec![("baseline".into(), 12.0), ("stimulation".into(), 12.0)],
        emg_fs: 4000.0,
        emg_duration_s: 30.0,
    });
    cfg.target_snr_db = vec![-4.0];
    cfg.segmentation.train_overlap = 0.0;
    cfg.segmentation.test_overlap = 0.5;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 8;
    cfg.master_seed = 7;
    cfg
}
