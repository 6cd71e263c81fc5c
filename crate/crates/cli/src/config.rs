//! Experiment configuration: the structured file format consumed by every
//! subcommand, its validation rules, command-line overrides, and the
//! provenance hash stamped on every emitted table.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skna_core::signal::Condition;
use skna_core::synth::{DatasetConfig, ProtocolSpec};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Seed used when a config does not pin one ("SKNA" in ASCII). Keeping a
/// fixed default preserves replayability: the hash of the resolved config
/// always records the seed actually used.
pub const DEFAULT_MASTER_SEED: u64 = 0x534B_4E41;

fn default_master_seed() -> u64 {
    DEFAULT_MASTER_SEED
}

fn default_snrs() -> Vec<f64> {
    vec![-4.0, -8.0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("skna-run")
}

fn default_classifiers() -> Vec<String> {
    vec![
        "random_forest".into(),
        "svm_rbf".into(),
        "logistic_regression".into(),
    ]
}

/// Where the recordings come from: an existing container file or an
/// inline synthesis spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Path { path: PathBuf },
    Generate(GenerateSpec),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Generate(GenerateSpec::default())
    }
}

/// Inline dataset synthesis parameters. `seed` fixes the dataset (subject
/// profiles and noise records); the experiment's `master_seed` drives
/// everything downstream of the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    #[serde(default = "d_subjects")]
    pub n_subjects: usize,
    #[serde(default = "d_dataset_seed")]
    pub seed: u64,
    #[serde(default = "d_fs")]
    pub fs: f64,
    /// Ordered (condition, duration seconds) steps; conditions are
    /// "baseline" or "stimulation".
    #[serde(default = "d_steps")]
    pub steps: Vec<(String, f64)>,
    #[serde(default = "d_emg_fs")]
    pub emg_fs: f64,
    #[serde(default = "d_emg_duration")]
    pub emg_duration_s: f64,
}

fn d_subjects() -> usize {
    12
}
fn d_dataset_seed() -> u64 {
    DEFAULT_MASTER_SEED
}
fn d_fs() -> f64 {
    2048.0
}
fn d_steps() -> Vec<(String, f64)> {
    vec![
        ("baseline".into(), 120.0),
        ("stimulation".into(), 300.0),
        ("baseline".into(), 120.0),
        ("stimulation".into(), 300.0),
    ]
}
fn d_emg_fs() -> f64 {
    4000.0
}
fn d_emg_duration() -> f64 {
    // Must cover the default 840 s protocol: the held-out recording is
    // contaminated with one continuous noise slice.
    900.0
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            n_subjects: d_subjects(),
            seed: d_dataset_seed(),
            fs: d_fs(),
            steps: d_steps(),
            emg_fs: d_emg_fs(),
            emg_duration_s: d_emg_duration(),
        }
    }
}

impl GenerateSpec {
    pub fn protocol(&self) -> Result<ProtocolSpec, CliError> {
        let mut steps = Vec::with_capacity(self.steps.len());
        for (name, dur) in &self.steps {
            let condition = match name.as_str() {
                "baseline" => Condition::Baseline,
                "stimulation" => Condition::Stimulation,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown protocol condition '{other}' (expected 'baseline' or 'stimulation')"
                    )))
                }
            };
            steps.push((condition, *dur));
        }
        Ok(ProtocolSpec { fs: self.fs, steps })
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig, CliError> {
        Ok(DatasetConfig {
            n_subjects: self.n_subjects,
            protocol: self.protocol()?,
            emg_fs: self.emg_fs,
            emg_duration_s: self.emg_duration_s,
            master_seed: self.seed,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |m: String| Err(CliError::Config(m));
        if self.n_subjects < 2 {
            return cfg_err(format!(
                "dataset needs at least 2 subjects for leave-one-subject-out, got {}",
                self.n_subjects
            ));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return cfg_err(format!("sample rate {} must be positive", self.fs));
        }
        if self.steps.is_empty() {
            return cfg_err("protocol has no steps".into());
        }
        for (name, dur) in &self.steps {
            if !(*dur > 0.0 && dur.is_finite()) {
                return cfg_err(format!("protocol step '{name}' has duration {dur}"));
            }
        }
        let protocol_s: f64 = self.steps.iter().map(|(_, d)| d).sum();
        if self.emg_duration_s < protocol_s {
            return cfg_err(format!(
                "noise recordings ({} s) must be at least as long as the protocol ({} s) \
                 so a held-out recording can be contaminated with one continuous slice",
                self.emg_duration_s, protocol_s
            ));
        }
        self.protocol()?;
        Ok(())
    }
}

/// Conventional signal conditioning applied to every recording before any
/// mixing or learning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessParams {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            band_lo_hz: 500.0,
            band_hi_hz: 1000.0,
            notch_hz: 762.0,
            notch_q: 35.0,
        }
    }
}

/// Windowing used for training pairs and for held-out reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationParams {
    pub window_s: f64,
    /// Overlap of the training segmentation (0.0 or 0.5).
    pub train_overlap: f64,
    /// Overlap used when reconstructing the held-out subject (0.0 or 0.5).
    pub test_overlap: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            window_s: 1.0,
            train_overlap: 0.5,
            test_overlap: 0.5,
        }
    }
}

/// Denoiser optimization parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

/// Integration and burst-feature parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    /// Leaky-integrator time constant (seconds).
    pub tau_s: f64,
    /// Feature window length (seconds, non-overlapping).
    pub window_s: f64,
    /// Moving-average span for the averaged trace shown in figures.
    pub askna_window_s: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            tau_s: 0.1,
            window_s: 10.0,
            askna_window_s: 5.0,
        }
    }
}

/// The complete experiment description. Serializes to a structured text
/// file; every emitted table carries the SHA-256 hash of the resolved
/// form, so a report is traceable to the exact configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "default_snrs")]
    pub target_snr_db: Vec<f64>,
    #[serde(default)]
    pub preprocess: PreprocessParams,
    #[serde(default)]
    pub segmentation: SegmentationParams,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub features: FeatureParams,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<String>,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// When set, only these subjects serve as held-out folds (all
    /// subjects still participate in training splits).
    #[serde(default)]
    pub subjects: Option<Vec<String>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            target_snr_db: default_snrs(),
            preprocess: PreprocessParams::default(),
            segmentation: SegmentationParams::default(),
            train: TrainParams::default(),
            features: FeatureParams::default(),
            classifiers: default_classifiers(),
            master_seed: default_master_seed(),
            out_dir: default_out_dir(),
            subjects: None,
        }
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub subjects: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("cannot parse config {}: {e}", path.display()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.master_seed = seed;
        }
        if let Some(snr) = &o.snr {
            self.target_snr_db = snr.clone();
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(subjects) = &o.subjects {
            self.subjects = Some(subjects.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |m: String| Err(CliError::Config(m));
        if self.target_snr_db.is_empty() {
            return cfg_err("target_snr_db must list at least one SNR target".into());
        }
        if self.target_snr_db.iter().any(|v| !v.is_finite()) {
            return cfg_err("target_snr_db entries must be finite".into());
        }
        if let DatasetSource::Generate(spec) = &self.dataset {
            spec.validate()?;
        }
        let p = &self.preprocess;
        if !(p.band_lo_hz > 0.0 && p.band_lo_hz < p.band_hi_hz) {
            return cfg_err(format!(
                "bandpass edges ({}, {}) must satisfy 0 < lo < hi",
                p.band_lo_hz, p.band_hi_hz
            ));
        }
        if !(p.notch_hz > 0.0 && p.notch_q > 0.0) {
            return cfg_err("notch frequency and Q must be positive".into());
        }
        let s = &self.segmentation;
        if !(s.window_s > 0.0 && s.window_s.is_finite()) {
            return cfg_err(format!("window_s {} must be positive", s.window_s));
        }
        for (name, ov) in [("train_overlap", s.train_overlap), ("test_overlap", s.test_overlap)] {
            if ov != 0.0 && ov != 0.5 {
                return cfg_err(format!("{name} must be 0.0 or 0.5, got {ov}"));
            }
        }
        let t = &self.train;
        if t.epochs == 0 {
            return cfg_err("train.epochs must be at least 1".into());
        }
        if t.batch_size < 2 || t.batch_size % 2 != 0 {
            return cfg_err(format!(
                "train.batch_size {} must be even (batches are balanced across the two conditions)",
                t.batch_size
            ));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return cfg_err(format!("train.lr {} must be positive", t.lr));
        }
        let f = &self.features;
        if !(f.tau_s > 0.0 && f.window_s > 0.0 && f.askna_window_s > 0.0) {
            return cfg_err("feature parameters must be positive".into());
        }
        if self.classifiers.is_empty() {
            return cfg_err("classifiers must list at least one model".into());
        }
        for name in &self.classifiers {
            if parse_classifier(name).is_none() {
                return cfg_err(format!(
                    "unknown classifier '{name}' (expected random_forest, svm_rbf, or logistic_regression)"
                ));
            }
        }
        if let Some(subjects) = &self.subjects {
            if subjects.is_empty() {
                return cfg_err("subjects override must not be empty".into());
            }
        }
        Ok(())
    }

    /// Hex prefix of the SHA-256 of the canonical JSON form. Any change to
    /// any field changes the hash.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn classifier_kinds(&self) -> Vec<skna_classify::ClassifierKind> {
        self.classifiers
            .iter()
            .filter_map(|n| parse_classifier(n))
            .collect()
    }
}

pub fn parse_classifier(name: &str) -> Option<skna_classify::ClassifierKind> {
    use skna_classify::ClassifierKind::*;
    match name {
        "random_forest" | "rf" => Some(RandomForest),
        "svm_rbf" | "svm" => Some(SvmRbf),
        "logistic_regression" | "lr" => Some(LogisticRegression),
        _ => None,
    }
}

/// File-name tag for an SNR level: `-4.0 -> m4_00dB`, `3.0 -> p3_00dB`.
pub fn snr_tag(v: f64) -> String {
    let sign = if v < 0.0 { "m" } else { "p" };
    format!("{}{}dB", sign, format!("{:.2}", v.abs()).replace('.', "_"))
}

/// Inverse of [`snr_tag`], used when re-rendering figures from an existing
/// report directory.
pub fn parse_snr_tag(tag: &str) -> Option<f64> {
    let body = tag.strip_suffix("dB")?;
    let (sign, digits) = match body.split_at_checked(1)? {
        ("m", rest) => (-1.0, rest),
        ("p", rest) => (1.0, rest),
        _ => return None,
    };
    digits.replace('_', ".").parse::<f64>().ok().map(|v| sign * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_hashes_stably() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let h1 = cfg.config_hash();
        let h2 = cfg.config_hash();
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 16);
        let mut other = cfg.clone();
        other.master_seed += 1;
        assert_ne!(h1, other.config_hash());
    }

    #[test]
    fn toml_round_trip_preserves_the_config() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn bad_settings_are_rejected_with_config_errors() {
        let mut cfg = ExperimentConfig::default();
        cfg.target_snr_db.clear();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));

        let mut cfg = ExperimentConfig::default();
        cfg.train.batch_size = 7;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.segmentation.train_overlap = 0.25;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.classifiers = vec!["nearest_centroid".into()];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        if let DatasetSource::Generate(spec) = &mut cfg.dataset {
            spec.emg_duration_s = 10.0;
        }
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.target_snr_db, vec![-4.0, -8.0]);
        assert_eq!(cfg.master_seed, DEFAULT_MASTER_SEED);
        assert_eq!(cfg.train.epochs, 200);
    }

    #[test]
    fn snr_tags_are_filename_safe() {
        assert_eq!(snr_tag(-4.0), "m4_00dB");
        assert_eq!(snr_tag(-8.0), "m8_00dB");
        assert_eq!(snr_tag(2.5), "p2_50dB");
        for v in [-8.0, -4.0, 0.0, 2.5, 13.75] {
            assert_eq!(parse_snr_tag(&snr_tag(v)), Some(v));
        }
        assert_eq!(parse_snr_tag("x4_00dB"), None);
        assert_eq!(parse_snr_tag("m4_00"), None);
    }

    #[test]
    fn dataset_path_variant_parses() {
        let cfg: ExperimentConfig =
            toml::from_str("[dataset]\npath = \"data/run.skna\"\n").unwrap();
        match cfg.dataset {
            DatasetSource::Path { path } => assert_eq!(path, PathBuf::from("data/run.skna")),
            _ => panic!("expected path variant"),
        }
    }
}
