//! Model persistence on top of the engine checkpoint container: trainable
//! parameters plus batch-norm running statistics, with window length and
//! normalization stats carried in the manifest metadata.

use std::path::Path;

use serde_json::{json, Value};

use skna_core::dsp::NormStats;
use skna_nn::checkpoint;
use skna_nn::NnError;

use crate::model::{build_model_for, DenoiserModel};

const FORMAT: &str = "skna-denoiser";

fn snapshot(model: &mut DenoiserModel) -> Vec<(String, Vec<f64>)> {
    let mut entries = Vec::new();
    model.visit_params(&mut |name, values, _| entries.push((name.to_string(), values.clone())));
    model.visit_running_stats(&mut |name, values| entries.push((name.to_string(), values.clone())));
    entries
}

/// Writes the model (parameters, running stats, norm stats, window length)
/// plus caller metadata to one checkpoint file.
pub fn save_model(
    path: &Path,
    model: &mut DenoiserModel,
    extra: &Value,
) -> Result<(), NnError> {
    let entries = snapshot(model);
    let meta = json!({
        "format": FORMAT,
        "window_len": model.window_len,
        "norm": model.norm_stats,
        "extra": extra,
    });
    checkpoint::save(path, &entries, &meta)
}

/// Rebuilds a model from a checkpoint written by [`save_model`]; returns
/// the model and the caller metadata stored alongside it.
pub fn load_model(path: &Path) -> Result<(DenoiserModel, Value), NnError> {
    let (entries, meta) = checkpoint::load(path)?;
    if meta.get("format").and_then(Value::as_str) != Some(FORMAT) {
        return Err(NnError::BadCheckpoint(
            "metadata is missing the denoiser format marker".into(),
        ));
    }
    let window_len = meta
        .get("window_len")
        .and_then(Value::as_u64)
        .ok_or_else(|| NnError::BadCheckpoint("metadata lacks a window length".into()))? as usize;
    let norm_stats: Option<NormStats> = match meta.get("norm") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| {
            NnError::BadCheckpoint(format!("normalization stats are malformed: {e}"))
        })?),
    };

    let mut model = build_model_for(0, window_len);
    let mut cursor = 0usize;
    let mut fill_err: Option<NnError> = None;
    {
        let mut fill = |name: &str, values: &mut Vec<f64>| {
            if fill_err.is_some() {
                return;
            }
            match entries.get(cursor) {
                Some((stored_name, stored)) if stored_name == name => {
                    if stored.len() != values.len() {
                        fill_err = Some(NnError::BadCheckpoint(format!(
                            "parameter {name} has {} values, expected {}",
                            stored.len(),
                            values.len()
                        )));
                    } else {
                        values.copy_from_slice(stored);
                    }
                }
                Some((stored_name, _)) => {
                    fill_err = Some(NnError::BadCheckpoint(format!(
                        "parameter order mismatch: found {stored_name}, expected {name}"
                    )));
                }
                None => {
                    fill_err = Some(NnError::BadCheckpoint(format!(
                        "checkpoint ends before parameter {name}"
                    )));
                }
            }
            cursor += 1;
        };
        model.visit_params(&mut |name, values, _| fill(name, values));
        model.visit_running_stats(&mut |name, values| fill(name, values));
    }
    if let Some(e) = fill_err {
        return Err(e);
    }
    if cursor != entries.len() {
        return Err(NnError::BadCheckpoint(format!(
            "checkpoint has {} extra parameter blocks",
            entries.len() - cursor
        )));
    }
    model.norm_stats = norm_stats;
    let extra = meta.get("extra").cloned().unwrap_or(Value::Null);
    Ok((model, extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{train, TrainConfig};
    use skna_core::signal::{Condition, SegmentSet};
    use skna_nn::{Mode, Tensor3};

    fn trained_model(w: usize) -> DenoiserModel {
        let mut model = build_model_for(21, w);
        let mut noisy = SegmentSet::new(w as f64, w, 0.0);
        let mut clean = SegmentSet::new(w as f64, w, 0.0);
        for k in 0..4 {
            let condition = if k % 2 == 0 {
                Condition::Baseline
            } else {
                Condition::Stimulation
            };
            let t: Vec<f64> = (0..w).map(|i| ((i * (k + 1)) as f64 * 0.2).sin()).collect();
            let x: Vec<f64> = t.iter().map(|v| v * 0.9 + 0.05).collect();
            clean.push("s", condition, k * w, &t).unwrap();
            noisy.push("s", condition, k * w, &x).unwrap();
        }
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            lr: 1e-3,
            seed: 4,
        };
        train(&mut model, &noisy, &clean, &cfg).unwrap();
        model.norm_stats = Some(NormStats::new(0.25, 1.5).unwrap());
        model
    }

    #[test]
    fn save_load_round_trip_preserves_behaviour() {
        let w = 32;
        let mut model = trained_model(w);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_model(&path, &mut model, &json!({"fold": "s3"})).unwrap();

        let (mut loaded, extra) = load_model(&path).unwrap();
        assert_eq!(extra["fold"], "s3");
        assert_eq!(loaded.window_len, w);
        assert_eq!(loaded.norm_stats, model.norm_stats);

        // Stored values are exactly the f32 rounding of the originals.
        let mut orig = Vec::new();
        model.visit_params(&mut |_, v, _| orig.extend(v.clone()));
        let mut back = Vec::new();
        loaded.visit_params(&mut |_, v, _| back.extend(v.clone()));
        assert_eq!(orig.len(), back.len());
        for (o, b) in orig.iter().zip(&back) {
            assert_eq!(*b, *o as f32 as f64);
        }

        // Eval outputs agree to f32 precision.
        let x = Tensor3::from_vec(1, 1, w, (0..w).map(|i| (i as f64 * 0.11).cos()).collect())
            .unwrap();
        let ya = model.forward(&x, Mode::Eval).unwrap();
        let yb = loaded.forward(&x, Mode::Eval).unwrap();
        for (a, b) in ya.data.iter().zip(&yb.data) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_saves_are_byte_identical() {
        let w = 32;
        let mut model = trained_model(w);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_model(&p1, &mut model, &Value::Null).unwrap();
        save_model(&p2, &mut model, &Value::Null).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn foreign_and_mismatched_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();

        // A raw engine checkpoint without the model format marker.
        let plain = dir.path().join("plain.ckpt");
        checkpoint::save(
            &plain,
            &[("w".to_string(), vec![1.0, 2.0])],
            &json!({"note": "not a model"}),
        )
        .unwrap();
        assert!(load_model(&plain).is_err());

        // Right marker, wrong parameter inventory.
        let partial = dir.path().join("partial.ckpt");
        checkpoint::save(
            &partial,
            &[("enc1.w".to_string(), vec![0.0; 48])],
            &json!({"format": FORMAT, "window_len": 32}),
        )
        .unwrap();
        let err = load_model(&partial).unwrap_err();
        assert!(err.to_string().contains("enc1"), "{err}");
    }
}
