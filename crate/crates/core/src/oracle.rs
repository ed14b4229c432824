use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use subact_tensor::rng::{hash_str, rng_from};

use crate::config::OracleSpec;
use crate::data::{Segment, SubActionTrack};
use crate::error::CoreError;
use crate::labels::NONE_SUB_ID;

/// Frozen stand-in for a pre-trained segmentation model. Produces sub-action
/// tracks without gradients and is never updated by training.
pub enum SegmentationOracle {
    GroundTruth,
    ErrorInjected { rate: f64, seed: u64 },
    FromFile { predictions: BTreeMap<String, SubActionTrack> },
}

impl SegmentationOracle {
    pub fn from_spec(spec: &OracleSpec) -> Result<SegmentationOracle, CoreError> {
        spec.validate()?;
        Ok(match spec {
            OracleSpec::GroundTruth => SegmentationOracle::GroundTruth,
            OracleSpec::ErrorInjected { rate, seed } => SegmentationOracle::ErrorInjected {
                rate: *rate,
                seed: *seed,
            },
            OracleSpec::FromFile { path } => SegmentationOracle::FromFile {
                predictions: read_predictions(path)?,
            },
        })
    }

    /// Produces the track the model will condition on for one sample.
    /// Deterministic per (sample id, oracle seed) regardless of call order.
    pub fn segment(
        &self,
        sample_id: &str,
        truth: &SubActionTrack,
        sub_class_count: usize,
    ) -> Result<SubActionTrack, CoreError> {
        match self {
            SegmentationOracle::GroundTruth => Ok(truth.clone()),
            SegmentationOracle::ErrorInjected { rate, seed } => {
                let sample_seed = subact_tensor::rng::derive_seed(&[*seed, hash_str(sample_id)]);
                inject_errors(truth, *rate, sample_seed, sub_class_count)
            }
            SegmentationOracle::FromFile { predictions } => predictions
                .get(sample_id)
                .cloned()
                .ok_or_else(|| CoreError::Lookup(format!("no stored prediction for sample {sample_id:?}"))),
        }
    }
}

/// Replaces each segment's class, independently with probability `rate`, by a
/// uniform draw over the other real classes. Boundaries and segment count are
/// untouched, preserving temporal continuity. Excluding the true class makes
/// expected segment accuracy exactly 1−rate.
pub fn inject_errors(
    track: &SubActionTrack,
    rate: f64,
    seed: u64,
    sub_class_count: usize,
) -> Result<SubActionTrack, CoreError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(CoreError::Config(format!("error rate {rate} outside [0,1]")));
    }
    // Real classes exclude the reserved NONE id.
    let real_classes = sub_class_count.saturating_sub(1);
    if real_classes < 2 {
        return Err(CoreError::Config(
            "error injection needs at least 2 sub-action classes".into(),
        ));
    }
    let mut rng = rng_from(&[seed, hash_str("inject")]);
    let segments = track
        .segments
        .iter()
        .map(|seg| {
            let mut class_id = seg.class_id;
            if rng.gen::<f64>() < rate {
                // Uniform over the other classes: draw from real classes minus
                // one slot, skipping past the true class.
                let draw = rng.gen_range(0..real_classes - 1);
                let mut replacement = draw + 1; // shift past NONE
                if replacement >= seg.class_id {
                    replacement += 1;
                }
                class_id = replacement;
            }
            Segment {
                class_id,
                start: seg.start,
                end: seg.end,
            }
        })
        .collect();
    Ok(SubActionTrack::new(segments))
}

/// Fraction of truth segments whose temporally matched prediction carries the
/// correct class. NONE padding never enters (tracks store real segments only).
pub fn segmentation_accuracy(pred: &SubActionTrack, truth: &SubActionTrack) -> Result<f64, CoreError> {
    if truth.segments.is_empty() {
        return Err(CoreError::UndefinedMetric(
            "segmentation accuracy over zero truth segments".into(),
        ));
    }
    debug_assert!(truth.segments.iter().all(|s| s.class_id != NONE_SUB_ID));
    let matched = pred
        .segments
        .iter()
        .zip(&truth.segments)
        .filter(|(p, t)| p.class_id == t.class_id)
        .count();
    Ok(matched as f64 / truth.segments.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    segments: Vec<(usize, usize, usize)>,
}

pub fn write_predictions(
    predictions: &BTreeMap<String, SubActionTrack>,
    path: &Path,
) -> Result<(), CoreError> {
    let mut out = String::new();
    for (id, track) in predictions {
        let line = serde_json::to_string(&PredictionLine {
            id: id.clone(),
            segments: track.segments.iter().map(|s| (s.class_id, s.start, s.end)).collect(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, SubActionTrack>, CoreError> {
    let file = std::fs::File::open(path)?;
    let mut predictions = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let text = line.map_err(|e| CoreError::Parse { line: lineno, detail: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: PredictionLine = serde_json::from_str(&text)
            .map_err(|e| CoreError::Parse { line: lineno, detail: e.to_string() })?;
        let track = SubActionTrack::new(
            rec.segments
                .iter()
                .map(|&(class_id, start, end)| Segment { class_id, start, end })
                .collect(),
        );
        predictions.insert(rec.id, track);
    }
    Ok(predictions)
}
