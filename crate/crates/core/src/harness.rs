//! Experiment harness: evaluation, the observation-ratio protocol, ablation
//! sweeps, label-merge preprocessing, attention export, throughput
//! measurement, and deterministic artifact writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use subact_tensor::rng::{derive_seed, hash_str};

use crate::config::{FusionVariant, LossWeights, ModelConfig, RunConfig, SubActionInput};
use crate::data::{
    interpolate_nearest, read_dataset, resample_track, Dataset, Sample, Segment, SubActionTrack,
};
use crate::error::CoreError;
use crate::labels::{merge_labels, retrieve_text, LabelKind, LabelMap, MergeReport, NONE_SUB_ID};
use crate::model::{prepare_batch, SasiModel};
use crate::nn::ForwardCtx;
use crate::oracle::{segmentation_accuracy, SegmentationOracle};
use crate::train::{train_model, TrainReport};

/// Oracle error rates swept by the segmentation-accuracy ablation.
pub const ABLATION_ERROR_RATES: [f64; 5] = [0.8, 0.6, 0.4, 0.2, 0.0];
/// Seeds per configuration for every trend claim.
pub const TREND_SEEDS: u64 = 3;

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Everything the training and evaluation entry points need off disk.
pub struct LoadedData {
    pub map: LabelMap,
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the label map and both splits named by the config.
pub fn load_run_data(cfg: &RunConfig) -> Result<LoadedData, CoreError> {
    let map = LabelMap::load(&cfg.labels)?;
    let train = read_dataset(&cfg.train_data, &map)?;
    let test = read_dataset(&cfg.test_data, &map)?;
    Ok(LoadedData { map, train, test })
}

/// Joint count and topology shared by a dataset, taken from its first sample.
pub fn skeleton_of(data: &Dataset) -> Result<(usize, Vec<(usize, usize)>), CoreError> {
    let first = data
        .samples
        .first()
        .ok_or_else(|| CoreError::Data("dataset has no samples".into()))?;
    Ok((first.motion.joints, first.motion.topology.clone()))
}

/// Eval-mode scores over one split at one observation ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// Fraction of samples whose argmax logit matches the label.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Mean positional segmentation accuracy of the oracle's tracks against
    /// ground truth, over the samples where the metric is defined.
    pub mean_seg_accuracy: Option<f64>,
}

/// Runs an eval-mode forward over the whole split. Side-effect free: the
/// model is untouched, and two consecutive calls return identical outcomes.
pub fn evaluate(
    model: &SasiModel,
    data: &Dataset,
    map: &LabelMap,
    oracle: &SegmentationOracle,
    ratio: f64,
    batch_size: usize,
) -> Result<EvalOutcome, CoreError> {
    if data.samples.is_empty() {
        return Err(CoreError::Data("cannot evaluate an empty dataset".into()));
    }
    let k = model.holistic_count();
    let mut correct = 0;
    let mut seg_sum = 0.0;
    let mut seg_count = 0usize;
    for chunk in data.samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = prepare_batch(&refs, &model.config, map, oracle, ratio)?;
        let leaves = model.leaves();
        let pass = model.forward(&leaves, &batch, false, &mut ForwardCtx::eval())?;
        for (row, &label) in pass.logits.data().chunks_exact(k).zip(&batch.labels) {
            if argmax(row) == label {
                correct += 1;
            }
        }
        for (pred, truth) in batch.oracle_tracks.iter().zip(&batch.truth_tracks) {
            match segmentation_accuracy(pred, truth) {
                Ok(v) => {
                    seg_sum += v;
                    seg_count += 1;
                }
                Err(CoreError::UndefinedMetric(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let total = data.samples.len();
    Ok(EvalOutcome {
        accuracy: correct as f64 / total as f64,
        correct,
        total,
        mean_seg_accuracy: (seg_count > 0).then(|| seg_sum / seg_count as f64),
    })
}

/// One accuracy cell of the observation-ratio table.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolCell {
    /// 'A' = trained at this ratio; 'B' = trained at 1.0, tested truncated.
    pub regime: char,
    pub ratio: f64,
    pub accuracy: f64,
    pub seg_accuracy: Option<f64>,
}

/// Output of [`observation_protocol`].
pub struct ProtocolOutcome {
    /// Regime-A cells in config order, then regime-B cells in config order.
    pub cells: Vec<ProtocolCell>,
    /// The regime-A model trained at full observation, reused for regime B.
    pub full_model: SasiModel,
    /// Loss curve of each regime-A training, keyed by ratio percentage.
    pub curves: BTreeMap<String, Vec<f64>>,
}

/// Runs both evaluation regimes over `cfg.observation_ratios`: regime A
/// trains and tests at each ratio; regime B reuses the regime-A model
/// trained at ratio 1.0 and tests it at every other ratio, truncating test
/// sequences with the same pre-resampling cut regime A uses. Every cell
/// initializes and trains with `cfg.seed`, so the regime-A full-observation
/// cell reproduces a standalone training bit for bit.
pub fn observation_protocol(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    map: &LabelMap,
) -> Result<ProtocolOutcome, CoreError> {
    let (joints, topology) = skeleton_of(train)?;
    let oracle = SegmentationOracle::from_spec(&cfg.oracle)?;
    let mut cells = Vec::new();
    let mut curves = BTreeMap::new();
    let mut full_model = None;
    for &ratio in &cfg.observation_ratios {
        let mut model = SasiModel::new(&cfg.model, map, joints, &topology, cfg.seed)?;
        let report = train_model(
            &mut model, train, map, &oracle, &cfg.optimizer, &cfg.loss, ratio, cfg.seed,
        )?;
        let eval = evaluate(&model, test, map, &oracle, ratio, cfg.optimizer.batch_size)?;
        curves.insert(format!("or_{:.0}", ratio * 100.0), report.loss_curve);
        cells.push(ProtocolCell {
            regime: 'A',
            ratio,
            accuracy: eval.accuracy,
            seg_accuracy: eval.mean_seg_accuracy,
        });
        if ratio == 1.0 {
            full_model = Some(model);
        }
    }
    let full_model = full_model.ok_or_else(|| {
        CoreError::Config("observation ratios must include 1.0 for the reuse regime".into())
    })?;
    for &ratio in &cfg.observation_ratios {
        if ratio == 1.0 {
            continue;
        }
        let eval = evaluate(&full_model, test, map, &oracle, ratio, cfg.optimizer.batch_size)?;
        cells.push(ProtocolCell {
            regime: 'B',
            ratio,
            accuracy: eval.accuracy,
            seg_accuracy: eval.mean_seg_accuracy,
        });
    }
    Ok(ProtocolOutcome { cells, full_model, curves })
}

/// Which module the ablation sweep removes or replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    /// Sweeps the oracle's injected error rate.
    SegAccuracy,
    /// Trains every fusion variant.
    Fusion,
    /// Trains with and without the semantic alignment loss.
    SemanticLoss,
    /// Replaces sub-action text retrieval with one-hot class vectors.
    TextRetrieval,
}

impl AblationKind {
    pub const ALL: [AblationKind; 4] = [
        AblationKind::SegAccuracy,
        AblationKind::Fusion,
        AblationKind::SemanticLoss,
        AblationKind::TextRetrieval,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationKind::SegAccuracy => "seg_accuracy",
            AblationKind::Fusion => "fusion",
            AblationKind::SemanticLoss => "semantic_loss",
            AblationKind::TextRetrieval => "text_retrieval",
        }
    }

    pub fn parse(s: &str) -> Result<AblationKind, CoreError> {
        AblationKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| {
                CoreError::Config(format!(
                    "unknown ablation {s:?}; expected one of seg_accuracy, fusion, semantic_loss, text_retrieval"
                ))
            })
    }
}

/// One row of an ablation table: a setting's mean accuracy over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    pub value: String,
    pub seeds: usize,
    pub mean_accuracy: f64,
    pub sd: f64,
}

struct TrendContext<'a> {
    cfg: &'a RunConfig,
    train: &'a Dataset,
    test: &'a Dataset,
    map: &'a LabelMap,
    joints: usize,
    topology: Vec<(usize, usize)>,
}

impl TrendContext<'_> {
    /// Trains one configuration from scratch at full observation and
    /// returns its test accuracy. Training and evaluation share the oracle.
    fn run(
        &self,
        model_cfg: &ModelConfig,
        weights: &LossWeights,
        oracle: &SegmentationOracle,
        run_seed: u64,
    ) -> Result<f64, CoreError> {
        let mut model = SasiModel::new(model_cfg, self.map, self.joints, &self.topology, run_seed)?;
        train_model(
            &mut model,
            self.train,
            self.map,
            oracle,
            &self.cfg.optimizer,
            weights,
            1.0,
            run_seed,
        )?;
        let eval = evaluate(
            &model,
            self.test,
            self.map,
            oracle,
            1.0,
            self.cfg.optimizer.batch_size,
        )?;
        Ok(eval.accuracy)
    }

    /// Mean and standard deviation of one configuration over the trend seeds.
    fn sweep(
        &self,
        setting: &str,
        value: String,
        model_cfg: &ModelConfig,
        weights: &LossWeights,
        oracle_for: impl Fn(u64) -> Result<SegmentationOracle, CoreError>,
    ) -> Result<AblationRow, CoreError> {
        let mut scores = Vec::new();
        for s in 0..TREND_SEEDS {
            let run_seed = derive_seed(&[self.cfg.seed, hash_str("trend"), s]);
            let oracle = oracle_for(run_seed)?;
            scores.push(self.run(model_cfg, weights, &oracle, run_seed)?);
        }
        let (mean_accuracy, sd) = mean_sd(&scores);
        Ok(AblationRow {
            setting: setting.into(),
            value,
            seeds: scores.len(),
            mean_accuracy,
            sd,
        })
    }
}

/// Runs one ablation sweep, training every setting from scratch over the
/// trend seeds and reporting mean accuracy with standard deviation.
pub fn run_ablation(
    kind: AblationKind,
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    map: &LabelMap,
) -> Result<Vec<AblationRow>, CoreError> {
    let (joints, topology) = skeleton_of(train)?;
    let ctx = TrendContext { cfg, train, test, map, joints, topology };
    let base_oracle = |_: u64| SegmentationOracle::from_spec(&cfg.oracle);
    let mut rows = Vec::new();
    match kind {
        AblationKind::SegAccuracy => {
            for rate in ABLATION_ERROR_RATES {
                let oracle_for = move |run_seed: u64| {
                    Ok(if rate == 0.0 {
                        SegmentationOracle::GroundTruth
                    } else {
                        SegmentationOracle::ErrorInjected {
                            rate,
                            seed: derive_seed(&[run_seed, hash_str("oracle")]),
                        }
                    })
                };
                rows.push(ctx.sweep(
                    kind.label(),
                    format!("{rate:.1}"),
                    &cfg.model,
                    &cfg.loss,
                    oracle_for,
                )?);
            }
        }
        AblationKind::Fusion => {
            for variant in FusionVariant::ALL {
                let model_cfg = ModelConfig { fusion: variant, ..cfg.model.clone() };
                rows.push(ctx.sweep(
                    kind.label(),
                    variant.label().into(),
                    &model_cfg,
                    &cfg.loss,
                    base_oracle,
                )?);
            }
        }
        AblationKind::SemanticLoss => {
            let off = LossWeights { lambda2: 0.0, ..cfg.loss };
            for (value, weights) in [("on", &cfg.loss), ("off", &off)] {
                rows.push(ctx.sweep(kind.label(), value.into(), &cfg.model, weights, base_oracle)?);
            }
        }
        AblationKind::TextRetrieval => {
            for (value, input) in [("text", SubActionInput::Text), ("one_hot", SubActionInput::OneHot)]
            {
                let model_cfg = ModelConfig { sub_action_input: input, ..cfg.model.clone() };
                rows.push(ctx.sweep(kind.label(), value.into(), &model_cfg, &cfg.loss, base_oracle)?);
            }
        }
    }
    Ok(rows)
}

/// An attention map for one sample with the metadata needed to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport {
    pub sample_id: String,
    /// Fused timeline length T'; the matrix is T'×T' row-major.
    pub frames: usize,
    pub matrix: Vec<f64>,
    /// Mean attention each timeline position receives, averaged over query
    /// rows; length T'.
    pub profile: Vec<f64>,
    pub holistic_text: String,
    /// Sub-action texts with their frame extents on the truncated raw
    /// timeline, as segmented by the oracle.
    pub segments: Vec<(String, usize, usize)>,
}

/// Runs one eval-mode forward and extracts the cross-attention map.
pub fn export_attention(
    model: &SasiModel,
    sample: &Sample,
    map: &LabelMap,
    oracle: &SegmentationOracle,
    ratio: f64,
) -> Result<AttentionExport, CoreError> {
    if !model.config.fusion.is_attention() {
        return Err(CoreError::Config(format!(
            "fusion variant {} produces no attention map",
            model.config.fusion.label()
        )));
    }
    let batch = prepare_batch(&[sample], &model.config, map, oracle, ratio)?;
    let leaves = model.leaves();
    let pass = model.forward(&leaves, &batch, false, &mut ForwardCtx::eval())?;
    let attention = pass
        .attention
        .ok_or_else(|| CoreError::Config("forward pass carried no attention map".into()))?;
    let t = model.fused_frames();
    let matrix = attention.data().to_vec();
    let mut profile = vec![0.0; t];
    for q in 0..t {
        for k in 0..t {
            profile[k] += matrix[q * t + k];
        }
    }
    for v in &mut profile {
        *v /= t as f64;
    }
    let holistic_text = retrieve_text(sample.label, map, LabelKind::Holistic)?.to_string();
    let segments = batch.oracle_tracks[0]
        .segments
        .iter()
        .map(|seg| {
            Ok((
                retrieve_text(seg.class_id, map, LabelKind::Sub)?.to_string(),
                seg.start,
                seg.end,
            ))
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok(AttentionExport {
        sample_id: sample.id.clone(),
        frames: t,
        matrix,
        profile,
        holistic_text,
        segments,
    })
}

fn safe_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `attention/<id>.csv` (the matrix) and `attention/<id>.json`
/// (profile plus metadata) under `dir`; returns both paths.
pub fn write_attention(
    dir: &Path,
    export: &AttentionExport,
    config_hash: &str,
) -> Result<(PathBuf, PathBuf), CoreError> {
    let sub = dir.join("attention");
    std::fs::create_dir_all(&sub)?;
    let stem = safe_file_stem(&export.sample_id);

    let mut csv = String::new();
    writeln!(csv, "# config {config_hash}").expect("string write");
    for row in export.matrix.chunks_exact(export.frames) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(csv, "{}", line.join(",")).expect("string write");
    }
    let csv_path = sub.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, csv)?;

    let segments: Vec<serde_json::Value> = export
        .segments
        .iter()
        .map(|(text, start, end)| {
            serde_json::json!({ "text": text, "start": start, "end": end })
        })
        .collect();
    let sidecar = serde_json::json!({
        "config_hash": config_hash,
        "sample_id": export.sample_id,
        "frames": export.frames,
        "holistic_text": export.holistic_text,
        "segments": segments,
        "profile": export.profile,
    });
    let json_path = sub.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok((csv_path, json_path))
}

/// Wall-clock throughput of single-sequence eval forwards.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub sequence_length: usize,
    pub repetitions: usize,
    pub median_seconds: f64,
    pub sequences_per_second: f64,
    pub parameter_count: usize,
}

/// Stretches one sample to `sequence_length` raw frames, then reports the
/// median wall-clock time of `repetitions` single-sequence eval-mode
/// forwards (one warmup excluded). The figure is reported, never asserted
/// against any reference hardware.
pub fn measure_throughput(
    model: &SasiModel,
    sample: &Sample,
    map: &LabelMap,
    sequence_length: usize,
    repetitions: usize,
) -> Result<BenchReport, CoreError> {
    if sequence_length == 0 || repetitions == 0 {
        return Err(CoreError::Config(
            "throughput needs a positive sequence length and repetition count".into(),
        ));
    }
    let motion = interpolate_nearest(&sample.motion, sequence_length)?;
    let track = resample_track(&sample.track, sample.motion.frames, sequence_length)?;
    let stretched = Sample {
        id: sample.id.clone(),
        label: sample.label,
        motion,
        track,
    };
    let oracle = SegmentationOracle::GroundTruth;
    let batch = prepare_batch(&[&stretched], &model.config, map, &oracle, 1.0)?;
    let leaves = model.leaves();
    model.forward(&leaves, &batch, false, &mut ForwardCtx::eval())?;

    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        model.forward(&leaves, &batch, false, &mut ForwardCtx::eval())?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let median = if repetitions % 2 == 1 {
        times[repetitions / 2]
    } else {
        0.5 * (times[repetitions / 2 - 1] + times[repetitions / 2])
    };
    Ok(BenchReport {
        sequence_length,
        repetitions,
        median_seconds: median,
        sequences_per_second: 1.0 / median,
        parameter_count: model.parameter_count(),
    })
}

/// Result of the preprocessing pipeline: merged labels plus both splits
/// resampled to a fixed frame count with tracks carried along.
pub struct PreprocessOutcome {
    pub map: LabelMap,
    pub train: Dataset,
    pub test: Dataset,
    /// Grouping of the original sub-action texts (NONE excluded).
    pub merge: MergeReport,
}

/// Merges similar sub-action labels at the cosine threshold, remaps every
/// track onto the merged ids, and resamples all motion to `frames`. The
/// reserved NONE label never participates in merging. Samples whose track
/// exceeds `l_max` segments after resampling are rejected early.
pub fn preprocess(
    train: &Dataset,
    test: &Dataset,
    map: &LabelMap,
    threshold: f64,
    frames: usize,
    l_max: usize,
) -> Result<PreprocessOutcome, CoreError> {
    let subs = map.sub_texts();
    let merge = merge_labels(&subs[1..], threshold)?;
    let mut merged_subs = vec![subs[0].clone()];
    merged_subs.extend(merge.representatives.iter().cloned());
    let merged_map = LabelMap::new(map.holistic_texts().to_vec(), merged_subs)?;

    let remap = |id: usize| if id == NONE_SUB_ID { id } else { 1 + merge.group_of[id - 1] };
    let process = |data: &Dataset| -> Result<Dataset, CoreError> {
        let mut samples = Vec::with_capacity(data.samples.len());
        for s in &data.samples {
            let motion = interpolate_nearest(&s.motion, frames)?;
            let resampled = resample_track(&s.track, s.motion.frames, frames)?;
            let track = SubActionTrack::new(
                resampled
                    .segments
                    .iter()
                    .map(|seg| Segment { class_id: remap(seg.class_id), ..*seg })
                    .collect(),
            );
            if track.segments.len() > l_max {
                return Err(CoreError::Capacity(format!(
                    "sample {:?} keeps {} sub-actions after preprocessing, limit is {l_max}",
                    s.id,
                    track.segments.len()
                )));
            }
            samples.push(Sample { id: s.id.clone(), label: s.label, motion, track });
        }
        Ok(Dataset { samples, resampled: true })
    };
    Ok(PreprocessOutcome {
        map: merged_map,
        train: process(train)?,
        test: process(test)?,
        merge,
    })
}

/// One row of the long-format metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub key: String,
    pub value: String,
}

/// Shorthand constructor for [`MetricRow`].
pub fn metric(
    metric: impl Into<String>,
    key: impl ToString,
    value: impl ToString,
) -> MetricRow {
    MetricRow { metric: metric.into(), key: key.to_string(), value: value.to_string() }
}

fn write_csv(path: &Path, config_hash: &str, header: &str, lines: &[String]) -> Result<(), CoreError> {
    let mut out = String::new();
    writeln!(out, "# config {config_hash}").expect("string write");
    writeln!(out, "{header}").expect("string write");
    for line in lines {
        writeln!(out, "{line}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes `metric,key,value` rows with the config hash on a comment line.
pub fn write_metrics(path: &Path, config_hash: &str, rows: &[MetricRow]) -> Result<(), CoreError> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{}", r.metric, r.key, r.value))
        .collect();
    write_csv(path, config_hash, "metric,key,value", &lines)
}

/// Writes the observation-ratio table, one row per protocol cell.
pub fn write_protocol_table(
    path: &Path,
    config_hash: &str,
    cells: &[ProtocolCell],
) -> Result<(), CoreError> {
    let lines: Vec<String> = cells
        .iter()
        .map(|c| {
            let seg = c.seg_accuracy.map(|v| v.to_string()).unwrap_or_default();
            format!("{},{},{},{}", c.regime, c.ratio, c.accuracy, seg)
        })
        .collect();
    write_csv(path, config_hash, "regime,observation_ratio,accuracy,seg_accuracy", &lines)
}

/// Writes an ablation table, one row per swept setting.
pub fn write_ablation_table(
    path: &Path,
    config_hash: &str,
    rows: &[AblationRow],
) -> Result<(), CoreError> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!("{},{},{},{},{}", r.setting, r.value, r.seeds, r.mean_accuracy, r.sd)
        })
        .collect();
    write_csv(path, config_hash, "setting,value,seeds,mean_accuracy,sd", &lines)
}

/// Writes the label-merge report: every original sub-action text with its
/// group id and the group's representative.
pub fn write_merge_report(
    path: &Path,
    config_hash: &str,
    labels: &[String],
    merge: &MergeReport,
) -> Result<(), CoreError> {
    let lines: Vec<String> = labels
        .iter()
        .zip(&merge.group_of)
        .map(|(label, &g)| format!("{label},{g},{}", merge.representatives[g]))
        .collect();
    write_csv(path, config_hash, "label,group,representative", &lines)
}

/// Writes `run.log`: the config hash followed by one line per entry.
/// Contains no timestamps, so identical runs produce identical logs.
pub fn write_log(path: &Path, config_hash: &str, lines: &[String]) -> Result<(), CoreError> {
    let mut out = String::new();
    writeln!(out, "config {config_hash}").expect("string write");
    for line in lines {
        writeln!(out, "{line}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Rows of a [`TrainReport`] for the metrics file.
pub fn loss_curve_rows(report: &TrainReport) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = report
        .loss_curve
        .iter()
        .enumerate()
        .map(|(epoch, loss)| metric("loss", epoch, loss))
        .collect();
    rows.push(metric("steps", "total", report.steps));
    rows
}
