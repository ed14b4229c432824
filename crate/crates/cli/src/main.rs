//! Command-line harness for the dual-branch sub-action recognition model:
//! dataset generation, preprocessing, training, evaluation, the
//! observation-ratio protocol, ablations, attention export, and throughput
//! measurement. Every run writes its artifacts under `--out`, each embedding
//! the hash of the effective config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subact_core::config::{fingerprint, GeneratorConfig, RunConfig};
use subact_core::data::{write_dataset, Dataset, Sample};
use subact_core::harness::{
    evaluate, export_attention, load_run_data, loss_curve_rows, measure_throughput, metric,
    observation_protocol, preprocess, run_ablation, skeleton_of, write_ablation_table,
    write_attention, write_log, write_merge_report, write_metrics, write_protocol_table,
    AblationKind, LoadedData, MetricRow,
};
use subact_core::model::SasiModel;
use subact_core::oracle::SegmentationOracle;
use subact_core::synth::generate_synthetic;
use subact_core::train::train_model;
use subact_core::CoreError;

#[derive(Parser)]
#[command(name = "subact", version, about = "Sub-action-aware skeleton action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates a synthetic motion dataset from a generator config.
    GenData(CommonArgs),
    /// Merges similar sub-action labels and resamples motion to fixed length.
    Preprocess(CommonArgs),
    /// Trains the model and writes a checkpoint plus its loss curve.
    Train(CommonArgs),
    /// Evaluates a checkpoint on the test split at one observation ratio.
    Eval(EvalArgs),
    /// Trains and evaluates both observation-ratio regimes.
    OrProtocol(CommonArgs),
    /// Sweeps one ablation and tabulates mean accuracy over three seeds.
    Ablate(AblateArgs),
    /// Writes one sample's cross-attention matrix with label metadata.
    ExportAttention(ExportArgs),
    /// Measures single-sequence forward throughput.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config: a run config, or a generator config for gen-data.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving all artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory holding checkpoint.bin and manifest.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Observation ratio applied to test sequences.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// One of: seg_accuracy, fusion, semantic_loss, text_retrieval.
    #[arg(long)]
    which: String,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory holding checkpoint.bin and manifest.json.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sample id, looked up in the test split first, then in train.
    #[arg(long)]
    sample: String,
    /// Observation ratio applied before the forward pass.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Optional checkpoint to load before timing.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Raw sequence length of the timed input.
    #[arg(long, default_value_t = 500)]
    length: usize,
    /// Timed forward passes; the median is reported.
    #[arg(long, default_value_t = 9)]
    reps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Preprocess(args) => run_preprocess(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::OrProtocol(args) => run_protocol(args),
        Command::Ablate(args) => run_ablate(args),
        Command::ExportAttention(args) => run_export(args),
        Command::Bench(args) => run_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CoreError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), CoreError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Builds the model for the loaded data and restores a checkpoint into it.
fn restore_model(
    cfg: &RunConfig,
    data: &LoadedData,
    checkpoint: &Path,
) -> Result<SasiModel, CoreError> {
    let (joints, topology) = skeleton_of(&data.train)?;
    let mut model = SasiModel::new(&cfg.model, &data.map, joints, &topology, cfg.seed)?;
    model.load_checkpoint(checkpoint, &cfg.hash())?;
    Ok(model)
}

fn gen_data(args: CommonArgs) -> Result<(), CoreError> {
    let text = std::fs::read_to_string(&args.config)?;
    let gen_cfg: GeneratorConfig = serde_json::from_str(&text)?;
    let seed = args.seed.unwrap_or(0);
    let hash = fingerprint(&serde_json::json!({ "generator": gen_cfg, "seed": seed }));
    let data = generate_synthetic(&gen_cfg, seed)?;
    ensure_out(&args.out)?;
    write_dataset(&data.train, &args.out.join("train.jsonl"))?;
    write_dataset(&data.test, &args.out.join("test.jsonl"))?;
    data.labels.save(&args.out.join("labels.json"))?;
    write_log(
        &args.out.join("run.log"),
        &hash,
        &[
            format!("gen-data seed {seed}"),
            format!("train samples {}", data.train.samples.len()),
            format!("test samples {}", data.test.samples.len()),
            format!("holistic classes {}", data.labels.holistic_count()),
            format!("sub-action classes {}", data.labels.sub_count()),
        ],
    )?;
    println!("wrote {} train / {} test samples", data.train.samples.len(), data.test.samples.len());
    Ok(())
}

fn run_preprocess(args: CommonArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args)?;
    let hash = cfg.hash();
    let data = load_run_data(&cfg)?;
    let out = preprocess(
        &data.train,
        &data.test,
        &data.map,
        cfg.merge_threshold,
        cfg.model.frames,
        cfg.model.l_max,
    )?;
    ensure_out(&args.out)?;
    write_dataset(&out.train, &args.out.join("train.jsonl"))?;
    write_dataset(&out.test, &args.out.join("test.jsonl"))?;
    out.map.save(&args.out.join("labels.json"))?;
    let originals = data.map.sub_texts()[1..].to_vec();
    write_merge_report(&args.out.join("merge_report.csv"), &hash, &originals, &out.merge)?;
    write_log(
        &args.out.join("run.log"),
        &hash,
        &[
            format!("preprocess threshold {}", cfg.merge_threshold),
            format!("sub-action labels {} -> {}", data.map.sub_count(), out.map.sub_count()),
            format!("frames {}", cfg.model.frames),
        ],
    )?;
    println!("merged {} sub-action labels into {}", data.map.sub_count(), out.map.sub_count());
    Ok(())
}

fn run_train(args: CommonArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args)?;
    let hash = cfg.hash();
    let data = load_run_data(&cfg)?;
    let (joints, topology) = skeleton_of(&data.train)?;
    let oracle = SegmentationOracle::from_spec(&cfg.oracle)?;
    let mut model = SasiModel::new(&cfg.model, &data.map, joints, &topology, cfg.seed)?;
    let report = train_model(
        &mut model,
        &data.train,
        &data.map,
        &oracle,
        &cfg.optimizer,
        &cfg.loss,
        1.0,
        cfg.seed,
    )?;
    let eval = evaluate(&model, &data.test, &data.map, &oracle, 1.0, cfg.optimizer.batch_size)?;

    ensure_out(&args.out)?;
    model.save_checkpoint(&args.out, &hash)?;
    let mut rows = loss_curve_rows(&report);
    rows.push(metric("parameter_count", "total", model.parameter_count()));
    rows.push(metric("top1", "or_100", eval.accuracy));
    if let Some(seg) = eval.mean_seg_accuracy {
        rows.push(metric("seg_accuracy", "or_100", seg));
    }
    write_metrics(&args.out.join("metrics.csv"), &hash, &rows)?;
    write_log(
        &args.out.join("run.log"),
        &hash,
        &[
            format!("train seed {}", cfg.seed),
            format!("epochs {}", cfg.optimizer.epochs),
            format!("steps {}", report.steps),
            format!("final loss {}", report.loss_curve.last().unwrap()),
            format!("test top1 {}", eval.accuracy),
        ],
    )?;
    println!("trained {} epochs; test top-1 {:.4}", cfg.optimizer.epochs, eval.accuracy);
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args.common)?;
    let hash = cfg.hash();
    let data = load_run_data(&cfg)?;
    let model = restore_model(&cfg, &data, &args.checkpoint)?;
    let oracle = SegmentationOracle::from_spec(&cfg.oracle)?;
    let eval = evaluate(
        &model,
        &data.test,
        &data.map,
        &oracle,
        args.ratio,
        cfg.optimizer.batch_size,
    )?;
    ensure_out(&args.common.out)?;
    let key = format!("or_{:.0}", args.ratio * 100.0);
    let mut rows = vec![
        metric("top1", &key, eval.accuracy),
        metric("correct", &key, eval.correct),
        metric("total", &key, eval.total),
    ];
    if let Some(seg) = eval.mean_seg_accuracy {
        rows.push(metric("seg_accuracy", &key, seg));
    }
    write_metrics(&args.common.out.join("metrics.csv"), &hash, &rows)?;
    write_log(
        &args.common.out.join("run.log"),
        &hash,
        &[
            format!("eval ratio {}", args.ratio),
            format!("top1 {}", eval.accuracy),
        ],
    )?;
    println!("top-1 {:.4} at observation ratio {}", eval.accuracy, args.ratio);
    Ok(())
}

fn run_protocol(args: CommonArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args)?;
    let hash = cfg.hash();
    let data = load_run_data(&cfg)?;
    let outcome = observation_protocol(&cfg, &data.train, &data.test, &data.map)?;
    ensure_out(&args.out)?;
    write_protocol_table(&args.out.join("table.csv"), &hash, &outcome.cells)?;
    outcome.full_model.save_checkpoint(&args.out, &hash)?;
    let mut rows: Vec<MetricRow> = Vec::new();
    for (key, curve) in &outcome.curves {
        for (epoch, loss) in curve.iter().enumerate() {
            rows.push(metric(format!("loss_{key}"), epoch, loss));
        }
    }
    rows.push(metric("parameter_count", "total", outcome.full_model.parameter_count()));
    write_metrics(&args.out.join("metrics.csv"), &hash, &rows)?;
    let lines: Vec<String> = outcome
        .cells
        .iter()
        .map(|c| format!("regime {} ratio {} top1 {}", c.regime, c.ratio, c.accuracy))
        .collect();
    write_log(&args.out.join("run.log"), &hash, &lines)?;
    for line in &lines {
        println!("{line}");
    }
    Ok(())
}

fn run_ablate(args: AblateArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args.common)?;
    let hash = cfg.hash();
    let kind = AblationKind::parse(&args.which)?;
    let data = load_run_data(&cfg)?;
    let rows = run_ablation(kind, &cfg, &data.train, &data.test, &data.map)?;
    ensure_out(&args.common.out)?;
    write_ablation_table(&args.common.out.join("table.csv"), &hash, &rows)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {} mean {} sd {}", r.setting, r.value, r.mean_accuracy, r.sd))
        .collect();
    write_log(&args.common.out.join("run.log"), &hash, &lines)?;
    for line in &lines {
        println!("{line}");
    }
    Ok(())
}

fn find_sample<'a>(data: &'a LoadedData, id: &str) -> Result<&'a Sample, CoreError> {
    let by_id = |d: &'a Dataset| d.samples.iter().find(|s| s.id == id);
    by_id(&data.test)
        .or_else(|| by_id(&data.train))
        .ok_or_else(|| CoreError::Lookup(format!("no sample {id:?} in either split")))
}

fn run_export(args: ExportArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args.common)?;
    let hash = cfg.hash();
    let data = load_run_data(&cfg)?;
    let model = restore_model(&cfg, &data, &args.checkpoint)?;
    let sample = find_sample(&data, &args.sample)?;
    let oracle = SegmentationOracle::from_spec(&cfg.oracle)?;
    let export = export_attention(&model, sample, &data.map, &oracle, args.ratio)?;
    ensure_out(&args.common.out)?;
    let (csv_path, json_path) = write_attention(&args.common.out, &export, &hash)?;
    write_log(
        &args.common.out.join("run.log"),
        &hash,
        &[
            format!("export-attention sample {}", export.sample_id),
            format!("frames {}", export.frames),
            format!("holistic {}", export.holistic_text),
        ],
    )?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), CoreError> {
    let cfg = load_config(&args.common)?;
    let hash = cfg.hash();
    let data = load_run_data(&cfg)?;
    let model = match &args.checkpoint {
        Some(dir) => restore_model(&cfg, &data, dir)?,
        None => {
            let (joints, topology) = skeleton_of(&data.train)?;
            SasiModel::new(&cfg.model, &data.map, joints, &topology, cfg.seed)?
        }
    };
    let sample = data
        .test
        .samples
        .first()
        .ok_or_else(|| CoreError::Data("test split has no samples".into()))?;
    let report = measure_throughput(&model, sample, &data.map, args.length, args.reps)?;
    ensure_out(&args.common.out)?;
    write_metrics(
        &args.common.out.join("metrics.csv"),
        &hash,
        &[
            metric("sequence_length", "bench", report.sequence_length),
            metric("repetitions", "bench", report.repetitions),
            metric("median_seconds", "bench", report.median_seconds),
            metric("sequences_per_second", "bench", report.sequences_per_second),
            metric("parameter_count", "total", report.parameter_count),
        ],
    )?;
    write_log(
        &args.common.out.join("run.log"),
        &hash,
        &[format!(
            "bench length {} reps {} parameters {}",
            report.sequence_length, report.repetitions, report.parameter_count
        )],
    )?;
    println!(
        "{:.2} sequences/second at length {} ({} parameters)",
        report.sequences_per_second, report.sequence_length, report.parameter_count
    );
    Ok(())
}
