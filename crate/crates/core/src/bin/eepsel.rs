use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eepsel::bundle::{load_bundle, write_bundle, MANIFEST_FILE};
use eepsel::correlation::{correlation_report, paired_columns, scatter_csv, PerformanceTable};
use eepsel::csvio::write_output;
use eepsel::engine::{EngineConfig, DEFAULT_MAX_CHUNK_ROWS};
use eepsel::error::{Error, Result};
use eepsel::metrics::Metric;
use eepsel::sampler::{
    class_frequencies, sample_pixels, LabelRaster, DEFAULT_IGNORE_VALUE, DEFAULT_PIXELS_PER_IMAGE,
};
use eepsel::selection::{
    preselect_sources, read_source_leep, score_all, top_k, PreselectParams, Preselection,
    ScoreConfig, ScoreTable, SourcePool, DEFAULT_ENSEMBLE_SIZE, DEFAULT_N_GOOD, DEFAULT_N_RANDOM,
    DEFAULT_PER_METRIC_TOP_K,
};
use eepsel::synth::{run_benchmark, BenchConfig};

#[derive(Parser)]
#[command(
    name = "eepsel",
    version,
    about = "Transferability scoring for source-model ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a bundle directory and print a summary
    Validate {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Draw class-balanced pixel samples from label rasters
    Sample(SampleArgs),
    /// Score every ensemble of a bundle's source pool
    Score(ScoreArgs),
    /// Rank a score table by one or more metrics
    Rank(RankArgs),
    /// Pick frequent top performers plus random sources from a score table
    Preselect(PreselectArgs),
    /// Correlate a score table with actual performance
    Correlate(CorrelateArgs),
    /// Run the synthetic benchmark end to end
    Bench(BenchArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EngineArgs {
    /// Worker threads (0 = one per core)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 2048)]
    memory_budget_mb: u64,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            workers: self.workers,
            memory_budget_bytes: self.memory_budget_mb.saturating_mul(1 << 20),
            max_chunk_rows: DEFAULT_MAX_CHUNK_ROWS,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Label raster files; each image id is the file stem
    #[arg(long, num_args = 1.., required = true)]
    rasters: Vec<PathBuf>,
    #[arg(long)]
    num_classes: usize,
    #[arg(long, default_value_t = DEFAULT_IGNORE_VALUE)]
    ignore_value: i32,
    /// Pixels per image
    #[arg(long, default_value_t = DEFAULT_PIXELS_PER_IMAGE)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE_SIZE)]
    ensemble_size: usize,
    /// Comma-separated metric names (default: all)
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<Metric>,
    /// Drop sources trained on this dataset
    #[arg(long)]
    exclude_dataset: Option<String>,
    /// Restrict the pool to the sources of a preselection.json
    #[arg(long)]
    preselection: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct RankArgs {
    /// scores.csv written by `score`
    #[arg(long)]
    scores: PathBuf,
    /// Comma-separated metric names (default: every column)
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = usize::MAX, hide_default_value = true)]
    top_k: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PreselectArgs {
    #[arg(long)]
    scores: PathBuf,
    /// source_leep.csv (default: next to the score table)
    #[arg(long)]
    source_leep: Option<PathBuf>,
    /// Ensembles taken from the top of each metric
    #[arg(long, default_value_t = DEFAULT_PER_METRIC_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_N_GOOD)]
    n_good: usize,
    #[arg(long, default_value_t = DEFAULT_N_RANDOM)]
    n_random: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    scores: PathBuf,
    /// CSV with columns ensemble,actual_mean_iou
    #[arg(long)]
    performance: PathBuf,
    /// Target name written to the report
    #[arg(long, default_value = "target")]
    target: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON bench configuration; without it a spread configuration is generated
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    sources: usize,
    #[arg(long, default_value_t = 10)]
    num_classes: usize,
    #[arg(long, default_value_t = 20000)]
    n_train: usize,
    #[arg(long, default_value_t = 20000)]
    n_heldout: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_lo: f64,
    #[arg(long, default_value_t = 0.9)]
    noise_hi: f64,
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE_SIZE)]
    ensemble_size: usize,
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { bundle } => validate(&bundle),
        Command::Sample(args) => sample(args),
        Command::Score(args) => score(args),
        Command::Rank(args) => rank(args),
        Command::Preselect(args) => preselect(args),
        Command::Correlate(args) => correlate(args),
        Command::Bench(args) => bench(args),
    }
}

fn out_dir(out: &OutArgs) -> Result<&Path> {
    fs::create_dir_all(&out.out).map_err(|e| Error::Io {
        path: out.out.clone(),
        source: e,
    })?;
    Ok(&out.out)
}

fn metrics_or_all(metrics: Vec<Metric>) -> Vec<Metric> {
    if metrics.is_empty() {
        return Metric::ALL.to_vec();
    }
    let mut seen = BTreeSet::new();
    metrics
        .into_iter()
        .filter(|m| seen.insert(m.name()))
        .collect()
}

fn validate(dir: &Path) -> Result<()> {
    let bundle = match load_bundle(dir) {
        Ok(b) => b,
        Err(e) => {
            println!("invalid: {e}");
            return Err(Error::Invalid(format!(
                "bundle {} failed validation",
                dir.display()
            )));
        }
    };
    let s = &bundle.samples;
    println!(
        "ok: {} samples, {} target classes, {} sources",
        s.len(),
        s.num_classes(),
        bundle.predictions.len()
    );
    for p in &bundle.predictions {
        println!("  {}: {} source classes", p.source_id(), p.num_classes());
    }
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let rasters = args
        .rasters
        .iter()
        .map(|path| {
            let id = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| {
                Error::Invalid(format!("no usable file stem in {}", path.display()))
            })?;
            LabelRaster::read(path, id, args.ignore_value)
        })
        .collect::<Result<Vec<_>>>()?;
    let freqs = class_frequencies(&rasters, args.num_classes)?;
    let list = sample_pixels(&rasters, args.k, &freqs, args.seed)?;
    let path = out_dir(&args.out)?.join("sample_index.json");
    if !args.out.force && path.exists() {
        return Err(Error::Exists(path));
    }
    list.write(&path)?;
    println!(
        "{} pixels from {} images -> {}",
        list.entries.len(),
        rasters.len(),
        path.display()
    );
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let mut pool = SourcePool::from_metas(&bundle.metas, args.exclude_dataset.as_deref())?;
    if let Some(path) = &args.preselection {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let pre: Preselection = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let wanted = pre.all();
        if let Some(missing) = wanted.iter().find(|id| !pool.ids().contains(id)) {
            return Err(Error::UnknownSource(missing.clone()));
        }
        pool = SourcePool::new(wanted)?;
    }
    let config = ScoreConfig {
        metrics: metrics_or_all(args.metrics),
        engine: args.engine.config(),
    };
    let table = score_all(
        &bundle.samples,
        &bundle.predictions,
        &bundle.metas,
        &pool,
        args.ensemble_size,
        &config,
    )?;
    let dir = out_dir(&args.out)?;
    write_output(&dir.join("scores.csv"), &table.to_csv(), args.out.force)?;
    write_output(
        &dir.join("source_leep.csv"),
        &table.source_leep_csv(),
        args.out.force,
    )?;
    println!(
        "{} ensembles of {} sources scored",
        table.rows.len(),
        pool.len()
    );
    Ok(())
}

fn rank(args: RankArgs) -> Result<()> {
    let table = ScoreTable::read_csv(&args.scores)?;
    let metrics = if args.metrics.is_empty() {
        table.metrics.clone()
    } else {
        metrics_or_all(args.metrics)
    };
    let dir = out_dir(&args.out)?;
    for metric in metrics {
        let ranked = top_k(&table, metric, args.top_k)?;
        let path = dir.join(format!("ranked_{}.csv", metric.name()));
        write_output(&path, &ranked.to_csv(), args.out.force)?;
    }
    Ok(())
}

fn preselect(args: PreselectArgs) -> Result<()> {
    let table = ScoreTable::read_csv(&args.scores)?;
    let leep_path = args.source_leep.clone().unwrap_or_else(|| {
        args.scores
            .parent()
            .unwrap_or(Path::new("."))
            .join("source_leep.csv")
    });
    let source_leep = read_source_leep(&leep_path)?;
    let pool = SourcePool::new(source_leep.keys().cloned())?;
    let params = PreselectParams {
        per_metric_top_k: args.top_k,
        n_good: args.n_good,
        n_random: args.n_random,
        seed: args.seed,
    };
    let selection = preselect_sources(&table, &params, &pool, &source_leep)?;
    let mut text = serde_json::to_string_pretty(&selection)
        .map_err(|e| Error::Internal(format!("preselection serialization: {e}")))?;
    text.push('\n');
    let dir = out_dir(&args.out)?;
    write_output(&dir.join("preselection.json"), &text, args.out.force)
}

fn correlate(args: CorrelateArgs) -> Result<()> {
    let table = ScoreTable::read_csv(&args.scores)?;
    let performance = PerformanceTable::read_csv(&args.performance)?;
    let report = correlation_report(&table, &performance, &args.target)?;
    let dir = out_dir(&args.out)?;
    write_output(
        &dir.join("correlation.csv"),
        &report.to_csv(),
        args.out.force,
    )?;
    for &metric in &table.metrics {
        let pairs = paired_columns(&table, &performance, metric)?;
        let path = dir.join(format!("scatter_{}.csv", metric.name()));
        write_output(&path, &scatter_csv(&pairs), args.out.force)?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str::<BenchConfig>(&text).map_err(|e| Error::Format {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
        None => BenchConfig::spread(
            args.sources,
            args.num_classes,
            args.n_train,
            args.n_heldout,
            args.ensemble_size,
            args.noise_lo,
            args.noise_hi,
            args.seed,
        ),
    };
    let dir = out_dir(&args.out)?;
    let force = args.out.force;
    for sub in ["train", "heldout"] {
        let manifest = dir.join(sub).join(MANIFEST_FILE);
        if !force && manifest.exists() {
            return Err(Error::Exists(manifest));
        }
    }
    let run = run_benchmark(
        &config,
        &metrics_or_all(args.metrics),
        &args.engine.config(),
    )?;

    let mut config_text = serde_json::to_string_pretty(&config)
        .map_err(|e| Error::Internal(format!("bench config serialization: {e}")))?;
    config_text.push('\n');
    write_output(&dir.join("bench_config.json"), &config_text, force)?;
    write_bundle(
        &run.train,
        &run.train_predictions,
        &run.metas,
        dir.join("train"),
    )?;
    write_bundle(
        &run.heldout,
        &run.heldout_predictions,
        &run.metas,
        dir.join("heldout"),
    )?;
    write_output(&dir.join("scores.csv"), &run.table.to_csv(), force)?;
    write_output(
        &dir.join("source_leep.csv"),
        &run.table.source_leep_csv(),
        force,
    )?;
    write_output(
        &dir.join("performance.csv"),
        &run.performance.to_csv(),
        force,
    )?;
    write_output(&dir.join("correlation.csv"), &run.report.to_csv(), force)?;
    for &metric in &run.table.metrics {
        let pairs = paired_columns(&run.table, &run.performance, metric)?;
        let path = dir.join(format!("scatter_{}.csv", metric.name()));
        write_output(&path, &scatter_csv(&pairs), force)?;
    }
    print!("{}", run.report.to_csv());
    Ok(())
}
