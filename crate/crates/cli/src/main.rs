use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use notefeat_core::eval::{read_labels, EvalResult};
use notefeat_core::postprocess::{drop_columns, merge_columns, nan_filter_with, replace_values, NanFilterOptions, Reducer};
use notefeat_core::{
    cache, combine_tables, cross_validate, discover, intersect_and_prune, run_corpus, CvOptions, ExtractionConfig, FeatureGroup,
    FeatureTable, FormatFilter, RunOptions,
};

#[derive(Parser)]
#[command(name = "notefeat", version, about = "Feature extraction for symbolic music corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract one feature row per score (or per measure window) into a CSV table.
    Extract(ExtractArgs),
    /// Manage the parsed-score cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Substitute, drop, merge and NaN-filter table columns.
    Postprocess(PostprocessArgs),
    /// Cross-validate a fixed model zoo on one or more feature tables.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "auto")]
    format: FormatFilter,
    /// Comma-separated feature groups; all groups when omitted.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<FeatureGroup>>,
    #[arg(long)]
    window_measures: Option<u32>,
    #[arg(long, default_value_t = 0)]
    window_overlap: u32,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Delete every cache entry in the directory.
    Clear {
        #[arg(long)]
        cache_dir: PathBuf,
    },
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    nan_filter: bool,
    /// Keep NaN columns when the row filter does not run.
    #[arg(long, requires = "nan_filter")]
    no_column_drop_without_row_filter: bool,
    /// `PATTERN=VALUE`: replace NaN in matching columns.
    #[arg(long = "replace", value_parser = parse_replace)]
    replace: Vec<(String, f64)>,
    /// Drop columns matching a glob pattern.
    #[arg(long = "drop")]
    drop: Vec<String>,
    /// `SRC1,SRC2,..=DEST:REDUCER` with reducer sum, mean or max.
    #[arg(long = "merge", value_parser = parse_merge)]
    merge: Vec<Merge>,
    /// NaN filter report (JSON).
    #[arg(long, requires = "nan_filter")]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Merge {
    sources: Vec<String>,
    dest: String,
    reducer: Reducer,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "table", required = true)]
    tables: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    pca: Option<usize>,
    #[arg(long)]
    paper_mode: bool,
    /// Join all tables column-wise and evaluate the combination.
    #[arg(long)]
    combine: bool,
    #[arg(long)]
    report: PathBuf,
}

fn parse_replace(s: &str) -> Result<(String, f64), String> {
    let (pattern, value) = s.rsplit_once('=').ok_or("expected PATTERN=VALUE")?;
    let value = value.trim().parse::<f64>().map_err(|e| format!("bad value {value:?}: {e}"))?;
    Ok((pattern.to_string(), value))
}

fn parse_merge(s: &str) -> Result<Merge, String> {
    let (sources, rest) = s.split_once('=').ok_or("expected SRC1,SRC2,..=DEST:REDUCER")?;
    let (dest, reducer) = rest.rsplit_once(':').ok_or("expected DEST:REDUCER after '='")?;
    Ok(Merge {
        sources: sources.split(',').map(|x| x.trim().to_string()).collect(),
        dest: dest.to_string(),
        reducer: reducer.parse()?,
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn extract(args: ExtractArgs) -> Result<()> {
    let mut config = match args.features {
        Some(groups) => ExtractionConfig::with_groups(groups),
        None => ExtractionConfig::default(),
    };
    if let Some(w) = args.window_measures {
        config = config.windowed(w, args.window_overlap);
    } else {
        config.window_overlap = args.window_overlap;
    }
    config.validate()?;

    let paths = discover(&args.input, args.format)?;
    info!("{} score files under {}", paths.len(), args.input.display());
    let opts = RunOptions { config, cache_dir: args.cache_dir, jobs: args.jobs, annotations_dir: args.annotations };
    let (table, report) = run_corpus(&args.input, &paths, &opts)?;
    table.write_csv(&args.output)?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    info!(
        "{} ok, {} errored, {} cache hits, {:.2}s",
        report.files_ok, report.files_errored, report.cache_hits, report.wall_seconds
    );
    Ok(())
}

fn postprocess(args: PostprocessArgs) -> Result<()> {
    let mut table = FeatureTable::read_csv(&args.table)?;
    for (pattern, value) in &args.replace {
        table = replace_values(&table, pattern, *value)?;
    }
    for pattern in &args.drop {
        let (t, dropped) = drop_columns(&table, pattern)?;
        if dropped.is_empty() {
            warn!("--drop {pattern:?} matched no column");
        }
        table = t;
    }
    for m in &args.merge {
        table = merge_columns(&table, &m.sources, &m.dest, m.reducer)?;
    }
    if args.nan_filter {
        let opts = NanFilterOptions { drop_columns_without_row_filter: !args.no_column_drop_without_row_filter };
        let (filtered, report) = nan_filter_with(&table, opts)?;
        info!(
            "r = {:.4}; removed {} rows and {} columns",
            report.r,
            report.rows_removed.len(),
            report.columns_removed.len()
        );
        if let Some(path) = &args.report {
            write_json(path, &report)?;
        }
        table = filtered;
    }
    table.write_csv(&args.output)?;
    Ok(())
}

fn table_tag(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut tables = Vec::with_capacity(args.tables.len());
    for p in &args.tables {
        tables.push(FeatureTable::read_csv(p)?);
    }
    let labels = read_labels(&args.labels)?;
    let mut opts = CvOptions::new(args.folds, args.seed);
    opts.pca_k = args.pca;
    opts.paper_mode = args.paper_mode;

    if args.combine && tables.len() > 1 {
        let tags: Vec<String> = args.tables.iter().map(|p| table_tag(p)).collect();
        let combined = combine_tables(&tables, &tags)?;
        let m = intersect_and_prune(&[combined], &labels, args.folds)?.remove(0);
        let result = cross_validate(&m, &opts)?;
        summarize(&tags.join("+"), &result);
        return write_json(&args.report, &result);
    }

    if args.combine {
        warn!("--combine needs at least two tables; evaluating the single table");
    }
    let matrices = intersect_and_prune(&tables, &labels, args.folds)?;
    let mut results: BTreeMap<String, EvalResult> = BTreeMap::new();
    for (path, m) in args.tables.iter().zip(&matrices) {
        let result = cross_validate(m, &opts)?;
        summarize(&path.display().to_string(), &result);
        results.insert(path.display().to_string(), result);
    }
    if results.len() == 1 {
        let (_, only) = results.into_iter().next().expect("one result");
        write_json(&args.report, &only)
    } else {
        write_json(&args.report, &results)
    }
}

fn summarize(name: &str, r: &EvalResult) {
    let scores: Vec<String> = r.per_model.iter().map(|(m, s)| format!("{m} {s:.3}")).collect();
    println!("{name}: {} samples, {} features; {}; best {}", r.n_samples, r.n_features, scores.join(", "), r.best);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(args) => extract(args),
        Command::Cache { action: CacheAction::Clear { cache_dir } } => {
            if !cache_dir.is_dir() {
                bail!("cache directory {} does not exist", cache_dir.display());
            }
            let removed = cache::clear(&cache_dir)?;
            info!("removed {removed} cache entries");
            Ok(())
        }
        Command::Postprocess(args) => postprocess(args),
        Command::Evaluate(args) => evaluate(args),
    }
}

fn main() -> ExitCode {
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        logger.write_style(env_logger::WriteStyle::Never);
    }
    logger.init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; bad usage is a config error.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
