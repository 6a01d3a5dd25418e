//! Corpus discovery and the parallel extraction run.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use walkdir::WalkDir;

use crate::cache;
use crate::extract::{extract, extract_windowed, list_features, ExtractError, ExtractionConfig, FeatureRow};
use crate::model::{HarmonicAnnotation, Score, SourceFormat};
use crate::parse::{detect_format, parse_annotations, parse_bytes, ParseError, ParseErrorKind};
use crate::table::{FeatureTable, TableError};
use crate::PARSER_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatFilter {
    #[default]
    Auto,
    Midi,
    MusicXml,
    Kern,
}

impl FormatFilter {
    fn accepts(self, format: SourceFormat) -> bool {
        match self {
            FormatFilter::Auto => true,
            FormatFilter::Midi => format == SourceFormat::Midi,
            FormatFilter::MusicXml => format == SourceFormat::MusicXml,
            FormatFilter::Kern => format == SourceFormat::Kern,
        }
    }
}

impl FromStr for FormatFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(FormatFilter::Auto),
            "midi" => Ok(FormatFilter::Midi),
            "musicxml" => Ok(FormatFilter::MusicXml),
            "kern" => Ok(FormatFilter::Kern),
            _ => Err(format!("unknown format {s:?}; expected auto, midi, musicxml or kern")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus root {path}: {source}")]
    Root { path: String, source: walkdir::Error },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("jobs must be at least 1")]
    NoJobs,
    #[error(transparent)]
    Config(#[from] ExtractError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Score files under `root`, sorted by path relative to `root`.
pub fn discover(root: &Path, filter: FormatFilter) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|source| CorpusError::Root { path: root.display().to_string(), source })?;
        if !entry.file_type().is_file() {
            continue;
        }
        if detect_format(entry.path()).is_some_and(|f| filter.accepts(f)) {
            out.push(entry.path().strip_prefix(root).unwrap_or(entry.path()).to_path_buf());
        }
    }
    out.sort_by_key(|a| relative_id(a));
    Ok(out)
}

/// Forward-slash form of a relative path, used as the row's file id.
pub fn relative_id(rel: &Path) -> String {
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: ExtractionConfig,
    pub cache_dir: Option<PathBuf>,
    pub jobs: usize,
    /// Directory searched for `<relative stem>.tsv` annotation files.
    pub annotations_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(config: ExtractionConfig) -> Self {
        RunOptions { config, cache_dir: None, jobs: 1, annotations_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub files_total: usize,
    pub files_ok: usize,
    pub files_errored: usize,
    pub errors: Vec<ParseError>,
    pub wall_seconds: f64,
    pub cache_hits: usize,
    /// Number of times a format parser actually ran.
    pub parser_invocations: usize,
}

struct Counters {
    cache_hits: AtomicUsize,
    parser_invocations: AtomicUsize,
}

fn io_error(rel: &str, e: &std::io::Error) -> ParseError {
    ParseError::new(rel, ParseErrorKind::Io, e.to_string())
}

fn load_score(root: &Path, rel: &Path, id: &str, opts: &RunOptions, counters: &Counters) -> Result<Score, ParseError> {
    let full = root.join(rel);
    let format = detect_format(&full).ok_or_else(|| ParseError::new(id, ParseErrorKind::UnsupportedConstruct, "unknown file extension"))?;
    let bytes = fs::read(&full).map_err(|e| io_error(id, &e))?;
    let key = opts.cache_dir.as_ref().map(|_| cache::cache_key(&bytes, PARSER_VERSION, format));
    if let (Some(dir), Some(key)) = (&opts.cache_dir, &key) {
        if let Some(score) = cache::get(dir, key) {
            counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(score);
        }
    }
    counters.parser_invocations.fetch_add(1, Ordering::Relaxed);
    let score = parse_bytes(&bytes, id, format)?;
    if let (Some(dir), Some(key)) = (&opts.cache_dir, &key) {
        if let Err(e) = cache::put(dir, key, &score) {
            log::warn!("cache write for {id} failed: {e}; continuing uncached");
        }
    }
    Ok(score)
}

/// Annotation sidecar for a score: the configured lookup, then
/// `<annotations_dir>/<relative stem>.tsv`, then `<stem>.tsv` beside the
/// score.
fn annotation_path(root: &Path, rel: &Path, id: &str, opts: &RunOptions) -> Option<PathBuf> {
    if let Some(p) = opts.config.annotation_lookup.get(id) {
        return Some(p.clone());
    }
    let stem = rel.with_extension("tsv");
    if let Some(dir) = &opts.annotations_dir {
        let p = dir.join(&stem);
        if p.is_file() {
            return Some(p);
        }
    }
    let p = root.join(&stem);
    p.is_file().then_some(p)
}

fn load_annotations(root: &Path, rel: &Path, id: &str, opts: &RunOptions) -> Result<Option<Vec<HarmonicAnnotation>>, ParseError> {
    match annotation_path(root, rel, id, opts) {
        None => Ok(None),
        Some(p) => {
            let label = p.display().to_string();
            let bytes = fs::read(&p).map_err(|e| io_error(&label, &e))?;
            parse_annotations(&crate::parse::decode_text(&bytes), &label).map(Some)
        }
    }
}

fn process(root: &Path, rel: &Path, opts: &RunOptions, counters: &Counters) -> Result<Vec<FeatureRow>, ParseError> {
    let id = relative_id(rel);
    let score = load_score(root, rel, &id, opts, counters)?;
    let sidecar = load_annotations(root, rel, &id, opts)?;
    // Harmony embedded in the score stands in when no sidecar exists.
    let annotations = sidecar.or_else(|| (!score.harmony.is_empty()).then(|| score.harmony.clone()));
    let mut rows = match opts.config.window_measures {
        None => vec![extract(&score, annotations.as_deref(), &opts.config)],
        Some(_) => extract_windowed(&score, annotations.as_deref(), &opts.config)
            .map_err(|e| ParseError::new(&id, ParseErrorKind::UnsupportedConstruct, e.to_string()))?,
    };
    for r in &mut rows {
        r.file_id = id.clone();
    }
    Ok(rows)
}

/// Parses (through the cache when configured) and extracts every file in
/// `paths`, relative to `root`. Row order follows `paths` whatever `jobs`
/// is; failed files contribute an error and no rows.
pub fn run_corpus(root: &Path, paths: &[PathBuf], opts: &RunOptions) -> Result<(FeatureTable, RunReport), CorpusError> {
    if opts.jobs == 0 {
        return Err(CorpusError::NoJobs);
    }
    opts.config.validate()?;
    let started = Instant::now();
    let counters = Counters { cache_hits: AtomicUsize::new(0), parser_invocations: AtomicUsize::new(0) };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build().map_err(|e| CorpusError::Pool(e.to_string()))?;
    let results: Vec<Result<Vec<FeatureRow>, ParseError>> = pool.install(|| {
        paths
            .par_iter()
            .map(|rel| {
                let r = process(root, rel, opts, &counters);
                match &r {
                    Ok(_) => log::info!("ok {}", relative_id(rel)),
                    Err(e) => log::warn!("error {e}"),
                }
                r
            })
            .collect()
    });

    let mut table = FeatureTable::new(list_features(&opts.config))?;
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(rows) => {
                for row in rows {
                    table.push_feature_row(row)?;
                }
            }
            Err(e) => errors.push(e),
        }
    }
    let report = RunReport {
        files_total: paths.len(),
        files_ok: paths.len() - errors.len(),
        files_errored: errors.len(),
        errors,
        wall_seconds: started.elapsed().as_secs_f64(),
        cache_hits: counters.cache_hits.into_inner(),
        parser_invocations: counters.parser_invocations.into_inner(),
    };
    Ok((table, report))
}
