//! Symbolic music feature extraction: score parsers, a feature catalogue,
//! a parsed-score cache, a parallel corpus runner, table post-processing
//! and an evaluation harness.

pub mod builder;
pub mod cache;
pub mod corpus;
pub mod encode;
pub mod eval;
pub mod extract;
pub mod features;
pub mod model;
pub mod parse;
pub mod postprocess;
pub mod synth;
pub mod table;

/// Version tag baked into cache keys and score records.
pub const PARSER_VERSION: &str = concat!("notefeat-", env!("CARGO_PKG_VERSION"));

pub use model::*;
pub use parse::{parse_annotations, parse_bytes, parse_kern, parse_midi, parse_musicxml, parse_mxl, ParseError, ParseErrorKind};
pub use features::{FeatureGroup, FeatureMap};
pub use extract::{extract, extract_windowed, list_features, ExtractError, ExtractionConfig, FeatureRow, PartialWindows};
pub use table::{FeatureTable, TableError, TableRow};
pub use corpus::{discover, run_corpus, FormatFilter, RunOptions, RunReport};
pub use eval::{balanced_accuracy, combine_tables, cross_validate, intersect_and_prune, CvOptions, EvalResult, LabeledMatrix};
