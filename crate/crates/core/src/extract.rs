//! Assembles enabled feature groups into rows, for whole scores or for
//! measure windows.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureGroup, FeatureMap};
use crate::model::{HarmonicAnnotation, Score};

/// What to do with a trailing window shorter than `window_measures`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialWindows {
    /// Keep it if it spans at least half the window length (rounded up).
    #[default]
    HalfOrMore,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub enabled_groups: BTreeSet<FeatureGroup>,
    pub window_measures: Option<u32>,
    pub window_overlap: u32,
    pub partial_windows: PartialWindows,
    /// Score file id to annotation sidecar path.
    pub annotation_lookup: BTreeMap<String, PathBuf>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig::with_groups(FeatureGroup::ALL)
    }
}

impl ExtractionConfig {
    pub fn with_groups(groups: impl IntoIterator<Item = FeatureGroup>) -> Self {
        ExtractionConfig {
            enabled_groups: groups.into_iter().collect(),
            window_measures: None,
            window_overlap: 0,
            partial_windows: PartialWindows::default(),
            annotation_lookup: BTreeMap::new(),
        }
    }

    pub fn windowed(mut self, measures: u32, overlap: u32) -> Self {
        self.window_measures = Some(measures);
        self.window_overlap = overlap;
        self
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        match self.window_measures {
            Some(0) => Err(ExtractError::InvalidConfig("window length must be at least one measure".into())),
            Some(w) if self.window_overlap >= w => Err(ExtractError::InvalidConfig(format!(
                "window overlap {} must be smaller than the window length {w}",
                self.window_overlap
            ))),
            None if self.window_overlap > 0 => {
                Err(ExtractError::InvalidConfig("window overlap given without a window length".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One output row. Window bounds are measure numbers; `0, 0` is the whole
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub file_id: String,
    pub window_start: u32,
    pub window_end: u32,
    pub values: FeatureMap,
}

/// Sorted names of every feature the enabled groups emit.
pub fn list_features(config: &ExtractionConfig) -> Vec<String> {
    let mut names: Vec<String> = config.enabled_groups.iter().flat_map(|g| g.names()).collect();
    names.sort();
    names.dedup();
    names
}

fn compute(score: &Score, annotations: Option<&[HarmonicAnnotation]>, config: &ExtractionConfig) -> FeatureMap {
    let mut values = FeatureMap::new();
    for g in &config.enabled_groups {
        values.extend(g.compute(score, annotations));
    }
    values
}

/// Whole-score row. Window settings in `config` are ignored.
pub fn extract(score: &Score, annotations: Option<&[HarmonicAnnotation]>, config: &ExtractionConfig) -> FeatureRow {
    FeatureRow { file_id: score.source_path.clone(), window_start: 0, window_end: 0, values: compute(score, annotations, config) }
}

/// Measure windows `(start, end)` for a score of `measures` measures.
pub fn window_bounds(measures: u32, w: u32, overlap: u32, partial: PartialWindows) -> Vec<(u32, u32)> {
    let stride = w - overlap;
    let mut out = Vec::new();
    let mut start = 1u32;
    while start <= measures {
        let end = start.saturating_add(w - 1);
        if end <= measures {
            out.push((start, end));
        } else {
            let span = measures - start + 1;
            let keep = match partial {
                PartialWindows::HalfOrMore => span >= w.div_ceil(2),
                PartialWindows::Always => true,
                PartialWindows::Never => false,
            };
            if keep {
                out.push((start, measures));
            }
        }
        if end >= measures {
            break;
        }
        start += stride;
    }
    out
}

/// One row per measure window. Each window is extracted from the score
/// restricted to the notes and events whose onsets fall in its measures.
pub fn extract_windowed(
    score: &Score,
    annotations: Option<&[HarmonicAnnotation]>,
    config: &ExtractionConfig,
) -> Result<Vec<FeatureRow>, ExtractError> {
    config.validate()?;
    let w = config
        .window_measures
        .ok_or_else(|| ExtractError::InvalidConfig("windowed extraction needs a window length".into()))?;
    let measures = score.measure_count() as u32;
    let mut rows = Vec::new();
    for (start, end) in window_bounds(measures, w, config.window_overlap, config.partial_windows) {
        let sub = score.restrict_measures(start, end).expect("window lies inside the measure map");
        let sub_annotations: Option<Vec<HarmonicAnnotation>> = annotations.map(|a| {
            a.iter()
                .filter(|h| h.measure_index >= start && h.measure_index <= end)
                .map(|h| HarmonicAnnotation { measure_index: h.measure_index - (start - 1), ..h.clone() })
                .collect()
        });
        rows.push(FeatureRow {
            file_id: score.source_path.clone(),
            window_start: start,
            window_end: end,
            values: compute(&sub, sub_annotations.as_deref(), config),
        });
    }
    Ok(rows)
}
