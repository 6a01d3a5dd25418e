//! Evaluation harness: standardization, PCA, stratified cross-validation
//! over a fixed model zoo, and feature-table combination.

pub mod linalg;
pub mod models;
pub mod preprocess;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::table::{FeatureTable, TableError, TableRow};
pub use linalg::{symmetric_eigen, Matrix};
pub use models::Model;
pub use preprocess::{pca_fit_transform, standardize, Pca, Standardizer};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples")]
    Empty,
    #[error("matrix contains NaN or infinite values")]
    NonFinite,
    #[error("every feature column is constant")]
    AllConstant,
    #[error("cannot keep {k} principal components; at most {max} available")]
    PcaTooLarge { k: usize, max: usize },
    #[error("need at least 2 folds, got {0}")]
    InvalidFolds(usize),
    #[error("class {class:?} has {count} samples, fewer than {folds} folds")]
    ClassTooSmall { class: String, count: usize, folds: usize },
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("file id {0:?} appears more than once in a table")]
    DuplicateId(String),
    #[error("table {table}: feature {column:?} of {file_id:?} is missing; filter NaNs first")]
    MissingValue { table: usize, file_id: String, column: String },
    #[error("duplicate tag {0:?}")]
    DuplicateTag(String),
    #[error("tables share no rows")]
    EmptyJoin,
    #[error("{0}")]
    Invalid(String),
    #[error("labels: {0}")]
    Labels(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A complete, finite design matrix with text class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub x: Matrix,
    pub y: Vec<String>,
    pub feature_names: Vec<String>,
    pub ids: Vec<String>,
}

impl LabeledMatrix {
    pub fn new(x: Matrix, y: Vec<String>, feature_names: Vec<String>, ids: Vec<String>) -> Result<Self, EvalError> {
        if x.rows() != y.len() || x.rows() != ids.len() || x.cols() != feature_names.len() {
            return Err(EvalError::Invalid("matrix, labels, ids and feature names disagree in size".into()));
        }
        if x.rows() < 2 {
            return Err(EvalError::Empty);
        }
        if !x.is_finite() {
            return Err(EvalError::NonFinite);
        }
        let distinct: HashSet<&str> = y.iter().map(String::as_str).collect();
        if distinct.len() < 2 {
            return Err(EvalError::TooFewClasses(distinct.len()));
        }
        Ok(LabeledMatrix { x, y, feature_names, ids })
    }

    /// Sorted distinct labels and each sample's index into them.
    pub fn encode_labels(&self) -> (Vec<String>, Vec<usize>) {
        let mut classes: Vec<String> = self.y.clone();
        classes.sort();
        classes.dedup();
        let codes = self.y.iter().map(|l| classes.binary_search(l).expect("label present")).collect();
        (classes, codes)
    }
}

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy<S: AsRef<str>>(y_true: &[S], y_pred: &[S]) -> Result<f64, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    if y_true.len() != y_pred.len() {
        return Err(EvalError::Invalid(format!("{} labels but {} predictions", y_true.len(), y_pred.len())));
    }
    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = per_class.entry(t.as_ref()).or_default();
        e.1 += 1;
        if t.as_ref() == p.as_ref() {
            e.0 += 1;
        }
    }
    Ok(per_class.values().map(|&(hit, n)| hit as f64 / n as f64).sum::<f64>() / per_class.len() as f64)
}

fn balanced_accuracy_codes(y_true: &[usize], y_pred: &[usize]) -> f64 {
    let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let e = per_class.entry(t).or_default();
        e.1 += 1;
        e.0 += usize::from(t == p);
    }
    per_class.values().map(|&(hit, n)| hit as f64 / n as f64).sum::<f64>() / per_class.len() as f64
}

/// Fold index of every sample. Within each class (in label order) the
/// members are shuffled with a generator seeded once from `seed`, then dealt
/// round-robin; the dealing position carries over from class to class so
/// fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0usize;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Number of principal components; `None` skips PCA.
    pub pca_k: Option<usize>,
    /// Fit standardization and PCA once on the whole matrix instead of per
    /// training fold.
    pub paper_mode: bool,
}

impl CvOptions {
    pub fn new(folds: usize, seed: u64) -> Self {
        CvOptions { folds, seed, pca_k: None, paper_mode: false }
    }

    pub fn with_pca(mut self, k: usize) -> Self {
        self.pca_k = Some(k);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    /// Model name to mean test-fold balanced accuracy.
    pub per_model: BTreeMap<String, f64>,
    pub best: String,
    pub folds: usize,
    pub seed: u64,
    pub pca_k: Option<usize>,
    pub paper_mode: bool,
    pub n_samples: usize,
    pub n_features: usize,
    pub classes: Vec<String>,
    pub per_fold: BTreeMap<String, Vec<f64>>,
}

/// Standardization plus optional PCA, fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preprocessor {
    pub standardizer: Option<Standardizer>,
    pub pca: Option<Pca>,
}

impl Preprocessor {
    /// With every column constant the fitted transform yields zero features.
    pub fn fit(x: &Matrix, pca_k: Option<usize>) -> Result<Self, EvalError> {
        let standardizer = match Standardizer::fit(x) {
            Ok(s) => s,
            Err(EvalError::AllConstant) => return Ok(Preprocessor { standardizer: None, pca: None }),
            Err(e) => return Err(e),
        };
        let z = standardizer.transform(x);
        let pca = match pca_k {
            None => None,
            Some(k) => {
                // The component count is clamped to what the training set supports.
                let k = k.min(z.cols()).min(z.rows().saturating_sub(1));
                if k == 0 {
                    None
                } else {
                    Some(Pca::fit(&z, k)?)
                }
            }
        };
        Ok(Preprocessor { standardizer: Some(standardizer), pca })
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        match &self.standardizer {
            None => Matrix::zeros(x.rows(), 0),
            Some(s) => {
                let z = s.transform(x);
                match &self.pca {
                    Some(p) => p.transform(&z),
                    None => z,
                }
            }
        }
    }
}

fn check_cv(m: &LabeledMatrix, opts: &CvOptions) -> Result<(Vec<String>, Vec<usize>), EvalError> {
    if opts.folds < 2 {
        return Err(EvalError::InvalidFolds(opts.folds));
    }
    let (classes, codes) = m.encode_labels();
    for (c, name) in classes.iter().enumerate() {
        let count = codes.iter().filter(|&&k| k == c).count();
        if count < opts.folds {
            return Err(EvalError::ClassTooSmall { class: name.clone(), count, folds: opts.folds });
        }
    }
    Ok((classes, codes))
}

fn split(assignment: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != fold)
}

/// The preprocessor fitted for each fold's training rows, as used by
/// [`cross_validate`] outside paper mode.
pub fn fold_preprocessors(m: &LabeledMatrix, opts: &CvOptions) -> Result<Vec<Preprocessor>, EvalError> {
    let (_, codes) = check_cv(m, opts)?;
    let assignment = stratified_folds(&codes, opts.folds, opts.seed);
    (0..opts.folds)
        .map(|f| {
            let (train, _) = split(&assignment, f);
            Preprocessor::fit(&m.x.select_rows(&train), opts.pca_k)
        })
        .collect()
}

/// Stratified k-fold cross-validation of every model in the zoo.
pub fn cross_validate(m: &LabeledMatrix, opts: &CvOptions) -> Result<EvalResult, EvalError> {
    let (classes, codes) = check_cv(m, opts)?;
    let assignment = stratified_folds(&codes, opts.folds, opts.seed);
    let global = if opts.paper_mode {
        let pre = Preprocessor::fit(&m.x, opts.pca_k)?;
        Some(pre.transform(&m.x))
    } else {
        None
    };

    let fold_scores: Vec<Result<Vec<f64>, EvalError>> = (0..opts.folds)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split(&assignment, f);
            let (xtr, xte) = match &global {
                Some(g) => (g.select_rows(&train), g.select_rows(&test)),
                None => {
                    let raw_train = m.x.select_rows(&train);
                    let pre = Preprocessor::fit(&raw_train, opts.pca_k)?;
                    (pre.transform(&raw_train), pre.transform(&m.x.select_rows(&test)))
                }
            };
            let ytr: Vec<usize> = train.iter().map(|&i| codes[i]).collect();
            let yte: Vec<usize> = test.iter().map(|&i| codes[i]).collect();
            Ok(Model::ALL
                .iter()
                .map(|model| balanced_accuracy_codes(&yte, &model.fit_predict(&xtr, &ytr, classes.len(), &xte)))
                .collect())
        })
        .collect();

    let mut per_fold: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for scores in fold_scores {
        for (model, s) in Model::ALL.iter().zip(scores?) {
            per_fold.entry(model.name().to_string()).or_default().push(s);
        }
    }
    let per_model: BTreeMap<String, f64> =
        per_fold.iter().map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len() as f64)).collect();
    let best = per_model
        .iter()
        .fold(None::<(&String, f64)>, |best, (k, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((k, v)),
        })
        .map(|(k, _)| k.clone())
        .expect("model zoo is not empty");
    Ok(EvalResult {
        per_model,
        best,
        folds: opts.folds,
        seed: opts.seed,
        pca_k: opts.pca_k,
        paper_mode: opts.paper_mode,
        n_samples: m.x.rows(),
        n_features: m.x.cols(),
        classes,
        per_fold,
    })
}

/// Restricts every table to the file ids present in all of them and in
/// `labels`, then drops classes with fewer than `2 * folds` samples. Rows
/// follow the first table's order. Tables must hold one row per file and
/// no missing values.
pub fn intersect_and_prune(
    tables: &[FeatureTable],
    labels: &BTreeMap<String, String>,
    folds: usize,
) -> Result<Vec<LabeledMatrix>, EvalError> {
    if folds < 2 {
        return Err(EvalError::InvalidFolds(folds));
    }
    let first = tables.first().ok_or_else(|| EvalError::Invalid("no tables given".into()))?;
    let mut indexes: Vec<HashMap<&str, usize>> = Vec::with_capacity(tables.len());
    for t in tables {
        let mut idx = HashMap::with_capacity(t.len());
        for (i, r) in t.rows().iter().enumerate() {
            if idx.insert(r.file_id.as_str(), i).is_some() {
                return Err(EvalError::DuplicateId(r.file_id.clone()));
            }
        }
        indexes.push(idx);
    }
    let common: Vec<&str> = first
        .rows()
        .iter()
        .map(|r| r.file_id.as_str())
        .filter(|id| labels.contains_key(*id) && indexes.iter().all(|idx| idx.contains_key(id)))
        .collect();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in &common {
        *counts.entry(labels[*id].as_str()).or_default() += 1;
    }
    let ids: Vec<&str> = common.into_iter().filter(|id| counts[labels[*id].as_str()] >= 2 * folds).collect();
    let surviving: HashSet<&str> = ids.iter().map(|id| labels[*id].as_str()).collect();
    if surviving.len() < 2 {
        return Err(EvalError::TooFewClasses(surviving.len()));
    }

    tables
        .iter()
        .zip(&indexes)
        .enumerate()
        .map(|(ti, (t, idx))| {
            let mut data = Vec::with_capacity(ids.len() * t.columns().len());
            for id in &ids {
                let row = &t.rows()[idx[id]];
                if let Some(j) = row.values.iter().position(|v| !v.is_finite()) {
                    return Err(EvalError::MissingValue { table: ti, file_id: id.to_string(), column: t.columns()[j].clone() });
                }
                data.extend_from_slice(&row.values);
            }
            LabeledMatrix::new(
                Matrix::from_vec(ids.len(), t.columns().len(), data),
                ids.iter().map(|id| labels[*id].clone()).collect(),
                t.columns().to_vec(),
                ids.iter().map(|id| id.to_string()).collect(),
            )
        })
        .collect()
}

/// Inner join on the row key; each feature column becomes `<tag>.<name>`.
pub fn combine_tables(tables: &[FeatureTable], tags: &[String]) -> Result<FeatureTable, EvalError> {
    if tables.len() != tags.len() {
        return Err(EvalError::Invalid(format!("{} tables but {} tags", tables.len(), tags.len())));
    }
    if tables.len() < 2 {
        return Err(EvalError::Invalid("combining needs at least two tables".into()));
    }
    let mut seen = HashSet::new();
    for t in tags {
        if !seen.insert(t.as_str()) {
            return Err(EvalError::DuplicateTag(t.clone()));
        }
    }
    let keyed: Vec<HashMap<(&str, u32, u32), &TableRow>> =
        tables.iter().map(|t| t.rows().iter().map(|r| (r.key(), r)).collect()).collect();
    let columns: Vec<String> =
        tables.iter().zip(tags).flat_map(|(t, tag)| t.columns().iter().map(move |c| format!("{tag}.{c}"))).collect();
    let mut out = FeatureTable::new(columns)?;
    for r in tables[0].rows() {
        let key = r.key();
        if !keyed.iter().all(|k| k.contains_key(&key)) {
            continue;
        }
        let values = keyed.iter().flat_map(|k| k[&key].values.iter().copied()).collect();
        out.push_row(TableRow { file_id: r.file_id.clone(), window_start: r.window_start, window_end: r.window_end, values })?;
    }
    if out.is_empty() {
        return Err(EvalError::EmptyJoin);
    }
    Ok(out)
}

/// Reads a `file_id,class` CSV.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>, EvalError> {
    let bytes = std::fs::read(path).map_err(|e| EvalError::Labels(format!("{}: {e}", path.display())))?;
    labels_from_csv(&bytes)
}

pub fn labels_from_csv(bytes: &[u8]) -> Result<BTreeMap<String, String>, EvalError> {
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers().map_err(|e| EvalError::Labels(e.to_string()))?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h.trim() == name).ok_or_else(|| EvalError::Labels(format!("missing column {name}")))
    };
    let (id_col, class_col) = (col("file_id")?, col("class")?);
    let mut labels = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| EvalError::Labels(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let (id, class) = match (rec.get(id_col), rec.get(class_col)) {
            (Some(i), Some(c)) if !i.trim().is_empty() && !c.trim().is_empty() => (i.trim(), c.trim()),
            _ => return Err(EvalError::Labels(format!("line {line}: missing file_id or class"))),
        };
        if let Some(prev) = labels.insert(id.to_string(), class.to_string()) {
            if prev != class {
                return Err(EvalError::Labels(format!("line {line}: {id} labelled both {prev} and {class}")));
            }
        }
    }
    Ok(labels)
}
