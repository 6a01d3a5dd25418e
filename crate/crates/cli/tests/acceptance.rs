//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when any criterion fails.
//!
//! A criterion whose hardware precondition the host cannot meet (the
//! parallel-speedup clause is stated for a 4-core machine) still prints
//! FAIL, but only fails the process when `NOTEFEAT_STRICT=1`.
//!
//! Criterion 9 needs the public string-quartet **kern corpus laid out as
//! `<NOTEFEAT_QUARTETS_DIR>/<composer>/**/*.krn`; it is skipped otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use notefeat_core::builder::{q, ScoreBuilder};
use notefeat_core::encode::encode;
use notefeat_core::eval::{pca_fit_transform, standardize, Matrix};
use notefeat_core::postprocess::nan_filter;
use notefeat_core::synth::{conformance_corpus, gaussian_blobs, write_midi_corpus};
use notefeat_core::{cross_validate, CvOptions, FeatureGroup, FeatureTable, LabeledMatrix, SourceFormat, TableRow};

// Thresholds as stated by the criteria.
const AC1_WARM_OVER_COLD: f64 = 0.6;
const AC1_BUDGET: Duration = Duration::from_secs(60);
const AC2_PARALLEL_OVER_SERIAL: f64 = 0.67;
const AC2_CORES: usize = 4;
const AC4_TOL: f64 = 1e-9;
const AC5_BUDGET: Duration = Duration::from_secs(5);
const AC7_ORTHO_TOL: f64 = 1e-8;
const AC7_ORACLE_TOL: f64 = 1e-6;
const AC7_SUM_TOL: f64 = 1e-9;
const AC8_KNN_MIN: f64 = 0.95;
const AC8_DUMMY_TOL: f64 = 0.02;
const AC8_PERMUTATION_TOL: f64 = 0.1;
const AC8_BUDGET: Duration = Duration::from_secs(30);
const AC9_MIN_ACCURACY: f64 = 0.55;

const CORPUS_FILES: usize = 200;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Failed, and the host does not meet the criterion's hardware precondition.
    FailOnHost(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn notefeat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_notefeat"))
        .args(args)
        .env("NO_COLOR", "1")
        .env("RUST_LOG", "error")
        .output()
        .expect("notefeat binary runs")
}

fn timed(args: &[&str]) -> (Output, Duration) {
    let start = Instant::now();
    let out = notefeat(args);
    (out, start.elapsed())
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).expect("report written")).expect("valid JSON")
}

fn stderr_tail(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("").to_string()
}

fn ac1_cache_speedup(corpus: &Path, work: &Path) -> Verdict {
    let cache = work.join("cache");
    let run = |tag: &str| {
        let csv = work.join(format!("{tag}.csv"));
        let report = work.join(format!("{tag}.json"));
        let (out, t) = timed(&["extract", "--input", s(corpus), "--output", s(&csv), "--cache-dir", s(&cache), "--report", s(&report)]);
        (out, t, csv, report)
    };
    let (cold_out, cold, cold_csv, cold_report) = run("ac1_cold");
    let (warm_out, warm, warm_csv, warm_report) = run("ac1_warm");
    if !cold_out.status.success() || !warm_out.status.success() {
        return Verdict::Fail(format!("extract failed: {}{}", stderr_tail(&cold_out), stderr_tail(&warm_out)));
    }
    let ratio = warm.as_secs_f64() / cold.as_secs_f64();
    let invocations = read_json(&warm_report)["parser_invocations"].as_u64();
    let hits = read_json(&warm_report)["cache_hits"].as_u64();
    let cold_invocations = read_json(&cold_report)["parser_invocations"].as_u64();
    let same = fs::read(&cold_csv).ok() == fs::read(&warm_csv).ok();
    let total = cold + warm;
    verdict(
        ratio <= AC1_WARM_OVER_COLD && invocations == Some(0) && same && total < AC1_BUDGET,
        format!(
            "cold {:.2}s ({} parses), warm {:.2}s = {ratio:.3} x cold (limit {AC1_WARM_OVER_COLD}); warm parser invocations {}, cache hits {}; tables identical: {same}; total {:.1}s (limit {}s)",
            cold.as_secs_f64(),
            cold_invocations.unwrap_or(u64::MAX),
            warm.as_secs_f64(),
            invocations.map_or("?".into(), |v| v.to_string()),
            hits.map_or("?".into(), |v| v.to_string()),
            total.as_secs_f64(),
            AC1_BUDGET.as_secs()
        ),
    )
}

fn ac2_parallel_scaling(corpus: &Path, work: &Path) -> Verdict {
    let run = |jobs: &str| {
        let csv = work.join(format!("ac2_jobs{jobs}.csv"));
        let (out, t) = timed(&["extract", "--input", s(corpus), "--output", s(&csv), "--jobs", jobs]);
        (out, t, fs::read(&csv).ok())
    };
    let (o1, t1, csv1) = run("1");
    let (o4, t4, csv4) = run("4");
    if !o1.status.success() || !o4.status.success() {
        return Verdict::Fail("extract failed".into());
    }
    let identical = csv1.is_some() && csv1 == csv4;
    let ratio = t4.as_secs_f64() / t1.as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!(
        "jobs=1 {:.2}s, jobs=4 {:.2}s = {ratio:.3} x (limit {AC2_PARALLEL_OVER_SERIAL}); outputs byte-identical: {identical}; host cores {cores}",
        t1.as_secs_f64(),
        t4.as_secs_f64()
    );
    match (identical, ratio <= AC2_PARALLEL_OVER_SERIAL) {
        (true, true) => Verdict::Pass(detail),
        (true, false) if cores < AC2_CORES => {
            Verdict::FailOnHost(format!("{detail}; the speedup clause needs {AC2_CORES} cores"))
        }
        _ => Verdict::Fail(detail),
    }
}

fn ac3_error_isolation(work: &Path) -> Verdict {
    let dir = work.join("ac3");
    write_midi_corpus(&dir, 50, 3).expect("corpus written");
    let valid_midi = fs::read(dir.join("synth_0000.mid")).unwrap();
    fs::write(dir.join("bad_truncated.mid"), &valid_midi[..valid_midi.len() / 3]).unwrap();
    fs::write(dir.join("bad_header.mid"), b"RIFF\0\0\0\x04WAVE").unwrap();
    fs::write(dir.join("bad_empty.mid"), b"").unwrap();
    fs::write(dir.join("bad_unclosed.musicxml"), b"<?xml version=\"1.0\"?><score-partwise><part-list>").unwrap();
    fs::write(dir.join("bad_spines.krn"), b"**kern\t**kern\n4c\n*-\n").unwrap();
    let csv = work.join("ac3.csv");
    let report = work.join("ac3.json");
    let out = notefeat(&["extract", "--input", s(&dir), "--output", s(&csv), "--report", s(&report)]);
    let code = out.status.code();
    let rows = FeatureTable::read_csv(&csv).map(|t| t.len()).unwrap_or(usize::MAX);
    let r = read_json(&report);
    let errored = r["files_errored"].as_u64();
    let bad_ids: Vec<String> = r["errors"]
        .as_array()
        .map(|a| a.iter().filter_map(|e| e["path"].as_str().map(String::from)).collect())
        .unwrap_or_default();
    verdict(
        code == Some(0) && rows == 50 && errored == Some(5),
        format!("exit code {code:?}, {rows} rows (want 50), files_errored {errored:?} (want 5) {bad_ids:?}"),
    )
}

fn is_count(column: &str) -> bool {
    column.ends_with("Count")
}

fn ac4_format_invariance(work: &Path) -> Verdict {
    let corpus = conformance_corpus();
    let formats = [(SourceFormat::Midi, "mid"), (SourceFormat::MusicXml, "musicxml"), (SourceFormat::Kern, "krn")];
    let mut tables = Vec::new();
    for (format, ext) in formats {
        let dir = work.join(format!("ac4_{ext}"));
        fs::create_dir_all(&dir).unwrap();
        for (name, score) in &corpus {
            fs::write(dir.join(format!("{name}.{ext}")), encode(score, format).expect("encodable")).unwrap();
        }
        let csv = work.join(format!("ac4_{ext}.csv"));
        let out = notefeat(&[
            "extract",
            "--input",
            s(&dir),
            "--output",
            s(&csv),
            "--features",
            "pitch,interval,vertical,rhythm,texture,key,harmony",
        ]);
        if !out.status.success() {
            return Verdict::Fail(format!("{ext}: {}", stderr_tail(&out)));
        }
        tables.push(FeatureTable::read_csv(&csv).expect("table written"));
    }
    let stem = |id: &str| id.rsplit_once('.').map_or(id.to_string(), |(a, _)| a.to_string());
    let reference = &tables[0];
    let mut compared = 0usize;
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for (t, (_, ext)) in tables.iter().zip(formats).skip(1) {
        if t.columns() != reference.columns() || t.len() != corpus.len() || reference.len() != corpus.len() {
            problems.push(format!("{ext}: table shape differs"));
            continue;
        }
        for (a, b) in reference.rows().iter().zip(t.rows()) {
            if stem(&a.file_id) != stem(&b.file_id) {
                problems.push(format!("{ext}: row order {} vs {}", a.file_id, b.file_id));
                continue;
            }
            for (c, name) in reference.columns().iter().enumerate() {
                let (x, y) = (a.values[c], b.values[c]);
                compared += 1;
                let ok = match (x.is_nan(), y.is_nan()) {
                    (true, true) => true,
                    (false, false) if is_count(name) => x == y,
                    (false, false) => {
                        worst = worst.max((x - y).abs());
                        (x - y).abs() <= AC4_TOL
                    }
                    _ => false,
                };
                if !ok {
                    problems.push(format!("{} {name}: midi {x} vs {ext} {y}", stem(&a.file_id)));
                }
            }
        }
    }
    verdict(
        problems.is_empty() && compared > 0,
        format!(
            "{} scores x 3 formats, {} columns, {compared} comparisons, max deviation {worst:.1e} (tol {AC4_TOL:e}, counts exact){}",
            corpus.len(),
            reference.columns().len(),
            problems.iter().take(3).fold(String::new(), |mut acc, p| {
                let _ = write!(acc, "; {p}");
                acc
            })
        ),
    )
}

fn random_table(rows: usize, cols: usize, density: f64, rng: &mut ChaCha8Rng) -> FeatureTable {
    let mut t = FeatureTable::new((0..cols).map(|c| format!("F{c}")).collect()).unwrap();
    for i in 0..rows {
        let values = (0..cols)
            .map(|_| if rng.gen_bool(density) { f64::NAN } else { rng.gen_range(-1e6..1e6) })
            .collect();
        t.push_row(TableRow { file_id: format!("r{i}"), window_start: 0, window_end: 0, values }).unwrap();
    }
    t
}

/// The filter evaluated straight from its definition: `q99` is the value at
/// sorted position `ceil(0.99 R)`, located by scanning for the first count
/// whose cumulative frequency reaches 99% of the rows.
fn nan_filter_oracle(t: &FeatureTable) -> (Vec<String>, Vec<String>) {
    let rows = t.len();
    let nan = |i: usize, c: usize| t.rows()[i].values[c].is_nan();
    let cols = t.columns().len();
    let clean = (0..cols).filter(|&c| (0..rows).all(|i| !nan(i, c))).count();
    let n: Vec<usize> = (0..rows).map(|i| (0..cols).filter(|&c| nan(i, c)).count()).collect();
    let max_n = *n.iter().max().unwrap();
    let q99 = (0..=max_n).find(|&v| 100 * n.iter().filter(|&&x| x <= v).count() >= 99 * rows).unwrap();
    let keep: Vec<usize> = if (clean as f64 / rows as f64) < 0.1 {
        (0..rows).filter(|&i| n[i] as f64 <= q99 as f64 / 0.99).collect()
    } else {
        (0..rows).collect()
    };
    let kept_cols = (0..cols).filter(|&c| keep.iter().all(|&i| !nan(i, c))).map(|c| t.columns()[c].clone()).collect();
    (keep.iter().map(|&i| t.rows()[i].file_id.clone()).collect(), kept_cols)
}

fn ac5_nan_heuristic() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut filtered, mut bound_ok) = (0, 0, true);
    for _ in 0..100 {
        let rows = rng.gen_range(5..=200);
        let cols = rng.gen_range(3..=60);
        let density = rng.gen_range(0.0..=0.5);
        let t = random_table(rows, cols, density, &mut rng);
        let (out, report) = nan_filter(&t).expect("nonempty");
        let (want_rows, want_cols) = nan_filter_oracle(&t);
        let got_rows: Vec<String> = out.rows().iter().map(|r| r.file_id.clone()).collect();
        if got_rows == want_rows && out.columns() == want_cols.as_slice() && !out.has_nan() {
            agree += 1;
        }
        if report.row_filter_applied {
            filtered += 1;
            bound_ok &= report.rows_removed.len() <= rows / 100;
        }
    }

    // 1000 x 50 with three clean columns: 990 rows miss only column 3, ten
    // heavy rows miss 40 columns each.
    let mut t = FeatureTable::new((0..50).map(|c| format!("C{c:02}")).collect()).unwrap();
    for i in 0..1000 {
        let mut v = vec![1.0; 50];
        if i % 100 == 7 {
            for j in 0..40 {
                v[4 + ((i / 100) * 7 + j) % 46] = f64::NAN;
            }
        } else {
            v[3] = f64::NAN;
        }
        t.push_row(TableRow { file_id: format!("r{i}"), window_start: 0, window_end: 0, values: v }).unwrap();
    }
    let (out, report) = nan_filter(&t).unwrap();
    let heavy: Vec<usize> = (0..10).map(|k| k * 100 + 7).collect();
    let example_ok = report.rows_removed == heavy && out.len() == 990 && (report.threshold - 1.0 / 0.99).abs() < 1e-12;
    let elapsed = start.elapsed();
    verdict(
        agree == 100 && bound_ok && filtered > 0 && example_ok && elapsed < AC5_BUDGET,
        format!(
            "oracle agreement {agree}/100 ({filtered} ran the row filter, bound held: {bound_ok}); constructed example removed rows {:?}, threshold {:.4}, {} columns kept; {:.2}s (limit {}s)",
            report.rows_removed,
            report.threshold,
            out.columns().len(),
            elapsed.as_secs_f64(),
            AC5_BUDGET.as_secs()
        ),
    )
}

fn ac6_key_finding() -> Verdict {
    const MAJOR: [u8; 8] = [0, 2, 4, 5, 7, 9, 11, 12];
    const MINOR: [u8; 8] = [0, 2, 3, 5, 7, 8, 10, 12];
    let mut wrong = Vec::new();
    for tonic in 0..12u8 {
        for (mode, steps) in [(0.0, MAJOR), (1.0, MINOR)] {
            let mut b = ScoreBuilder::new(SourceFormat::MusicXml);
            let p = b.part("", None);
            for (i, step) in steps.iter().enumerate() {
                b.note(p, q(i as i64, 1), q(1, 1), 60 + tonic + step);
            }
            let m = FeatureGroup::Key.compute(&b.build().unwrap(), None);
            if m.get("KS_TonicPC") != Some(f64::from(tonic)) || m.get("KS_Mode") != Some(mode) {
                wrong.push(format!("{tonic}/{}", if mode == 0.0 { "major" } else { "minor" }));
            }
        }
    }
    verdict(wrong.is_empty(), format!("{}/24 scales classified correctly {wrong:?}", 24 - wrong.len()))
}

fn ac7_pca() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (0..8).map(|j| z[j] * (j + 1) as f64 + 0.5 * z[(j + 3) % 8]).collect()
        })
        .collect();
    let (z, _) = standardize(&Matrix::from_rows(&rows)).unwrap();
    let (_, pca) = pca_fit_transform(&z, 8).unwrap();
    let c = &pca.components;

    let mut ortho = 0.0f64;
    for a in 0..8 {
        for b in 0..8 {
            let dot: f64 = (0..8).map(|j| c[(a, j)] * c[(b, j)]).sum();
            ortho = ortho.max((dot - f64::from(u8::from(a == b))).abs());
        }
    }
    let nonincreasing = pca.explained_variance.windows(2).all(|w| w[0] >= w[1]);
    let sum_err = (pca.explained_variance.iter().sum::<f64>() - 8.0).abs();

    let x = DMatrix::from_fn(50, 8, |i, j| z[(i, j)]);
    let eig = SymmetricEigen::new(x.transpose() * &x / 50.0);
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut oracle_err = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        oracle_err = oracle_err.max((eig.eigenvalues[i] - pca.explained_variance[k]).abs());
        let v = eig.eigenvectors.column(i);
        // Compare up to sign.
        let plus = (0..8).map(|j| (v[j] - c[(k, j)]).abs()).fold(0.0, f64::max);
        let minus = (0..8).map(|j| (v[j] + c[(k, j)]).abs()).fold(0.0, f64::max);
        oracle_err = oracle_err.max(plus.min(minus));
    }
    verdict(
        ortho <= AC7_ORTHO_TOL && nonincreasing && oracle_err <= AC7_ORACLE_TOL && sum_err <= AC7_SUM_TOL,
        format!(
            "orthonormality error {ortho:.1e} (tol {AC7_ORTHO_TOL:e}); nonincreasing {nonincreasing}; oracle deviation {oracle_err:.1e} (tol {AC7_ORACLE_TOL:e}); variance sum error {sum_err:.1e} (tol {AC7_SUM_TOL:e})"
        ),
    )
}

fn labeled(x: Matrix, y: Vec<String>) -> LabeledMatrix {
    let names = (0..x.cols()).map(|j| format!("x{j}")).collect();
    let ids = (0..y.len()).map(|i| format!("s{i}")).collect();
    LabeledMatrix::new(x, y, names, ids).expect("valid matrix")
}

fn ac8_eval_sanity() -> Verdict {
    let start = Instant::now();
    let opts = CvOptions::new(10, 0);
    let (x, y) = gaussian_blobs(&[vec![-5.0, -5.0], vec![5.0, 5.0]], 50, 1.0, 8);
    let blobs = cross_validate(&labeled(x.clone(), y.clone()), &opts).unwrap();
    let knn = blobs.per_model["knn"];

    let centers: Vec<Vec<f64>> = (0..4).map(|c| vec![f64::from(c), -f64::from(c)]).collect();
    let (x4, y4) = gaussian_blobs(&centers, 25, 1.0, 9);
    let dummy = cross_validate(&labeled(x4, y4), &opts).unwrap().per_model["dummy"];

    let mut shuffled = y;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(10));
    let perm = cross_validate(&labeled(x, shuffled), &opts).unwrap();
    let gaps: Vec<f64> =
        ["knn", "logistic_regression"].iter().map(|m| (perm.per_model[*m] - perm.per_model["dummy"]).abs()).collect();
    let gap = gaps.iter().copied().fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        knn >= AC8_KNN_MIN && (dummy - 0.25).abs() <= AC8_DUMMY_TOL && gap <= AC8_PERMUTATION_TOL && elapsed < AC8_BUDGET,
        format!(
            "blobs kNN {knn:.3} (min {AC8_KNN_MIN}); 4-class dummy {dummy:.3} (0.25 +/- {AC8_DUMMY_TOL}); permuted labels max |model - dummy| {gap:.3} (tol {AC8_PERMUTATION_TOL}); {:.2}s (limit {}s)",
            elapsed.as_secs_f64(),
            AC8_BUDGET.as_secs()
        ),
    )
}

fn ac9_quartets(work: &Path) -> Verdict {
    let Some(root) = std::env::var_os("NOTEFEAT_QUARTETS_DIR").map(PathBuf::from) else {
        return Verdict::Skip("NOTEFEAT_QUARTETS_DIR not set".into());
    };
    if !root.is_dir() {
        return Verdict::Skip(format!("{} is not a directory", root.display()));
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get()).to_string();
    let raw = work.join("ac9_raw.csv");
    let clean = work.join("ac9_clean.csv");
    let labels = work.join("ac9_labels.csv");
    let report = work.join("ac9_eval.json");
    let out = notefeat(&["extract", "--input", s(&root), "--output", s(&raw), "--format", "kern", "--jobs", &jobs]);
    if !out.status.success() {
        return Verdict::Fail(format!("extract: {}", stderr_tail(&out)));
    }
    let out = notefeat(&["postprocess", "--table", s(&raw), "--output", s(&clean), "--nan-filter"]);
    if !out.status.success() {
        return Verdict::Fail(format!("postprocess: {}", stderr_tail(&out)));
    }
    // The class is the first path component under the corpus root.
    let table = FeatureTable::read_csv(&clean).unwrap();
    let mut text = String::from("file_id,class\n");
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    for row in table.rows() {
        if let Some((class, _)) = row.file_id.split_once('/') {
            *classes.entry(class.to_string()).or_default() += 1;
            let _ = writeln!(text, "\"{}\",\"{class}\"", row.file_id.replace('"', "\"\""));
        }
    }
    fs::write(&labels, text).unwrap();
    let out = notefeat(&[
        "evaluate", "--table", s(&clean), "--labels", s(&labels), "--folds", "10", "--seed", "0", "--pca", "10", "--report", s(&report),
    ]);
    if !out.status.success() {
        return Verdict::Fail(format!("evaluate: {}", stderr_tail(&out)));
    }
    let r = read_json(&report);
    let best = r["best"].as_str().unwrap_or("?").to_string();
    let acc = r["per_model"][&best].as_f64().unwrap_or(f64::NAN);
    verdict(
        acc >= AC9_MIN_ACCURACY && classes.len() == 3,
        format!("{} pieces in classes {classes:?}; best {best} balanced accuracy {acc:.3} (min {AC9_MIN_ACCURACY})", table.len()),
    )
}

fn ac10_csv_round_trip(work: &Path) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok = 0;
    let path = work.join("ac10.csv");
    for i in 0..50 {
        let (rows, cols) = match i {
            0 => (0, 4),
            1 => (0, 0),
            2 => (5, 0),
            _ => (rng.gen_range(1..40), rng.gen_range(1..12)),
        };
        let mut t = random_table(rows, cols, rng.gen_range(0.0..0.5), &mut rng);
        if i % 5 == 3 {
            // One all-NaN column.
            for v in t.values_mut() {
                v[0] = f64::NAN;
            }
        }
        if i % 7 == 4 {
            for v in t.values_mut() {
                v.iter_mut().for_each(|x| *x = [-0.0, 1e-310, 1.0 / 3.0, f64::MAX][rng.gen_range(0..4)]);
            }
        }
        t.write_csv(&path).unwrap();
        if FeatureTable::read_csv(&path).is_ok_and(|back| back.nan_eq(&t)) {
            ok += 1;
        }
    }
    verdict(ok == 50, format!("{ok}/50 tables identical after write and read (empty tables and all-NaN columns included)"))
}

fn main() {
    // Plain `cargo test` passes filter arguments; honor `--list` and ignore the rest.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let strict = std::env::var("NOTEFEAT_STRICT").is_ok_and(|v| v == "1");
    let work = tempfile::tempdir().expect("temp dir");
    let corpus = work.path().join("synthetic");
    write_midi_corpus(&corpus, CORPUS_FILES, 2024).expect("synthetic corpus written");

    let checks: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("AC1 cache speedup", Box::new(|| ac1_cache_speedup(&corpus, work.path()))),
        ("AC2 parallel scaling", Box::new(|| ac2_parallel_scaling(&corpus, work.path()))),
        ("AC3 error isolation", Box::new(|| ac3_error_isolation(work.path()))),
        ("AC4 format invariance", Box::new(|| ac4_format_invariance(work.path()))),
        ("AC5 NaN heuristic", Box::new(ac5_nan_heuristic)),
        ("AC6 key finding", Box::new(ac6_key_finding)),
        ("AC7 PCA correctness", Box::new(ac7_pca)),
        ("AC8 evaluation sanity", Box::new(ac8_eval_sanity)),
        ("AC9 quartet composers", Box::new(|| ac9_quartets(work.path()))),
        ("AC10 CSV round trip", Box::new(|| ac10_csv_round_trip(work.path()))),
    ];

    let mut fatal = 0;
    for (name, check) in &checks {
        let line = match check() {
            Verdict::Pass(d) => format!("PASS {name}: {d}"),
            Verdict::Fail(d) => {
                fatal += 1;
                format!("FAIL {name}: {d}")
            }
            Verdict::FailOnHost(d) => {
                fatal += usize::from(strict);
                format!("FAIL {name}: {d}")
            }
            Verdict::Skip(d) => format!("SKIP {name}: {d}"),
        };
        println!("{line}");
    }
    if fatal > 0 {
        println!("{fatal} acceptance criteria failed");
        std::process::exit(1);
    }
}
