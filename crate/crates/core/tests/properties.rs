use std::collections::BTreeMap;

use notefeat_core::builder::{q, ScoreBuilder};
use notefeat_core::cache;
use notefeat_core::encode::encode;
use notefeat_core::extract::{extract, extract_windowed, list_features, ExtractionConfig, PartialWindows};
use notefeat_core::postprocess::nan_filter;
use notefeat_core::{
    parse_bytes, DynamicMark, FeatureGroup, FeatureTable, HarmonicAnnotation, Mode, Score, SourceFormat, SpelledPitch, Step,
    TableRow, TempoSource,
};
use proptest::prelude::*;

type NoteSpec = (usize, i64, i64, i64, i64, u8);

fn notes_strategy(max: usize) -> impl Strategy<Value = Vec<NoteSpec>> {
    prop::collection::vec((0usize..3, 0i64..48, prop::sample::select(vec![1i64, 2, 3, 4]), 1i64..8, prop::sample::select(vec![1i64, 2, 3, 4]), 36u8..90), 0..max)
}

fn build(notes: &[NoteSpec], shift: i16, scale: (i64, i64)) -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml);
    for p in 0..3 {
        b.part(["Violin", "Viola", "Cello"][p], Some(40 + p as u8));
    }
    let s = q(scale.0, scale.1);
    for &(part, on, ond, dur, durd, pitch) in notes {
        b.note(part, q(on, ond) * s, q(dur, durd) * s, (i16::from(pitch) + shift) as u8);
    }
    b.build().unwrap()
}

fn rich_score(notes: &[NoteSpec], extras: u64) -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::Kern).path("dir/x.krn").time_signature(3, 4).meter_change(3, 6, 8);
    let p0 = b.part("Soprano", None);
    let p1 = b.part("", Some(3));
    b.percussive(p1);
    for (i, &(part, on, ond, dur, durd, pitch)) in notes.iter().enumerate() {
        let n = b.note(part % 2, q(on, ond), q(dur, durd), pitch);
        if i % 3 == 0 {
            n.velocity = Some(pitch);
        }
        if i % 4 == 1 {
            n.spelled = Some(SpelledPitch { step: Step::C, alter: 0, octave: (pitch / 12) as i8 - 1 });
            n.midi_pitch = n.spelled.unwrap().midi().unwrap();
        }
        if i % 5 == 2 {
            n.grace = true;
            n.duration = q(0, 1);
        }
        if i % 7 == 3 {
            n.tie_to_next = true;
        }
    }
    if extras & 1 != 0 {
        b.lyric(p0, q(0, 1), "A-");
        b.lyric(p0, q(1, 1), "ve");
    }
    if extras & 2 != 0 {
        b.dynamic(p0, q(1, 2), DynamicMark::Mp);
        b.tempo(q(0, 1), 72.5, TempoSource::TempoWord);
    }
    if extras & 4 != 0 {
        b.key(q(0, 1), -3, Some(Mode::Minor));
        b.key(q(3, 1), 0, None);
    }
    let score = b.build().unwrap();
    let mut data = score.into_data();
    if extras & 8 != 0 {
        data.harmony = vec![
            HarmonicAnnotation { measure_index: 1, beat: 0.0, label: "I".into(), local_key: "C".into() },
            HarmonicAnnotation { measure_index: 2, beat: 1.5, label: "V7/V".into(), local_key: String::new() },
        ];
    }
    data.unrecognized_dynamics = (extras >> 4) as u32 % 5;
    Score::new(data).unwrap()
}

fn hist_sum(row: &notefeat_core::FeatureMap, prefix: &str) -> Option<f64> {
    let vals: Vec<f64> = row.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, v)| v).collect();
    if vals.iter().all(|v| v.is_nan()) {
        None
    } else {
        Some(vals.iter().sum())
    }
}

fn eq_or_both_nan(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cache_payload_round_trips(notes in notes_strategy(40), extras in any::<u64>(), created in any::<u64>()) {
        let score = rich_score(&notes, extras);
        let bytes = cache::encode(&score, created);
        let (back, ts) = cache::decode(&bytes).unwrap();
        prop_assert_eq!(ts, created);
        prop_assert_eq!(back, score);
    }

    #[test]
    fn histograms_normalize_and_ratios_are_bounded(notes in notes_strategy(40)) {
        let row = extract(&build(&notes, 0, (1, 1)), None, &ExtractionConfig::default()).values;
        for prefix in ["PC_Hist_", "Interval_Hist_", "VInt_Hist_", "Duration_Hist_"] {
            if let Some(s) = hist_sum(&row, prefix) {
                prop_assert!((s - 1.0).abs() < 1e-9, "{} sums to {}", prefix, s);
            }
        }
        for (k, v) in row.iter() {
            prop_assert!(!v.is_infinite(), "{} infinite", k);
            if k.ends_with("Ratio") || k.ends_with("Share") {
                prop_assert!(v.is_nan() || (0.0..=1.0).contains(&v), "{} = {}", k, v);
            }
        }
        let e = row.get("PC_Entropy").unwrap();
        prop_assert!(e.is_nan() || (-1e-12..=12f64.log2() + 1e-12).contains(&e));
        let c = row.get("KS_Confidence").unwrap();
        prop_assert!(c.is_nan() || c >= 0.0);
    }

    #[test]
    fn transposition_rotates_pitch_classes(notes in notes_strategy(30), s in -12i16..12) {
        let config = ExtractionConfig::with_groups([FeatureGroup::Pitch, FeatureGroup::Interval, FeatureGroup::Key]);
        let a = extract(&build(&notes, 0, (1, 1)), None, &config).values;
        let b = extract(&build(&notes, s, (1, 1)), None, &config).values;
        for k in 0..12i16 {
            let moved = (k + s).rem_euclid(12);
            let (from, to) = (format!("PC_Hist_{}", k), format!("PC_Hist_{}", moved));
            prop_assert!(eq_or_both_nan(a.get(&from), b.get(&to), 1e-12));
        }
        for (name, v) in a.iter().filter(|(k, _)| k.starts_with("Interval_")) {
            prop_assert!(eq_or_both_nan(Some(v), b.get(name), 1e-12), "{}", name);
        }
        if a.get("KS_Confidence").is_some_and(|c| c > 1e-9) {
            let t = a.get("KS_TonicPC").unwrap() as i16;
            prop_assert_eq!(b.get("KS_TonicPC").unwrap() as i16, (t + s).rem_euclid(12));
            prop_assert_eq!(a.get("KS_Mode"), b.get("KS_Mode"));
        }
    }

    #[test]
    fn time_scaling_keeps_scale_free_features(notes in notes_strategy(30), scale in prop::sample::select(vec![(1i64, 2i64), (2, 1), (3, 1), (2, 3)])) {
        let groups = [FeatureGroup::Pitch, FeatureGroup::Interval, FeatureGroup::Vertical, FeatureGroup::Instrumentation, FeatureGroup::Key, FeatureGroup::Lyrics];
        let config = ExtractionConfig::with_groups(groups);
        let a = extract(&build(&notes, 0, (1, 1)), None, &config).values;
        let b = extract(&build(&notes, 0, scale), None, &config).values;
        for (name, v) in a.iter() {
            prop_assert!(eq_or_both_nan(Some(v), b.get(name), 1e-9), "{}: {} vs {:?}", name, v, b.get(name));
        }
    }

    #[test]
    fn rows_have_exactly_the_listed_names(notes in notes_strategy(20), mask in 0u16..1024) {
        let groups: Vec<FeatureGroup> = FeatureGroup::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, g)| *g).collect();
        let config = ExtractionConfig::with_groups(groups);
        let row = extract(&build(&notes, 0, (1, 1)), None, &config);
        let names: Vec<String> = row.values.names().map(str::to_string).collect();
        prop_assert_eq!(names, list_features(&config));
    }

    #[test]
    fn disjoint_windows_partition_notes(notes in notes_strategy(40), w in 1u32..5) {
        let score = build(&notes, 0, (1, 1));
        let mut config = ExtractionConfig::with_groups([FeatureGroup::Pitch]).windowed(w, 0);
        config.partial_windows = PartialWindows::Always;
        let rows = extract_windowed(&score, None, &config).unwrap();
        let total: f64 = rows.iter().map(|r| r.values.get("Pitch_Count").unwrap()).sum();
        let whole = extract(&score, None, &config).values.get("Pitch_Count").unwrap();
        prop_assert_eq!(total, whole);
        for r in &rows {
            let sub = score.restrict_measures(r.window_start, r.window_end).unwrap();
            prop_assert!(extract(&sub, None, &config).values.bit_eq(&r.values));
        }
    }

    #[test]
    fn parsers_never_panic_on_garbage(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
        for f in [SourceFormat::Midi, SourceFormat::MusicXml, SourceFormat::Kern] {
            let _ = parse_bytes(&bytes, "fuzz", f);
        }
        let _ = cache::decode(&bytes);
    }

    #[test]
    fn parsers_never_panic_on_damaged_files(notes in notes_strategy(12), cut in any::<prop::sample::Index>(), flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 0..6)) {
        let mut mono: Vec<NoteSpec> = notes.iter().map(|n| (0, n.1 * 8, 1, 1, 2, n.5)).collect();
        mono.sort_by_key(|n| n.1);
        mono.dedup_by_key(|n| n.1);
        let score = build(&mono, 0, (1, 1));
        for f in [SourceFormat::Midi, SourceFormat::MusicXml, SourceFormat::Kern] {
            let mut bytes = encode(&score, f).unwrap();
            for (i, b) in &flips {
                let i = i.index(bytes.len());
                bytes[i] ^= b;
            }
            let end = cut.index(bytes.len() + 1);
            let _ = parse_bytes(&bytes[..end], "fuzz", f);
        }
    }

    #[test]
    fn nan_filter_matches_definition(rows in 1usize..60, cols in 1usize..12, density in 0.0f64..0.6, seed in any::<u64>()) {
        let t = random_table(rows, cols, density, seed);
        let (out, report) = nan_filter(&t).unwrap();
        let (expect_rows, expect_cols) = oracle_nan_filter(&t);
        let kept_ids: Vec<&str> = out.rows().iter().map(|r| r.file_id.as_str()).collect();
        let expect_ids: Vec<&str> = expect_rows.iter().map(|&i| t.rows()[i].file_id.as_str()).collect();
        prop_assert_eq!(kept_ids, expect_ids);
        let expect_names: Vec<&str> = expect_cols.iter().map(|&c| t.columns()[c].as_str()).collect();
        prop_assert_eq!(out.columns().iter().map(String::as_str).collect::<Vec<_>>(), expect_names);
        if report.row_filter_applied {
            prop_assert!(report.rows_removed.len() <= rows / 100);
        }
        prop_assert!(!out.has_nan());
        if !out.is_empty() && !out.columns().is_empty() {
            let (again, r2) = nan_filter(&out).unwrap();
            prop_assert!(again.nan_eq(&out));
            prop_assert!(r2.rows_removed.is_empty() && r2.columns_removed.is_empty());
        }
    }

    #[test]
    fn csv_round_trips(rows in 0usize..20, cols in 0usize..8, density in 0.0f64..1.0, seed in any::<u64>()) {
        let t = random_table(rows, cols, density, seed);
        let back = FeatureTable::from_csv_bytes(&t.to_csv_bytes()).unwrap();
        prop_assert!(t.nan_eq(&back));
    }
}

/// Table with random values (including extreme magnitudes and signed
/// zero), awkward file ids and NaN cells at the given density.
pub fn random_table(rows: usize, cols: usize, density: f64, seed: u64) -> FeatureTable {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut t = FeatureTable::new((0..cols).map(|c| format!("F{c}_{}", ["a", "b,c", "d\"e", "ü"][c % 4])).collect()).unwrap();
    for i in 0..rows {
        let values = (0..cols)
            .map(|_| {
                if rng.gen_bool(density) {
                    f64::NAN
                } else {
                    match rng.gen_range(0..6) {
                        0 => rng.gen::<f64>(),
                        1 => -0.0,
                        2 => rng.gen_range(-1e300..1e300),
                        3 => rng.gen::<f64>() * 1e-300,
                        4 => f64::from(rng.gen_range(-1000i32..1000)),
                        _ => 1.0 / 3.0,
                    }
                }
            })
            .collect();
        let file_id = match i % 3 {
            0 => format!("f{i}.mid"),
            1 => format!("dir/with, comma {i}.krn"),
            _ => format!("quote\"{i}\".xml"),
        };
        t.push_row(TableRow { file_id, window_start: i as u32, window_end: i as u32 + 3, values }).unwrap();
    }
    t
}

/// Kept row and column indices, straight from the definition.
fn oracle_nan_filter(t: &FeatureTable) -> (Vec<usize>, Vec<usize>) {
    let r_count = t.len();
    let cols = t.columns().len();
    let is_nan = |i: usize, c: usize| t.rows()[i].values[c].is_nan();
    let clean = (0..cols).filter(|&c| (0..r_count).all(|i| !is_nan(i, c))).count();
    let n: Vec<usize> = (0..r_count).map(|i| (0..cols).filter(|&c| is_nan(i, c)).count()).collect();
    // Nearest-rank quantile: the smallest count v with #{n_i <= v} >= 0.99 R.
    let mut candidates: Vec<usize> = n.clone();
    candidates.sort();
    let q99 = *candidates.iter().find(|&&v| n.iter().filter(|&&x| x <= v).count() * 100 >= 99 * r_count).unwrap();
    let keep: Vec<usize> = if (clean as f64) / (r_count as f64) < 0.1 {
        (0..r_count).filter(|&i| (n[i] as f64) <= q99 as f64 / 0.99).collect()
    } else {
        (0..r_count).collect()
    };
    let kept_cols = (0..cols).filter(|&c| keep.iter().all(|&i| !is_nan(i, c))).collect();
    (keep, kept_cols)
}

#[test]
fn oracle_reproduces_the_constructed_example() {
    // 1000 x 50: ten heavy rows with 40 NaNs each cover all but four columns,
    // and every other row misses column 3.
    let mut t = FeatureTable::new((0..50).map(|c| format!("C{c:02}")).collect()).unwrap();
    for i in 0..1000 {
        let mut v = vec![1.0; 50];
        if i % 100 == 7 {
            let k = i / 100;
            for j in 0..40 {
                v[4 + (k * 7 + j) % 46] = f64::NAN;
            }
        } else {
            v[3] = f64::NAN;
        }
        t.push_row(TableRow { file_id: format!("r{i}"), window_start: 0, window_end: 0, values: v }).unwrap();
    }
    let (rows, cols) = oracle_nan_filter(&t);
    assert_eq!(rows.len(), 990);
    assert_eq!(cols.len(), 49);
    let (out, report) = nan_filter(&t).unwrap();
    assert_eq!(out.len(), 990);
    assert_eq!(report.rows_removed, (0..10).map(|k| k * 100 + 7).collect::<Vec<_>>());
    let labels: BTreeMap<&str, usize> = out.columns().iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    assert!(!labels.contains_key("C03"));
}
