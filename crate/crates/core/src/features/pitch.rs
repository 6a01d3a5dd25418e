use super::{mean, pop_std, ratio, Clock, Exact, FeatureMap, Ticks};
use crate::model::{NoteEvent, Score};

const DISSONANT_CLASSES: [usize; 5] = [1, 2, 6, 10, 11];

pub(super) fn pitch_names() -> Vec<String> {
    let mut v: Vec<String> = ["Pitch_Count", "Pitch_Mean", "Pitch_Std", "Pitch_Min", "Pitch_Max", "Pitch_Range", "Pitch_DistinctCount", "PC_Entropy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend((0..12).map(|i| format!("PC_Hist_{i}")));
    v
}

fn interval_hist_name(m: i32) -> String {
    if m < 0 {
        format!("Interval_Hist_m{}", -m)
    } else {
        format!("Interval_Hist_{m}")
    }
}

pub(super) fn interval_names() -> Vec<String> {
    let mut v: Vec<String> = [
        "Interval_MeanAbs",
        "Interval_Std",
        "Interval_StepRatio",
        "Interval_LeapRatio",
        "Interval_RepeatRatio",
        "Interval_AscendRatio",
        "Interval_Largest",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend((-12..=12).map(interval_hist_name));
    v
}

pub(super) fn vertical_names() -> Vec<String> {
    let mut v: Vec<String> = (0..12).map(|i| format!("VInt_Hist_{i}")).collect();
    v.push("VInt_DissonanceRatio".into());
    v.push("VInt_Count".into());
    v
}

/// Pitch statistics over every note, grace notes included.
pub fn pitch_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&pitch_names());
    let pitches: Vec<f64> = score.notes().map(|n| f64::from(n.midi_pitch)).collect();
    m.insert("Pitch_Count", pitches.len() as f64);
    if pitches.is_empty() {
        return m;
    }
    let min = pitches.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pitches.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m.insert("Pitch_Mean", mean(&pitches));
    m.insert("Pitch_Std", pop_std(&pitches));
    m.insert("Pitch_Min", min);
    m.insert("Pitch_Max", max);
    m.insert("Pitch_Range", max - min);

    let mut seen = [false; 128];
    let mut pc = [0usize; 12];
    for n in score.notes() {
        seen[n.midi_pitch as usize] = true;
        pc[(n.midi_pitch % 12) as usize] += 1;
    }
    m.insert("Pitch_DistinctCount", seen.iter().filter(|&&s| s).count() as f64);
    let total = pitches.len() as f64;
    let mut entropy = 0.0;
    for (i, &c) in pc.iter().enumerate() {
        let p = c as f64 / total;
        m.insert(format!("PC_Hist_{i}"), p);
        if c > 0 {
            entropy -= p * p.log2();
        }
    }
    m.insert("PC_Entropy", entropy);
    m
}

/// The highest pitch at each distinct onset of a part, grace notes skipped.
fn skyline(notes: &[NoteEvent]) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::new();
    let mut last_onset = None;
    for n in notes.iter().filter(|n| !n.grace) {
        let p = i32::from(n.midi_pitch);
        if last_onset == Some(n.onset) {
            let top = out.last_mut().unwrap();
            *top = (*top).max(p);
        } else {
            out.push(p);
            last_onset = Some(n.onset);
        }
    }
    out
}

/// Melodic intervals between consecutive skyline notes within each part,
/// pooled across parts.
pub fn melodic_interval_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&interval_names());
    let intervals: Vec<i32> = score
        .parts
        .iter()
        .flat_map(|p| {
            let line = skyline(&p.notes);
            line.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
        })
        .collect();
    if intervals.is_empty() {
        return m;
    }
    let n = intervals.len() as f64;
    let signed: Vec<f64> = intervals.iter().map(|&i| f64::from(i)).collect();
    let abs: Vec<f64> = signed.iter().map(|i| i.abs()).collect();
    let count = |f: &dyn Fn(i32) -> bool| intervals.iter().filter(|&&i| f(i)).count() as f64;

    m.insert("Interval_MeanAbs", mean(&abs));
    m.insert("Interval_Std", pop_std(&signed));
    m.insert("Interval_StepRatio", count(&|i| matches!(i.abs(), 1 | 2)) / n);
    m.insert("Interval_LeapRatio", count(&|i| i.abs() >= 5) / n);
    m.insert("Interval_RepeatRatio", count(&|i| i == 0) / n);
    m.insert("Interval_AscendRatio", ratio(count(&|i| i > 0), count(&|i| i != 0)));
    m.insert("Interval_Largest", abs.iter().copied().fold(0.0, f64::max));
    let mut hist = [0usize; 25];
    for &i in &intervals {
        hist[(i.clamp(-12, 12) + 12) as usize] += 1;
    }
    for (k, &c) in hist.iter().enumerate() {
        m.insert(interval_hist_name(k as i32 - 12), c as f64 / n);
    }
    m
}

/// Vertical intervals between simultaneously sounding notes of different
/// parts, weighted by the duration of their overlap.
pub fn vertical_interval_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&vertical_names());
    let (weights, pairs) = match Ticks::for_score(score) {
        Some(t) => vertical_weights(score, t),
        None => vertical_weights(score, Exact),
    };
    if pairs == 0 {
        return m;
    }
    let total: f64 = weights.iter().sum();
    let mut dissonant = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let share = w / total;
        m.insert(format!("VInt_Hist_{i}"), share);
        if DISSONANT_CLASSES.contains(&i) {
            dissonant += share;
        }
    }
    m.insert("VInt_DissonanceRatio", dissonant);
    m.insert("VInt_Count", pairs as f64);
    m
}

/// Overlap-weighted interval-class histogram and the number of overlapping
/// pairs, sweeping notes in (onset, part, pitch) order.
fn vertical_weights<C: Clock>(score: &Score, clock: C) -> ([f64; 12], usize) {
    let mut events: Vec<(C::T, usize, u8, C::T)> = score
        .parts
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            p.notes.iter().filter(|n| !n.grace).map(move |n| {
                let onset = clock.of(n.onset);
                (onset, pi, n.midi_pitch, onset + clock.of(n.duration))
            })
        })
        .collect();
    events.sort_by_key(|a| (a.0, a.1, a.2));

    let mut weights = [0.0f64; 12];
    let mut pairs = 0usize;
    let mut active: Vec<(usize, u8, C::T)> = Vec::new();
    for (onset, pi, pitch, end) in events {
        active.retain(|a| a.2 > onset);
        for &(pa, pitch_a, end_a) in &active {
            if pa == pi {
                continue;
            }
            let overlap = end_a.min(end) - onset;
            if overlap > clock.zero() {
                let class = (i32::from(pitch_a) - i32::from(pitch)).unsigned_abs() as usize % 12;
                weights[class] += clock.to_f64(overlap);
                pairs += 1;
            }
        }
        active.push((pi, pitch, end));
    }
    (weights, pairs)
}
