use num_traits::Zero;

use super::{mean, pop_std, ratio, Clock, Exact, FeatureMap, Ticks};
use crate::model::{q_to_f64, NoteEvent, Quarters, Score, TempoSource};

/// Duration histogram buckets as powers of two: 1/4, 1/2, 1, 2, 4 quarters.
const DURATION_BUCKETS: [&str; 5] = ["0_25", "0_5", "1", "2", "4"];

pub(super) fn rhythm_names() -> Vec<String> {
    let mut v: Vec<String> =
        ["NoteDensity", "Duration_Mean", "Duration_Std", "OffbeatRatio", "IOI_Mean"].iter().map(|s| s.to_string()).collect();
    v.extend(DURATION_BUCKETS.iter().map(|s| format!("Duration_Hist_{s}")));
    v
}

pub(super) fn texture_names() -> Vec<String> {
    ["Parts_Count", "Measures_Count", "Span_Quarters", "SimultaneityMean", "UpperPartNoteShare"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub(super) fn dynamics_tempo_names() -> Vec<String> {
    [
        "Dyn_Count",
        "Dyn_MeanLevel",
        "Dyn_ChangesPerMeasure",
        "Tempo_NumericMean",
        "Tempo_EventCount",
        "Velocity_Mean",
        "Velocity_Std",
        "MidiTempo_MeanBpm",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Index into [`DURATION_BUCKETS`] of the nearest bucket in log2 space,
/// ties going to the larger bucket.
fn duration_bucket(d: f64) -> usize {
    let k = (d.log2() + 0.5).floor().clamp(-2.0, 2.0) as i32;
    (k + 2) as usize
}

pub fn rhythm_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&rhythm_names());
    let notes: Vec<&NoteEvent> = score.notes().filter(|n| !n.grace).collect();
    if notes.is_empty() {
        return m;
    }
    let durations: Vec<f64> = notes.iter().map(|n| q_to_f64(n.duration)).collect();
    let count = notes.len() as f64;
    m.insert("NoteDensity", count / q_to_f64(score.total_span()));
    m.insert("Duration_Mean", mean(&durations));
    m.insert("Duration_Std", pop_std(&durations));

    let mut hist = [0usize; 5];
    for &d in &durations {
        hist[duration_bucket(d)] += 1;
    }
    for (name, c) in DURATION_BUCKETS.iter().zip(hist) {
        m.insert(format!("Duration_Hist_{name}"), c as f64 / count);
    }

    let (offbeat, iois) = match Ticks::for_score(score) {
        Some(t) => offbeats_and_iois(score, t),
        None => offbeats_and_iois(score, Exact),
    };
    m.insert("OffbeatRatio", offbeat as f64 / count);
    m.insert("IOI_Mean", mean(&iois));
    m
}

/// Notes not starting on a whole quarter from their barline, and the
/// inter-onset intervals between distinct onsets within each part.
fn offbeats_and_iois<C: Clock>(score: &Score, clock: C) -> (usize, Vec<f64>) {
    let offbeat = score
        .notes()
        .filter(|n| !n.grace)
        .filter(|n| {
            let start = score.measure_start(n.measure_index).unwrap_or_else(Quarters::zero);
            !clock.is_whole_quarters(clock.of(n.onset) - clock.of(start))
        })
        .count();
    let mut iois = Vec::new();
    for part in &score.parts {
        let mut onsets: Vec<C::T> = part.notes.iter().filter(|n| !n.grace).map(|n| clock.of(n.onset)).collect();
        onsets.sort_unstable();
        onsets.dedup();
        iois.extend(onsets.windows(2).map(|w| clock.to_f64(w[1] - w[0])));
    }
    (offbeat, iois)
}

pub fn texture_density_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&texture_names());
    let voiced: Vec<_> = score.parts.iter().filter(|p| !p.notes.is_empty()).collect();
    let span = score.total_span();
    m.insert("Parts_Count", voiced.len() as f64);
    m.insert("Measures_Count", score.measure_count() as f64);
    m.insert("Span_Quarters", q_to_f64(span));
    if span > Quarters::zero() {
        // The time integral of the sounding count is the summed duration.
        let sounding: f64 = score.notes().filter(|n| !n.grace).map(|n| q_to_f64(n.duration)).sum();
        m.insert("SimultaneityMean", sounding / q_to_f64(span));
    }
    let total = score.note_count();
    if total > 0 {
        let mut best: Option<(f64, usize)> = None;
        for p in &voiced {
            let mean_pitch = p.notes.iter().map(|n| f64::from(n.midi_pitch)).sum::<f64>() / p.notes.len() as f64;
            let better = match best {
                None => true,
                Some((bm, bc)) => mean_pitch > bm || (mean_pitch == bm && p.notes.len() > bc),
            };
            if better {
                best = Some((mean_pitch, p.notes.len()));
            }
        }
        if let Some((_, c)) = best {
            m.insert("UpperPartNoteShare", c as f64 / total as f64);
        }
    }
    m
}

/// Notation-based dynamics and tempo, kept apart from the MIDI velocity and
/// tempo-meta values.
pub fn dynamics_tempo_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&dynamics_tempo_names());
    let levels: Vec<f64> = score.dynamic_events.iter().map(|e| f64::from(e.mark.level())).collect();
    m.insert("Dyn_Count", levels.len() as f64);
    if !levels.is_empty() {
        m.insert("Dyn_MeanLevel", mean(&levels));
        let changes = levels.windows(2).filter(|w| w[0] != w[1]).count();
        m.insert("Dyn_ChangesPerMeasure", ratio(changes as f64, score.measure_count() as f64));
    }

    let notated: Vec<f64> = score
        .tempo_events
        .iter()
        .filter(|e| matches!(e.source, TempoSource::MetronomeMark | TempoSource::TempoWord))
        .map(|e| e.bpm)
        .collect();
    m.insert("Tempo_EventCount", notated.len() as f64);
    m.insert("Tempo_NumericMean", mean(&notated));

    let velocities: Vec<f64> = score.notes().filter_map(|n| n.velocity).map(f64::from).collect();
    if !velocities.is_empty() {
        m.insert("Velocity_Mean", mean(&velocities));
        m.insert("Velocity_Std", pop_std(&velocities));
    }
    let midi: Vec<f64> =
        score.tempo_events.iter().filter(|e| e.source == TempoSource::MidiMeta).map(|e| e.bpm).collect();
    m.insert("MidiTempo_MeanBpm", mean(&midi));
    m
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::builder::{q, ScoreBuilder};
    use crate::model::{DynamicMark, SourceFormat};

    #[test]
    fn four_quarters() {
        let m = rhythm_features(&melody(&[60, 62, 64, 65]));
        assert_eq!(m.get("NoteDensity"), Some(1.0));
        assert_eq!(m.get("Duration_Mean"), Some(1.0));
        assert_eq!(m.get("Duration_Std"), Some(0.0));
        assert_eq!(m.get("OffbeatRatio"), Some(0.0));
        assert_eq!(m.get("Duration_Hist_1"), Some(1.0));
        assert_eq!(m.get("IOI_Mean"), Some(1.0));
    }

    #[test]
    fn eighths_offbeat() {
        let mut b = ScoreBuilder::new(SourceFormat::Midi);
        let p = b.part("", None);
        b.note(p, q(0, 1), q(1, 2), 60);
        b.note(p, q(1, 2), q(1, 2), 62);
        let m = rhythm_features(&b.build().unwrap());
        assert_eq!(m.get("OffbeatRatio"), Some(0.5));
        assert_eq!(m.get("Duration_Hist_0_5"), Some(1.0));
    }

    #[test]
    fn empty_rhythm() {
        assert!(rhythm_features(&empty()).iter().all(|(_, v)| v.is_nan()));
    }

    #[test]
    fn buckets() {
        assert_eq!(duration_bucket(0.125), 0);
        assert_eq!(duration_bucket(0.75), 2);
        assert_eq!(duration_bucket(1.5), 3);
        assert_eq!(duration_bucket(3.0), 4);
        assert_eq!(duration_bucket(16.0), 4);
    }

    #[test]
    fn simultaneity_of_two_whole_notes() {
        let mut b = ScoreBuilder::new(SourceFormat::MusicXml);
        let p0 = b.part("", None);
        let p1 = b.part("", None);
        b.note(p0, q(0, 1), q(4, 1), 72);
        b.note(p1, q(0, 1), q(4, 1), 60);
        let m = texture_density_features(&b.build().unwrap());
        assert_eq!(m.get("SimultaneityMean"), Some(2.0));
        assert_eq!(m.get("Parts_Count"), Some(2.0));
        assert_eq!(m.get("Span_Quarters"), Some(4.0));
    }

    #[test]
    fn upper_part_share() {
        let mut b = ScoreBuilder::new(SourceFormat::MusicXml);
        let p0 = b.part("", None);
        let p1 = b.part("", None);
        for i in 0..3 {
            b.note(p0, q(i, 1), q(1, 1), 72);
        }
        b.note(p1, q(0, 1), q(3, 1), 48);
        let m = texture_density_features(&b.build().unwrap());
        assert_eq!(m.get("UpperPartNoteShare"), Some(0.75));
    }

    #[test]
    fn empty_texture() {
        let m = texture_density_features(&empty());
        assert_eq!(m.get("Parts_Count"), Some(0.0));
        assert!(m.get("SimultaneityMean").unwrap().is_nan());
        assert!(m.get("UpperPartNoteShare").unwrap().is_nan());
    }

    #[test]
    fn simultaneity_matches_sampled_sounding_count() {
        let mut b = ScoreBuilder::new(SourceFormat::MusicXml);
        let p0 = b.part("", None);
        let p1 = b.part("", None);
        b.note(p0, q(0, 1), q(3, 2), 60);
        b.note(p0, q(2, 1), q(2, 1), 62);
        b.note(p1, q(1, 2), q(3, 1), 55);
        let s = b.build().unwrap();
        // Sounding count is piecewise constant on an eighth-note grid here.
        let steps = 8 * 4;
        let sampled: usize = (0..steps).map(|i| s.sounding_count(q(i, 8))).sum();
        let expected = sampled as f64 / steps as f64;
        let got = texture_density_features(&s).get("SimultaneityMean").unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn dynamics_levels() {
        let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(2);
        let p = b.part("", None);
        b.note(p, q(0, 1), q(8, 1), 60);
        b.dynamic(p, q(0, 1), DynamicMark::P);
        b.dynamic(p, q(4, 1), DynamicMark::F);
        let m = dynamics_tempo_features(&b.build().unwrap());
        assert_eq!(m.get("Dyn_Count"), Some(2.0));
        assert_eq!(m.get("Dyn_MeanLevel"), Some(4.5));
        assert_eq!(m.get("Dyn_ChangesPerMeasure"), Some(0.5));
        assert!(m.get("Velocity_Mean").unwrap().is_nan());
    }

    #[test]
    fn midi_velocities() {
        let mut b = ScoreBuilder::new(SourceFormat::Midi);
        let p = b.part("", None);
        b.note(p, q(0, 1), q(1, 1), 60).velocity = Some(64);
        b.note(p, q(1, 1), q(1, 1), 62).velocity = Some(64);
        b.tempo(q(0, 1), 100.0, TempoSource::MidiMeta);
        let m = dynamics_tempo_features(&b.build().unwrap());
        assert_eq!(m.get("Velocity_Mean"), Some(64.0));
        assert_eq!(m.get("Velocity_Std"), Some(0.0));
        assert_eq!(m.get("Dyn_Count"), Some(0.0));
        assert_eq!(m.get("MidiTempo_MeanBpm"), Some(100.0));
        assert_eq!(m.get("Tempo_EventCount"), Some(0.0));
        assert!(m.get("Tempo_NumericMean").unwrap().is_nan());
    }

    #[test]
    fn tick_and_rational_rhythm_agree() {
        for (_, s) in crate::synth::conformance_corpus() {
            let (ot, it) = offbeats_and_iois(&s, Ticks::for_score(&s).unwrap());
            let (oe, ie) = offbeats_and_iois(&s, Exact);
            assert_eq!(ot, oe);
            assert_eq!(it, ie);
        }
    }
}
