//! Seeded synthetic data: random multi-part scores, Gaussian blobs and a
//! small hand-written conformance corpus.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::builder::{q, ScoreBuilder};
use crate::encode::encode;
use crate::eval::Matrix;
use crate::model::{DynamicMark, Mode, Quarters, Score, SourceFormat, TempoSource};

const DURATIONS: [(i64, i64); 5] = [(1, 2), (1, 1), (1, 1), (3, 2), (2, 1)];
const RANGES: [(u8, u8); 4] = [(67, 84), (60, 76), (53, 69), (36, 55)];
const PROGRAMS: [u8; 4] = [40, 40, 41, 42];

/// A random score of `parts` monophonic parts (4/4, `measures` measures)
/// with rests, velocities, a tempo, a key signature and dynamics.
pub fn random_score(seed: u64, parts: usize, measures: usize) -> Score {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ScoreBuilder::new(SourceFormat::Midi).measures(measures);
    let end = q(4 * measures as i64, 1);
    b.tempo(q(0, 1), f64::from(rng.gen_range(60u32..=160)), TempoSource::MidiMeta);
    let fifths = rng.gen_range(-4i8..=4);
    b.key(q(0, 1), fifths, Some(if rng.gen_bool(0.5) { Mode::Major } else { Mode::Minor }));
    for p in 0..parts {
        let (lo, hi) = RANGES[p % RANGES.len()];
        let part = b.part(&format!("Part {}", p + 1), Some(PROGRAMS[p % PROGRAMS.len()]));
        b.dynamic(part, q(0, 1), DynamicMark::ALL[rng.gen_range(2..6)]);
        let mut t = q(0, 1);
        let mut pitch = rng.gen_range(lo..=hi);
        while t < end {
            let (n, d) = DURATIONS[rng.gen_range(0..DURATIONS.len())];
            let dur = q(n, d).min(end - t);
            if rng.gen_bool(0.9) {
                let step: i16 = rng.gen_range(-4..=4);
                pitch = (i16::from(pitch) + step).clamp(i16::from(lo), i16::from(hi)) as u8;
                let v = rng.gen_range(40u8..=110);
                b.note(part, t, dur, pitch).velocity = Some(v);
            }
            t += dur;
        }
    }
    b.build().expect("generated score is valid")
}

/// Writes `count` random 4-part, 64-measure MIDI files into `dir` and
/// returns their file names.
pub fn write_midi_corpus(dir: &Path, count: usize, seed: u64) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    (0..count)
        .map(|i| {
            let score = random_score(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), 4, 64);
            let name = PathBuf::from(format!("synth_{i:04}.mid"));
            fs::write(dir.join(&name), encode(&score, SourceFormat::Midi).expect("4/4 scores are encodable"))?;
            Ok(name)
        })
        .collect()
}

/// `n_per_class` normal samples (standard deviation `sd`) around each
/// center. Labels are `"c0"`, `"c1"`, ...
pub fn gaussian_blobs(centers: &[Vec<f64>], n_per_class: usize, sd: f64, seed: u64) -> (Matrix, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("finite positive standard deviation");
    let mut rows = Vec::with_capacity(centers.len() * n_per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            rows.push(center.iter().map(|m| m + normal.sample(&mut rng)).collect());
            labels.push(format!("c{c}"));
        }
    }
    (Matrix::from_rows(&rows), labels)
}

/// Ten small hand-written scores that every encoder can represent exactly:
/// meter changes, tuplets, ties across barlines, chords, rests and key
/// signatures, with no grace notes or overlapping voices.
pub fn conformance_corpus() -> Vec<(&'static str, Score)> {
    vec![
        ("scale", scale()),
        ("chorale", chorale()),
        ("triplets", triplets()),
        ("meter_changes", meter_changes()),
        ("minor_rests", minor_rests()),
        ("compound", compound()),
        ("quartet", quartet()),
        ("leaps", leaps()),
        ("quintuple", quintuple()),
        ("long_ties", long_ties()),
    ]
}

fn line(b: &mut ScoreBuilder, part: usize, start: Quarters, notes: &[(u8, i64, i64)]) -> Quarters {
    let mut t = start;
    for &(pitch, n, d) in notes {
        // Pitch 0 marks a rest.
        if pitch > 0 {
            b.note(part, t, q(n, d), pitch);
        }
        t += q(n, d);
    }
    t
}

fn scale() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(2);
    let p = b.part("Flute", Some(73));
    let notes: Vec<_> = [60, 62, 64, 65, 67, 69, 71, 72].iter().map(|&m| (m, 1, 1)).collect();
    line(&mut b, p, q(0, 1), &notes);
    b.key(q(0, 1), 0, Some(Mode::Major));
    b.tempo(q(0, 1), 100.0, TempoSource::MetronomeMark);
    b.build().expect("valid")
}

fn chorale() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(3);
    let s = b.part("Soprano", Some(52));
    let bass = b.part("Bass", Some(52));
    line(&mut b, s, q(0, 1), &[(67, 1, 1), (69, 1, 1), (71, 2, 1), (72, 3, 1), (71, 1, 1), (67, 4, 1)]);
    for (t, chord, dur) in [(0, [43, 50], 2), (2, [47, 55], 3), (5, [48, 52], 3), (8, [43, 50], 4)] {
        for m in chord {
            b.note(bass, q(t, 1), q(dur, 1), m);
        }
    }
    b.key(q(0, 1), 1, Some(Mode::Major));
    b.build().expect("valid")
}

fn triplets() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).time_signature(3, 4).measures(2);
    let p = b.part("Violin", Some(40));
    let t = line(&mut b, p, q(0, 1), &[(74, 1, 3), (76, 1, 3), (78, 1, 3), (79, 2, 1)]);
    line(&mut b, p, t, &[(81, 2, 3), (79, 1, 3), (78, 1, 1), (0, 1, 2), (74, 1, 2)]);
    b.key(q(0, 1), 2, Some(Mode::Major));
    b.build().expect("valid")
}

fn meter_changes() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(4).meter_change(2, 3, 4).meter_change(3, 6, 8).meter_change(4, 2, 4);
    let p = b.part("Clarinet", Some(71));
    let c = b.part("Bassoon", Some(70));
    line(&mut b, p, q(0, 1), &[(65, 2, 1), (67, 3, 1), (69, 1, 1), (70, 3, 2), (72, 1, 2), (74, 3, 2), (72, 2, 1)]);
    line(&mut b, c, q(0, 1), &[(41, 4, 1), (0, 1, 1), (48, 2, 1), (46, 2, 1), (41, 3, 1)]);
    b.key(q(0, 1), -1, Some(Mode::Major));
    b.build().expect("valid")
}

fn minor_rests() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(3);
    let p = b.part("Oboe", Some(68));
    line(
        &mut b,
        p,
        q(0, 1),
        &[(0, 1, 1), (62, 1, 2), (65, 1, 2), (69, 1, 1), (0, 1, 1), (70, 3, 2), (69, 1, 2), (0, 2, 1), (61, 1, 1), (62, 3, 1)],
    );
    b.key(q(0, 1), -1, Some(Mode::Minor));
    b.tempo(q(0, 1), 72.0, TempoSource::MetronomeMark);
    b.build().expect("valid")
}

fn compound() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).time_signature(6, 8).measures(4);
    let p = b.part("Horn", Some(60));
    let bass = b.part("Tuba", Some(58));
    line(
        &mut b,
        p,
        q(0, 1),
        &[(67, 3, 2), (69, 1, 1), (71, 1, 2), (72, 3, 4), (74, 1, 4), (72, 1, 2), (71, 3, 2), (69, 3, 1), (67, 3, 1)],
    );
    line(&mut b, bass, q(0, 1), &[(43, 3, 1), (48, 3, 2), (43, 3, 2), (50, 3, 1), (43, 3, 1)]);
    b.key(q(0, 1), 1, Some(Mode::Major));
    b.build().expect("valid")
}

fn quartet() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(2);
    let voices = [
        ("Violin I", 40, [76, 77, 79, 77, 76, 74, 72, 72]),
        ("Violin II", 40, [67, 69, 71, 69, 67, 65, 64, 64]),
        ("Viola", 41, [60, 60, 62, 62, 60, 59, 55, 55]),
        ("Violoncello", 42, [48, 53, 55, 50, 48, 43, 48, 36]),
    ];
    for (name, program, pitches) in voices {
        let p = b.part(name, Some(program));
        let notes: Vec<_> = pitches.iter().map(|&m| (m, 1, 1)).collect();
        line(&mut b, p, q(0, 1), &notes);
    }
    b.key(q(0, 1), 0, Some(Mode::Major));
    b.tempo(q(0, 1), 84.0, TempoSource::MetronomeMark);
    b.build().expect("valid")
}

fn leaps() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).measures(2);
    let p = b.part("Piano", Some(0));
    line(&mut b, p, q(0, 1), &[(40, 1, 2), (64, 1, 2), (88, 1, 1), (47, 1, 1), (78, 1, 1), (54, 2, 1), (85, 1, 1), (61, 1, 1)]);
    b.key(q(0, 1), 4, Some(Mode::Major));
    b.build().expect("valid")
}

fn quintuple() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).time_signature(5, 4).measures(2);
    let p = b.part("Trumpet", Some(56));
    let c = b.part("Trombone", Some(57));
    let t = line(&mut b, p, q(0, 1), &[(70, 1, 5), (72, 1, 5), (74, 1, 5), (75, 1, 5), (77, 1, 5), (79, 2, 1), (0, 1, 1), (77, 1, 1)]);
    line(&mut b, p, t, &[(75, 5, 2), (74, 5, 2)]);
    line(&mut b, c, q(0, 1), &[(46, 5, 1), (51, 3, 1), (46, 2, 1)]);
    for m in [55, 58] {
        b.note(c, q(5, 1), q(3, 1), m);
    }
    b.key(q(0, 1), -3, Some(Mode::Major));
    b.build().expect("valid")
}

fn long_ties() -> Score {
    let mut b = ScoreBuilder::new(SourceFormat::MusicXml).time_signature(2, 2).measures(4);
    let p = b.part("Organ", Some(19));
    line(&mut b, p, q(0, 1), &[(60, 3, 1), (67, 7, 1), (64, 5, 2), (62, 7, 2)]);
    let low = b.part("Pedal", Some(19));
    line(&mut b, low, q(0, 1), &[(36, 16, 1)]);
    b.key(q(0, 1), -2, Some(Mode::Minor));
    b.build().expect("valid")
}
