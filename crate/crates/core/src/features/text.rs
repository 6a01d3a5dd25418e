use std::collections::BTreeSet;

use super::{ratio, FeatureMap};
use crate::model::{HarmonicAnnotation, Score, SourceFormat};

/// Instrument classes for notation part names, in output order.
const INSTRUMENTS: [&str; 13] = [
    "voice", "violin", "viola", "cello", "contrabass", "flute", "oboe", "clarinet", "bassoon", "horn", "trumpet", "keyboard",
    "other",
];

/// Substring rules, checked in order. More specific names come first so
/// that "contrabass" is not read as a voice and "violoncello" not as a violin.
const NAME_RULES: [(&[&str], &str); 12] = [
    (&["bassoon", "fagott"], "bassoon"),
    (&["contrabass", "double bass", "kontrabass", "contrabbasso"], "contrabass"),
    (&["violoncell", "cello"], "cello"),
    (&["violin"], "violin"),
    (&["viola"], "viola"),
    (&["voice", "soprano", "alto", "tenor", "bass", "canto", "vox"], "voice"),
    (&["flute", "flauto"], "flute"),
    (&["oboe"], "oboe"),
    (&["clarinet"], "clarinet"),
    (&["horn", "corno"], "horn"),
    (&["trumpet", "tromba"], "trumpet"),
    (&["piano", "cembalo", "harpsichord", "organ"], "keyboard"),
];

/// Instrument class for a notation part name.
pub fn instrument_class(name: &str) -> &'static str {
    let lower = name.to_lowercase();
    NAME_RULES
        .iter()
        .find(|(needles, _)| needles.iter().any(|n| lower.contains(n)))
        .map_or("other", |(_, class)| class)
}

pub(super) fn instrumentation_names() -> Vec<String> {
    let mut v: Vec<String> = (0..16).map(|i| format!("Instr_Family_{i}")).collect();
    v.extend(INSTRUMENTS.iter().map(|i| format!("Instr_{i}")));
    v.push("Instr_Percussion".into());
    v.push("Instr_DistinctCount".into());
    v
}

pub(super) fn lyrics_names() -> Vec<String> {
    vec!["Lyrics_Present".into(), "Lyrics_SyllableCount".into(), "Lyrics_DistinctWordCount".into()]
}

pub(super) fn harmony_names() -> Vec<String> {
    ["Harm_Count", "Harm_PerMeasure", "Harm_TonicRatio", "Harm_DominantRatio", "Harm_DistinctLabels", "Harm_LocalKeyChanges"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// MIDI scores report General MIDI families (program / 8) and the
/// percussion channel; notation scores report instrument classes from part
/// names. The columns of the other mode are NaN.
pub fn instrumentation_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&instrumentation_names());
    if score.source_format == SourceFormat::Midi {
        let mut families = [false; 16];
        let mut percussion = false;
        for p in &score.parts {
            if p.percussive {
                percussion = true;
            } else {
                families[(p.midi_program.unwrap_or(0) / 8) as usize % 16] = true;
            }
        }
        for (i, &f) in families.iter().enumerate() {
            m.insert(format!("Instr_Family_{i}"), f64::from(u8::from(f)));
        }
        m.insert("Instr_Percussion", f64::from(u8::from(percussion)));
        let distinct = families.iter().filter(|&&f| f).count() + usize::from(percussion);
        m.insert("Instr_DistinctCount", distinct as f64);
    } else {
        let present: BTreeSet<&str> = score.parts.iter().map(|p| instrument_class(&p.name)).collect();
        for i in INSTRUMENTS {
            m.insert(format!("Instr_{i}"), f64::from(u8::from(present.contains(i))));
        }
        m.insert("Instr_DistinctCount", present.len() as f64);
    }
    m
}

/// Syllables joined into words: a syllable ending in `-` continues into the
/// next syllable of the same part.
fn words(score: &Score) -> Vec<String> {
    let mut out = Vec::new();
    for part in &score.parts {
        let mut current = String::new();
        for l in &part.lyrics {
            let text = l.text.trim();
            match text.strip_suffix('-') {
                Some(stem) => current.push_str(stem.trim_start_matches('-')),
                None => {
                    current.push_str(text.trim_start_matches('-'));
                    out.push(std::mem::take(&mut current));
                }
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

fn normalize_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn lyrics_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&lyrics_names());
    let syllables: usize = score.parts.iter().map(|p| p.lyrics.len()).sum();
    m.insert("Lyrics_Present", if syllables > 0 { 1.0 } else { 0.0 });
    if syllables > 0 {
        m.insert("Lyrics_SyllableCount", syllables as f64);
        let distinct: BTreeSet<String> =
            words(score).iter().map(|w| normalize_word(w)).filter(|w| !w.is_empty()).collect();
        m.insert("Lyrics_DistinctWordCount", distinct.len() as f64);
    }
    m
}

/// Leading Roman numeral of a harmony label, after any accidentals, with
/// the character following it.
fn leading_numeral(label: &str) -> (bool, &str, Option<char>) {
    let trimmed = label.trim_start_matches(['b', '#']);
    let altered = trimmed.len() != label.len();
    let end = trimmed.find(|c: char| !matches!(c, 'I' | 'V' | 'i' | 'v')).unwrap_or(trimmed.len());
    (altered, &trimmed[..end], trimmed[end..].chars().next())
}

fn is_tonic(label: &str) -> bool {
    let (altered, numeral, _) = leading_numeral(label);
    !altered && matches!(numeral, "I" | "i")
}

fn is_dominant(label: &str) -> bool {
    matches!(leading_numeral(label), (false, "V" | "v", _) | (false, "vii", Some('o' | '°')))
}

pub fn harmony_features(score: &Score, annotations: &[HarmonicAnnotation]) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&harmony_names());
    if annotations.is_empty() {
        return m;
    }
    let n = annotations.len() as f64;
    m.insert("Harm_Count", n);
    m.insert("Harm_PerMeasure", ratio(n, score.measure_count() as f64));
    m.insert("Harm_TonicRatio", annotations.iter().filter(|a| is_tonic(&a.label)).count() as f64 / n);
    m.insert("Harm_DominantRatio", annotations.iter().filter(|a| is_dominant(&a.label)).count() as f64 / n);
    let distinct: BTreeSet<&str> = annotations.iter().map(|a| a.label.as_str()).collect();
    m.insert("Harm_DistinctLabels", distinct.len() as f64);
    let changes = annotations.windows(2).filter(|w| w[0].local_key != w[1].local_key).count();
    m.insert("Harm_LocalKeyChanges", changes as f64);
    m
}
