//! Format-agnostic in-memory score model.
//!
//! Every parser produces a [`Score`], and every feature reads one. Onsets and
//! durations are exact rationals measured in quarter notes so that tick-based
//! and divisions-based sources agree bit for bit.

use std::fmt;
use std::ops::Deref;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// A time position or span in quarter notes.
pub type Quarters = Rational64;

/// Converts an exact quarter value to `f64` for feature emission.
pub fn q_to_f64(q: Quarters) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceFormat {
    Midi,
    MusicXml,
    Kern,
}

impl SourceFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceFormat::Midi => "midi",
            SourceFormat::MusicXml => "musicxml",
            SourceFormat::Kern => "kern",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            SourceFormat::Midi => 0,
            SourceFormat::MusicXml => 1,
            SourceFormat::Kern => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SourceFormat::Midi),
            1 => Some(SourceFormat::MusicXml),
            2 => Some(SourceFormat::Kern),
            _ => None,
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diatonic step letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub fn from_char(c: char) -> Option<Step> {
        Some(match c.to_ascii_uppercase() {
            'C' => Step::C,
            'D' => Step::D,
            'E' => Step::E,
            'F' => Step::F,
            'G' => Step::G,
            'A' => Step::A,
            'B' => Step::B,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        match self {
            Step::C => 'C',
            Step::D => 'D',
            Step::E => 'E',
            Step::F => 'F',
            Step::G => 'G',
            Step::A => 'A',
            Step::B => 'B',
        }
    }

    /// Semitones above C within the octave.
    pub fn semitone(self) -> i32 {
        match self {
            Step::C => 0,
            Step::D => 2,
            Step::E => 4,
            Step::F => 5,
            Step::G => 7,
            Step::A => 9,
            Step::B => 11,
        }
    }

    pub(crate) fn code(self) -> u8 {
        self.semitone() as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Step> {
        Some(match code {
            0 => Step::C,
            2 => Step::D,
            4 => Step::E,
            5 => Step::F,
            7 => Step::G,
            9 => Step::A,
            11 => Step::B,
            _ => return None,
        })
    }
}

/// Written pitch: step, chromatic alteration and octave (C4 = middle C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpelledPitch {
    pub step: Step,
    pub alter: i8,
    pub octave: i8,
}

impl SpelledPitch {
    /// MIDI key number implied by the spelling, if it is in range.
    pub fn midi(self) -> Option<u8> {
        let v = 12 * (i32::from(self.octave) + 1) + self.step.semitone() + i32::from(self.alter);
        u8::try_from(v).ok().filter(|p| *p <= 127)
    }

    fn semitone_class(self) -> i32 {
        (self.step.semitone() + i32::from(self.alter)).rem_euclid(12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoteEvent {
    pub onset: Quarters,
    pub duration: Quarters,
    pub midi_pitch: u8,
    pub spelled: Option<SpelledPitch>,
    pub velocity: Option<u8>,
    pub grace: bool,
    /// Set when a tie starts on this event but no continuation was found.
    /// Completed tie chains are merged into a single event at parse time.
    pub tie_to_next: bool,
    pub measure_index: u32,
}

impl NoteEvent {
    pub fn end(&self) -> Quarters {
        self.onset + self.duration
    }

    pub fn sounds_at(&self, t: Quarters) -> bool {
        !self.grace && self.onset <= t && t < self.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lyric {
    pub onset: Quarters,
    /// Syllable text. A trailing `-` marks a word that continues on the next
    /// syllable.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub index: usize,
    pub name: String,
    pub midi_program: Option<u8>,
    /// MIDI channel 10 parts. Kept, and reported separately by the
    /// instrumentation features.
    pub percussive: bool,
    pub notes: Vec<NoteEvent>,
    pub lyrics: Vec<Lyric>,
}

impl Part {
    pub fn new(index: usize, name: impl Into<String>) -> Self {
        Part {
            index,
            name: name.into(),
            midi_program: None,
            percussive: false,
            notes: Vec::new(),
            lyrics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeSignature {
    pub numerator: u32,
    pub denominator: u32,
}

impl TimeSignature {
    pub const COMMON: TimeSignature = TimeSignature { numerator: 4, denominator: 4 };

    pub fn new(numerator: u32, denominator: u32) -> Self {
        TimeSignature { numerator, denominator }
    }

    /// Nominal measure length in quarters.
    pub fn measure_length(self) -> Quarters {
        Quarters::new(4 * i64::from(self.numerator), i64::from(self.denominator.max(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measure {
    pub index: u32,
    pub start: Quarters,
    pub time_signature: TimeSignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySignature {
    pub onset: Quarters,
    pub fifths: i8,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TempoSource {
    MidiMeta,
    MetronomeMark,
    TempoWord,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoEvent {
    pub onset: Quarters,
    pub bpm: f64,
    pub source: TempoSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DynamicMark {
    Ppp,
    Pp,
    P,
    Mp,
    Mf,
    F,
    Ff,
    Fff,
}

impl DynamicMark {
    pub const ALL: [DynamicMark; 8] = [
        DynamicMark::Ppp,
        DynamicMark::Pp,
        DynamicMark::P,
        DynamicMark::Mp,
        DynamicMark::Mf,
        DynamicMark::F,
        DynamicMark::Ff,
        DynamicMark::Fff,
    ];

    pub fn parse(s: &str) -> Option<DynamicMark> {
        Some(match s {
            "ppp" => DynamicMark::Ppp,
            "pp" => DynamicMark::Pp,
            "p" => DynamicMark::P,
            "mp" => DynamicMark::Mp,
            "mf" => DynamicMark::Mf,
            "f" => DynamicMark::F,
            "ff" => DynamicMark::Ff,
            "fff" => DynamicMark::Fff,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DynamicMark::Ppp => "ppp",
            DynamicMark::Pp => "pp",
            DynamicMark::P => "p",
            DynamicMark::Mp => "mp",
            DynamicMark::Mf => "mf",
            DynamicMark::F => "f",
            DynamicMark::Ff => "ff",
            DynamicMark::Fff => "fff",
        }
    }

    /// Loudness level, ppp = 1 up to fff = 8.
    pub fn level(self) -> u8 {
        self as u8 + 1
    }

    pub(crate) fn from_level(level: u8) -> Option<DynamicMark> {
        DynamicMark::ALL.get(usize::from(level).checked_sub(1)?).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynamicEvent {
    pub onset: Quarters,
    pub part_index: usize,
    pub mark: DynamicMark,
}

/// One harmony label at a measure/beat position.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicAnnotation {
    pub measure_index: u32,
    /// Quarter offset within the measure.
    pub beat: f64,
    pub label: String,
    /// Tonic letter plus mode by case, e.g. `C` or `g`. Empty when unknown.
    pub local_key: String,
}

/// Raw, unvalidated score contents. Turned into a [`Score`] by
/// [`Score::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreData {
    pub parts: Vec<Part>,
    pub measure_map: Vec<Measure>,
    /// End of the last measure. Note onsets must lie before it.
    pub end: Quarters,
    pub key_signatures: Vec<KeySignature>,
    pub tempo_events: Vec<TempoEvent>,
    pub dynamic_events: Vec<DynamicEvent>,
    /// Harmony labels embedded in the source file, if the format has them.
    pub harmony: Vec<HarmonicAnnotation>,
    /// Dynamic marks found in the source but outside the ppp..fff vocabulary.
    pub unrecognized_dynamics: u32,
    pub source_format: SourceFormat,
    pub source_path: String,
    pub parser_version: String,
}

impl ScoreData {
    pub fn empty(source_format: SourceFormat, source_path: impl Into<String>) -> Self {
        ScoreData {
            parts: Vec::new(),
            measure_map: vec![Measure { index: 1, start: Quarters::zero(), time_signature: TimeSignature::COMMON }],
            end: TimeSignature::COMMON.measure_length(),
            key_signatures: Vec::new(),
            tempo_events: Vec::new(),
            dynamic_events: Vec::new(),
            harmony: Vec::new(),
            unrecognized_dynamics: 0,
            source_format,
            source_path: source_path.into(),
            parser_version: crate::PARSER_VERSION.to_string(),
        }
    }

    /// Index into `measure_map` of the measure containing `t`.
    pub fn measure_position(&self, t: Quarters) -> Option<usize> {
        if t < Quarters::zero() || t >= self.end {
            return None;
        }
        let idx = self.measure_map.partition_point(|m| m.start <= t);
        idx.checked_sub(1)
    }

    /// Measure number containing `t`.
    pub fn measure_of(&self, t: Quarters) -> Option<u32> {
        self.measure_position(t).map(|i| self.measure_map[i].index)
    }

    /// Start of measure `index`, or the score end for the measure after the last.
    pub fn measure_start(&self, index: u32) -> Option<Quarters> {
        let first = self.measure_map.first()?.index;
        let pos = index.checked_sub(first)? as usize;
        match pos.cmp(&self.measure_map.len()) {
            std::cmp::Ordering::Less => Some(self.measure_map[pos].start),
            std::cmp::Ordering::Equal => Some(self.end),
            std::cmp::Ordering::Greater => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("measure map must start at measure 1, onset 0")]
    MeasureMapStart,
    #[error("measure map is not strictly increasing at measure {0}")]
    MeasureMapOrder(u32),
    #[error("measure map end {0} is not after the last measure start")]
    MeasureMapEnd(Quarters),
    #[error("notes of part {0} are not sorted by (onset, pitch)")]
    UnsortedNotes(usize),
    #[error("note at {onset} in part {part} lies outside the measure map")]
    OnsetOutsideMeasureMap { part: usize, onset: Quarters },
    #[error("note at {onset} in part {part} has non-positive duration")]
    NonPositiveDuration { part: usize, onset: Quarters },
    #[error("pitch {0} out of range 0..=127")]
    PitchOutOfRange(u8),
    #[error("spelled pitch disagrees with MIDI pitch {0}")]
    SpellingMismatch(u8),
    #[error("note at {onset} claims measure {claimed}, onset lies in measure {actual}")]
    MeasureIndexMismatch { onset: Quarters, claimed: u32, actual: u32 },
    #[error("velocity {0} out of range 1..=127")]
    VelocityOutOfRange(u8),
    #[error("part index {found} at position {expected}")]
    PartIndex { expected: usize, found: usize },
    #[error("event at {0} lies outside the measure map")]
    EventOutsideMeasureMap(Quarters),
    #[error("tempo must be positive and finite, got {0}")]
    InvalidTempo(f64),
    #[error("key signature fifths {0} out of range -7..=7")]
    InvalidFifths(i8),
    #[error("dynamic mark refers to missing part {0}")]
    DynamicPart(usize),
    #[error("events are not sorted by onset")]
    UnsortedEvents,
    #[error("harmony label is empty or refers to a missing measure")]
    InvalidHarmony,
}

/// An immutable, validated score. Field access goes through [`ScoreData`]
/// via `Deref`; there is no mutable access.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    data: ScoreData,
}

impl Deref for Score {
    type Target = ScoreData;

    fn deref(&self) -> &ScoreData {
        &self.data
    }
}

impl Score {
    /// Validates `data` against every model invariant.
    pub fn new(data: ScoreData) -> Result<Score, ModelError> {
        validate(&data)?;
        Ok(Score { data })
    }

    pub fn into_data(self) -> ScoreData {
        self.data
    }

    pub fn notes(&self) -> impl Iterator<Item = &NoteEvent> {
        self.data.parts.iter().flat_map(|p| p.notes.iter())
    }

    pub fn note_count(&self) -> usize {
        self.data.parts.iter().map(|p| p.notes.len()).sum()
    }

    /// Latest note end, or zero for a score without notes.
    pub fn total_span(&self) -> Quarters {
        self.notes().map(NoteEvent::end).max().unwrap_or_else(Quarters::zero)
    }

    /// Number of non-grace notes sounding at `t` (half-open intervals).
    pub fn sounding_count(&self, t: Quarters) -> usize {
        self.notes().filter(|n| n.sounds_at(t)).count()
    }

    pub fn measure_count(&self) -> usize {
        self.data.measure_map.len()
    }

    /// Restricts the score to measures `first..=last`, rebased so that
    /// `first` becomes measure 1 at onset 0. Notes and events are kept by the
    /// measure of their onset; note durations are not truncated.
    pub fn restrict_measures(&self, first: u32, last: u32) -> Option<Score> {
        if last < first || first == 0 {
            return None;
        }
        let d = &self.data;
        let start = d.measure_start(first)?;
        let stop = d.measure_start(last.checked_add(1)?)?;
        let in_window = |t: Quarters| t >= start && t < stop;
        let renumber = first - 1;

        let measure_map = d
            .measure_map
            .iter()
            .filter(|m| m.index >= first && m.index <= last)
            .map(|m| Measure { index: m.index - renumber, start: m.start - start, ..*m })
            .collect();

        let parts: Vec<Part> = d
            .parts
            .iter()
            .map(|p| Part {
                notes: p
                    .notes
                    .iter()
                    .filter(|n| in_window(n.onset))
                    .map(|n| NoteEvent { onset: n.onset - start, measure_index: n.measure_index - renumber, ..n.clone() })
                    .collect(),
                lyrics: p
                    .lyrics
                    .iter()
                    .filter(|l| in_window(l.onset))
                    .map(|l| Lyric { onset: l.onset - start, text: l.text.clone() })
                    .collect(),
                ..Part { notes: Vec::new(), lyrics: Vec::new(), ..p.clone() }
            })
            .collect();

        let end = stop - start;

        let data = ScoreData {
            parts,
            measure_map,
            end,
            key_signatures: d
                .key_signatures
                .iter()
                .filter(|k| in_window(k.onset))
                .map(|k| KeySignature { onset: k.onset - start, ..*k })
                .collect(),
            tempo_events: d
                .tempo_events
                .iter()
                .filter(|e| in_window(e.onset))
                .map(|e| TempoEvent { onset: e.onset - start, ..*e })
                .collect(),
            dynamic_events: d
                .dynamic_events
                .iter()
                .filter(|e| in_window(e.onset))
                .map(|e| DynamicEvent { onset: e.onset - start, ..*e })
                .collect(),
            harmony: d
                .harmony
                .iter()
                .filter(|h| h.measure_index >= first && h.measure_index <= last)
                .map(|h| HarmonicAnnotation { measure_index: h.measure_index - renumber, ..h.clone() })
                .collect(),
            unrecognized_dynamics: d.unrecognized_dynamics,
            source_format: d.source_format,
            source_path: d.source_path.clone(),
            parser_version: d.parser_version.clone(),
        };
        Score::new(data).ok()
    }
}

fn validate(d: &ScoreData) -> Result<(), ModelError> {
    let first = d.measure_map.first().ok_or(ModelError::MeasureMapStart)?;
    if first.index != 1 || !first.start.is_zero() {
        return Err(ModelError::MeasureMapStart);
    }
    for w in d.measure_map.windows(2) {
        if w[1].start <= w[0].start || w[1].index != w[0].index + 1 {
            return Err(ModelError::MeasureMapOrder(w[1].index));
        }
    }
    let last = d.measure_map.last().map(|m| m.start).unwrap_or_else(Quarters::zero);
    if d.end <= last {
        return Err(ModelError::MeasureMapEnd(d.end));
    }

    for (pos, part) in d.parts.iter().enumerate() {
        if part.index != pos {
            return Err(ModelError::PartIndex { expected: pos, found: part.index });
        }
        for w in part.notes.windows(2) {
            if (w[1].onset, w[1].midi_pitch) < (w[0].onset, w[0].midi_pitch) {
                return Err(ModelError::UnsortedNotes(pos));
            }
        }
        for n in &part.notes {
            if n.midi_pitch > 127 {
                return Err(ModelError::PitchOutOfRange(n.midi_pitch));
            }
            if n.grace {
                if n.duration < Quarters::zero() || !n.duration.is_zero() {
                    return Err(ModelError::NonPositiveDuration { part: pos, onset: n.onset });
                }
            } else if n.duration <= Quarters::zero() {
                return Err(ModelError::NonPositiveDuration { part: pos, onset: n.onset });
            }
            if let Some(sp) = n.spelled {
                if sp.semitone_class() != i32::from(n.midi_pitch % 12) {
                    return Err(ModelError::SpellingMismatch(n.midi_pitch));
                }
            }
            if let Some(v) = n.velocity {
                if v == 0 || v > 127 {
                    return Err(ModelError::VelocityOutOfRange(v));
                }
            }
            let actual = d
                .measure_of(n.onset)
                .ok_or(ModelError::OnsetOutsideMeasureMap { part: pos, onset: n.onset })?;
            if actual != n.measure_index {
                return Err(ModelError::MeasureIndexMismatch { onset: n.onset, claimed: n.measure_index, actual });
            }
        }
        check_events(d, part.lyrics.iter().map(|l| l.onset))?;
    }

    check_events(d, d.key_signatures.iter().map(|k| k.onset))?;
    check_events(d, d.tempo_events.iter().map(|e| e.onset))?;
    check_events(d, d.dynamic_events.iter().map(|e| e.onset))?;
    for k in &d.key_signatures {
        if !(-7..=7).contains(&k.fifths) {
            return Err(ModelError::InvalidFifths(k.fifths));
        }
    }
    for e in &d.tempo_events {
        if !(e.bpm.is_finite() && e.bpm > 0.0) {
            return Err(ModelError::InvalidTempo(e.bpm));
        }
    }
    for e in &d.dynamic_events {
        if e.part_index >= d.parts.len() {
            return Err(ModelError::DynamicPart(e.part_index));
        }
    }
    let last_index = d.measure_map.last().map_or(0, |m| m.index);
    for h in &d.harmony {
        if h.label.is_empty() || h.measure_index == 0 || h.measure_index > last_index || !h.beat.is_finite() {
            return Err(ModelError::InvalidHarmony);
        }
    }
    Ok(())
}

fn check_events(d: &ScoreData, onsets: impl Iterator<Item = Quarters>) -> Result<(), ModelError> {
    let mut prev: Option<Quarters> = None;
    for t in onsets {
        if d.measure_position(t).is_none() {
            return Err(ModelError::EventOutsideMeasureMap(t));
        }
        if prev.is_some_and(|p| t < p) {
            return Err(ModelError::UnsortedEvents);
        }
        prev = Some(t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Quarters {
        Quarters::new(n, d)
    }

    pub(crate) fn note(onset: Quarters, duration: Quarters, pitch: u8) -> NoteEvent {
        NoteEvent {
            onset,
            duration,
            midi_pitch: pitch,
            spelled: None,
            velocity: None,
            grace: false,
            tie_to_next: false,
            measure_index: 1,
        }
    }

    fn score_with(parts: Vec<Vec<NoteEvent>>) -> Result<Score, ModelError> {
        let mut data = ScoreData::empty(SourceFormat::Kern, "t.krn");
        data.parts = parts
            .into_iter()
            .enumerate()
            .map(|(i, notes)| Part { notes, ..Part::new(i, "") })
            .collect();
        Score::new(data)
    }

    #[test]
    fn total_span_examples() {
        let s = score_with(vec![vec![note(q(0, 1), q(4, 1), 60)]]).unwrap();
        assert_eq!(q_to_f64(s.total_span()), 4.0);
        let s = score_with(vec![]).unwrap();
        assert_eq!(q_to_f64(s.total_span()), 0.0);
        let s = score_with(vec![vec![note(q(0, 1), q(1, 1), 60), note(q(2, 1), q(2, 1), 62)]]).unwrap();
        assert_eq!(q_to_f64(s.total_span()), 4.0);
    }

    #[test]
    fn sounding_count_examples() {
        let s = score_with(vec![vec![note(q(0, 1), q(4, 1), 60)], vec![note(q(0, 1), q(4, 1), 64)]]).unwrap();
        assert_eq!(s.sounding_count(q(1, 1)), 2);
        assert_eq!(s.sounding_count(q(4, 1)), 0);
        let e = score_with(vec![]).unwrap();
        assert_eq!(e.sounding_count(q(0, 1)), 0);
    }

    #[test]
    fn grace_notes_do_not_sound() {
        let mut g = note(q(1, 1), q(0, 1), 62);
        g.grace = true;
        let s = score_with(vec![vec![note(q(0, 1), q(1, 1), 60), g]]).unwrap();
        assert_eq!(s.sounding_count(q(1, 1)), 0);
    }

    #[test]
    fn validator_rejects_each_violation_class() {
        let unsorted = score_with(vec![vec![note(q(1, 1), q(1, 1), 60), note(q(0, 1), q(1, 1), 60)]]);
        assert!(matches!(unsorted, Err(ModelError::UnsortedNotes(0))));

        let outside = score_with(vec![vec![note(q(4, 1), q(1, 1), 60)]]);
        assert!(matches!(outside, Err(ModelError::OnsetOutsideMeasureMap { .. })));

        let zero = score_with(vec![vec![note(q(0, 1), q(0, 1), 60)]]);
        assert!(matches!(zero, Err(ModelError::NonPositiveDuration { .. })));

        let high = score_with(vec![vec![note(q(0, 1), q(1, 1), 128)]]);
        assert!(matches!(high, Err(ModelError::PitchOutOfRange(128))));

        let mut sp = note(q(0, 1), q(1, 1), 61);
        sp.spelled = Some(SpelledPitch { step: Step::C, alter: 0, octave: 4 });
        assert!(matches!(score_with(vec![vec![sp]]), Err(ModelError::SpellingMismatch(61))));

        let mut wrong_measure = note(q(0, 1), q(1, 1), 60);
        wrong_measure.measure_index = 2;
        assert!(matches!(score_with(vec![vec![wrong_measure]]), Err(ModelError::MeasureIndexMismatch { .. })));
    }

    #[test]
    fn measure_map_must_start_at_one() {
        let mut data = ScoreData::empty(SourceFormat::Midi, "x.mid");
        data.measure_map[0].index = 2;
        assert_eq!(Score::new(data), Err(ModelError::MeasureMapStart));
    }

    #[test]
    fn spelled_pitch_midi() {
        let cs = SpelledPitch { step: Step::B, alter: 1, octave: 3 };
        assert_eq!(cs.midi(), Some(60));
        let cb = SpelledPitch { step: Step::C, alter: -1, octave: 4 };
        assert_eq!(cb.midi(), Some(59));
    }

    #[test]
    fn restrict_rebases_onsets() {
        let mut data = ScoreData::empty(SourceFormat::Kern, "t.krn");
        data.measure_map = (0..4)
            .map(|i| Measure { index: i + 1, start: q(4 * i64::from(i), 1), time_signature: TimeSignature::COMMON })
            .collect();
        data.end = q(16, 1);
        let notes = (0..4)
            .map(|i| NoteEvent { measure_index: i as u32 + 1, ..note(q(4 * i, 1), q(4, 1), 60 + i as u8) })
            .collect();
        data.parts = vec![Part { notes, ..Part::new(0, "") }];
        let s = Score::new(data).unwrap();
        let w = s.restrict_measures(2, 3).unwrap();
        assert_eq!(w.measure_count(), 2);
        assert_eq!(w.note_count(), 2);
        assert_eq!(w.parts[0].notes[0].onset, q(0, 1));
        assert_eq!(w.parts[0].notes[0].midi_pitch, 61);
        assert_eq!(w.parts[0].notes[1].measure_index, 2);
    }
}
