//! Programmatic score construction, used by the synthetic corpus generator
//! and by tests.

use num_traits::Zero;

use crate::model::{
    DynamicEvent, DynamicMark, KeySignature, Lyric, Measure, Mode, ModelError, NoteEvent, Part, Quarters, Score, ScoreData,
    SourceFormat, SpelledPitch, TempoEvent, TempoSource, TimeSignature,
};

/// Shorthand for an exact quarter-note value `n / d`.
pub fn q(n: i64, d: i64) -> Quarters {
    Quarters::new(n, d)
}

/// Builds a [`Score`]. Measures are laid out to cover every event (and at
/// least `min_measures`), using the initial time signature and any meter
/// changes.
#[derive(Debug, Clone)]
pub struct ScoreBuilder {
    data: ScoreData,
    time_signature: TimeSignature,
    meter_changes: Vec<(u32, TimeSignature)>,
    min_measures: usize,
}

impl ScoreBuilder {
    pub fn new(format: SourceFormat) -> Self {
        ScoreBuilder {
            data: ScoreData::empty(format, ""),
            time_signature: TimeSignature::COMMON,
            meter_changes: Vec::new(),
            min_measures: 1,
        }
    }

    /// Switches to `numerator/denominator` from measure `measure` (1-based).
    pub fn meter_change(mut self, measure: u32, numerator: u32, denominator: u32) -> Self {
        self.meter_changes.push((measure, TimeSignature::new(numerator, denominator)));
        self
    }

    pub fn path(mut self, path: &str) -> Self {
        self.data.source_path = path.to_string();
        self
    }

    pub fn time_signature(mut self, numerator: u32, denominator: u32) -> Self {
        self.time_signature = TimeSignature::new(numerator, denominator);
        self
    }

    pub fn measures(mut self, n: usize) -> Self {
        self.min_measures = n.max(1);
        self
    }

    /// Adds a part and returns its index.
    pub fn part(&mut self, name: &str, program: Option<u8>) -> usize {
        let index = self.data.parts.len();
        let mut part = Part::new(index, name);
        part.midi_program = program;
        self.data.parts.push(part);
        index
    }

    pub fn percussive(&mut self, part: usize) {
        self.data.parts[part].percussive = true;
    }

    pub fn note(&mut self, part: usize, onset: Quarters, duration: Quarters, pitch: u8) -> &mut NoteEvent {
        let notes = &mut self.data.parts[part].notes;
        notes.push(NoteEvent {
            onset,
            duration,
            midi_pitch: pitch,
            spelled: None,
            velocity: None,
            grace: false,
            tie_to_next: false,
            measure_index: 1,
        });
        notes.last_mut().unwrap()
    }

    pub fn spelled(&mut self, part: usize, onset: Quarters, duration: Quarters, pitch: SpelledPitch) -> &mut NoteEvent {
        let midi = pitch.midi().expect("spelled pitch in MIDI range");
        let n = self.note(part, onset, duration, midi);
        n.spelled = Some(pitch);
        n
    }

    pub fn grace(&mut self, part: usize, onset: Quarters, pitch: u8) -> &mut NoteEvent {
        let n = self.note(part, onset, Quarters::zero(), pitch);
        n.grace = true;
        n
    }

    pub fn lyric(&mut self, part: usize, onset: Quarters, text: &str) {
        self.data.parts[part].lyrics.push(Lyric { onset, text: text.to_string() });
    }

    pub fn dynamic(&mut self, part: usize, onset: Quarters, mark: DynamicMark) {
        self.data.dynamic_events.push(DynamicEvent { onset, part_index: part, mark });
    }

    pub fn tempo(&mut self, onset: Quarters, bpm: f64, source: TempoSource) {
        self.data.tempo_events.push(TempoEvent { onset, bpm, source });
    }

    pub fn key(&mut self, onset: Quarters, fifths: i8, mode: Option<Mode>) {
        self.data.key_signatures.push(KeySignature { onset, fifths, mode });
    }

    pub fn build(self) -> Result<Score, ModelError> {
        let ScoreBuilder { mut data, time_signature, mut meter_changes, min_measures } = self;
        meter_changes.sort_by_key(|c| c.0);
        let latest = data
            .parts
            .iter()
            .flat_map(|p| p.notes.iter().map(|n| n.onset).chain(p.lyrics.iter().map(|l| l.onset)))
            .chain(data.dynamic_events.iter().map(|e| e.onset))
            .chain(data.tempo_events.iter().map(|e| e.onset))
            .chain(data.key_signatures.iter().map(|e| e.onset))
            .max()
            .unwrap_or_else(Quarters::zero);
        let mut ts = time_signature;
        let mut start = Quarters::zero();
        let mut changes = meter_changes.iter().peekable();
        data.measure_map.clear();
        while data.measure_map.len() < min_measures || start <= latest {
            let index = data.measure_map.len() as u32 + 1;
            while let Some(&(_, new_ts)) = changes.next_if(|c| c.0 <= index) {
                ts = new_ts;
            }
            data.measure_map.push(Measure { index, start, time_signature: ts });
            start += ts.measure_length();
        }
        data.end = start;
        for part in &mut data.parts {
            part.notes.sort_by_key(|a| (a.onset, a.midi_pitch));
            part.lyrics.sort_by_key(|a| a.onset);
        }
        let map = data.measure_map.clone();
        for part in &mut data.parts {
            for n in &mut part.notes {
                let k = map.partition_point(|m| m.start <= n.onset);
                n.measure_index = k.max(1) as u32;
            }
        }
        data.key_signatures.sort_by_key(|a| a.onset);
        data.tempo_events.sort_by_key(|a| a.onset);
        data.dynamic_events.sort_by(|a, b| a.onset.cmp(&b.onset).then(a.part_index.cmp(&b.part_index)));
        Score::new(data)
    }
}
