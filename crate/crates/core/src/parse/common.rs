use std::collections::HashMap;

use num_traits::Zero;

use super::{ParseError, ParseErrorKind};
use crate::model::{Measure, NoteEvent, Quarters, Score, ScoreData, TimeSignature};

/// Upper bound on measures per score. Anything longer is treated as corrupt
/// input rather than allocated.
pub(crate) const MAX_MEASURES: usize = 100_000;

/// Largest onset numerator we accept; keeps rational arithmetic far from
/// `i64` overflow.
pub(crate) const MAX_TIME_NUMER: i64 = 1 << 40;

/// Merges tie chains into single note events while a part is being read.
#[derive(Default)]
pub(crate) struct TieTracker {
    open: HashMap<(usize, u8), usize>,
}

impl TieTracker {
    pub(crate) fn push(&mut self, notes: &mut Vec<NoteEvent>, part: usize, mut note: NoteEvent, tie_start: bool, tie_stop: bool) {
        let key = (part, note.midi_pitch);
        if tie_stop && !note.grace {
            if let Some(&idx) = self.open.get(&key) {
                let prev = &mut notes[idx];
                if prev.end() == note.onset {
                    prev.duration += note.duration;
                    if !tie_start {
                        prev.tie_to_next = false;
                        self.open.remove(&key);
                    }
                    return;
                }
            }
        }
        let tied = tie_start && !note.grace;
        note.tie_to_next = tied;
        if tied {
            self.open.insert(key, notes.len());
        } else {
            self.open.remove(&key);
        }
        notes.push(note);
    }
}

/// Metronome value for a conventional Italian tempo word, if `text`
/// contains one.
pub(crate) fn tempo_word_bpm(text: &str) -> Option<f64> {
    // Longer words first so that "allegretto" is not read as "allegro".
    const WORDS: [(&str, f64); 13] = [
        ("prestissimo", 200.0),
        ("larghetto", 63.0),
        ("allegretto", 112.0),
        ("andantino", 92.0),
        ("moderato", 108.0),
        ("andante", 80.0),
        ("allegro", 132.0),
        ("adagio", 70.0),
        ("vivace", 160.0),
        ("presto", 180.0),
        ("largo", 50.0),
        ("lento", 52.0),
        ("grave", 40.0),
    ];
    let lower = text.to_lowercase();
    WORDS.iter().find(|(w, _)| lower.contains(w)).map(|&(_, bpm)| bpm)
}

/// Appends measures (repeating the last time signature) until `t` lies
/// inside the map.
pub(crate) fn cover(data: &mut ScoreData, t: Quarters, path: &str) -> Result<(), ParseError> {
    while t >= data.end {
        if data.measure_map.len() >= MAX_MEASURES {
            return Err(ParseError::new(path, ParseErrorKind::MalformedEvent, "score exceeds the measure limit"));
        }
        let last = *data.measure_map.last().expect("measure map is never empty");
        let ts = last.time_signature;
        data.measure_map.push(Measure { index: last.index + 1, start: data.end, time_signature: ts });
        data.end += ts.measure_length();
    }
    Ok(())
}

/// Builds a measure map from measure starts; the last measure ends at
/// `end` or at its nominal length, whichever is later.
pub(crate) fn measure_map(starts: &[(Quarters, TimeSignature)]) -> (Vec<Measure>, Quarters) {
    if starts.is_empty() {
        let ts = TimeSignature::COMMON;
        return (vec![Measure { index: 1, start: Quarters::zero(), time_signature: ts }], ts.measure_length());
    }
    let map: Vec<Measure> = starts
        .iter()
        .enumerate()
        .map(|(i, &(start, ts))| Measure { index: i as u32 + 1, start, time_signature: ts })
        .collect();
    let last = map.last().unwrap();
    let end = last.start + last.time_signature.measure_length();
    (map, end)
}

/// Sorts notes and events, merges same-pitch overlaps (longest wins),
/// assigns measure numbers from onsets, and validates.
pub(crate) fn finalize(mut data: ScoreData, path: &str) -> Result<Score, ParseError> {
    for part in &mut data.parts {
        part.notes = merge_overlaps(std::mem::take(&mut part.notes));
        part.lyrics.sort_by_key(|a| a.onset);
    }
    data.key_signatures.sort_by_key(|a| a.onset);
    data.key_signatures.dedup();
    data.tempo_events.sort_by(|a, b| a.onset.cmp(&b.onset).then(a.bpm.total_cmp(&b.bpm)));
    data.tempo_events.dedup();
    data.dynamic_events.sort_by(|a, b| a.onset.cmp(&b.onset).then(a.part_index.cmp(&b.part_index)));
    data.dynamic_events.dedup();
    data.harmony
        .sort_by(|a, b| a.measure_index.cmp(&b.measure_index).then(a.beat.total_cmp(&b.beat)));

    let latest = data
        .parts
        .iter()
        .flat_map(|p| p.notes.iter().map(|n| n.onset).chain(p.lyrics.iter().map(|l| l.onset)))
        .chain(data.key_signatures.iter().map(|k| k.onset))
        .chain(data.tempo_events.iter().map(|e| e.onset))
        .chain(data.dynamic_events.iter().map(|e| e.onset))
        .max();
    if let Some(t) = latest {
        if t < Quarters::zero() {
            return Err(ParseError::new(path, ParseErrorKind::MalformedEvent, "negative onset"));
        }
        cover(&mut data, t, path)?;
    }

    for pi in 0..data.parts.len() {
        for ni in 0..data.parts[pi].notes.len() {
            let onset = data.parts[pi].notes[ni].onset;
            let m = data
                .measure_of(onset)
                .ok_or_else(|| ParseError::new(path, ParseErrorKind::MalformedEvent, "onset outside measure map"))?;
            data.parts[pi].notes[ni].measure_index = m;
        }
    }

    Score::new(data).map_err(|e| ParseError::new(path, ParseErrorKind::MalformedEvent, e.to_string()))
}

fn merge_overlaps(mut notes: Vec<NoteEvent>) -> Vec<NoteEvent> {
    notes.sort_by(|a, b| {
        (a.midi_pitch, a.grace, a.onset)
            .cmp(&(b.midi_pitch, b.grace, b.onset))
            .then(b.duration.cmp(&a.duration))
    });
    let mut kept: Vec<NoteEvent> = Vec::with_capacity(notes.len());
    for n in notes {
        if let Some(cur) = kept.last_mut() {
            if !n.grace && !cur.grace && cur.midi_pitch == n.midi_pitch && n.onset < cur.end() {
                if n.duration > cur.duration {
                    *cur = n;
                }
                continue;
            }
        }
        kept.push(n);
    }
    kept.sort_by_key(|a| (a.onset, a.midi_pitch, !a.grace));
    kept
}
