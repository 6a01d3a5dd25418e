//! Standard MIDI File reader (formats 0 and 1, metrical division only).

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_traits::Zero;

use super::common::{finalize, MAX_MEASURES, MAX_TIME_NUMER};
use super::{decode_text, ParseError, ParseErrorKind};
use crate::model::{
    KeySignature, Lyric, Measure, Mode, NoteEvent, Part, Quarters, Score, ScoreData, SourceFormat, TempoEvent,
    TempoSource, TimeSignature,
};

const PERCUSSION_CHANNEL: u8 = 9;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn truncated(&self) -> ParseError {
        ParseError::new(self.path, ParseErrorKind::MalformedEvent, "truncated event").at(self.pos as u64)
    }

    fn byte(&mut self) -> Result<u8, ParseError> {
        let b = *self.buf.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        self.buf.get(self.pos).copied()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| self.truncated())?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn vlq(&mut self) -> Result<u32, ParseError> {
        let mut v: u32 = 0;
        for _ in 0..4 {
            let b = self.byte()?;
            v = (v << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(ParseError::new(self.path, ParseErrorKind::MalformedEvent, "variable-length quantity exceeds 4 bytes")
            .at(self.pos as u64))
    }

    fn data_byte(&mut self) -> Result<u8, ParseError> {
        let b = self.byte()?;
        if b & 0x80 != 0 {
            return Err(ParseError::new(self.path, ParseErrorKind::MalformedEvent, "status byte where data expected")
                .at(self.pos as u64 - 1));
        }
        Ok(b)
    }
}

fn u16_be(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn u32_be(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

struct RawNote {
    start: u64,
    end: u64,
    key: u8,
    velocity: u8,
}

#[derive(Default)]
struct Track {
    name: Option<String>,
    notes: BTreeMap<u8, Vec<RawNote>>,
    first_program: HashMap<u8, u8>,
    lyrics: Vec<(u64, String)>,
}

#[derive(Default)]
struct Globals {
    tempo: Vec<(u64, u32)>,
    time_signatures: Vec<(u64, TimeSignature)>,
    keys: Vec<(u64, i8, Mode)>,
    end_tick: u64,
}

/// Parses a Standard MIDI File.
pub fn parse_midi(bytes: &[u8], path: &str) -> Result<Score, ParseError> {
    let header_err = |detail: &str| ParseError::new(path, ParseErrorKind::MalformedHeader, detail).at(0);
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" {
        return Err(header_err("missing MThd header"));
    }
    let header_len = u32_be(&bytes[4..8]) as usize;
    if header_len < 6 {
        return Err(header_err("header chunk shorter than 6 bytes"));
    }
    let format = u16_be(&bytes[8..10]);
    let division = u16_be(&bytes[12..14]);
    match format {
        0 | 1 => {}
        2 => return Err(ParseError::new(path, ParseErrorKind::UnsupportedConstruct, "SMF format 2").at(8)),
        _ => return Err(header_err("unknown SMF format")),
    }
    if division & 0x8000 != 0 {
        return Err(header_err("SMPTE time division"));
    }
    if division == 0 {
        return Err(header_err("zero ticks per quarter"));
    }

    let mut cur = Cursor { buf: bytes, pos: 8usize.saturating_add(header_len), path };
    if cur.pos > bytes.len() {
        return Err(header_err("truncated header chunk"));
    }

    let mut tracks = Vec::new();
    let mut globals = Globals::default();
    while cur.pos < bytes.len() {
        let id = cur.take(4)?;
        let len = u32_be(cur.take(4)?) as usize;
        let body = cur.take(len)?;
        if id == b"MTrk" {
            let start = cur.pos - len;
            tracks.push(read_track(body, start, path, &mut globals)?);
        }
    }

    build_score(tracks, globals, i64::from(division), path)
}

fn read_track(body: &[u8], offset: usize, path: &str, globals: &mut Globals) -> Result<Track, ParseError> {
    let mut cur = Cursor { buf: body, pos: 0, path };
    let mut track = Track::default();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut done: Vec<(u8, RawNote)> = Vec::new();
    let fail = |e: ParseError| -> ParseError { ParseError { byte_or_line: e.byte_or_line.map(|p| p + offset as u64), ..e } };

    while cur.pos < body.len() {
        let delta = cur.vlq().map_err(fail)?;
        tick += u64::from(delta);
        let status = match cur.peek() {
            Some(b) if b & 0x80 != 0 => {
                cur.pos += 1;
                b
            }
            Some(_) => running.ok_or_else(|| {
                fail(ParseError::new(path, ParseErrorKind::MalformedEvent, "data byte without running status").at(cur.pos as u64))
            })?,
            None => return Err(fail(cur.truncated())),
        };

        match status {
            0xFF => {
                running = None;
                let kind = cur.byte().map_err(fail)?;
                let len = cur.vlq().map_err(fail)? as usize;
                let data = cur.take(len).map_err(fail)?;
                let bad = |detail: &str| fail(ParseError::new(path, ParseErrorKind::MalformedEvent, detail).at(cur.pos as u64));
                match kind {
                    0x2F => break,
                    0x03 if track.name.is_none() => {
                        track.name = Some(decode_text(data).trim().to_string());
                    }
                    0x05 => {
                        let text = decode_text(data).trim().to_string();
                        if !text.is_empty() {
                            track.lyrics.push((tick, text));
                        }
                    }
                    0x51 => {
                        if data.len() != 3 {
                            return Err(bad("tempo meta must be 3 bytes"));
                        }
                        let uspq = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if uspq > 0 {
                            globals.tempo.push((tick, uspq));
                        }
                    }
                    0x58 => {
                        if data.len() < 2 || data[0] == 0 || data[1] > 6 {
                            return Err(bad("invalid time signature meta"));
                        }
                        globals
                            .time_signatures
                            .push((tick, TimeSignature::new(u32::from(data[0]), 1 << data[1])));
                    }
                    0x59 => {
                        if data.len() != 2 {
                            return Err(bad("key signature meta must be 2 bytes"));
                        }
                        let fifths = data[0] as i8;
                        let mode = match data[1] {
                            0 => Mode::Major,
                            1 => Mode::Minor,
                            _ => return Err(bad("invalid key signature mode")),
                        };
                        if !(-7..=7).contains(&fifths) {
                            return Err(bad("key signature fifths out of range"));
                        }
                        globals.keys.push((tick, fifths, mode));
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = cur.vlq().map_err(fail)? as usize;
                cur.take(len).map_err(fail)?;
            }
            0xF1..=0xFE => {
                return Err(fail(
                    ParseError::new(path, ParseErrorKind::MalformedEvent, format!("unexpected system message {status:#04x}"))
                        .at(cur.pos as u64 - 1),
                ));
            }
            _ => {
                running = Some(status);
                let channel = status & 0x0F;
                match status & 0xF0 {
                    0x80 | 0x90 => {
                        let key = cur.data_byte().map_err(fail)?;
                        let vel = cur.data_byte().map_err(fail)?;
                        let queue = open.entry((channel, key)).or_default();
                        if status & 0xF0 == 0x90 && vel > 0 {
                            queue.push_back((tick, vel));
                        } else if let Some((start, velocity)) = queue.pop_front() {
                            done.push((channel, RawNote { start, end: tick, key, velocity }));
                        }
                    }
                    0xA0 | 0xB0 | 0xE0 => {
                        cur.data_byte().map_err(fail)?;
                        cur.data_byte().map_err(fail)?;
                    }
                    0xC0 => {
                        let program = cur.data_byte().map_err(fail)?;
                        track.first_program.entry(channel).or_insert(program);
                    }
                    0xD0 => {
                        cur.data_byte().map_err(fail)?;
                    }
                    _ => unreachable!("status byte has the high bit set"),
                }
            }
        }
        if tick as i64 > MAX_TIME_NUMER {
            return Err(fail(ParseError::new(path, ParseErrorKind::MalformedEvent, "track too long").at(cur.pos as u64)));
        }
    }

    // Notes still sounding at the end of the track stop there.
    let mut dangling: Vec<_> = open.into_iter().collect();
    dangling.sort_by_key(|((ch, key), _)| (*ch, *key));
    for ((channel, key), queue) in dangling {
        for (start, velocity) in queue {
            done.push((channel, RawNote { start, end: tick, key, velocity }));
        }
    }
    for (channel, note) in done {
        if note.end > note.start {
            track.notes.entry(channel).or_default().push(note);
        }
    }
    globals.end_tick = globals.end_tick.max(tick);
    Ok(track)
}

fn build_score(tracks: Vec<Track>, mut g: Globals, division: i64, path: &str) -> Result<Score, ParseError> {
    let q = |tick: u64| Quarters::new(tick as i64, division);
    let mut data = ScoreData::empty(SourceFormat::Midi, path);

    let mut program_any: HashMap<u8, u8> = HashMap::new();
    for t in &tracks {
        for (&ch, &p) in &t.first_program {
            program_any.entry(ch).or_insert(p);
        }
    }

    let mut max_end: u64 = g.end_tick;
    let mut lyrics_by_track: Vec<(Option<usize>, Vec<(u64, String)>)> = Vec::new();
    for track in tracks {
        let mut first_part = None;
        for (channel, mut raw) in track.notes {
            raw.sort_by_key(|n| (n.start, n.key, n.end));
            let index = data.parts.len();
            first_part.get_or_insert(index);
            let mut part = Part::new(index, track.name.clone().unwrap_or_default());
            part.midi_program = Some(
                track.first_program.get(&channel).or_else(|| program_any.get(&channel)).copied().unwrap_or(0),
            );
            part.percussive = channel == PERCUSSION_CHANNEL;
            part.notes = raw
                .into_iter()
                .map(|n| {
                    max_end = max_end.max(n.end);
                    NoteEvent {
                        onset: q(n.start),
                        duration: q(n.end) - q(n.start),
                        midi_pitch: n.key,
                        spelled: None,
                        velocity: Some(n.velocity),
                        grace: false,
                        tie_to_next: false,
                        measure_index: 1,
                    }
                })
                .collect();
            data.parts.push(part);
        }
        lyrics_by_track.push((first_part, track.lyrics));
    }

    for (part, lyrics) in lyrics_by_track {
        let target = part.or(if data.parts.is_empty() { None } else { Some(0) });
        if let Some(pi) = target {
            data.parts[pi]
                .lyrics
                .extend(lyrics.into_iter().map(|(t, text)| Lyric { onset: q(t), text }));
        }
    }

    g.tempo.sort();
    data.tempo_events = g
        .tempo
        .iter()
        .map(|&(t, uspq)| TempoEvent { onset: q(t), bpm: 60_000_000.0 / f64::from(uspq), source: TempoSource::MidiMeta })
        .collect();
    g.keys.sort_by_key(|&(t, f, m)| (t, f, m == Mode::Minor));
    data.key_signatures =
        g.keys.iter().map(|&(t, fifths, mode)| KeySignature { onset: q(t), fifths, mode: Some(mode) }).collect();

    let sigs = g.time_signatures.iter().map(|&(t, ts)| (q(t), ts)).collect();
    let (map, end) = midi_measures(sigs, q(max_end), path)?;
    data.measure_map = map;
    data.end = end;

    finalize(data, path)
}

/// Lays out measures from the time-signature events until `end` is covered.
/// A signature change that falls mid-measure starts a new measure there.
fn midi_measures(
    mut changes: Vec<(Quarters, TimeSignature)>,
    end: Quarters,
    path: &str,
) -> Result<(Vec<Measure>, Quarters), ParseError> {
    changes.sort_by_key(|&(t, _)| t);
    // Same-onset duplicates: the last one wins.
    let mut deduped: Vec<(Quarters, TimeSignature)> = Vec::new();
    for (t, ts) in changes {
        match deduped.last_mut() {
            Some(last) if last.0 == t => last.1 = ts,
            _ => deduped.push((t, ts)),
        }
    }

    let mut ts = TimeSignature::COMMON;
    let mut i = 0;
    let mut map = Vec::new();
    let mut start = Quarters::zero();
    loop {
        while let Some(&(t, new_ts)) = deduped.get(i) {
            if t > start {
                break;
            }
            ts = new_ts;
            i += 1;
        }
        if map.len() >= MAX_MEASURES {
            return Err(ParseError::new(path, ParseErrorKind::MalformedEvent, "score exceeds the measure limit"));
        }
        map.push(Measure { index: map.len() as u32 + 1, start, time_signature: ts });
        let mut next = start + ts.measure_length();
        if let Some(&(t, _)) = deduped.get(i) {
            next = next.min(t);
        }
        if next >= end {
            return Ok((map, next));
        }
        start = next;
    }
}
