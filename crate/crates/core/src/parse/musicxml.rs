//! MusicXML partwise reader, including the compressed `.mxl` container.

use std::collections::HashMap;
use std::io::{Cursor, Read};

use num_traits::{CheckedAdd, CheckedDiv, CheckedSub, Zero};
use roxmltree::{Document, Node, ParsingOptions};

use super::common::{finalize, measure_map, tempo_word_bpm, TieTracker, MAX_MEASURES, MAX_TIME_NUMER};
use super::{decode_text, ParseError, ParseErrorKind};
use crate::model::{
    DynamicEvent, DynamicMark, HarmonicAnnotation, KeySignature, Lyric, Mode, NoteEvent, Part, Quarters, Score,
    ScoreData, SourceFormat, SpelledPitch, Step, TempoEvent, TempoSource, TimeSignature,
};

/// Decompressed size cap for `.mxl` members.
const MAX_MEMBER_BYTES: u64 = 256 << 20;

/// Parses an uncompressed MusicXML document.
pub fn parse_musicxml(bytes: &[u8], path: &str) -> Result<Score, ParseError> {
    let text = decode_text(bytes);
    let opts = ParsingOptions { allow_dtd: true, ..ParsingOptions::default() };
    let doc = Document::parse_with_options(&text, opts).map_err(|e| {
        let pos = e.pos();
        ParseError::new(path, ParseErrorKind::MalformedHeader, format!("XML error: {e}")).at(u64::from(pos.row))
    })?;
    let root = doc.root_element();
    match root.tag_name().name() {
        "score-partwise" => Reader::new(path).read(root),
        "score-timewise" => {
            Err(ParseError::new(path, ParseErrorKind::UnsupportedConstruct, "timewise MusicXML is not supported"))
        }
        other => Err(ParseError::new(path, ParseErrorKind::MalformedHeader, format!("unexpected root element <{other}>"))),
    }
}

/// Parses a compressed `.mxl` container by following its manifest to the
/// root score file.
pub fn parse_mxl(bytes: &[u8], path: &str) -> Result<Score, ParseError> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes))
        .map_err(|e| ParseError::new(path, ParseErrorKind::MalformedHeader, format!("invalid ZIP container: {e}")))?;
    let root = match read_member(&mut archive, "META-INF/container.xml", path) {
        Ok(manifest) => rootfile_from_manifest(&manifest),
        Err(_) => {
            let mut candidates: Vec<String> = archive
                .file_names()
                .filter(|n| !n.starts_with("META-INF/") && (n.ends_with(".xml") || n.ends_with(".musicxml")))
                .map(str::to_string)
                .collect();
            candidates.sort();
            candidates.into_iter().next()
        }
    }
    .ok_or_else(|| ParseError::new(path, ParseErrorKind::MalformedHeader, "container names no root score file"))?;
    let member = read_member(&mut archive, &root, path)?;
    parse_musicxml(&member, path)
}

fn read_member(archive: &mut zip::ZipArchive<Cursor<&[u8]>>, name: &str, path: &str) -> Result<Vec<u8>, ParseError> {
    let bad = |detail: String| ParseError::new(path, ParseErrorKind::MalformedHeader, detail);
    let file = archive.by_name(name).map_err(|e| bad(format!("missing member {name}: {e}")))?;
    let mut out = Vec::new();
    file.take(MAX_MEMBER_BYTES).read_to_end(&mut out).map_err(|e| bad(format!("cannot decompress {name}: {e}")))?;
    Ok(out)
}

fn rootfile_from_manifest(bytes: &[u8]) -> Option<String> {
    let text = decode_text(bytes);
    let doc = Document::parse_with_options(&text, ParsingOptions { allow_dtd: true, ..Default::default() }).ok()?;
    let found = doc
        .descendants()
        .filter(|n| n.has_tag_name("rootfile"))
        .find(|n| n.attribute("media-type").is_none_or(|m| m.contains("musicxml") || m.contains("xml")))?
        .attribute("full-path")?
        .to_string();
    Some(found)
}

/// Parses a decimal string such as `2`, `1.5` or `-0.25` exactly.
pub(crate) fn parse_decimal(s: &str) -> Option<Quarters> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 9 || int.len() > 12 {
        return None;
    }
    let int_v: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_v: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let scale = 10i64.pow(frac.len() as u32);
    let v = Quarters::new(int_v.checked_mul(scale)?.checked_add(frac_v)?, scale);
    Some(if neg { -v } else { v })
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

#[derive(Clone)]
enum ItemKind {
    Note { note: NoteEvent, tie_start: bool, tie_stop: bool, lyric: Option<String> },
    Dynamic(DynamicMark),
    Tempo(f64, TempoSource),
    Key(i8, Option<Mode>),
    Harmony(String),
}

struct Item {
    offset: Quarters,
    kind: ItemKind,
}

#[derive(Default)]
struct MeasureContent {
    length: Quarters,
    time_signature: Option<TimeSignature>,
    items: Vec<Item>,
}

struct PartInfo {
    name: String,
    program: Option<u8>,
    percussive: bool,
}

struct Reader<'p> {
    path: &'p str,
    unrecognized: u32,
}

impl<'p> Reader<'p> {
    fn new(path: &'p str) -> Self {
        Reader { path, unrecognized: 0 }
    }

    fn err(&self, node: Node, detail: impl Into<String>) -> ParseError {
        let pos = node.document().text_pos_at(node.range().start);
        ParseError::new(self.path, ParseErrorKind::MalformedEvent, detail).at(u64::from(pos.row))
    }

    fn read(mut self, root: Node) -> Result<Score, ParseError> {
        let mut infos: HashMap<String, PartInfo> = HashMap::new();
        if let Some(list) = child(root, "part-list") {
            for sp in list.children().filter(|c| c.has_tag_name("score-part")) {
                let id = sp.attribute("id").unwrap_or_default().to_string();
                let name = child_text(sp, "part-name").unwrap_or_default().to_string();
                let midi = child(sp, "midi-instrument");
                let program = midi
                    .and_then(|m| child_text(m, "midi-program"))
                    .and_then(|t| t.parse::<u8>().ok())
                    .filter(|p| (1..=128).contains(p))
                    .map(|p| p - 1);
                let percussive = midi.and_then(|m| child_text(m, "midi-channel")) == Some("10");
                infos.insert(id, PartInfo { name, program, percussive });
            }
        }

        let mut parts_content: Vec<(Option<&PartInfo>, Vec<MeasureContent>)> = Vec::new();
        for part in root.children().filter(|c| c.has_tag_name("part")) {
            let info = part.attribute("id").and_then(|id| infos.get(id));
            let measures = self.read_part(part)?;
            parts_content.push((info, measures));
        }

        // Measure lengths: the longest content over all parts, or the
        // nominal length when no part fills the measure.
        let measure_count = parts_content.iter().map(|(_, m)| m.len()).max().unwrap_or(0);
        if measure_count > MAX_MEASURES {
            return Err(ParseError::new(self.path, ParseErrorKind::MalformedEvent, "score exceeds the measure limit"));
        }
        let mut starts = Vec::with_capacity(measure_count);
        let mut ts = TimeSignature::COMMON;
        let mut t = Quarters::zero();
        for k in 0..measure_count {
            if let Some(new_ts) = parts_content.first().and_then(|(_, m)| m.get(k)).and_then(|m| m.time_signature) {
                ts = new_ts;
            }
            let content = parts_content.iter().filter_map(|(_, m)| m.get(k)).map(|m| m.length).max().unwrap_or_default();
            let length = if content > Quarters::zero() { content } else { ts.measure_length() };
            starts.push((t, ts));
            t = t
                .checked_add(&length)
                .filter(|v| v.numer().abs() <= MAX_TIME_NUMER)
                .ok_or_else(|| ParseError::new(self.path, ParseErrorKind::MalformedEvent, "score too long"))?;
        }
        let (map, nominal_end) = measure_map(&starts);
        let mut data = ScoreData::empty(SourceFormat::MusicXml, self.path);
        data.measure_map = map;
        data.end = nominal_end.max(t);
        if data.end <= data.measure_map.last().unwrap().start {
            data.end = data.measure_map.last().unwrap().start + ts.measure_length();
        }

        let mut key_part: Option<usize> = None;
        for (pi, (info, measures)) in parts_content.into_iter().enumerate() {
            let mut part = Part::new(pi, info.map(|i| i.name.clone()).unwrap_or_default());
            part.midi_program = info.and_then(|i| i.program);
            part.percussive = info.is_some_and(|i| i.percussive);
            let mut ties = TieTracker::default();
            for (k, m) in measures.into_iter().enumerate() {
                let start = starts[k].0;
                for item in m.items {
                    let onset = start + item.offset;
                    match item.kind {
                        ItemKind::Note { mut note, tie_start, tie_stop, lyric } => {
                            note.onset = onset;
                            if let Some(text) = lyric {
                                part.lyrics.push(Lyric { onset, text });
                            }
                            ties.push(&mut part.notes, pi, note, tie_start, tie_stop);
                        }
                        ItemKind::Dynamic(mark) => data.dynamic_events.push(DynamicEvent { onset, part_index: pi, mark }),
                        ItemKind::Tempo(bpm, source) => data.tempo_events.push(TempoEvent { onset, bpm, source }),
                        ItemKind::Key(fifths, mode) => {
                            if *key_part.get_or_insert(pi) == pi {
                                data.key_signatures.push(KeySignature { onset, fifths, mode });
                            }
                        }
                        ItemKind::Harmony(label) => {
                            let beat = crate::model::q_to_f64(item.offset);
                            data.harmony.push(HarmonicAnnotation {
                                measure_index: k as u32 + 1,
                                beat,
                                label,
                                local_key: String::new(),
                            });
                        }
                    }
                }
            }
            data.parts.push(part);
        }
        data.unrecognized_dynamics = self.unrecognized;
        finalize(data, self.path)
    }

    fn read_part(&mut self, part: Node) -> Result<Vec<MeasureContent>, ParseError> {
        let mut divisions = Quarters::from_integer(1);
        let mut out = Vec::new();
        for measure in part.children().filter(|c| c.has_tag_name("measure")) {
            let mut content = MeasureContent::default();
            let mut cursor = Quarters::zero();
            let mut last_onset = Quarters::zero();
            for el in measure.children().filter(Node::is_element) {
                match el.tag_name().name() {
                    "attributes" => {
                        if let Some(d) = child_text(el, "divisions") {
                            divisions = parse_decimal(d)
                                .filter(|d| *d > Quarters::zero() && d.numer().abs() < MAX_TIME_NUMER)
                                .ok_or_else(|| self.err(el, format!("invalid divisions {d:?}")))?;
                        }
                        if let Some(key) = child(el, "key") {
                            if let Some(f) = child_text(key, "fifths") {
                                let fifths: i8 = f
                                    .parse()
                                    .ok()
                                    .filter(|v| (-7..=7).contains(v))
                                    .ok_or_else(|| self.err(key, format!("invalid fifths {f:?}")))?;
                                let mode = match child_text(key, "mode") {
                                    Some("major") => Some(Mode::Major),
                                    Some("minor") => Some(Mode::Minor),
                                    _ => None,
                                };
                                content.items.push(Item { offset: cursor, kind: ItemKind::Key(fifths, mode) });
                            }
                        }
                        if let Some(time) = child(el, "time") {
                            if let (Some(b), Some(bt)) = (child_text(time, "beats"), child_text(time, "beat-type")) {
                                let beats: Option<u32> = b.split('+').map(|x| x.trim().parse::<u32>().ok()).sum();
                                let beat_type: Option<u32> = bt.parse().ok();
                                match (beats, beat_type) {
                                    (Some(n), Some(d)) if n > 0 && n <= 1024 && d > 0 && d <= 1024 => {
                                        content.time_signature = Some(TimeSignature::new(n, d));
                                    }
                                    _ => return Err(self.err(time, format!("invalid time signature {b}/{bt}"))),
                                }
                            }
                        }
                    }
                    "note" => {
                        let (advance, onset) = self.read_note(el, cursor, last_onset, divisions, &mut content.items)?;
                        last_onset = onset;
                        cursor = self.advance(el, cursor, advance)?;
                    }
                    "backup" => {
                        let d = self.duration(el, divisions)?;
                        cursor = cursor.checked_sub(&d).unwrap_or_default().max(Quarters::zero());
                    }
                    "forward" => {
                        let d = self.duration(el, divisions)?;
                        cursor = self.advance(el, cursor, d)?;
                    }
                    "direction" => self.read_direction(el, cursor, &mut content),
                    "sound" => {
                        if let Some(bpm) = el.attribute("tempo").and_then(|t| t.trim().parse::<f64>().ok()) {
                            if bpm.is_finite() && bpm > 0.0 {
                                content.items.push(Item { offset: cursor, kind: ItemKind::Tempo(bpm, TempoSource::MetronomeMark) });
                            }
                        }
                    }
                    "harmony" => {
                        if let Some(label) = harmony_label(el) {
                            content.items.push(Item { offset: cursor, kind: ItemKind::Harmony(label) });
                        }
                    }
                    _ => {}
                }
                content.length = content.length.max(cursor);
            }
            out.push(content);
        }
        Ok(out)
    }

    fn advance(&self, el: Node, cursor: Quarters, by: Quarters) -> Result<Quarters, ParseError> {
        cursor
            .checked_add(&by)
            .filter(|v| v.numer().abs() <= MAX_TIME_NUMER)
            .ok_or_else(|| self.err(el, "duration overflow"))
    }

    fn duration(&self, el: Node, divisions: Quarters) -> Result<Quarters, ParseError> {
        let text = child_text(el, "duration").ok_or_else(|| self.err(el, "missing duration"))?;
        parse_decimal(text)
            .filter(|d| *d >= Quarters::zero() && d.numer().abs() < MAX_TIME_NUMER)
            .and_then(|d| d.checked_div(&divisions))
            .ok_or_else(|| self.err(el, format!("invalid duration {text:?}")))
    }

    /// Pushes the note (and any attached dynamics) and returns how far the
    /// cursor advances plus the onset used by following chord members.
    fn read_note(
        &mut self,
        el: Node,
        cursor: Quarters,
        last_onset: Quarters,
        divisions: Quarters,
        items: &mut Vec<Item>,
    ) -> Result<(Quarters, Quarters), ParseError> {
        let grace = child(el, "grace").is_some();
        let chord = child(el, "chord").is_some();
        let duration = if grace { Quarters::zero() } else { self.duration(el, divisions)? };
        let onset = if chord { last_onset } else { cursor };
        let advance = if chord || grace { Quarters::zero() } else { duration };

        if child(el, "rest").is_some() || child(el, "cue").is_some() {
            return Ok((advance, onset));
        }
        let spelled = if let Some(p) = child(el, "pitch") {
            self.spelled(el, child_text(p, "step"), child_text(p, "alter"), child_text(p, "octave"))?
        } else if let Some(u) = child(el, "unpitched") {
            self.spelled(el, child_text(u, "display-step"), None, child_text(u, "display-octave"))?
        } else {
            return Err(self.err(el, "note has neither pitch nor rest"));
        };
        let midi_pitch = spelled.midi().ok_or_else(|| self.err(el, "pitch outside the MIDI range"))?;
        if !grace && duration.is_zero() {
            return Err(self.err(el, "non-grace note with zero duration"));
        }

        let mut tie_start = false;
        let mut tie_stop = false;
        for t in el.children().filter(|c| c.has_tag_name("tie")) {
            match t.attribute("type") {
                Some("start") => tie_start = true,
                Some("stop") => tie_stop = true,
                _ => {}
            }
        }

        let lyric = el
            .children()
            .filter(|c| c.has_tag_name("lyric"))
            .find(|l| l.attribute("number").is_none_or(|n| n == "1"))
            .and_then(|l| {
                let text = child_text(l, "text")?;
                if text.is_empty() {
                    return None;
                }
                Some(match child_text(l, "syllabic") {
                    Some("begin") | Some("middle") => format!("{text}-"),
                    _ => text.to_string(),
                })
            });

        if let Some(notations) = child(el, "notations") {
            for dynamics in notations.children().filter(|c| c.has_tag_name("dynamics")) {
                self.read_dynamics(dynamics, onset, items);
            }
        }

        let note = NoteEvent {
            onset,
            duration,
            midi_pitch,
            spelled: Some(spelled),
            velocity: None,
            grace,
            tie_to_next: false,
            measure_index: 1,
        };
        items.push(Item { offset: onset, kind: ItemKind::Note { note, tie_start, tie_stop, lyric } });
        Ok((advance, onset))
    }

    fn spelled(&self, el: Node, step: Option<&str>, alter: Option<&str>, octave: Option<&str>) -> Result<SpelledPitch, ParseError> {
        let step = step
            .and_then(|s| {
                let mut chars = s.chars();
                let c = chars.next()?;
                if chars.next().is_some() {
                    return None;
                }
                Step::from_char(c)
            })
            .ok_or_else(|| self.err(el, "invalid pitch step"))?;
        let alter = match alter {
            None => 0,
            Some(a) => {
                let v: f64 = a.parse().map_err(|_| self.err(el, format!("invalid alter {a:?}")))?;
                let r = v.round();
                if !(-2.0..=2.0).contains(&r) {
                    return Err(self.err(el, format!("alter {a} out of range")));
                }
                r as i8
            }
        };
        let octave: i8 = octave
            .and_then(|o| o.parse().ok())
            .filter(|o| (-1..=9).contains(o))
            .ok_or_else(|| self.err(el, "invalid octave"))?;
        Ok(SpelledPitch { step, alter, octave })
    }

    fn read_dynamics(&mut self, dynamics: Node, offset: Quarters, items: &mut Vec<Item>) {
        for mark in dynamics.children().filter(Node::is_element) {
            match DynamicMark::parse(mark.tag_name().name()) {
                Some(m) => items.push(Item { offset, kind: ItemKind::Dynamic(m) }),
                None => self.unrecognized += 1,
            }
        }
    }

    fn read_direction(&mut self, el: Node, cursor: Quarters, content: &mut MeasureContent) {
        let mut numeric_tempo = false;
        let mut word_tempo = None;
        for dt in el.children().filter(|c| c.has_tag_name("direction-type")) {
            for d in dt.children().filter(Node::is_element) {
                match d.tag_name().name() {
                    "dynamics" => self.read_dynamics(d, cursor, &mut content.items),
                    "metronome" => {
                        if let Some(bpm) = metronome_bpm(d) {
                            numeric_tempo = true;
                            content.items.push(Item { offset: cursor, kind: ItemKind::Tempo(bpm, TempoSource::MetronomeMark) });
                        }
                    }
                    "words" => {
                        if let Some(bpm) = d.text().and_then(tempo_word_bpm) {
                            word_tempo.get_or_insert(bpm);
                        }
                    }
                    _ => {}
                }
            }
        }
        if !numeric_tempo {
            if let Some(bpm) = child(el, "sound").and_then(|s| s.attribute("tempo")).and_then(|t| t.trim().parse::<f64>().ok()) {
                if bpm.is_finite() && bpm > 0.0 {
                    numeric_tempo = true;
                    content.items.push(Item { offset: cursor, kind: ItemKind::Tempo(bpm, TempoSource::MetronomeMark) });
                }
            }
        }
        if !numeric_tempo {
            if let Some(bpm) = word_tempo {
                content.items.push(Item { offset: cursor, kind: ItemKind::Tempo(bpm, TempoSource::TempoWord) });
            }
        }
    }
}

fn metronome_bpm(m: Node) -> Option<f64> {
    let per_minute: f64 = child_text(m, "per-minute")?.parse().ok()?;
    let unit = match child_text(m, "beat-unit")? {
        "whole" => 4.0,
        "half" => 2.0,
        "quarter" => 1.0,
        "eighth" => 0.5,
        "16th" => 0.25,
        "32nd" => 0.125,
        _ => return None,
    };
    let dots = m.children().filter(|c| c.has_tag_name("beat-unit-dot")).count() as i32;
    let factor = 2.0 - 0.5f64.powi(dots);
    let bpm = per_minute * unit * factor;
    (bpm.is_finite() && bpm > 0.0).then_some(bpm)
}

fn harmony_label(h: Node) -> Option<String> {
    let root = child(h, "root")?;
    let step = child_text(root, "root-step")?;
    let alter: i32 = child_text(root, "root-alter").and_then(|a| a.parse::<f64>().ok()).map_or(0, |a| a.round() as i32);
    let accidentals = if alter >= 0 { "#".repeat(alter as usize) } else { "b".repeat((-alter) as usize) };
    let suffix = match child_text(h, "kind").unwrap_or("major") {
        "major" | "" => "",
        "minor" => "m",
        "dominant" => "7",
        "major-seventh" => "maj7",
        "minor-seventh" => "m7",
        "diminished" => "dim",
        "diminished-seventh" => "dim7",
        "half-diminished" => "m7b5",
        "augmented" => "aug",
        "suspended-fourth" => "sus4",
        "suspended-second" => "sus2",
        "major-sixth" => "6",
        "minor-sixth" => "m6",
        "dominant-ninth" => "9",
        other => other,
    };
    Some(format!("{step}{accidentals}{suffix}"))
}
