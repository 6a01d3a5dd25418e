//! Writers for Standard MIDI Files, MusicXML and `**kern`.
//!
//! The notation writers need each part to be a sequence of chords: notes
//! that start together may differ in length, but the next onset must not
//! come before the longest of them ends. Notes crossing barlines or event
//! positions are split and tied. Grace notes are written by the notation
//! writers and skipped by the MIDI writer.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_integer::Integer;
use num_traits::Zero;
use thiserror::Error;

use crate::model::{
    DynamicMark, Mode, NoteEvent, Part, Quarters, Score, SourceFormat, SpelledPitch, Step, TimeSignature,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("part {part}: overlapping notes at {onset} cannot be written as a chord sequence")]
    Polyphony { part: usize, onset: String },
    #[error("time resolution {0} exceeds what the format can store")]
    Resolution(i64),
    #[error("time signature {0}/{1} has no MIDI representation")]
    Meter(u32, u32),
    #[error("negative onset")]
    NegativeTime,
}

/// Writes `score` in `format` (MusicXML is written uncompressed).
pub fn encode(score: &Score, format: SourceFormat) -> Result<Vec<u8>, EncodeError> {
    match format {
        SourceFormat::Midi => write_midi(score),
        SourceFormat::MusicXml => write_musicxml(score).map(String::into_bytes),
        SourceFormat::Kern => write_kern(score).map(String::into_bytes),
    }
}

fn lcm_of_denominators<'a>(values: impl IntoIterator<Item = &'a Quarters>) -> i64 {
    values.into_iter().fold(1i64, |acc, v| acc.lcm(v.denom()))
}

fn velocity_for(mark: Option<DynamicMark>) -> u8 {
    match mark {
        None => 80,
        Some(m) => [16, 33, 49, 64, 80, 96, 112, 127][usize::from(m.level() - 1)],
    }
}

// ---------------------------------------------------------------- MIDI

fn vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut stack = [0u8; 5];
    let mut n = 0;
    loop {
        stack[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(stack[i] | if i > 0 { 0x80 } else { 0 });
    }
}

struct TrackWriter {
    events: Vec<(u64, u8, Vec<u8>)>,
}

impl TrackWriter {
    fn new() -> Self {
        TrackWriter { events: Vec::new() }
    }

    /// `order` breaks ties at the same tick: metas, then note-offs, then
    /// program changes, then note-ons.
    fn push(&mut self, tick: u64, order: u8, bytes: Vec<u8>) {
        self.events.push((tick, order, bytes));
    }

    fn meta(&mut self, tick: u64, kind: u8, data: &[u8]) {
        let mut b = vec![0xFF, kind];
        vlq(&mut b, data.len() as u32);
        b.extend_from_slice(data);
        self.push(tick, 0, b);
    }

    fn finish(mut self, end: u64) -> Vec<u8> {
        self.events.sort_by_key(|a| (a.0, a.1));
        let mut body = Vec::new();
        let mut last = 0u64;
        for (tick, _, bytes) in &self.events {
            vlq(&mut body, (tick - last) as u32);
            body.extend_from_slice(bytes);
            last = *tick;
        }
        vlq(&mut body, (end.max(last) - last) as u32);
        body.extend_from_slice(&[0xFF, 0x2F, 0x00]);
        let mut chunk = b"MTrk".to_vec();
        chunk.extend_from_slice(&(body.len() as u32).to_be_bytes());
        chunk.extend_from_slice(&body);
        chunk
    }
}

fn write_midi(score: &Score) -> Result<Vec<u8>, EncodeError> {
    let times = score
        .notes()
        .flat_map(|n| [n.onset, n.duration])
        .chain(score.measure_map.iter().map(|m| m.start))
        .chain(score.tempo_events.iter().map(|e| e.onset))
        .chain(score.key_signatures.iter().map(|e| e.onset))
        .chain(score.parts.iter().flat_map(|p| p.lyrics.iter().map(|l| l.onset)))
        .collect::<Vec<_>>();
    if times.iter().any(|t| *t < Quarters::zero()) {
        return Err(EncodeError::NegativeTime);
    }
    let base = lcm_of_denominators(&times);
    let tpq = if 480 % base == 0 { 480 } else { base * (480 / base).max(1) };
    if tpq > 0x7FFF {
        return Err(EncodeError::Resolution(tpq));
    }
    let tick = |t: Quarters| (t * Quarters::from_integer(tpq)).to_integer() as u64;
    let end = score.notes().map(|n| n.end()).fold(score.end, Quarters::max);

    let mut conductor = TrackWriter::new();
    let mut ts: Option<TimeSignature> = None;
    for m in &score.measure_map {
        if ts != Some(m.time_signature) {
            let TimeSignature { numerator, denominator } = m.time_signature;
            if !denominator.is_power_of_two() || numerator > 255 {
                return Err(EncodeError::Meter(numerator, denominator));
            }
            let data = [numerator as u8, denominator.trailing_zeros() as u8, 24, 8];
            conductor.meta(tick(m.start), 0x58, &data);
            ts = Some(m.time_signature);
        }
    }
    for k in &score.key_signatures {
        conductor.meta(tick(k.onset), 0x59, &[k.fifths as u8, u8::from(k.mode == Some(Mode::Minor))]);
    }
    for e in &score.tempo_events {
        let uspq = (60_000_000.0 / e.bpm).round().clamp(1.0, 16_777_215.0) as u32;
        conductor.meta(tick(e.onset), 0x51, &uspq.to_be_bytes()[1..]);
    }

    let mut tracks = vec![conductor.finish(tick(end))];
    let mut next_channel = 0u8;
    for part in &score.parts {
        let channel = if part.percussive {
            9
        } else {
            let c = next_channel;
            next_channel = (next_channel + 1) % 16;
            if next_channel == 9 {
                next_channel = 10;
            }
            c
        };
        let mut w = TrackWriter::new();
        if !part.name.is_empty() {
            w.meta(0, 0x03, part.name.as_bytes());
        }
        if let Some(p) = part.midi_program {
            w.push(0, 2, vec![0xC0 | channel, p & 0x7F]);
        }
        for l in &part.lyrics {
            w.meta(tick(l.onset), 0x05, l.text.as_bytes());
        }
        let marks: Vec<_> = score.dynamic_events.iter().filter(|d| d.part_index == part.index).collect();
        for n in part.notes.iter().filter(|n| !n.grace) {
            let velocity = n.velocity.filter(|v| *v > 0).unwrap_or_else(|| {
                velocity_for(marks.iter().take_while(|d| d.onset <= n.onset).last().map(|d| d.mark))
            });
            w.push(tick(n.onset), 3, vec![0x90 | channel, n.midi_pitch, velocity.min(127)]);
            w.push(tick(n.end()), 1, vec![0x80 | channel, n.midi_pitch, 0]);
        }
        tracks.push(w.finish(tick(end)));
    }

    let mut out = b"MThd".to_vec();
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&(tpq as u16).to_be_bytes());
    for t in tracks {
        out.extend(t);
    }
    Ok(out)
}

// ------------------------------------------------------- chord slicing

#[derive(Debug, Clone)]
struct Member {
    pitch: SpelledPitch,
    duration: Quarters,
    tie_start: bool,
    tie_stop: bool,
}

#[derive(Debug, Clone)]
enum SliceKind {
    Rest,
    Chord(Vec<Member>),
    Grace(Vec<SpelledPitch>),
}

#[derive(Debug, Clone)]
struct Slice {
    onset: Quarters,
    /// Length the slice occupies on the timeline; zero for grace notes.
    span: Quarters,
    kind: SliceKind,
}

const SHARP_SPELLING: [(Step, i8); 12] = [
    (Step::C, 0),
    (Step::C, 1),
    (Step::D, 0),
    (Step::D, 1),
    (Step::E, 0),
    (Step::F, 0),
    (Step::F, 1),
    (Step::G, 0),
    (Step::G, 1),
    (Step::A, 0),
    (Step::A, 1),
    (Step::B, 0),
];

const FLAT_SPELLING: [(Step, i8); 12] = [
    (Step::C, 0),
    (Step::D, -1),
    (Step::D, 0),
    (Step::E, -1),
    (Step::E, 0),
    (Step::F, 0),
    (Step::G, -1),
    (Step::G, 0),
    (Step::A, -1),
    (Step::A, 0),
    (Step::B, -1),
    (Step::B, 0),
];

fn spell(n: &NoteEvent, flats: bool) -> SpelledPitch {
    n.spelled.unwrap_or_else(|| {
        let (step, alter) = if flats { FLAT_SPELLING } else { SHARP_SPELLING }[usize::from(n.midi_pitch % 12)];
        SpelledPitch { step, alter, octave: (n.midi_pitch / 12) as i8 - 1 }
    })
}

/// Splits a part into rests, chords and grace groups covering `[0, end)`,
/// cutting at every time in `cuts`.
fn slice_part(part: &Part, cuts: &BTreeSet<Quarters>, end: Quarters, flats: bool) -> Result<Vec<Slice>, EncodeError> {
    let mut groups: Vec<(Quarters, Vec<&NoteEvent>, Vec<&NoteEvent>)> = Vec::new();
    for n in &part.notes {
        if n.onset < Quarters::zero() {
            return Err(EncodeError::NegativeTime);
        }
        match groups.last_mut() {
            Some(g) if g.0 == n.onset => {
                if n.grace { g.2.push(n) } else { g.1.push(n) }
            }
            _ => groups.push(if n.grace { (n.onset, vec![], vec![n]) } else { (n.onset, vec![n], vec![]) }),
        }
    }

    let mut out = Vec::new();
    let mut cursor = Quarters::zero();
    let fill_rest = |out: &mut Vec<Slice>, from: Quarters, to: Quarters| {
        let mut a = from;
        for &c in cuts.range(from..to).filter(|c| **c > from) {
            out.push(Slice { onset: a, span: c - a, kind: SliceKind::Rest });
            a = c;
        }
        if to > a {
            out.push(Slice { onset: a, span: to - a, kind: SliceKind::Rest });
        }
    };
    for (onset, mut chord, grace) in groups {
        if onset < cursor {
            return Err(EncodeError::Polyphony { part: part.index, onset: onset.to_string() });
        }
        fill_rest(&mut out, cursor, onset);
        if !grace.is_empty() {
            out.push(Slice { onset, span: Quarters::zero(), kind: SliceKind::Grace(grace.iter().map(|n| spell(n, flats)).collect()) });
        }
        if chord.is_empty() {
            cursor = onset;
            continue;
        }
        // Longest member first so MusicXML advances by the chord's span.
        chord.sort_by(|a, b| b.duration.cmp(&a.duration).then(a.midi_pitch.cmp(&b.midi_pitch)));
        let chord_end = chord[0].end();
        let mut bounds: Vec<Quarters> = vec![onset];
        bounds.extend(cuts.range(onset..chord_end).filter(|c| **c > onset));
        bounds.push(chord_end);
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let members: Vec<Member> = chord
                .iter()
                .filter(|n| n.end() > a)
                .map(|n| Member {
                    pitch: spell(n, flats),
                    duration: n.end().min(b) - a,
                    tie_start: n.end() > b,
                    tie_stop: a > onset,
                })
                .collect();
            out.push(Slice { onset: a, span: b - a, kind: SliceKind::Chord(members) });
        }
        cursor = chord_end;
    }
    if end > cursor {
        fill_rest(&mut out, cursor, end);
    }
    Ok(out)
}

fn prefers_flats(score: &Score) -> bool {
    score.key_signatures.first().is_some_and(|k| k.fifths < 0)
}

fn notation_end(score: &Score) -> Quarters {
    score.notes().map(|n| n.end()).fold(score.end, Quarters::max)
}

fn barlines(score: &Score) -> BTreeSet<Quarters> {
    score.measure_map.iter().map(|m| m.start).collect()
}

// ------------------------------------------------------------ MusicXML

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fifths_mode(mode: Option<Mode>) -> &'static str {
    match mode {
        Some(Mode::Minor) => "<mode>minor</mode>",
        Some(Mode::Major) => "<mode>major</mode>",
        None => "",
    }
}

fn write_musicxml(score: &Score) -> Result<String, EncodeError> {
    let flats = prefers_flats(score);
    let end = notation_end(score);
    let bars = barlines(score);
    let mut slices = Vec::new();
    for part in &score.parts {
        let mut cuts = bars.clone();
        cuts.extend(part.lyrics.iter().map(|l| l.onset));
        cuts.extend(score.dynamic_events.iter().filter(|d| d.part_index == part.index).map(|d| d.onset));
        if part.index == 0 {
            cuts.extend(score.tempo_events.iter().map(|e| e.onset));
            cuts.extend(score.key_signatures.iter().map(|e| e.onset));
        }
        slices.push(slice_part(part, &cuts, end, flats)?);
    }
    let divisions = lcm_of_denominators(slices.iter().flatten().map(|s| &s.span)).max(1);
    if divisions > 1 << 30 {
        return Err(EncodeError::Resolution(divisions));
    }
    let dur = |q: Quarters| (q * Quarters::from_integer(divisions)).to_integer();

    let mut x = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<score-partwise version=\"3.1\">\n  <part-list>\n");
    let mut next_channel = 1u8;
    for part in &score.parts {
        let channel = if part.percussive {
            10
        } else {
            let c = next_channel;
            next_channel = if next_channel == 16 { 1 } else { next_channel + 1 };
            if next_channel == 10 {
                next_channel = 11;
            }
            c
        };
        let _ = write!(x, "    <score-part id=\"P{}\">\n      <part-name>{}</part-name>\n", part.index + 1, xml_escape(&part.name));
        if part.midi_program.is_some() || part.percussive {
            let _ = write!(x, "      <midi-instrument id=\"P{}-I1\">\n        <midi-channel>{channel}</midi-channel>\n", part.index + 1);
            if let Some(p) = part.midi_program {
                let _ = writeln!(x, "        <midi-program>{}</midi-program>", u16::from(p) + 1);
            }
            x.push_str("      </midi-instrument>\n");
        }
        x.push_str("    </score-part>\n");
    }
    x.push_str("  </part-list>\n");

    for (part, part_slices) in score.parts.iter().zip(&slices) {
        let _ = writeln!(x, "  <part id=\"P{}\">", part.index + 1);
        let mut it = part_slices.iter().peekable();
        let mut prev_ts: Option<TimeSignature> = None;
        for (mi, m) in score.measure_map.iter().enumerate() {
            let m_end = score.measure_map.get(mi + 1).map_or(end, |n| n.start);
            let _ = writeln!(x, "    <measure number=\"{}\">", m.index);
            let mut attrs = String::new();
            if mi == 0 {
                let _ = write!(attrs, "<divisions>{divisions}</divisions>");
            }
            if prev_ts != Some(m.time_signature) {
                let _ = write!(attrs, "<time><beats>{}</beats><beat-type>{}</beat-type></time>", m.time_signature.numerator, m.time_signature.denominator);
                prev_ts = Some(m.time_signature);
            }
            if !attrs.is_empty() {
                let _ = writeln!(x, "      <attributes>{attrs}</attributes>");
            }
            let last = mi + 1 == score.measure_map.len();
            while let Some(s) = it.next_if(|s| last || s.onset < m_end) {
                write_xml_events(&mut x, score, part, s.onset);
                write_xml_slice(&mut x, s, part, dur);
            }
            x.push_str("    </measure>\n");
        }
        x.push_str("  </part>\n");
    }
    x.push_str("</score-partwise>\n");
    Ok(x)
}

fn write_xml_events(x: &mut String, score: &Score, part: &Part, t: Quarters) {
    if part.index == 0 {
        for k in score.key_signatures.iter().filter(|k| k.onset == t) {
            let _ = writeln!(x, "      <attributes><key><fifths>{}</fifths>{}</key></attributes>", k.fifths, fifths_mode(k.mode));
        }
        for e in score.tempo_events.iter().filter(|e| e.onset == t) {
            let bpm = e.bpm;
            let _ = writeln!(
                x,
                "      <direction><direction-type><metronome><beat-unit>quarter</beat-unit><per-minute>{bpm}</per-minute></metronome></direction-type><sound tempo=\"{bpm}\"/></direction>"
            );
        }
    }
    for d in score.dynamic_events.iter().filter(|d| d.part_index == part.index && d.onset == t) {
        let _ = writeln!(x, "      <direction><direction-type><dynamics><{}/></dynamics></direction-type></direction>", d.mark.as_str());
    }
}

fn xml_pitch(p: SpelledPitch) -> String {
    let alter = if p.alter != 0 { format!("<alter>{}</alter>", p.alter) } else { String::new() };
    format!("<pitch><step>{}</step>{alter}<octave>{}</octave></pitch>", p.step.as_char(), p.octave)
}

fn write_xml_slice(x: &mut String, s: &Slice, part: &Part, dur: impl Fn(Quarters) -> i64) {
    match &s.kind {
        SliceKind::Rest => {
            let _ = writeln!(x, "      <note><rest/><duration>{}</duration></note>", dur(s.span));
        }
        SliceKind::Grace(pitches) => {
            for (i, p) in pitches.iter().enumerate() {
                let chord = if i > 0 { "<chord/>" } else { "" };
                let _ = writeln!(x, "      <note><grace/>{chord}{}</note>", xml_pitch(*p));
            }
        }
        SliceKind::Chord(members) => {
            let lyric = part.lyrics.iter().find(|l| l.onset == s.onset);
            for (i, m) in members.iter().enumerate() {
                let chord = if i > 0 { "<chord/>" } else { "" };
                let mut ties = String::new();
                let mut tied = String::new();
                if m.tie_stop {
                    ties.push_str("<tie type=\"stop\"/>");
                    tied.push_str("<tied type=\"stop\"/>");
                }
                if m.tie_start {
                    ties.push_str("<tie type=\"start\"/>");
                    tied.push_str("<tied type=\"start\"/>");
                }
                let notations = if tied.is_empty() { String::new() } else { format!("<notations>{tied}</notations>") };
                let lyric_xml = match lyric {
                    Some(l) if i == 0 => {
                        let (text, syllabic) = match l.text.strip_suffix('-') {
                            Some(t) => (t, "begin"),
                            None => (l.text.as_str(), "single"),
                        };
                        format!("<lyric number=\"1\"><syllabic>{syllabic}</syllabic><text>{}</text></lyric>", xml_escape(text))
                    }
                    _ => String::new(),
                };
                let _ = writeln!(
                    x,
                    "      <note>{chord}{}<duration>{}</duration>{ties}{notations}{lyric_xml}</note>",
                    xml_pitch(m.pitch),
                    dur(m.duration)
                );
            }
        }
    }
}

// ---------------------------------------------------------------- kern

/// `**kern` duration token for `d` quarter notes.
pub fn kern_recip(d: Quarters) -> String {
    let four = Quarters::from_integer(4);
    for (dots, factor) in [(0usize, Quarters::from_integer(1)), (1, Quarters::new(3, 2)), (2, Quarters::new(7, 4))] {
        let r = four * factor / d;
        if r.is_integer() && r.to_integer() > 0 {
            return format!("{}{}", r.to_integer(), ".".repeat(dots));
        }
    }
    let r = four / d;
    format!("{}%{}", r.numer(), r.denom())
}

fn kern_pitch(p: SpelledPitch) -> String {
    let c = p.step.as_char();
    let letters = if p.octave >= 4 {
        c.to_ascii_lowercase().to_string().repeat((p.octave - 3) as usize)
    } else {
        c.to_string().repeat((4 - p.octave) as usize)
    };
    let acc = if p.alter >= 0 { "#".repeat(p.alter as usize) } else { "-".repeat((-p.alter) as usize) };
    format!("{letters}{acc}")
}

fn kern_key(fifths: i8) -> String {
    const SHARPS: [&str; 7] = ["f#", "c#", "g#", "d#", "a#", "e#", "b#"];
    const FLATS: [&str; 7] = ["b-", "e-", "a-", "d-", "g-", "c-", "f-"];
    let list = if fifths >= 0 { &SHARPS[..fifths as usize] } else { &FLATS[..(-fifths) as usize] };
    format!("*k[{}]", list.concat())
}

fn kern_tonic(fifths: i8, mode: Mode) -> String {
    // Major tonic on the circle of fifths from C, minor three fifths up.
    const NAMES: [&str; 18] =
        ["C-", "G-", "D-", "A-", "E-", "B-", "F", "C", "G", "D", "A", "E", "B", "F#", "C#", "G#", "D#", "A#"];
    let offset = if mode == Mode::Minor { 3 } else { 0 };
    let name = NAMES.get((i32::from(fifths) + 7 + offset) as usize).copied().unwrap_or("C");
    match mode {
        Mode::Major => format!("*{name}:"),
        Mode::Minor => format!("*{}:", name.to_lowercase()),
    }
}

fn kern_slice_token(s: &Slice) -> String {
    match &s.kind {
        SliceKind::Rest => format!("{}r", kern_recip(s.span)),
        SliceKind::Grace(pitches) => pitches.iter().map(|p| format!("{}q", kern_pitch(*p))).collect::<Vec<_>>().join(" "),
        SliceKind::Chord(members) => members
            .iter()
            .map(|m| {
                let (open, close) = match (m.tie_start, m.tie_stop) {
                    (true, false) => ("[", ""),
                    (false, true) => ("", "]"),
                    (true, true) => ("", "_"),
                    (false, false) => ("", ""),
                };
                format!("{open}{}{}{close}", kern_recip(m.duration), kern_pitch(m.pitch))
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn write_kern(score: &Score) -> Result<String, EncodeError> {
    let flats = prefers_flats(score);
    let end = notation_end(score);
    let mut cuts = barlines(score);
    cuts.extend(score.parts.iter().flat_map(|p| p.lyrics.iter().map(|l| l.onset)));
    cuts.extend(score.dynamic_events.iter().map(|d| d.onset));
    cuts.extend(score.tempo_events.iter().map(|e| e.onset));
    cuts.extend(score.key_signatures.iter().map(|e| e.onset));
    let parts: Vec<Vec<Slice>> = score.parts.iter().map(|p| slice_part(p, &cuts, end, flats)).collect::<Result<_, _>>()?;
    let lyric_parts: Vec<bool> = score.parts.iter().map(|p| !p.lyrics.is_empty()).collect();
    let dynam_parts: Vec<bool> =
        score.parts.iter().map(|p| score.dynamic_events.iter().any(|d| d.part_index == p.index)).collect();

    // Columns: each kern spine followed by its optional dynamics and text spines.
    #[derive(Clone, Copy)]
    enum Col {
        Kern(usize),
        Dynam(usize),
        Text(usize),
    }
    let mut cols = Vec::new();
    for p in 0..score.parts.len() {
        cols.push(Col::Kern(p));
        if dynam_parts[p] {
            cols.push(Col::Dynam(p));
        }
        if lyric_parts[p] {
            cols.push(Col::Text(p));
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, f: &dyn Fn(Col) -> String| {
        let fields: Vec<String> = cols.iter().map(|c| f(*c)).collect();
        out.push_str(&fields.join("\t"));
        out.push('\n');
    };
    if cols.is_empty() {
        return Ok("**kern\n*-\n".to_string());
    }
    line(&mut out, &|c| match c {
        Col::Kern(_) => "**kern".into(),
        Col::Dynam(_) => "**dynam".into(),
        Col::Text(_) => "**text".into(),
    });
    line(&mut out, &|c| match c {
        Col::Kern(p) if !score.parts[p].name.is_empty() => format!("*I\"{}", score.parts[p].name.replace('\t', " ")),
        _ => "*".into(),
    });

    // Every time at which some spine starts a slice, in order.
    let mut times: BTreeSet<Quarters> = parts.iter().flatten().map(|s| s.onset).collect();
    times.extend(score.measure_map.iter().map(|m| m.start));
    let mut pos = vec![0usize; parts.len()];
    let mut prev_ts: Option<TimeSignature> = None;
    let mut measure = 0usize;
    for &t in &times {
        if t >= end && t > Quarters::zero() {
            break;
        }
        while measure < score.measure_map.len() && score.measure_map[measure].start <= t {
            let m = &score.measure_map[measure];
            if m.start == t {
                if measure > 0 {
                    line(&mut out, &|_| format!("={}", m.index));
                }
                if prev_ts != Some(m.time_signature) {
                    let ts = m.time_signature;
                    line(&mut out, &|c| match c {
                        Col::Kern(_) => format!("*M{}/{}", ts.numerator, ts.denominator),
                        _ => "*".into(),
                    });
                    prev_ts = Some(ts);
                }
            }
            measure += 1;
        }
        for k in score.key_signatures.iter().filter(|k| k.onset == t) {
            if let Some(mode) = k.mode {
                line(&mut out, &|c| if matches!(c, Col::Kern(_)) { kern_tonic(k.fifths, mode) } else { "*".into() });
            }
            line(&mut out, &|c| if matches!(c, Col::Kern(_)) { kern_key(k.fifths) } else { "*".into() });
        }
        for e in score.tempo_events.iter().filter(|e| e.onset == t) {
            line(&mut out, &|c| if matches!(c, Col::Kern(0)) { format!("*MM{}", e.bpm) } else { "*".into() });
        }
        // Grace slices get a line of their own before the main line.
        let graces: Vec<Option<String>> = parts
            .iter()
            .zip(&pos)
            .map(|(slices, &i)| {
                slices.get(i).filter(|s| s.onset == t && matches!(s.kind, SliceKind::Grace(_))).map(kern_slice_token)
            })
            .collect();
        if graces.iter().any(Option::is_some) {
            line(&mut out, &|c| match c {
                Col::Kern(p) => graces[p].clone().unwrap_or_else(|| ".".into()),
                _ => ".".into(),
            });
            for (p, g) in graces.iter().enumerate() {
                if g.is_some() {
                    pos[p] += 1;
                }
            }
        }
        let main: Vec<Option<String>> = parts
            .iter()
            .zip(&pos)
            .map(|(slices, &i)| slices.get(i).filter(|s| s.onset == t).map(kern_slice_token))
            .collect();
        if main.iter().all(Option::is_none) {
            continue;
        }
        line(&mut out, &|c| match c {
            Col::Kern(p) => main[p].clone().unwrap_or_else(|| ".".into()),
            Col::Dynam(p) => score
                .dynamic_events
                .iter()
                .find(|d| d.part_index == p && d.onset == t)
                .map_or_else(|| ".".into(), |d| d.mark.as_str().to_string()),
            Col::Text(p) => score.parts[p]
                .lyrics
                .iter()
                .find(|l| l.onset == t)
                .map_or_else(|| ".".into(), |l| l.text.replace(['\t', ' '], "_")),
        });
        for (p, m) in main.iter().enumerate() {
            if m.is_some() {
                pos[p] += 1;
            }
        }
    }
    line(&mut out, &|_| "==".into());
    line(&mut out, &|_| "*-".into());
    Ok(out)
}
