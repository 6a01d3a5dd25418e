//! Humdrum `**kern` reader.
//!
//! Only `**kern` spines become parts. `**text`/`**silbe` spines supply
//! lyrics and `**dynam` spines supply dynamic marks for the nearest `**kern`
//! spine on their left. Spine splits, merges, additions and exchanges are
//! rejected.

use num_traits::{CheckedAdd, Zero};

use super::common::{finalize, measure_map, tempo_word_bpm, TieTracker, MAX_MEASURES, MAX_TIME_NUMER};
use super::{ParseError, ParseErrorKind};
use crate::model::{
    DynamicEvent, DynamicMark, KeySignature, Lyric, Mode, NoteEvent, Part, Quarters, Score, ScoreData, SourceFormat,
    SpelledPitch, Step, TempoEvent, TempoSource, TimeSignature,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpineKind {
    Kern(usize),
    Text(Option<usize>),
    Dynam(Option<usize>),
    Other,
}

#[derive(Debug, Default, PartialEq)]
struct NoteToken {
    duration: Option<Quarters>,
    grace: bool,
    rest: bool,
    pitch: Option<SpelledPitch>,
    tie_start: bool,
    tie_stop: bool,
}

struct State<'p> {
    path: &'p str,
    data: ScoreData,
    spines: Vec<SpineKind>,
    next_free: Vec<Quarters>,
    ties: TieTracker,
    time_signature: TimeSignature,
    starts: Vec<(Quarters, TimeSignature)>,
    pending_bar: Option<Quarters>,
    key_spine: Option<usize>,
    pending_mode: Option<(Quarters, Mode)>,
    instrument_names: Vec<bool>,
}

/// Parses a Humdrum `**kern` document.
pub fn parse_kern(text: &str, path: &str) -> Result<Score, ParseError> {
    let mut st = State {
        path,
        data: ScoreData::empty(SourceFormat::Kern, path),
        spines: Vec::new(),
        next_free: Vec::new(),
        ties: TieTracker::default(),
        time_signature: TimeSignature::COMMON,
        starts: Vec::new(),
        pending_bar: None,
        key_spine: None,
        pending_mode: None,
        instrument_names: Vec::new(),
    };
    let mut started = false;
    let mut finished = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(reference) = line.strip_prefix("!!") {
            if let Some(omd) = reference.strip_prefix("!OMD:") {
                if let Some(bpm) = tempo_word_bpm(omd) {
                    st.data.tempo_events.push(TempoEvent { onset: Quarters::zero(), bpm, source: TempoSource::TempoWord });
                }
            }
            continue;
        }
        if finished {
            continue;
        }
        let tokens: Vec<&str> = line.split('\t').collect();
        if !started {
            if !tokens.iter().all(|t| t.starts_with("**")) {
                return Err(ParseError::new(path, ParseErrorKind::MalformedHeader, "missing exclusive interpretation line")
                    .at(line_no));
            }
            st.open_spines(&tokens);
            started = true;
            continue;
        }
        if tokens.len() != st.spines.len() {
            return Err(st.err(line_no, format!("expected {} spines, found {}", st.spines.len(), tokens.len())));
        }
        if line.starts_with('!') {
            continue;
        }
        if line.starts_with('*') {
            st.interpretations(&tokens, line_no)?;
            if st.spines.is_empty() {
                finished = true;
            }
        } else if line.starts_with('=') {
            let now = st.now();
            let current = st.starts.last().map_or(Quarters::zero(), |s| s.0);
            if now > current {
                st.pending_bar = Some(now);
            }
        } else {
            st.data_line(&tokens, line_no)?;
        }
    }
    if !started {
        return Err(ParseError::new(path, ParseErrorKind::MalformedHeader, "no **kern data"));
    }
    st.finish()
}

impl<'p> State<'p> {
    fn err(&self, line: u64, detail: impl Into<String>) -> ParseError {
        ParseError::new(self.path, ParseErrorKind::MalformedEvent, detail).at(line)
    }

    fn open_spines(&mut self, tokens: &[&str]) {
        let mut last_kern = None;
        let mut kinds = Vec::new();
        for t in tokens {
            let kind = match *t {
                "**kern" => {
                    let idx = self.data.parts.len();
                    self.data.parts.push(Part::new(idx, ""));
                    self.instrument_names.push(false);
                    last_kern = Some(idx);
                    SpineKind::Kern(idx)
                }
                "**text" | "**silbe" => SpineKind::Text(last_kern),
                "**dynam" => SpineKind::Dynam(last_kern),
                _ => SpineKind::Other,
            };
            kinds.push(kind);
        }
        // Attach leading text/dynamics spines to the first kern spine.
        let first_kern = kinds.iter().find_map(|k| if let SpineKind::Kern(i) = k { Some(*i) } else { None });
        for k in &mut kinds {
            match k {
                SpineKind::Text(p @ None) | SpineKind::Dynam(p @ None) => *p = first_kern,
                _ => {}
            }
        }
        self.next_free = vec![Quarters::zero(); kinds.len()];
        self.spines = kinds;
    }

    /// Onset of the current line: the earliest time any kern spine is free.
    fn now(&self) -> Quarters {
        self.spines
            .iter()
            .zip(&self.next_free)
            .filter(|(k, _)| matches!(k, SpineKind::Kern(_)))
            .map(|(_, t)| *t)
            .min()
            .unwrap_or_else(Quarters::zero)
    }

    fn open_measure_if_needed(&mut self) {
        if self.starts.is_empty() {
            // Material before the first barline forms measure 1 (a pickup).
            self.starts.push((Quarters::zero(), self.time_signature));
        }
        if let Some(t) = self.pending_bar.take() {
            self.starts.push((t, self.time_signature));
        }
    }

    fn interpretations(&mut self, tokens: &[&str], line: u64) -> Result<(), ParseError> {
        let now = self.now();
        let mut keep = Vec::with_capacity(tokens.len());
        for (s, tok) in tokens.iter().enumerate() {
            match *tok {
                "*^" | "*v" | "*+" | "*x" => {
                    return Err(ParseError::new(self.path, ParseErrorKind::UnsupportedConstruct, format!("spine manipulator {tok}"))
                        .at(line));
                }
                "*-" => {
                    keep.push(false);
                    continue;
                }
                _ => keep.push(true),
            }
            let SpineKind::Kern(part) = self.spines[s] else { continue };
            if let Some(mm) = tok.strip_prefix("*MM") {
                if let Ok(bpm) = mm.trim().parse::<f64>() {
                    if bpm.is_finite() && bpm > 0.0 {
                        self.data.tempo_events.push(TempoEvent { onset: now, bpm, source: TempoSource::MetronomeMark });
                    }
                }
            } else if let Some(m) = tok.strip_prefix("*M") {
                if let Some((n, d)) = m.split_once('/') {
                    let (Ok(n), Ok(d)) = (n.parse::<u32>(), d.parse::<u32>()) else {
                        return Err(self.err(line, format!("invalid meter {tok}")));
                    };
                    if n == 0 || d == 0 || n > 1024 || d > 1024 {
                        return Err(self.err(line, format!("invalid meter {tok}")));
                    }
                    self.set_time_signature(TimeSignature::new(n, d), now);
                }
            } else if let Some(k) = tok.strip_prefix("*k[") {
                let list = k.strip_suffix(']').ok_or_else(|| self.err(line, format!("invalid key signature {tok}")))?;
                let sharps = list.matches('#').count() as i32;
                let flats = list.matches('-').count() as i32;
                let fifths = sharps - flats;
                if !(-7..=7).contains(&fifths) {
                    return Err(self.err(line, format!("invalid key signature {tok}")));
                }
                if *self.key_spine.get_or_insert(part) == part {
                    let mode = self.pending_mode.filter(|(t, _)| *t == now).map(|(_, m)| m);
                    self.data.key_signatures.push(KeySignature { onset: now, fifths: fifths as i8, mode });
                }
            } else if let Some(mode) = key_designation(tok) {
                if self.key_spine.is_none_or(|k| k == part) {
                    match self.data.key_signatures.last_mut() {
                        Some(k) if k.onset == now => k.mode = Some(mode),
                        _ => self.pending_mode = Some((now, mode)),
                    }
                }
            } else if let Some(name) = tok.strip_prefix("*I\"") {
                self.data.parts[part].name = name.to_string();
                self.instrument_names[part] = true;
            } else if let Some(code) = tok.strip_prefix("*I") {
                if !self.instrument_names[part] {
                    if let Some(name) = instrument_code_name(code) {
                        self.data.parts[part].name = name.to_string();
                    }
                }
            }
        }
        if keep.iter().any(|k| !k) {
            let mut it = keep.iter();
            self.spines.retain(|_| *it.next().unwrap());
            let mut it = keep.iter();
            self.next_free.retain(|_| *it.next().unwrap());
        }
        Ok(())
    }

    fn set_time_signature(&mut self, ts: TimeSignature, now: Quarters) {
        self.time_signature = ts;
        // A meter given at the start of a measure (before its first data
        // line) belongs to that measure.
        if self.pending_bar.is_none() {
            if let Some(last) = self.starts.last_mut() {
                if last.0 == now {
                    last.1 = ts;
                }
            }
        }
    }

    fn data_line(&mut self, tokens: &[&str], line: u64) -> Result<(), ParseError> {
        let now = self.now();
        self.open_measure_if_needed();
        for (s, tok) in tokens.iter().enumerate() {
            if *tok == "." {
                continue;
            }
            match self.spines[s] {
                SpineKind::Kern(part) => {
                    let mut advance: Option<Quarters> = None;
                    for sub in tok.split(' ').filter(|t| !t.is_empty()) {
                        let nt = parse_note_token(sub).map_err(|d| self.err(line, format!("{d} in token {sub:?}")))?;
                        let dur = nt.duration.unwrap_or_else(Quarters::zero);
                        if !nt.grace {
                            advance = Some(advance.map_or(dur, |a| a.max(dur)));
                        }
                        if nt.rest {
                            continue;
                        }
                        let Some(sp) = nt.pitch else { continue };
                        let midi = sp.midi().ok_or_else(|| self.err(line, format!("pitch out of range in {sub:?}")))?;
                        let note = NoteEvent {
                            onset: now,
                            duration: if nt.grace { Quarters::zero() } else { dur },
                            midi_pitch: midi,
                            spelled: Some(sp),
                            velocity: None,
                            grace: nt.grace,
                            tie_to_next: false,
                            measure_index: 1,
                        };
                        let notes = &mut self.data.parts[part].notes;
                        self.ties.push(notes, part, note, nt.tie_start, nt.tie_stop);
                    }
                    if let Some(a) = advance {
                        self.next_free[s] = now
                            .checked_add(&a)
                            .filter(|t| t.numer().abs() <= MAX_TIME_NUMER)
                            .ok_or_else(|| self.err(line, "duration overflow"))?;
                    }
                }
                SpineKind::Text(Some(part)) => {
                    let text = tok.trim().trim_start_matches('-');
                    if !text.is_empty() && text != "_" {
                        self.data.parts[part].lyrics.push(Lyric { onset: now, text: text.to_string() });
                    }
                }
                SpineKind::Dynam(Some(part)) => {
                    let word: String = tok.chars().skip_while(|c| !c.is_ascii_alphabetic()).take_while(char::is_ascii_alphabetic).collect();
                    if !word.is_empty() {
                        match DynamicMark::parse(&word) {
                            Some(mark) => self.data.dynamic_events.push(DynamicEvent { onset: now, part_index: part, mark }),
                            None => self.data.unrecognized_dynamics += 1,
                        }
                    }
                }
                _ => {}
            }
        }
        if self.starts.len() > MAX_MEASURES {
            return Err(self.err(line, "score exceeds the measure limit"));
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Score, ParseError> {
        let content_end = self.next_free.iter().copied().max().unwrap_or_else(Quarters::zero);
        if self.starts.is_empty() {
            self.starts.push((Quarters::zero(), self.time_signature));
        }
        let (map, nominal_end) = measure_map(&self.starts);
        self.data.measure_map = map;
        self.data.end = nominal_end.max(content_end);
        finalize(self.data, self.path)
    }
}

fn key_designation(tok: &str) -> Option<Mode> {
    let body = tok.strip_prefix('*')?.strip_suffix(':')?;
    let mut chars = body.chars();
    let tonic = chars.next()?;
    if !chars.all(|c| c == '#' || c == '-') || Step::from_char(tonic).is_none() {
        return None;
    }
    Some(if tonic.is_ascii_uppercase() { Mode::Major } else { Mode::Minor })
}

fn instrument_code_name(code: &str) -> Option<&'static str> {
    Some(match code {
        "violn" => "Violin",
        "viola" => "Viola",
        "cello" => "Cello",
        "contr" => "Contrabass",
        "flt" => "Flute",
        "oboe" => "Oboe",
        "clars" => "Clarinet",
        "fagot" => "Bassoon",
        "corno" => "Horn",
        "tromp" => "Trumpet",
        "piano" => "Piano",
        "cemba" => "Harpsichord",
        "organ" => "Organ",
        "sopran" => "Soprano",
        "alto" => "Alto",
        "tenor" => "Tenor",
        "basso" => "Bass",
        "vox" => "Voice",
        _ => return None,
    })
}

/// Parses one `**kern` note, chord member or rest token.
fn parse_note_token(tok: &str) -> Result<NoteToken, String> {
    let mut out = NoteToken::default();
    let chars: Vec<char> = tok.chars().collect();
    let mut i = 0;
    let mut letter: Option<char> = None;
    let mut letter_count = 0i32;
    let mut alter = 0i32;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '0'..='9' => {
                if out.duration.is_some() {
                    return Err("second duration".into());
                }
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let mut numer: i64 = 4;
                let denom: i64 = if digits.chars().all(|d| d == '0') {
                    // 0 = breve, 00 = long, 000 = maxima.
                    numer = 4 << digits.len().min(3);
                    1
                } else {
                    digits.parse::<i64>().ok().filter(|d| *d <= 1_000_000).ok_or("duration too fine")?
                };
                let mut numer_scale: i64 = 1;
                if i < chars.len() && chars[i] == '%' {
                    i += 1;
                    let s = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let m: String = chars[s..i].iter().collect();
                    numer_scale = m.parse::<i64>().ok().filter(|m| *m > 0 && *m <= 1_000_000).ok_or("invalid rational duration")?;
                }
                let mut dots = 0u32;
                while i < chars.len() && chars[i] == '.' {
                    dots += 1;
                    i += 1;
                }
                if dots > 8 {
                    return Err("too many augmentation dots".into());
                }
                let base = Quarters::new(numer * numer_scale, denom);
                let factor = Quarters::new((1 << (dots + 1)) - 1, 1 << dots);
                out.duration = Some(base * factor);
                continue;
            }
            'a'..='g' | 'A'..='G' => {
                match letter {
                    None => letter = Some(c),
                    Some(l) if l == c => {}
                    Some(_) => return Err("mixed pitch letters".into()),
                }
                letter_count += 1;
                if letter_count > 6 {
                    return Err("octave out of range".into());
                }
            }
            '#' => alter += 1,
            '-' => alter -= 1,
            'n' => {}
            'r' => out.rest = true,
            'q' | 'Q' => out.grace = true,
            '[' => out.tie_start = true,
            ']' => out.tie_stop = true,
            '_' => {
                out.tie_start = true;
                out.tie_stop = true;
            }
            // Articulations, beams, ornaments, stems, editorial marks, etc.
            _ => {}
        }
        i += 1;
    }
    if !(-2..=2).contains(&alter) {
        return Err("too many accidentals".into());
    }
    if let Some(l) = letter {
        let octave = if l.is_ascii_lowercase() { 3 + letter_count } else { 4 - letter_count };
        let step = Step::from_char(l).ok_or("invalid pitch letter")?;
        out.pitch = Some(SpelledPitch { step, alter: alter as i8, octave: octave as i8 });
    }
    if out.pitch.is_none() && !out.rest {
        return Err("neither pitch nor rest".into());
    }
    if out.duration.is_none() && !out.grace {
        return Err("missing duration".into());
    }
    if out.duration.is_some_and(|d| d.is_zero()) && !out.grace {
        return Err("zero duration".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_score() {
        let s = parse_kern("**kern\n*M4/4\n=1\n4c\n*-", "a.krn").unwrap();
        assert_eq!(s.note_count(), 1);
        let n = &s.parts[0].notes[0];
        assert_eq!(n.midi_pitch, 60);
        assert_eq!(n.duration, Quarters::from_integer(1));
        assert_eq!(n.measure_index, 1);
        assert_eq!(s.measure_count(), 1);
    }

    #[test]
    fn rest_advances_cursor() {
        let s = parse_kern("**kern\n8r\n8c\n*-", "a.krn").unwrap();
        assert_eq!(s.note_count(), 1);
        assert_eq!(s.parts[0].notes[0].onset, Quarters::new(1, 2));
    }

    #[test]
    fn spine_split_is_unsupported() {
        let e = parse_kern("**kern\n*^\n4c\t4e\n*-\t*-", "a.krn").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnsupportedConstruct);
        assert_eq!(e.byte_or_line, Some(2));
    }

    #[test]
    fn octave_letters() {
        let t = |s: &str| parse_note_token(s).unwrap().pitch.unwrap().midi().unwrap();
        assert_eq!(t("4c"), 60);
        assert_eq!(t("4cc"), 72);
        assert_eq!(t("4C"), 48);
        assert_eq!(t("4CC"), 36);
        assert_eq!(t("4c#"), 61);
        assert_eq!(t("4B-"), 58);
        assert_eq!(t("4BB-"), 46);
        assert_eq!(t("4ccc--"), 82);
    }

    #[test]
    fn durations() {
        let d = |s: &str| parse_note_token(s).unwrap().duration.unwrap();
        assert_eq!(d("4c"), Quarters::from_integer(1));
        assert_eq!(d("4.c"), Quarters::new(3, 2));
        assert_eq!(d("2..c"), Quarters::new(7, 2));
        assert_eq!(d("3c"), Quarters::new(4, 3));
        assert_eq!(d("0c"), Quarters::from_integer(8));
        assert_eq!(d("3%2c"), Quarters::new(8, 3));
    }

    #[test]
    fn unparsable_tokens() {
        assert!(parse_note_token("4cd").is_err());
        assert!(parse_note_token("c").is_err());
        assert!(parse_note_token("4").is_err());
        let e = parse_kern("**kern\n4zz\n*-", "a.krn").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MalformedEvent);
    }

    #[test]
    fn editorial_marks_ignored() {
        let t = parse_note_token("4cXyL").unwrap();
        assert_eq!(t.pitch.unwrap().midi(), Some(60));
    }

    #[test]
    fn chords_ties_and_barlines() {
        let src = "!! comment\n**kern\t**kern\n*M2/4\t*M2/4\n*k[b-]\t*k[b-]\n*d:\t*d:\n=1\t=1\n2D\t4f 4a\n.\t4[d\n=2\t=2\n2D\t4d]\n.\t4e\n==\t==\n*-\t*-\n";
        let s = parse_kern(src, "a.krn").unwrap();
        assert_eq!(s.measure_count(), 2);
        assert_eq!(s.measure_map[1].start, Quarters::from_integer(2));
        assert_eq!(s.measure_map[0].time_signature, TimeSignature::new(2, 4));
        assert_eq!(s.key_signatures[0].fifths, -1);
        assert_eq!(s.key_signatures[0].mode, Some(Mode::Minor));
        assert_eq!(s.parts[0].notes.len(), 2);
        let upper = &s.parts[1].notes;
        assert_eq!(upper.len(), 4);
        let tied = upper.iter().find(|n| n.midi_pitch == 62).unwrap();
        assert_eq!(tied.onset, Quarters::from_integer(1));
        assert_eq!(tied.duration, Quarters::from_integer(2));
        assert_eq!(upper.last().unwrap().onset, Quarters::from_integer(3));
    }

    #[test]
    fn pickup_measure() {
        let s = parse_kern("**kern\n*M4/4\n4c\n=1\n1d\n=\n*-", "a.krn").unwrap();
        assert_eq!(s.measure_count(), 2);
        assert_eq!(s.parts[0].notes[0].measure_index, 1);
        assert_eq!(s.parts[0].notes[1].measure_index, 2);
        assert_eq!(s.measure_map[1].start, Quarters::from_integer(1));
    }

    #[test]
    fn lyrics_and_dynamics_spines() {
        let src = "**kern\t**text\t**dynam\n4c\tA-\tp\n4d\t-ve\t.\n4e\tma-\tf\n4f\t-ri-\t.\n*-\t*-\t*-\n";
        let s = parse_kern(src, "a.krn").unwrap();
        let texts: Vec<&str> = s.parts[0].lyrics.iter().map(|l| l.text.as_str()).collect();
        assert_eq!(texts, ["A-", "ve", "ma-", "ri-"]);
        assert_eq!(s.dynamic_events.len(), 2);
    }

    #[test]
    fn missing_header() {
        let e = parse_kern("4c\n*-", "a.krn").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MalformedHeader);
    }
}
