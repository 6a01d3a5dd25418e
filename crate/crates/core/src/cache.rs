//! Content-addressed on-disk cache of parsed scores.
//!
//! Entries live at `<dir>/<first two hex digits>/<digest>-<parser version>.nfsc`.
//! The payload is a closed binary record: the magic `NFSC`, a `u16` format
//! version, a `u64` creation time, then six length-prefixed sections (meta,
//! measures, parts, notes, events, harmony). All integers are little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    DynamicEvent, DynamicMark, HarmonicAnnotation, KeySignature, Lyric, Measure, Mode, NoteEvent, Part, Quarters, Score,
    ScoreData, SourceFormat, SpelledPitch, Step, TempoEvent, TempoSource, TimeSignature,
};

const MAGIC: &[u8; 4] = b"NFSC";
pub const FORMAT_VERSION: u16 = 1;
const EXTENSION: &str = "nfsc";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub content_hash: [u8; 32],
    pub parser_version: String,
    pub format: SourceFormat,
}

impl CacheKey {
    pub fn hex(&self) -> String {
        hex::encode(self.content_hash)
    }

    /// Location of the entry inside `dir`.
    pub fn path_in(&self, dir: &Path) -> PathBuf {
        let hex = self.hex();
        let version: String = self
            .parser_version
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
            .collect();
        dir.join(&hex[..2]).join(format!("{hex}-{version}.{EXTENSION}"))
    }
}

pub fn cache_key(bytes: &[u8], parser_version: &str, format: SourceFormat) -> CacheKey {
    CacheKey { content_hash: Sha256::digest(bytes).into(), parser_version: parser_version.to_string(), format }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub score: Score,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("corrupt cache record: {0}")]
pub struct DecodeError(String);

/// Writes `score` under `key`. An existing entry is left as is.
pub fn put(dir: &Path, key: &CacheKey, score: &Score) -> Result<(), CacheError> {
    let path = key.path_in(dir);
    if path.is_file() {
        return Ok(());
    }
    let parent = path.parent().expect("entry path has a parent");
    fs::create_dir_all(parent)?;
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let bytes = encode(score, created_at);
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(&bytes)?;
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(())
}

/// Reads the entry for `key`. Unreadable or corrupt entries count as a
/// miss; corrupt ones are deleted.
pub fn get(dir: &Path, key: &CacheKey) -> Option<Score> {
    get_entry(dir, key).map(|e| e.score)
}

pub fn get_entry(dir: &Path, key: &CacheKey) -> Option<CacheEntry> {
    let path = key.path_in(dir);
    let bytes = fs::read(&path).ok()?;
    match decode(&bytes) {
        Ok((score, created_at)) if score.source_format == key.format => {
            Some(CacheEntry { key: key.clone(), score, created_at })
        }
        Ok(_) => None,
        Err(e) => {
            log::warn!("dropping cache entry {}: {e}", path.display());
            let _ = fs::remove_file(&path);
            None
        }
    }
}

/// Removes every cache entry under `dir` and returns how many were removed.
pub fn clear(dir: &Path) -> Result<usize, CacheError> {
    let mut removed = 0;
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    for shard in entries {
        let shard = shard?.path();
        let is_shard = shard.is_dir()
            && shard.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.len() == 2 && n.bytes().all(|b| b.is_ascii_hexdigit()));
        if !is_shard {
            continue;
        }
        for f in fs::read_dir(&shard)? {
            let f = f?.path();
            if f.extension().and_then(|e| e.to_str()) == Some(EXTENSION) {
                fs::remove_file(&f)?;
                removed += 1;
            }
        }
        // Leftover temp files from interrupted writes keep the shard alive.
        let _ = fs::remove_dir(&shard);
    }
    Ok(removed)
}

#[derive(Default)]
struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend(v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("section fits in u32"));
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend(s.as_bytes());
    }
    fn q(&mut self, v: Quarters) {
        self.i64(*v.numer());
        self.i64(*v.denom());
    }
    fn section(&mut self, body: Out) {
        self.len(body.0.len());
        self.0.extend(body.0);
    }
}

fn mode_code(m: Option<Mode>) -> u8 {
    match m {
        None => 0,
        Some(Mode::Major) => 1,
        Some(Mode::Minor) => 2,
    }
}

fn tempo_code(s: TempoSource) -> u8 {
    match s {
        TempoSource::MidiMeta => 0,
        TempoSource::MetronomeMark => 1,
        TempoSource::TempoWord => 2,
    }
}

pub fn encode(score: &Score, created_at: u64) -> Vec<u8> {
    let mut out = Out::default();
    out.0.extend(MAGIC);
    out.u16(FORMAT_VERSION);
    out.u64(created_at);

    let mut meta = Out::default();
    meta.u8(score.source_format.code());
    meta.str(&score.source_path);
    meta.str(&score.parser_version);
    meta.q(score.end);
    meta.u32(score.unrecognized_dynamics);
    out.section(meta);

    let mut measures = Out::default();
    measures.len(score.measure_map.len());
    for m in &score.measure_map {
        measures.u32(m.index);
        measures.q(m.start);
        measures.u32(m.time_signature.numerator);
        measures.u32(m.time_signature.denominator);
    }
    out.section(measures);

    let mut parts = Out::default();
    parts.len(score.parts.len());
    for p in &score.parts {
        parts.u64(p.index as u64);
        parts.str(&p.name);
        parts.u16(p.midi_program.map_or(u16::MAX, u16::from));
        parts.u8(u8::from(p.percussive));
        parts.len(p.lyrics.len());
        for l in &p.lyrics {
            parts.q(l.onset);
            parts.str(&l.text);
        }
    }
    out.section(parts);

    let mut notes = Out::default();
    for p in &score.parts {
        notes.len(p.notes.len());
        for n in &p.notes {
            notes.q(n.onset);
            notes.q(n.duration);
            notes.u8(n.midi_pitch);
            match n.spelled {
                Some(s) => {
                    notes.u8(1);
                    notes.u8(s.step.code());
                    notes.u8(s.alter as u8);
                    notes.u8(s.octave as u8);
                }
                None => notes.u8(0),
            }
            notes.u8(n.velocity.unwrap_or(0));
            notes.u8(u8::from(n.grace) | (u8::from(n.tie_to_next) << 1));
            notes.u32(n.measure_index);
        }
    }
    out.section(notes);

    let mut events = Out::default();
    events.len(score.key_signatures.len());
    for k in &score.key_signatures {
        events.q(k.onset);
        events.u8(k.fifths as u8);
        events.u8(mode_code(k.mode));
    }
    events.len(score.tempo_events.len());
    for t in &score.tempo_events {
        events.q(t.onset);
        events.f64(t.bpm);
        events.u8(tempo_code(t.source));
    }
    events.len(score.dynamic_events.len());
    for d in &score.dynamic_events {
        events.q(d.onset);
        events.u64(d.part_index as u64);
        events.u8(d.mark.level());
    }
    out.section(events);

    let mut harmony = Out::default();
    harmony.len(score.harmony.len());
    for h in &score.harmony {
        harmony.u32(h.measure_index);
        harmony.f64(h.beat);
        harmony.str(&h.label);
        harmony.str(&h.local_key);
    }
    out.section(harmony);
    out.0
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn bad(what: &str) -> DecodeError {
    DecodeError(what.to_string())
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(self.u64()? as i64)
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn usize(&mut self) -> Result<usize, DecodeError> {
        usize::try_from(self.u64()?).map_err(|_| bad("index overflow"))
    }
    /// Element count; bounded by the bytes left so a bad count cannot
    /// trigger a huge allocation.
    fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.pos {
            return Err(bad("count exceeds section"));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("invalid utf-8"))
    }
    fn q(&mut self) -> Result<Quarters, DecodeError> {
        let n = self.i64()?;
        let d = self.i64()?;
        if d <= 0 {
            return Err(bad("non-positive denominator"));
        }
        Ok(Quarters::new(n, d))
    }
    fn section(&mut self) -> Result<In<'a>, DecodeError> {
        let n = self.u32()? as usize;
        Ok(In { buf: self.take(n)?, pos: 0 })
    }
    fn finish(&self) -> Result<(), DecodeError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(bad("trailing bytes"))
        }
    }
}

/// Inverse of [`encode`]; returns the score and its creation time.
pub fn decode(bytes: &[u8]) -> Result<(Score, u64), DecodeError> {
    let mut r = In { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(DecodeError(format!("unsupported format version {version}")));
    }
    let created_at = r.u64()?;

    let mut meta = r.section()?;
    let format = SourceFormat::from_code(meta.u8()?).ok_or_else(|| bad("source format"))?;
    let mut data = ScoreData::empty(format, meta.str()?);
    data.parser_version = meta.str()?;
    data.end = meta.q()?;
    data.unrecognized_dynamics = meta.u32()?;
    meta.finish()?;

    let mut measures = r.section()?;
    let n = measures.count()?;
    data.measure_map = Vec::with_capacity(n);
    for _ in 0..n {
        let index = measures.u32()?;
        let start = measures.q()?;
        let (num, den) = (measures.u32()?, measures.u32()?);
        if num == 0 || den == 0 {
            return Err(bad("time signature"));
        }
        data.measure_map.push(Measure { index, start, time_signature: TimeSignature::new(num, den) });
    }
    measures.finish()?;

    let mut parts = r.section()?;
    let n = parts.count()?;
    for _ in 0..n {
        let index = parts.usize()?;
        let mut part = Part::new(index, parts.str()?);
        let program = parts.u16()?;
        part.midi_program = if program == u16::MAX { None } else { Some(u8::try_from(program).map_err(|_| bad("program"))?) };
        part.percussive = parts.u8()? != 0;
        let lyrics = parts.count()?;
        for _ in 0..lyrics {
            part.lyrics.push(Lyric { onset: parts.q()?, text: parts.str()? });
        }
        data.parts.push(part);
    }
    parts.finish()?;

    let mut notes = r.section()?;
    for part in &mut data.parts {
        let n = notes.count()?;
        part.notes.reserve(n);
        for _ in 0..n {
            let onset = notes.q()?;
            let duration = notes.q()?;
            let midi_pitch = notes.u8()?;
            let spelled = match notes.u8()? {
                0 => None,
                1 => Some(SpelledPitch {
                    step: Step::from_code(notes.u8()?).ok_or_else(|| bad("step"))?,
                    alter: notes.u8()? as i8,
                    octave: notes.u8()? as i8,
                }),
                _ => return Err(bad("spelling flag")),
            };
            let velocity = match notes.u8()? {
                0 => None,
                v => Some(v),
            };
            let flags = notes.u8()?;
            let measure_index = notes.u32()?;
            part.notes.push(NoteEvent {
                onset,
                duration,
                midi_pitch,
                spelled,
                velocity,
                grace: flags & 1 != 0,
                tie_to_next: flags & 2 != 0,
                measure_index,
            });
        }
    }
    notes.finish()?;

    let mut events = r.section()?;
    for _ in 0..events.count()? {
        let onset = events.q()?;
        let fifths = events.u8()? as i8;
        let mode = match events.u8()? {
            0 => None,
            1 => Some(Mode::Major),
            2 => Some(Mode::Minor),
            _ => return Err(bad("mode")),
        };
        data.key_signatures.push(KeySignature { onset, fifths, mode });
    }
    for _ in 0..events.count()? {
        let onset = events.q()?;
        let bpm = events.f64()?;
        let source = match events.u8()? {
            0 => TempoSource::MidiMeta,
            1 => TempoSource::MetronomeMark,
            2 => TempoSource::TempoWord,
            _ => return Err(bad("tempo source")),
        };
        data.tempo_events.push(TempoEvent { onset, bpm, source });
    }
    for _ in 0..events.count()? {
        let onset = events.q()?;
        let part_index = events.usize()?;
        let mark = DynamicMark::from_level(events.u8()?).ok_or_else(|| bad("dynamic mark"))?;
        data.dynamic_events.push(DynamicEvent { onset, part_index, mark });
    }
    events.finish()?;

    let mut harmony = r.section()?;
    for _ in 0..harmony.count()? {
        data.harmony.push(HarmonicAnnotation {
            measure_index: harmony.u32()?,
            beat: harmony.f64()?,
            label: harmony.str()?,
            local_key: harmony.str()?,
        });
    }
    harmony.finish()?;
    r.finish()?;

    let score = Score::new(data).map_err(|e| DecodeError(e.to_string()))?;
    Ok((score, created_at))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{q, ScoreBuilder};

    fn sample() -> Score {
        let mut b = ScoreBuilder::new(SourceFormat::MusicXml).path("x/y.xml").time_signature(3, 4);
        let p = b.part("Violino I", Some(40));
        b.spelled(p, q(0, 1), q(3, 2), SpelledPitch { step: Step::B, alter: -1, octave: 4 }).tie_to_next = true;
        b.note(p, q(3, 2), q(1, 3), 61).velocity = Some(90);
        b.grace(p, q(2, 1), 62);
        b.lyric(p, q(0, 1), "Ky-");
        b.dynamic(p, q(0, 1), DynamicMark::Mf);
        b.tempo(q(0, 1), 96.5, TempoSource::MetronomeMark);
        b.key(q(0, 1), -2, Some(Mode::Minor));
        let d = b.part("", None);
        b.percussive(d);
        b.note(d, q(4, 1), q(1, 1), 36);
        let mut data = b.build().unwrap().into_data();
        data.harmony.push(HarmonicAnnotation { measure_index: 1, beat: 0.5, label: "Gm".into(), local_key: String::new() });
        data.unrecognized_dynamics = 3;
        Score::new(data).unwrap()
    }

    #[test]
    fn key_properties() {
        let a = cache_key(b"abc", "1.0", SourceFormat::Midi);
        assert_eq!(a, cache_key(b"abc", "1.0", SourceFormat::Midi));
        assert_ne!(a.content_hash, cache_key(b"abd", "1.0", SourceFormat::Midi).content_hash);
        assert_ne!(a, cache_key(b"abc", "1.1", SourceFormat::Midi));
        assert_ne!(a.path_in(Path::new("c")), cache_key(b"abc", "1.1", SourceFormat::Midi).path_in(Path::new("c")));
        let p = a.path_in(Path::new("c"));
        assert!(p.starts_with(Path::new("c").join(&a.hex()[..2])));
        assert!(p.to_str().unwrap().ends_with("-1.0.nfsc"));
    }

    #[test]
    fn encode_decode() {
        let s = sample();
        let (back, t) = decode(&encode(&s, 42)).unwrap();
        assert_eq!(back, s);
        assert_eq!(t, 42);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = encode(&sample(), 0);
        for n in 0..bytes.len() {
            assert!(decode(&bytes[..n]).is_err(), "prefix of {n} bytes");
        }
    }

    #[test]
    fn put_get_clear() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        let key = cache_key(b"bytes", "v1", SourceFormat::MusicXml);
        assert!(get(dir.path(), &key).is_none());
        put(dir.path(), &key, &s).unwrap();
        put(dir.path(), &key, &s).unwrap();
        assert_eq!(get(dir.path(), &key).unwrap(), s);
        let shard = key.path_in(dir.path()).parent().unwrap().to_path_buf();
        assert_eq!(fs::read_dir(&shard).unwrap().count(), 1);
        // The same bytes read as another format do not hit.
        let other = CacheKey { format: SourceFormat::Kern, ..key.clone() };
        assert!(get(dir.path(), &other).is_none());
        assert_eq!(clear(dir.path()).unwrap(), 1);
        assert!(get(dir.path(), &key).is_none());
    }

    #[test]
    fn truncated_entry_is_a_miss_and_removed() {
        let dir = tempfile::tempdir().unwrap();
        let key = cache_key(b"bytes", "v1", SourceFormat::MusicXml);
        put(dir.path(), &key, &sample()).unwrap();
        let path = key.path_in(dir.path());
        let len = fs::metadata(&path).unwrap().len();
        fs::OpenOptions::new().write(true).open(&path).unwrap().set_len(len / 2).unwrap();
        assert!(get(dir.path(), &key).is_none());
        assert!(!path.exists());
    }

    #[test]
    fn unwritable_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, b"x").unwrap();
        let key = cache_key(b"bytes", "v1", SourceFormat::Midi);
        assert!(put(&file, &key, &sample()).is_err());
    }
}
