//! The feature catalogue. Each group is a pure function from a score to a
//! [`FeatureMap`] with a fixed set of names; features that cannot be computed
//! for a given score are NaN.

mod key;
mod pitch;
mod rhythm;
mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{q_to_f64, HarmonicAnnotation, Quarters, Score};

pub use key::{key_features, pitch_class_durations, KeyEstimate, MAJOR_PROFILE, MINOR_PROFILE};
pub use pitch::{melodic_interval_features, pitch_features, vertical_interval_features};
pub use rhythm::{dynamics_tempo_features, rhythm_features, texture_density_features};
pub use text::{harmony_features, instrument_class, instrumentation_features, lyrics_features};

/// Feature name to value, iterated in lexicographic name order. Infinite
/// values are stored as NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMap {
    entries: BTreeMap<String, f64>,
}

impl FeatureMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        let value = if value.is_finite() { value } else { f64::NAN };
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn extend(&mut self, other: FeatureMap) {
        self.entries.extend(other.entries);
    }

    /// Equality that treats NaN as equal to NaN and compares bits otherwise.
    pub fn bit_eq(&self, other: &FeatureMap) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((a, x), (b, y))| a == b && (x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())))
    }

    fn with_nan(names: &[String]) -> Self {
        let mut m = FeatureMap::new();
        for n in names {
            m.insert(n.clone(), f64::NAN);
        }
        m
    }
}

impl<'a> IntoIterator for &'a FeatureMap {
    type Item = (&'a String, &'a f64);
    type IntoIter = std::collections::btree_map::Iter<'a, String, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Pitch,
    Interval,
    Vertical,
    Rhythm,
    DynamicsTempo,
    Texture,
    Instrumentation,
    Key,
    Lyrics,
    Harmony,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 10] = [
        FeatureGroup::Pitch,
        FeatureGroup::Interval,
        FeatureGroup::Vertical,
        FeatureGroup::Rhythm,
        FeatureGroup::DynamicsTempo,
        FeatureGroup::Texture,
        FeatureGroup::Instrumentation,
        FeatureGroup::Key,
        FeatureGroup::Lyrics,
        FeatureGroup::Harmony,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Pitch => "pitch",
            FeatureGroup::Interval => "interval",
            FeatureGroup::Vertical => "vertical",
            FeatureGroup::Rhythm => "rhythm",
            FeatureGroup::DynamicsTempo => "dynamics_tempo",
            FeatureGroup::Texture => "texture",
            FeatureGroup::Instrumentation => "instrumentation",
            FeatureGroup::Key => "key",
            FeatureGroup::Lyrics => "lyrics",
            FeatureGroup::Harmony => "harmony",
        }
    }

    /// Every name the group emits, sorted.
    pub fn names(self) -> Vec<String> {
        let mut v = match self {
            FeatureGroup::Pitch => pitch::pitch_names(),
            FeatureGroup::Interval => pitch::interval_names(),
            FeatureGroup::Vertical => pitch::vertical_names(),
            FeatureGroup::Rhythm => rhythm::rhythm_names(),
            FeatureGroup::DynamicsTempo => rhythm::dynamics_tempo_names(),
            FeatureGroup::Texture => rhythm::texture_names(),
            FeatureGroup::Instrumentation => text::instrumentation_names(),
            FeatureGroup::Key => key::key_names(),
            FeatureGroup::Lyrics => text::lyrics_names(),
            FeatureGroup::Harmony => text::harmony_names(),
        };
        v.sort();
        v
    }

    pub fn compute(self, score: &Score, annotations: Option<&[HarmonicAnnotation]>) -> FeatureMap {
        match self {
            FeatureGroup::Pitch => pitch_features(score),
            FeatureGroup::Interval => melodic_interval_features(score),
            FeatureGroup::Vertical => vertical_interval_features(score),
            FeatureGroup::Rhythm => rhythm_features(score),
            FeatureGroup::DynamicsTempo => dynamics_tempo_features(score),
            FeatureGroup::Texture => texture_density_features(score),
            FeatureGroup::Instrumentation => instrumentation_features(score),
            FeatureGroup::Key => key_features(score),
            FeatureGroup::Lyrics => lyrics_features(score),
            FeatureGroup::Harmony => harmony_features(score, annotations.unwrap_or(&[])),
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        FeatureGroup::ALL.into_iter().find(|g| g.as_str() == s).ok_or_else(|| format!("unknown feature group {s:?}"))
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub(crate) fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// `num / den`, NaN when `den` is zero.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

/// Exact integer clock for one score: every onset, duration and measure
/// start is a whole number of ticks, and every tick count fits in 53 bits so
/// conversions to `f64` match the rational ones exactly.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ticks {
    per_quarter: i64,
}

impl Ticks {
    const LIMIT: i64 = 1 << 53;

    /// `None` when the score's time values need more than 53 bits of ticks.
    pub fn for_score(score: &Score) -> Option<Ticks> {
        // An end is onset + duration, so bounding both bounds it too.
        let times = score
            .notes()
            .flat_map(|n| [n.onset, n.duration])
            .chain(score.measure_map.iter().map(|m| m.start))
            .chain([score.end]);
        let mut per_quarter = 1i64;
        let mut whole = 0i64;
        for t in times {
            let d = *t.denom();
            if per_quarter % d != 0 {
                per_quarter = (per_quarter / num_integer::gcd(per_quarter, d)).checked_mul(d)?;
            }
            whole = whole.max(t.numer().checked_abs()? / d + 1);
        }
        (per_quarter <= Self::LIMIT && whole.checked_mul(2 * per_quarter)? <= Self::LIMIT).then_some(Ticks { per_quarter })
    }

    pub fn of(self, q: Quarters) -> i64 {
        q.numer() * (self.per_quarter / q.denom())
    }

    pub fn to_f64(self, ticks: i64) -> f64 {
        ticks as f64 / self.per_quarter as f64
    }
}

/// Time arithmetic shared by the tick and rational paths.
pub(crate) trait Clock: Copy {
    type T: Copy + Ord + std::ops::Add<Output = Self::T> + std::ops::Sub<Output = Self::T>;
    fn of(self, q: Quarters) -> Self::T;
    fn to_f64(self, t: Self::T) -> f64;
    fn is_whole_quarters(self, t: Self::T) -> bool;
    fn zero(self) -> Self::T;
}

impl Clock for Ticks {
    type T = i64;
    fn of(self, q: Quarters) -> i64 {
        Ticks::of(self, q)
    }
    fn to_f64(self, t: i64) -> f64 {
        Ticks::to_f64(self, t)
    }
    fn is_whole_quarters(self, t: i64) -> bool {
        t % self.per_quarter == 0
    }
    fn zero(self) -> i64 {
        0
    }
}

/// Plain rational arithmetic, for scores whose ticks would not fit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Exact;

impl Clock for Exact {
    type T = Quarters;
    fn of(self, q: Quarters) -> Quarters {
        q
    }
    fn to_f64(self, t: Quarters) -> f64 {
        q_to_f64(t)
    }
    fn is_whole_quarters(self, t: Quarters) -> bool {
        t.is_integer()
    }
    fn zero(self) -> Quarters {
        Quarters::from_integer(0)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::builder::{q, ScoreBuilder};
    use crate::model::{Score, SourceFormat};

    /// One part, consecutive quarter notes.
    pub fn melody(pitches: &[u8]) -> Score {
        let mut b = ScoreBuilder::new(SourceFormat::MusicXml);
        let p = b.part("", None);
        for (i, &pitch) in pitches.iter().enumerate() {
            b.note(p, q(i as i64, 1), q(1, 1), pitch);
        }
        b.build().unwrap()
    }

    pub fn empty() -> Score {
        ScoreBuilder::new(SourceFormat::MusicXml).build().unwrap()
    }

    pub fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }
}
