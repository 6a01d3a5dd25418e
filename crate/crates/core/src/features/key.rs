//! Key finding by correlating a duration-weighted pitch-class vector with
//! rotated major and minor key profiles (Krumhansl and Kessler probe-tone
//! ratings).

use super::FeatureMap;
use crate::model::{q_to_f64, Mode, Score};

/// Probe-tone profile for major keys, tonic first.
pub const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
/// Probe-tone profile for minor keys, tonic first.
pub const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

pub(super) fn key_names() -> Vec<String> {
    ["KeySig_Fifths", "KS_TonicPC", "KS_Mode", "KS_Confidence"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyEstimate {
    pub tonic: u8,
    pub mode: Mode,
    pub correlation: f64,
    /// Best minus second-best correlation.
    pub confidence: f64,
}

fn pearson(x: &[f64; 12], y: &[f64; 12]) -> f64 {
    let mx = x.iter().sum::<f64>() / 12.0;
    let my = y.iter().sum::<f64>() / 12.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

impl KeyEstimate {
    /// Best of the 24 keys for a pitch-class weight vector. Ties go to the
    /// lower tonic, then to major. `None` when the vector is constant.
    pub fn from_weights(weights: &[f64; 12]) -> Option<KeyEstimate> {
        let mut scored = Vec::with_capacity(24);
        for tonic in 0..12u8 {
            for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
                let rotated: [f64; 12] = std::array::from_fn(|pc| profile[(pc + 12 - tonic as usize) % 12]);
                let r = pearson(weights, &rotated);
                if !r.is_finite() {
                    return None;
                }
                scored.push((r, tonic, mode));
            }
        }
        let mut best = 0;
        for i in 1..scored.len() {
            if scored[i].0 > scored[best].0 {
                best = i;
            }
        }
        let runner_up = scored
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != best)
            .map(|(_, s)| s.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let (correlation, tonic, mode) = scored[best];
        Some(KeyEstimate { tonic, mode, correlation, confidence: correlation - runner_up })
    }
}

/// Pitch-class durations in quarters; grace notes carry no weight.
pub fn pitch_class_durations(score: &Score) -> [f64; 12] {
    let mut w = [0.0; 12];
    for n in score.notes().filter(|n| !n.grace) {
        w[(n.midi_pitch % 12) as usize] += q_to_f64(n.duration);
    }
    w
}

pub fn key_features(score: &Score) -> FeatureMap {
    let mut m = FeatureMap::with_nan(&key_names());
    if let Some(k) = score.key_signatures.first() {
        m.insert("KeySig_Fifths", f64::from(k.fifths));
    }
    if let Some(est) = KeyEstimate::from_weights(&pitch_class_durations(score)) {
        m.insert("KS_TonicPC", f64::from(est.tonic));
        m.insert("KS_Mode", if est.mode == Mode::Major { 0.0 } else { 1.0 });
        m.insert("KS_Confidence", est.confidence);
    }
    m
}
