use super::{ParseError, ParseErrorKind};
use crate::model::HarmonicAnnotation;

const COLUMNS: [&str; 4] = ["measure", "beat", "label", "localkey"];

/// Reads a tab-separated harmony sidecar with the header
/// `measure beat label localkey`. Results are sorted by position.
pub fn parse_annotations(text: &str, path: &str) -> Result<Vec<HarmonicAnnotation>, ParseError> {
    let err = |line: usize, detail: String| ParseError::new(path, ParseErrorKind::MalformedEvent, detail).at(line as u64);
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let Some((hi, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let names: Vec<&str> = header.trim_end_matches('\r').split('\t').map(str::trim).collect();
    let mut index = [0usize; 4];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(col))
            .ok_or_else(|| err(hi + 1, format!("missing column {col}")))?;
    }

    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let fields: Vec<&str> = raw.trim_end_matches('\r').split('\t').collect();
        let field = |k: usize| fields.get(index[k]).map(|s| s.trim());
        let (Some(m), Some(b), Some(label)) = (field(0), field(1), field(2)) else {
            return Err(err(line, format!("expected {} fields, found {}", names.len(), fields.len())));
        };
        let measure_index: u32 = m.parse().ok().filter(|&m| m >= 1).ok_or_else(|| err(line, format!("invalid measure {m:?}")))?;
        let beat: f64 = b
            .parse()
            .ok()
            .filter(|b: &f64| b.is_finite() && *b >= 0.0)
            .ok_or_else(|| err(line, format!("invalid beat {b:?}")))?;
        if label.is_empty() {
            return Err(err(line, "empty label".into()));
        }
        let local_key = field(3).unwrap_or("").to_string();
        out.push(HarmonicAnnotation { measure_index, beat, label: label.to_string(), local_key });
    }
    out.sort_by(|a, b| a.measure_index.cmp(&b.measure_index).then(a.beat.total_cmp(&b.beat)));
    Ok(out)
}
