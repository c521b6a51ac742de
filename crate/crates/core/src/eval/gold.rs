//! Line-oriented annotation files.
//!
//! ```text
//! VIDEO<TAB>id              optional; starts a new video
//! DURATION<TAB>seconds
//! KEYFRAME<TAB>kind<TAB>seconds
//! BOUNDARY<TAB>seconds
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::notegen::scheme::NoteScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldKeyframe {
    pub kind: String,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub video: String,
    pub duration: Option<f64>,
    pub keyframes: Vec<GoldKeyframe>,
    pub boundaries: Vec<f64>,
}

impl AnnotationSet {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Error::InvalidArgument(format!("video `{}`: {m}", self.video));
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(bad(format!("duration {d} must be positive")));
            }
            if let Some(k) = self.keyframes.iter().find(|k| k.timestamp < 0.0 || k.timestamp > d) {
                return Err(bad(format!("keyframe at {} outside [0, {d}]", k.timestamp)));
            }
            if let Some(b) = self.boundaries.iter().find(|b| **b < 0.0 || **b > d) {
                return Err(bad(format!("boundary at {b} outside [0, {d}]")));
            }
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("boundaries must be strictly increasing".into()));
        }
        Ok(())
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationSet>> {
    let mut sets: Vec<AnnotationSet> = Vec::new();
    let current = |sets: &mut Vec<AnnotationSet>| -> usize {
        if sets.is_empty() {
            sets.push(AnnotationSet {
                video: "video".into(),
                ..Default::default()
            });
        }
        sets.len() - 1
    };
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let bad = |m: &str| Error::InvalidArgument(format!("annotation line {}: {m}", n + 1));
        let num = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(&format!("bad number `{s}`")));
        match fields.as_slice() {
            ["VIDEO", id] => sets.push(AnnotationSet {
                video: id.to_string(),
                ..Default::default()
            }),
            ["DURATION", d] => {
                let i = current(&mut sets);
                sets[i].duration = Some(num(d)?);
            }
            ["KEYFRAME", kind, t] => {
                let i = current(&mut sets);
                sets[i].keyframes.push(GoldKeyframe {
                    kind: kind.to_ascii_uppercase(),
                    timestamp: num(t)?,
                });
            }
            ["BOUNDARY", t] => {
                let i = current(&mut sets);
                sets[i].boundaries.push(num(t)?);
            }
            _ => return Err(bad("expected VIDEO, DURATION, KEYFRAME or BOUNDARY record")),
        }
    }
    for s in &sets {
        s.check()?;
    }
    Ok(sets)
}

/// Predictions read from a note scheme: every attached keyframe and every chapter start after zero.
pub fn scheme_annotations(s: &NoteScheme, video: &str) -> AnnotationSet {
    let mut keyframes: Vec<GoldKeyframe> = s
        .steps()
        .flat_map(|st| st.keyframes.iter())
        .map(|k| GoldKeyframe {
            kind: k.kind.as_str().to_string(),
            timestamp: k.timestamp,
        })
        .collect();
    keyframes.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.kind.cmp(&b.kind)));
    AnnotationSet {
        video: video.to_string(),
        duration: Some(s.video.duration),
        keyframes,
        boundaries: s.chapters.iter().skip(1).map(|c| c.t_s).collect(),
    }
}

/// Annotation records, or a note scheme (JSON) read as predictions for `video`.
pub fn load_annotations(text: &str, video: &str) -> Result<Vec<AnnotationSet>> {
    if text.trim_start().starts_with('{') {
        let scheme = crate::render::canonical::parse_scheme(text)?;
        return Ok(vec![scheme_annotations(&scheme, video)]);
    }
    parse_annotations(text)
}

pub fn to_text(sets: &[AnnotationSet]) -> String {
    let mut out = String::new();
    for s in sets {
        out.push_str(&format!("VIDEO\t{}\n", s.video));
        if let Some(d) = s.duration {
            out.push_str(&format!("DURATION\t{d:.3}\n"));
        }
        for k in &s.keyframes {
            out.push_str(&format!("KEYFRAME\t{}\t{:.3}\n", k.kind, k.timestamp));
        }
        for b in &s.boundaries {
            out.push_str(&format!("BOUNDARY\t{b:.3}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let sets = parse_annotations("# gold\nDURATION\t120\nKEYFRAME\ttext_overlay\t3.5\nBOUNDARY\t30\nBOUNDARY\t60\n").unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].duration, Some(120.0));
        assert_eq!(sets[0].keyframes[0].kind, "TEXT_OVERLAY");
        assert_eq!(sets[0].boundaries, vec![30.0, 60.0]);
        let again = parse_annotations(&to_text(&sets)).unwrap();
        assert_eq!(again[0].keyframes, sets[0].keyframes);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_annotations("BOUNDARY\t5\nBOUNDARY\t5\n").is_err());
        assert!(parse_annotations("DURATION\t10\nKEYFRAME\tA\t11\n").is_err());
        assert!(parse_annotations("NOPE\n").is_err());
    }
}
