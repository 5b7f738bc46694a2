//! Sleep-stage annotation files.
//!
//! A hypnogram is a CSV with the header `onset_s,duration_s,stage` and one
//! row per scored span: onset and duration in seconds, stage as one of the
//! tokens `W`, `N1`, `N2`, `N3`, `N4`, `R`. Spans must be in increasing onset
//! order and must not overlap; gaps are allowed and read back as
//! [`RawStage::Unknown`].

use crate::classifier::RawStage;
use crate::epoch::Epoch;
use crate::error::{Error, Result};

const HEADER: &str = "onset_s,duration_s,stage";

/// One scored span of a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypnogramEntry {
    pub onset_s: f64,
    pub duration_s: f64,
    pub stage: RawStage,
}

impl HypnogramEntry {
    fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }
}

/// Scored spans in increasing onset order, non-overlapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hypnogram {
    pub entries: Vec<HypnogramEntry>,
}

impl Hypnogram {
    /// The stage covering time `t_s`, or `Unknown` when no span does.
    ///
    /// A span covers `onset_s <= t < onset_s + duration_s`, so a time right
    /// on a boundary belongs to the later span.
    pub fn stage_at(&self, t_s: f64) -> RawStage {
        let idx = self.entries.partition_point(|e| e.onset_s <= t_s);
        if idx == 0 {
            return RawStage::Unknown;
        }
        let entry = &self.entries[idx - 1];
        if t_s < entry.end_s() {
            entry.stage
        } else {
            RawStage::Unknown
        }
    }
}

fn parse_stage_token(token: &str) -> Option<RawStage> {
    match token {
        "W" => Some(RawStage::Wake),
        "N1" => Some(RawStage::N1),
        "N2" => Some(RawStage::N2),
        "N3" => Some(RawStage::N3),
        "N4" => Some(RawStage::N4),
        "R" => Some(RawStage::Rem),
        _ => None,
    }
}

fn stage_token(stage: RawStage) -> Option<&'static str> {
    match stage {
        RawStage::Wake => Some("W"),
        RawStage::N1 => Some("N1"),
        RawStage::N2 => Some("N2"),
        RawStage::N3 => Some("N3"),
        RawStage::N4 => Some("N4"),
        RawStage::Rem => Some("R"),
        RawStage::Unknown => None,
    }
}

/// Parses hypnogram CSV text. Line numbers in errors are 1-based and count
/// every line, header included.
pub fn parse_hypnogram_csv(text: &str) -> Result<Hypnogram> {
    let mut lines = text.lines().enumerate();
    let header = lines.find(|(_, line)| !line.trim().is_empty());
    match header {
        Some((_, line)) if line.trim() == HEADER => {}
        Some((i, line)) => {
            return Err(Error::LineParse {
                line: i + 1,
                message: format!("expected header {HEADER:?}, found {:?}", line.trim()),
            });
        }
        None => {
            return Err(Error::LineParse {
                line: 1,
                message: format!("empty input, expected header {HEADER:?}"),
            });
        }
    }

    let mut entries: Vec<HypnogramEntry> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::LineParse {
                line: line_no,
                message: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let onset_s: f64 = fields[0].parse().map_err(|_| Error::LineParse {
            line: line_no,
            message: format!("onset {:?} is not a number", fields[0]),
        })?;
        let duration_s: f64 = fields[1].parse().map_err(|_| Error::LineParse {
            line: line_no,
            message: format!("duration {:?} is not a number", fields[1]),
        })?;
        if !(onset_s.is_finite() && onset_s >= 0.0) {
            return Err(Error::LineParse {
                line: line_no,
                message: format!("onset {onset_s} s must be finite and non-negative"),
            });
        }
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(Error::LineParse {
                line: line_no,
                message: format!("duration {duration_s} s must be positive"),
            });
        }
        let stage = parse_stage_token(fields[2]).ok_or_else(|| Error::LineParse {
            line: line_no,
            message: format!(
                "unknown stage token {:?}, expected one of W, N1, N2, N3, N4, R",
                fields[2]
            ),
        })?;
        if let Some(prev) = entries.last() {
            if onset_s < prev.end_s() {
                return Err(Error::Annotation(format!(
                    "span at {onset_s} s overlaps the previous span ending at {} s",
                    prev.end_s()
                )));
            }
        }
        entries.push(HypnogramEntry {
            onset_s,
            duration_s,
            stage,
        });
    }
    Ok(Hypnogram { entries })
}

/// Renders a hypnogram back to CSV text, header first.
///
/// Entries staged `Unknown` have no token; leave such spans out instead.
pub fn write_hypnogram_csv(hypnogram: &Hypnogram) -> Result<String> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for entry in &hypnogram.entries {
        let token = stage_token(entry.stage).ok_or_else(|| {
            Error::Annotation(format!(
                "span at {} s is staged Unknown, which has no CSV token",
                entry.onset_s
            ))
        })?;
        out.push_str(&format!("{},{},{token}\n", entry.onset_s, entry.duration_s));
    }
    Ok(out)
}

/// Labels each epoch with the stage covering its start time.
///
/// Total over the epochs: an epoch starting outside every span gets
/// [`RawStage::Unknown`] rather than an error, so callers can decide how to
/// treat unscored stretches.
pub fn align_labels(hypnogram: &Hypnogram, epochs: &[Epoch]) -> Vec<RawStage> {
    epochs
        .iter()
        .map(|e| hypnogram.stage_at(e.start_time_s))
        .collect()
}
