//! Plain-text recordings: one column per channel, one row per sample.
//!
//! The layout is a `# sample_rate_hz=<rate>` comment (all channels share one
//! rate), optional further `# key=value` comments, a header row of channel
//! labels, then comma-separated sample rows. Values are written in shortest
//! round-trip form, so unlike EDF the format is lossless for `f64` samples.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::{Channel, Recording};

/// Comment keys that mirror [`Recording`] fields rather than metadata.
const RESERVED_KEYS: [&str; 3] = ["sample_rate_hz", "start_date", "start_time"];

/// Parses recording CSV text. Line numbers in errors are 1-based.
pub fn parse_recording_csv(text: &str) -> Result<Recording> {
    let mut sample_rate_hz: Option<f64> = None;
    let mut start_date = String::new();
    let mut start_time = String::new();
    let mut metadata = BTreeMap::new();
    let mut labels: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let Some((key, value)) = comment.split_once('=') else {
                continue; // free-form comment
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sample_rate_hz" => {
                    let rate: f64 = value.parse().map_err(|_| Error::LineParse {
                        line: line_no,
                        message: format!("sample rate {value:?} is not a number"),
                    })?;
                    if !(rate.is_finite() && rate > 0.0) {
                        return Err(Error::LineParse {
                            line: line_no,
                            message: format!("sample rate {rate} Hz must be positive"),
                        });
                    }
                    sample_rate_hz = Some(rate);
                }
                "start_date" => start_date = value.to_string(),
                "start_time" => start_time = value.to_string(),
                _ => {
                    metadata.insert(key.to_string(), value.to_string());
                }
            }
            continue;
        }
        match &labels {
            None => {
                let found: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                if found.iter().any(String::is_empty) {
                    return Err(Error::LineParse {
                        line: line_no,
                        message: "header row has an empty channel label".into(),
                    });
                }
                for (i, label) in found.iter().enumerate() {
                    if found[..i].contains(label) {
                        return Err(Error::LineParse {
                            line: line_no,
                            message: format!("duplicate channel label {label:?}"),
                        });
                    }
                }
                columns = vec![Vec::new(); found.len()];
                labels = Some(found);
            }
            Some(found) => {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != found.len() {
                    return Err(Error::LineParse {
                        line: line_no,
                        message: format!(
                            "row has {} fields, header has {} channels",
                            fields.len(),
                            found.len()
                        ),
                    });
                }
                for (field, column) in fields.iter().zip(columns.iter_mut()) {
                    let v: f64 = field.parse().map_err(|_| Error::LineParse {
                        line: line_no,
                        message: format!("sample {field:?} is not a number"),
                    })?;
                    column.push(v);
                }
            }
        }
    }

    let rate = sample_rate_hz
        .ok_or_else(|| Error::Format("missing \"# sample_rate_hz=<rate>\" comment line".into()))?;
    let labels = labels.ok_or_else(|| Error::Format("missing channel header row".into()))?;
    let channels = labels
        .into_iter()
        .zip(columns)
        .map(|(label, samples)| Channel {
            label,
            sample_rate_hz: rate,
            samples,
        })
        .collect();
    Ok(Recording {
        channels,
        start_date,
        start_time,
        metadata,
    })
}

/// Renders a recording as CSV text.
///
/// All channels must share one sample rate and length. Metadata under the
/// reserved keys `sample_rate_hz`, `start_date`, and `start_time` is skipped;
/// those come from the recording's own fields.
pub fn write_recording_csv(recording: &Recording) -> Result<String> {
    if recording.channels.is_empty() {
        return Err(Error::InvalidSpec("recording has no channels".into()));
    }
    let rate = recording.channels[0].sample_rate_hz;
    let n = recording.channels[0].samples.len();
    for ch in &recording.channels {
        if ch.sample_rate_hz != rate {
            return Err(Error::InvalidSpec(format!(
                "channel {:?} runs at {} Hz but the format stores one shared rate ({rate} Hz)",
                ch.label, ch.sample_rate_hz
            )));
        }
        if ch.samples.len() != n {
            return Err(Error::Alignment(format!(
                "channel {:?} has {} samples but an earlier channel has {n}",
                ch.label,
                ch.samples.len()
            )));
        }
        if ch.label.contains(',') || ch.label.contains('\n') || ch.label.contains('#') {
            return Err(Error::InvalidSpec(format!(
                "channel label {:?} cannot be represented in a CSV header",
                ch.label
            )));
        }
    }

    let mut out = format!("# sample_rate_hz={rate}\n");
    if !recording.start_date.is_empty() {
        out.push_str(&format!("# start_date={}\n", recording.start_date));
    }
    if !recording.start_time.is_empty() {
        out.push_str(&format!("# start_time={}\n", recording.start_time));
    }
    for (key, value) in &recording.metadata {
        if RESERVED_KEYS.contains(&key.as_str()) {
            continue;
        }
        for text in [key, value] {
            if text.contains('\n') {
                return Err(Error::InvalidSpec(format!(
                    "metadata under {key:?} spans multiple lines"
                )));
            }
        }
        if key.contains('=') {
            return Err(Error::InvalidSpec(format!(
                "metadata key {key:?} contains '=', which the comment syntax reserves"
            )));
        }
        out.push_str(&format!("# {key}={value}\n"));
    }
    let header: Vec<&str> = recording
        .channels
        .iter()
        .map(|c| c.label.as_str())
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let mut row = String::new();
    for i in 0..n {
        row.clear();
        for (j, ch) in recording.channels.iter().enumerate() {
            if j > 0 {
                row.push(',');
            }
            row.push_str(&format!("{}", ch.samples[i]));
        }
        row.push('\n');
        out.push_str(&row);
    }
    Ok(out)
}
