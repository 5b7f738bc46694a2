//! EDF (European Data Format) reading and writing.
//!
//! The format is a 256-byte fixed-width ASCII header, one 256-byte ASCII
//! extension per signal, then data records of interleaved little-endian
//! 16-bit integers. Each signal carries a linear calibration mapping its
//! digital range onto physical units; parsing applies it, writing inverts
//! it. A record count of -1 is legal and means "infer from file size".
//!
//! Writing renders the calibration limits into their 8-character ASCII form
//! first and quantizes against the values as re-parsed from that form, so a
//! parse -> write -> parse cycle reproduces samples bit for bit.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::{Channel, Recording};

const HEADER_LEN: usize = 256;
const PER_SIGNAL_LEN: usize = 256;
const DIGITAL_MIN: i32 = -32768;
const DIGITAL_MAX: i32 = 32767;

struct FieldReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> FieldReader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a str> {
        let start = self.offset;
        let end = start + len;
        if end > self.bytes.len() {
            return Err(Error::FormatAt {
                offset: self.bytes.len() as u64,
                message: format!("file ends inside the {what} field"),
            });
        }
        self.offset = end;
        std::str::from_utf8(&self.bytes[start..end]).map_err(|_| Error::FormatAt {
            offset: start as u64,
            message: format!("{what} field is not ASCII"),
        })
    }

    fn take_trimmed(&mut self, len: usize, what: &str) -> Result<String> {
        Ok(self.take(len, what)?.trim().to_string())
    }

    fn take_f64(&mut self, len: usize, what: &str) -> Result<f64> {
        let start = self.offset;
        let text = self.take_trimmed(len, what)?;
        text.parse().map_err(|_| Error::FormatAt {
            offset: start as u64,
            message: format!("{what} field {text:?} is not a number"),
        })
    }

    fn take_i64(&mut self, len: usize, what: &str) -> Result<i64> {
        let start = self.offset;
        let text = self.take_trimmed(len, what)?;
        text.parse().map_err(|_| Error::FormatAt {
            offset: start as u64,
            message: format!("{what} field {text:?} is not an integer"),
        })
    }
}

struct SignalHeader {
    label: String,
    transducer: String,
    dimension: String,
    physical_min: f64,
    physical_max: f64,
    digital_min: i64,
    digital_max: i64,
    prefiltering: String,
    samples_per_record: usize,
}

/// Decodes an EDF byte stream into physical-unit channels.
pub fn parse_edf(bytes: &[u8]) -> Result<Recording> {
    let mut r = FieldReader { bytes, offset: 0 };
    let version = r.take_trimmed(8, "version")?;
    if version != "0" {
        return Err(Error::FormatAt {
            offset: 0,
            message: format!("unsupported version {version:?}, expected \"0\""),
        });
    }
    let patient = r.take_trimmed(80, "patient id")?;
    let recording_id = r.take_trimmed(80, "recording id")?;
    let start_date = r.take_trimmed(8, "start date")?;
    let start_time = r.take_trimmed(8, "start time")?;
    let header_bytes = r.take_i64(8, "header size")?;
    let reserved = r.take_trimmed(44, "reserved")?;
    let n_records_field = r.take_i64(8, "record count")?;
    let record_duration_s = r.take_f64(8, "record duration")?;
    let n_signals = r.take_i64(4, "signal count")?;

    if n_signals <= 0 {
        return Err(Error::FormatAt {
            offset: 252,
            message: format!("signal count {n_signals} must be positive"),
        });
    }
    let n_signals = n_signals as usize;
    let expected_header = HEADER_LEN + n_signals * PER_SIGNAL_LEN;
    if header_bytes != expected_header as i64 {
        return Err(Error::FormatAt {
            offset: 184,
            message: format!(
                "header size {header_bytes} does not match {expected_header} for {n_signals} signals"
            ),
        });
    }
    if bytes.len() < expected_header {
        return Err(Error::FormatAt {
            offset: bytes.len() as u64,
            message: format!(
                "file is {} bytes, shorter than its {expected_header}-byte header",
                bytes.len()
            ),
        });
    }
    if !(record_duration_s.is_finite() && record_duration_s > 0.0) {
        return Err(Error::FormatAt {
            offset: 244,
            message: format!("record duration {record_duration_s} s must be positive"),
        });
    }

    // Per-signal headers are stored field-major: all labels, then all
    // transducers, and so on.
    let labels: Vec<String> = (0..n_signals)
        .map(|_| r.take_trimmed(16, "label"))
        .collect::<Result<_>>()?;
    let transducers: Vec<String> = (0..n_signals)
        .map(|_| r.take_trimmed(80, "transducer"))
        .collect::<Result<_>>()?;
    let dimensions: Vec<String> = (0..n_signals)
        .map(|_| r.take_trimmed(8, "physical dimension"))
        .collect::<Result<_>>()?;
    let phys_mins: Vec<f64> = (0..n_signals)
        .map(|_| r.take_f64(8, "physical minimum"))
        .collect::<Result<_>>()?;
    let phys_maxs: Vec<f64> = (0..n_signals)
        .map(|_| r.take_f64(8, "physical maximum"))
        .collect::<Result<_>>()?;
    let dig_mins: Vec<i64> = (0..n_signals)
        .map(|_| r.take_i64(8, "digital minimum"))
        .collect::<Result<_>>()?;
    let dig_maxs: Vec<i64> = (0..n_signals)
        .map(|_| r.take_i64(8, "digital maximum"))
        .collect::<Result<_>>()?;
    let prefilterings: Vec<String> = (0..n_signals)
        .map(|_| r.take_trimmed(80, "prefiltering"))
        .collect::<Result<_>>()?;
    let samples_per_record: Vec<i64> = (0..n_signals)
        .map(|_| r.take_i64(8, "samples per record"))
        .collect::<Result<_>>()?;
    for _ in 0..n_signals {
        r.take(32, "signal reserved")?;
    }

    let mut signals = Vec::with_capacity(n_signals);
    for i in 0..n_signals {
        if phys_mins[i] == phys_maxs[i] {
            return Err(Error::Calibration(format!(
                "signal {:?}: physical minimum equals maximum ({}); the gain is undefined",
                labels[i], phys_mins[i]
            )));
        }
        if dig_mins[i] == dig_maxs[i] {
            return Err(Error::Calibration(format!(
                "signal {:?}: digital minimum equals maximum ({})",
                labels[i], dig_mins[i]
            )));
        }
        if dig_mins[i] < DIGITAL_MIN as i64 || dig_maxs[i] > DIGITAL_MAX as i64 {
            return Err(Error::Calibration(format!(
                "signal {:?}: digital range [{}, {}] exceeds 16-bit storage",
                labels[i], dig_mins[i], dig_maxs[i]
            )));
        }
        if samples_per_record[i] <= 0 {
            return Err(Error::FormatAt {
                offset: (HEADER_LEN + n_signals * 216 + i * 8) as u64,
                message: format!(
                    "signal {:?}: samples per record {} must be positive",
                    labels[i], samples_per_record[i]
                ),
            });
        }
        signals.push(SignalHeader {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            dimension: dimensions[i].clone(),
            physical_min: phys_mins[i],
            physical_max: phys_maxs[i],
            digital_min: dig_mins[i],
            digital_max: dig_maxs[i],
            prefiltering: prefilterings[i].clone(),
            samples_per_record: samples_per_record[i] as usize,
        });
    }

    let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
    let record_bytes = 2 * record_samples;
    let payload = bytes.len() - expected_header;
    let n_records = if n_records_field >= 0 {
        n_records_field as usize
    } else {
        // Unknown length by convention; infer from what is actually there.
        if record_bytes == 0 || payload % record_bytes != 0 {
            return Err(Error::FormatAt {
                offset: bytes.len() as u64,
                message: format!(
                    "record count is unknown and the {payload}-byte payload is not a whole number of {record_bytes}-byte records"
                ),
            });
        }
        payload / record_bytes
    };
    let expected_len = expected_header + n_records * record_bytes;
    if bytes.len() < expected_len {
        return Err(Error::FormatAt {
            offset: bytes.len() as u64,
            message: format!(
                "payload truncated: {} bytes present, {expected_len} needed for {n_records} records",
                bytes.len()
            ),
        });
    }

    let mut channels: Vec<Channel> = signals
        .iter()
        .map(|s| Channel {
            label: s.label.clone(),
            sample_rate_hz: s.samples_per_record as f64 / record_duration_s,
            samples: Vec::with_capacity(n_records * s.samples_per_record),
        })
        .collect();

    let mut cursor = expected_header;
    for _ in 0..n_records {
        for (s, ch) in signals.iter().zip(channels.iter_mut()) {
            let bitval = (s.physical_max - s.physical_min) / (s.digital_max - s.digital_min) as f64;
            for _ in 0..s.samples_per_record {
                let d = i16::from_le_bytes([bytes[cursor], bytes[cursor + 1]]) as f64;
                cursor += 2;
                ch.samples
                    .push((d - s.digital_min as f64) * bitval + s.physical_min);
            }
        }
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("patient".to_string(), patient);
    metadata.insert("recording".to_string(), recording_id);
    metadata.insert("reserved".to_string(), reserved);
    metadata.insert(
        "record_duration_s".to_string(),
        format_number(record_duration_s),
    );
    for s in &signals {
        if !s.dimension.is_empty() {
            metadata.insert(format!("dimension:{}", s.label), s.dimension.clone());
        }
        if !s.transducer.is_empty() {
            metadata.insert(format!("transducer:{}", s.label), s.transducer.clone());
        }
        if !s.prefiltering.is_empty() {
            metadata.insert(format!("prefiltering:{}", s.label), s.prefiltering.clone());
        }
        // Keep the calibration so a rewrite can reuse the same grid instead of
        // re-deriving limits from the data, which would requantize everything.
        metadata.insert(
            format!("physical_min:{}", s.label),
            format_number(s.physical_min),
        );
        metadata.insert(
            format!("physical_max:{}", s.label),
            format_number(s.physical_max),
        );
        metadata.insert(
            format!("digital_min:{}", s.label),
            s.digital_min.to_string(),
        );
        metadata.insert(
            format!("digital_max:{}", s.label),
            s.digital_max.to_string(),
        );
    }

    Ok(Recording {
        channels,
        start_date,
        start_time,
        metadata,
    })
}

/// Renders `v` into at most 8 ASCII characters, as EDF numeric fields demand.
///
/// Tries the shortest round-trip form first, then fixed and scientific
/// renderings, and keeps whichever fitting candidate re-parses closest to
/// `v`. Scientific is essential for tiny magnitudes, where every fixed
/// rendering collapses to zero.
fn format_number(v: f64) -> String {
    let shortest = format!("{v}");
    if shortest.len() <= 8 {
        return shortest;
    }
    let mut best: Option<(f64, String)> = None;
    let mut consider = |s: String| {
        if s.len() > 8 {
            return;
        }
        let Ok(back) = s.parse::<f64>() else { return };
        let err = (back - v).abs();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, s));
        }
    };
    for precision in (0..=6).rev() {
        consider(format!("{v:.precision$}"));
    }
    for precision in (0..=2).rev() {
        consider(format!("{v:.precision$e}"));
    }
    // "1e308" and "-1e308" fit, so every finite double has a candidate.
    best.expect("a finite double always has an 8-character rendering")
        .1
}

fn pad_field(text: &str, len: usize, what: &str) -> Result<Vec<u8>> {
    if !text.is_ascii() {
        return Err(Error::InvalidSpec(format!(
            "{what} {text:?} contains non-ASCII characters"
        )));
    }
    if text.len() > len {
        return Err(Error::InvalidSpec(format!(
            "{what} {text:?} exceeds {len} characters"
        )));
    }
    let mut out = text.as_bytes().to_vec();
    out.resize(len, b' ');
    Ok(out)
}

/// Encodes a recording as EDF with 1-second data records.
///
/// Every channel must have a positive integer sample rate and cover the same
/// whole number of seconds. A recording that came from [`parse_edf`] carries
/// its calibration in metadata and is re-encoded on the identical grid, bit
/// for bit. A freshly built recording gets limits derived from its data range
/// and loses up to half a quantization step on first write.
pub fn write_edf(recording: &Recording) -> Result<Vec<u8>> {
    if recording.channels.is_empty() {
        return Err(Error::InvalidSpec("recording has no channels".into()));
    }
    let mut n_records: Option<usize> = None;
    for ch in &recording.channels {
        let rate = ch.sample_rate_hz;
        if !(rate.is_finite() && rate > 0.0 && rate.fract() == 0.0) {
            return Err(Error::InvalidSpec(format!(
                "channel {:?}: rate {rate} Hz; 1-second records need a positive integer rate",
                ch.label
            )));
        }
        let per_record = rate as usize;
        if ch.samples.is_empty() || ch.samples.len() % per_record != 0 {
            return Err(Error::InvalidSpec(format!(
                "channel {:?}: {} samples is not a whole number of 1-second records at {rate} Hz",
                ch.label,
                ch.samples.len()
            )));
        }
        let records = ch.samples.len() / per_record;
        match n_records {
            None => n_records = Some(records),
            Some(existing) if existing != records => {
                return Err(Error::Alignment(format!(
                    "channel {:?} spans {records} s but an earlier channel spans {existing} s",
                    ch.label
                )));
            }
            Some(_) => {}
        }
        if let Some(i) = ch.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "channel {:?} sample {i} is {}",
                ch.label, ch.samples[i]
            )));
        }
    }
    let n_records = n_records.unwrap();
    let n_signals = recording.channels.len();

    // Calibration per channel: limits are rendered to their ASCII form and
    // re-parsed, and quantization uses the re-parsed values. Whatever
    // precision the 8-character fields lose, writer and reader agree on it.
    // The rendered minimum must not round above the smallest sample (nor the
    // maximum below the largest), or extremes would clip.
    struct Calib {
        min_text: String,
        max_text: String,
        physical_min: f64,
        physical_max: f64,
        digital_min: i64,
        digital_max: i64,
    }
    fn render_limit(value: f64, round_up: bool) -> (String, f64) {
        let mut candidate = value;
        let mut nudge = value.abs().max(1.0) * 1e-7;
        loop {
            let text = format_number(candidate);
            let parsed: f64 = text.parse().expect("format_number emits valid floats");
            if (round_up && parsed >= value) || (!round_up && parsed <= value) {
                return (text, parsed);
            }
            candidate = if round_up {
                value + nudge
            } else {
                value - nudge
            };
            nudge *= 10.0;
        }
    }
    fn stored_calibration(recording: &Recording, label: &str) -> Option<Calib> {
        let get = |prefix: &str| recording.metadata.get(&format!("{prefix}:{label}"));
        let physical_min: f64 = get("physical_min")?.parse().ok()?;
        let physical_max: f64 = get("physical_max")?.parse().ok()?;
        let digital_min: i64 = get("digital_min")?.parse().ok()?;
        let digital_max: i64 = get("digital_max")?.parse().ok()?;
        if !(physical_min.is_finite() && physical_max.is_finite()) {
            return None;
        }
        if physical_min == physical_max || digital_min >= digital_max {
            return None;
        }
        if digital_min < DIGITAL_MIN as i64 || digital_max > DIGITAL_MAX as i64 {
            return None;
        }
        let min_text = format_number(physical_min);
        let max_text = format_number(physical_max);
        Some(Calib {
            min_text,
            max_text,
            physical_min,
            physical_max,
            digital_min,
            digital_max,
        })
    }
    let mut calibs = Vec::with_capacity(n_signals);
    for ch in &recording.channels {
        let calib = stored_calibration(recording, &ch.label).unwrap_or_else(|| {
            let lo = ch.samples.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ch.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // A flat channel still needs a nonzero range for the gain.
            let (lo, hi) = if lo == hi { (lo, lo + 1.0) } else { (lo, hi) };
            let (min_text, physical_min) = render_limit(lo, false);
            let (max_text, physical_max) = render_limit(hi, true);
            Calib {
                min_text,
                max_text,
                physical_min,
                physical_max,
                digital_min: DIGITAL_MIN as i64,
                digital_max: DIGITAL_MAX as i64,
            }
        });
        calibs.push(calib);
    }

    let header_bytes = HEADER_LEN + n_signals * PER_SIGNAL_LEN;
    let mut out = Vec::with_capacity(
        header_bytes
            + 2 * n_records
                * recording
                    .channels
                    .iter()
                    .map(|c| c.sample_rate_hz as usize)
                    .sum::<usize>(),
    );
    let meta = |key: &str, default: &str| -> String {
        recording
            .metadata
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    };
    out.extend(pad_field("0", 8, "version")?);
    out.extend(pad_field(&meta("patient", "X"), 80, "patient id")?);
    out.extend(pad_field(&meta("recording", "X"), 80, "recording id")?);
    let date = if recording.start_date.is_empty() {
        "01.01.00"
    } else {
        &recording.start_date
    };
    let time = if recording.start_time.is_empty() {
        "00.00.00"
    } else {
        &recording.start_time
    };
    out.extend(pad_field(date, 8, "start date")?);
    out.extend(pad_field(time, 8, "start time")?);
    out.extend(pad_field(&header_bytes.to_string(), 8, "header size")?);
    out.extend(pad_field("", 44, "reserved")?);
    out.extend(pad_field(&n_records.to_string(), 8, "record count")?);
    out.extend(pad_field("1", 8, "record duration")?);
    out.extend(pad_field(&n_signals.to_string(), 4, "signal count")?);

    for ch in &recording.channels {
        out.extend(pad_field(&ch.label, 16, "label")?);
    }
    for ch in &recording.channels {
        out.extend(pad_field(
            &meta(&format!("transducer:{}", ch.label), ""),
            80,
            "transducer",
        )?);
    }
    for ch in &recording.channels {
        out.extend(pad_field(
            &meta(&format!("dimension:{}", ch.label), "uV"),
            8,
            "physical dimension",
        )?);
    }
    for c in &calibs {
        out.extend(pad_field(&c.min_text, 8, "physical minimum")?);
    }
    for c in &calibs {
        out.extend(pad_field(&c.max_text, 8, "physical maximum")?);
    }
    for c in &calibs {
        out.extend(pad_field(&c.digital_min.to_string(), 8, "digital minimum")?);
    }
    for c in &calibs {
        out.extend(pad_field(&c.digital_max.to_string(), 8, "digital maximum")?);
    }
    for ch in &recording.channels {
        out.extend(pad_field(
            &meta(&format!("prefiltering:{}", ch.label), ""),
            80,
            "prefiltering",
        )?);
    }
    for ch in &recording.channels {
        out.extend(pad_field(
            &(ch.sample_rate_hz as usize).to_string(),
            8,
            "samples per record",
        )?);
    }
    for _ in 0..n_signals {
        out.extend(pad_field("", 32, "signal reserved")?);
    }
    debug_assert_eq!(out.len(), header_bytes);

    for record in 0..n_records {
        for (ch, calib) in recording.channels.iter().zip(&calibs) {
            let per_record = ch.sample_rate_hz as usize;
            let bitval = (calib.physical_max - calib.physical_min)
                / (calib.digital_max - calib.digital_min) as f64;
            let start = record * per_record;
            for &p in &ch.samples[start..start + per_record] {
                let d = ((p - calib.physical_min) / bitval).round() as i64 + calib.digital_min;
                let d = d.clamp(calib.digital_min, calib.digital_max) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(out)
}
