//! Pipeline configuration from three layers: built-in defaults, an optional
//! key-value config file, and command-line flags, in rising precedence.
//!
//! The file format is one `key = value` pair per line; blank lines and
//! `#` comments are skipped. Keys:
//!
//! ```text
//! channel = Cz
//! epoch_s = 30
//! target_rate_hz = 200
//! nw_smoothing_hz = 0.5
//! n_tapers = 29
//! fit_lo_hz = 30
//! fit_hi_hz = 45
//! wake_cut = -2.45
//! rem_cut = -3.2
//! sparsify_epsilon = 0
//! zero_phase = false
//! ```

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use arousal_core::pipeline::PipelineConfig;
use arousal_core::{Error, Result};
use clap::Args;

/// Flags shared by every subcommand that runs the pipeline. Each one
/// overrides the matching field; unset flags leave the file value or
/// default in place.
#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Key-value config file; flags still win over its entries.
    #[arg(long, env = "AROUSAL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Channel label the pipeline reads.
    #[arg(long)]
    pub channel: Option<String>,
    /// Epoch length, seconds.
    #[arg(long)]
    pub epoch_s: Option<f64>,
    /// Analysis sample rate the input is brought to, Hz.
    #[arg(long)]
    pub target_rate: Option<f64>,
    /// Spectral smoothing half-bandwidth, Hz.
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Taper count override; omitted means derived from the smoothing.
    #[arg(long)]
    pub tapers: Option<usize>,
    /// Lower slope-fit band edge, Hz.
    #[arg(long)]
    pub fit_lo: Option<f64>,
    /// Upper slope-fit band edge, Hz.
    #[arg(long)]
    pub fit_hi: Option<f64>,
    /// Slopes above this stage as wake.
    #[arg(long)]
    pub wake_cut: Option<f64>,
    /// Slopes below this stage as REM.
    #[arg(long)]
    pub rem_cut: Option<f64>,
    /// Taper truncation threshold; 0 keeps tapers dense.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Run the denoising filter forward and backward.
    #[arg(long)]
    pub zero_phase: bool,
}

impl ConfigArgs {
    /// Defaults, then the config file when given, then the flags.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| crate::inputs::io_at(path, e))?;
            apply_file(&mut config, &text)?;
        }
        if let Some(v) = &self.channel {
            config.channel_label = v.clone();
        }
        if let Some(v) = self.epoch_s {
            config.epoch_s = v;
        }
        if let Some(v) = self.target_rate {
            config.target_rate_hz = v;
        }
        if let Some(v) = self.smoothing {
            config.nw_smoothing_hz = v;
        }
        if let Some(v) = self.tapers {
            config.n_tapers = Some(v);
        }
        if let Some(v) = self.fit_lo {
            config.fit_band_hz.0 = v;
        }
        if let Some(v) = self.fit_hi {
            config.fit_band_hz.1 = v;
        }
        if let Some(v) = self.wake_cut {
            config.thresholds.wake_cut = v;
        }
        if let Some(v) = self.rem_cut {
            config.thresholds.rem_cut = v;
        }
        if let Some(v) = self.epsilon {
            config.sparsify_epsilon = v;
        }
        if self.zero_phase {
            config.zero_phase = true;
        }
        Ok(config)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("config key {key} has unusable value {value:?}")))
}

fn apply_file(config: &mut PipelineConfig, text: &str) -> Result<()> {
    for (index, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "config line {}: expected `key = value`, got {raw:?}",
                index + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "channel" => config.channel_label = value.to_string(),
            "epoch_s" => config.epoch_s = parse_value(key, value)?,
            "target_rate_hz" => config.target_rate_hz = parse_value(key, value)?,
            "nw_smoothing_hz" => config.nw_smoothing_hz = parse_value(key, value)?,
            "n_tapers" => config.n_tapers = Some(parse_value(key, value)?),
            "fit_lo_hz" => config.fit_band_hz.0 = parse_value(key, value)?,
            "fit_hi_hz" => config.fit_band_hz.1 = parse_value(key, value)?,
            "wake_cut" => config.thresholds.wake_cut = parse_value(key, value)?,
            "rem_cut" => config.thresholds.rem_cut = parse_value(key, value)?,
            "sparsify_epsilon" => config.sparsify_epsilon = parse_value(key, value)?,
            "zero_phase" => config.zero_phase = parse_value(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "config line {}: unknown key {other:?}",
                    index + 1
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let mut config = PipelineConfig::default();
        apply_file(
            &mut config,
            "# tuned for anesthesia\nepoch_s = 10\nchannel = Fp1 # frontal\nwake_cut=-2.0\n",
        )
        .unwrap();
        assert_eq!(config.epoch_s, 10.0);
        assert_eq!(config.channel_label, "Fp1");
        assert_eq!(config.thresholds.wake_cut, -2.0);
        assert_eq!(config.target_rate_hz, 200.0, "untouched keys keep defaults");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut config = PipelineConfig::default();
        let unknown = apply_file(&mut config, "epoch = 30\n");
        assert!(unknown.is_err());
        let bad = apply_file(&mut config, "epoch_s = soon\n");
        assert!(matches!(bad, Err(Error::Config(_))));
        let shapeless = apply_file(&mut config, "epoch_s 30\n");
        assert!(shapeless.is_err());
    }

    #[test]
    fn flags_win_over_the_resolved_stack() {
        let args = ConfigArgs {
            config: None,
            channel: Some("Oz".to_string()),
            epoch_s: None,
            target_rate: None,
            smoothing: None,
            tapers: Some(5),
            fit_lo: None,
            fit_hi: None,
            wake_cut: None,
            rem_cut: None,
            epsilon: None,
            zero_phase: true,
        };
        let config = args.resolve().unwrap();
        assert_eq!(config.channel_label, "Oz");
        assert_eq!(config.n_tapers, Some(5));
        assert!(config.zero_phase);
        assert_eq!(config.epoch_s, 30.0);
    }
}
