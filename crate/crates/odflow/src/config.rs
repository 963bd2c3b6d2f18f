//! Run configuration: defaults, file loading, flag overrides, and the
//! canonical serialized form that is echoed into output sidecars and hashed.
//!
//! The echoed form must identify the analysis, not the machine it ran on, so
//! `workers` is accepted as input but never serialized: two runs that differ
//! only in thread count produce byte-identical outputs and equal hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use odflow_core::od::ScalingConfig;
use odflow_core::places::PlaceParams;
use odflow_core::time::TzOffset;

use crate::error::{CliError, CliResult};

/// How timestamps in CSV inputs are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsFormat {
    /// Integer seconds since the Unix epoch, UTC.
    Unix,
    /// RFC 3339 timestamps with an explicit offset, e.g. `2011-04-04T08:30:00+08:00`.
    Rfc3339,
}

impl TsFormat {
    pub fn parse_flag(s: &str) -> CliResult<Self> {
        match s {
            "unix" => Ok(TsFormat::Unix),
            "rfc3339" => Ok(TsFormat::Rfc3339),
            other => Err(CliError::config_invalid(format!(
                "ts-format must be \"unix\" or \"rfc3339\", got {other:?}"
            ))),
        }
    }
}

/// One analysis window expressed as local civil hours, half-open.
pub type HourRange = (u32, u32);

/// Complete parameterization of a pipeline run.
///
/// Unknown keys in a config file are rejected rather than ignored: a typo in
/// a parameter name must not silently fall back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // Inputs and outputs.
    pub cdr: Option<PathBuf>,
    pub towers: Option<PathBuf>,
    pub legs: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub districts: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    // Input parsing.
    pub ts_format: TsFormat,
    /// Runs abort when more than this fraction of CDR or leg data lines is malformed.
    pub max_malformed_fraction: f64,

    // Stay detection and trip extraction.
    pub delta_d_m: f64,
    pub delta_t_min: f64,
    pub frequent_threshold_min: f64,

    // Significant places.
    pub radius_m: f64,
    pub min_share: f64,
    pub max_iter: u32,

    // Smart-card journey chaining.
    pub transfer_min: f64,

    // Population upscaling. `frequent_share` falls back to the measured
    // frequent-user fraction when unset.
    pub market_share: f64,
    pub penetration: f64,
    pub frequent_share: Option<f64>,

    // Time windows.
    pub timezone: String,
    pub granularity: String,
    pub workdays_only: bool,
    pub morning: HourRange,
    pub midday: HourRange,
    pub evening: HourRange,

    // Reports.
    pub top_k: usize,
    /// Monte Carlo sample pairs per district for the intra-district distance
    /// report; 0 disables the report.
    pub intra_samples: u32,
    pub flow_geojson: bool,
    pub seed: u64,

    // Execution. Thread count must not influence results, so it is excluded
    // from the serialized echo and from the config hash.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cdr: None,
            towers: None,
            legs: None,
            stations: None,
            districts: None,
            out_dir: None,
            ts_format: TsFormat::Unix,
            max_malformed_fraction: 0.01,
            delta_d_m: 2000.0,
            delta_t_min: 20.0,
            frequent_threshold_min: 60.0,
            radius_m: 1000.0,
            min_share: 0.15,
            max_iter: 50,
            transfer_min: 45.0,
            market_share: 0.453,
            penetration: 1.44,
            frequent_share: None,
            timezone: "Asia/Singapore".to_owned(),
            granularity: "1h".to_owned(),
            workdays_only: true,
            morning: (6, 10),
            midday: (10, 17),
            evening: (17, 22),
            top_k: 50,
            intra_samples: 0,
            flow_geojson: false,
            seed: 0,
            workers: 0,
        }
    }
}

impl RunConfig {
    /// Loads a config file. File problems are config errors, not input errors:
    /// the config is rejected before the pipeline touches any data.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config_invalid(format!("{}: {}", path.display(), e)))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config_invalid(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects out-of-range parameters with a message naming the field.
    pub fn validate(&self) -> CliResult<()> {
        fn positive(name: &str, v: f64) -> CliResult<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::config_invalid(format!("{name} must be positive, got {v}")))
            }
        }
        fn fraction(name: &str, v: f64) -> CliResult<()> {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::config_invalid(format!("{name} must be in [0, 1], got {v}")))
            }
        }
        fn hours(name: &str, (h0, h1): HourRange) -> CliResult<()> {
            if h0 < h1 && h1 <= 24 {
                Ok(())
            } else {
                Err(CliError::config_invalid(format!(
                    "{name} must satisfy 0 <= start < end <= 24, got [{h0}, {h1})"
                )))
            }
        }

        positive("delta_d_m", self.delta_d_m)?;
        positive("delta_t_min", self.delta_t_min)?;
        positive("frequent_threshold_min", self.frequent_threshold_min)?;
        positive("radius_m", self.radius_m)?;
        positive("transfer_min", self.transfer_min)?;
        fraction("min_share", self.min_share)?;
        fraction("max_malformed_fraction", self.max_malformed_fraction)?;
        if self.max_iter == 0 {
            return Err(CliError::config_invalid("max_iter must be at least 1"));
        }
        positive("market_share", self.market_share)?;
        positive("penetration", self.penetration)?;
        if let Some(f) = self.frequent_share {
            positive("frequent_share", f)?;
        }
        hours("morning", self.morning)?;
        hours("midday", self.midday)?;
        hours("evening", self.evening)?;
        self.tz()?;
        self.granularity_s()?;
        Ok(())
    }

    /// Applies an `Option`-valued flag override; flags win over file values.
    pub fn override_with<T>(field: &mut T, flag: Option<T>) {
        if let Some(v) = flag {
            *field = v;
        }
    }

    pub fn tz(&self) -> CliResult<TzOffset> {
        parse_timezone(&self.timezone).ok_or_else(|| {
            CliError::config_invalid(format!(
                "unknown timezone {:?}; use a named zone or a fixed offset like \"+08:00\"",
                self.timezone
            ))
        })
    }

    pub fn granularity_s(&self) -> CliResult<i64> {
        parse_granularity(&self.granularity).ok_or_else(|| {
            CliError::config_invalid(format!(
                "granularity must look like \"1h\", \"30m\", or \"900s\", got {:?}",
                self.granularity
            ))
        })
    }

    pub fn place_params(&self) -> PlaceParams {
        PlaceParams {
            radius_m: self.radius_m,
            min_share: self.min_share,
            max_iter: self.max_iter,
        }
    }

    /// Builds the upscaling factors, substituting the measured frequent-user
    /// share when the config leaves `frequent_share` unset.
    pub fn scaling(&self, measured_frequent_share: f64) -> CliResult<ScalingConfig> {
        let f = self.frequent_share.unwrap_or(measured_frequent_share);
        ScalingConfig::new(self.market_share, self.penetration, f).map_err(|e| {
            CliError::input_invalid(format!("cannot build upscaling factors: {e}"))
        })
    }

    /// The canonical serialized form: pretty JSON with struct field order.
    /// This exact byte sequence is echoed into sidecars and hashed.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// Accepts a small table of named zones plus fixed offsets (`+08:00`,
/// `-05:30`, `+08`). Named-zone support is deliberately narrow: the study
/// cities this ships with, plus UTC.
pub fn parse_timezone(s: &str) -> Option<TzOffset> {
    match s {
        "UTC" | "utc" | "Z" => return TzOffset::from_seconds(0).ok(),
        "Asia/Singapore" => return TzOffset::from_seconds(8 * 3600).ok(),
        _ => {}
    }
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1i32, &s[1..]),
        b'-' => (-1i32, &s[1..]),
        _ => return None,
    };
    let (h, m) = match rest.split_once(':') {
        Some((h, m)) => (h, m),
        None => (rest, "0"),
    };
    if h.is_empty() || h.len() > 2 || m.len() > 2 {
        return None;
    }
    let h: i32 = h.parse().ok()?;
    let m: i32 = m.parse().ok()?;
    if m >= 60 {
        return None;
    }
    TzOffset::from_seconds(sign * (h * 3600 + m * 60)).ok()
}

/// Parses a duration of the form `<n>h`, `<n>m`, or `<n>s` into seconds.
pub fn parse_granularity(s: &str) -> Option<i64> {
    let (num, unit) = s.split_at(s.len().checked_sub(1)?);
    let n: i64 = num.parse().ok()?;
    if n <= 0 {
        return None;
    }
    let secs = match unit {
        "h" => n.checked_mul(3600)?,
        "m" => n.checked_mul(60)?,
        "s" => n,
        _ => return None,
    };
    (secs <= 7 * 86_400).then_some(secs)
}
