//! Campaign configuration and its flat `key = value` file format.
//!
//! ```text
//! # lines starting with '#' are comments; every key is optional
//! audit_kinds = identity, moments, inequalities, limits, regression
//! q_grid = 0.1, 0.3, 0.5
//! x_grid_size = 9
//! s_grid_size = 11
//! r_values = 1, 2
//! corpus = square, exp
//! pairings = as_stated, swapped
//! holder_first_factors = stated_qt, proof_qt_pow_p
//! moment_sources = series, closed_paper, closed_corrected
//! eps_rel = 1e-14
//! n_max = 200000
//! seed = 24301
//! convexity_samples = 10000
//! format = csv
//! out = report.csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_SEED;
use crate::error::{QError, Result};
use crate::inequalities::{HolderFirstFactor, Pairing};
use crate::moments::MomentSource;
use crate::qcore::{QParam, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Identity,
    Moments,
    Inequalities,
    Limits,
    Regression,
}

impl AuditKind {
    pub const ALL: [AuditKind; 5] = [
        Self::Identity,
        Self::Moments,
        Self::Inequalities,
        Self::Limits,
        Self::Regression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Moments => "moments",
            Self::Inequalities => "inequalities",
            Self::Limits => "limits",
            Self::Regression => "regression",
        }
    }
}

impl FromStr for AuditKind {
    type Err = QError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| QError::Config(format!("unknown audit kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = QError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(QError::Config(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub audit_kinds: Vec<AuditKind>,
    pub q_grid: Vec<f64>,
    pub x_grid_size: usize,
    pub s_grid_size: usize,
    pub r_values: Vec<f64>,
    /// Corpus member names to include; empty means all.
    pub corpus_filter: Vec<String>,
    pub pairings: Vec<Pairing>,
    pub holder_first_factors: Vec<HolderFirstFactor>,
    pub moment_sources: Vec<MomentSource>,
    pub policy: TruncationPolicy,
    pub seed: u64,
    pub convexity_samples: usize,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            audit_kinds: AuditKind::ALL.to_vec(),
            q_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            x_grid_size: 9,
            s_grid_size: 11,
            r_values: vec![1.0, 2.0],
            corpus_filter: Vec::new(),
            pairings: Pairing::ALL.to_vec(),
            holder_first_factors: HolderFirstFactor::ALL.to_vec(),
            moment_sources: MomentSource::ALL.to_vec(),
            policy: TruncationPolicy::default(),
            seed: DEFAULT_SEED,
            convexity_samples: 10_000,
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| QError::Config(format!("{key}: `{s}`: {e}")))
        })
        .collect()
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| QError::Config(format!("{key}: `{}`: {e}", value.trim())))
}

/// Parses `0x`-prefixed hexadecimal or decimal.
pub fn parse_seed(value: &str) -> Result<u64> {
    let v = value.trim();
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|e| QError::Config(format!("seed: `{v}`: {e}")))
}

/// Parses a comma-separated list of reals.
pub fn parse_real_list(key: &str, value: &str) -> Result<Vec<f64>> {
    parse_list(key, value)
}

impl CampaignConfig {
    /// Applies `key = value` lines on top of the defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                QError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> std::result::Result<Self, ConfigLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigLoadError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(ConfigLoadError::Invalid)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "audit_kinds" => self.audit_kinds = parse_list(key, value)?,
            "q_grid" => self.q_grid = parse_list(key, value)?,
            "x_grid_size" => self.x_grid_size = parse_scalar(key, value)?,
            "s_grid_size" => self.s_grid_size = parse_scalar(key, value)?,
            "r_values" => self.r_values = parse_list(key, value)?,
            "corpus" => self.corpus_filter = parse_list(key, value)?,
            "pairings" => self.pairings = parse_list(key, value)?,
            "holder_first_factors" => self.holder_first_factors = parse_list(key, value)?,
            "moment_sources" => self.moment_sources = parse_list(key, value)?,
            "eps_rel" => self.policy.eps_rel = parse_scalar(key, value)?,
            "n_max" => self.policy.n_max = parse_scalar(key, value)?,
            "seed" => self.seed = parse_seed(value)?,
            "convexity_samples" => self.convexity_samples = parse_scalar(key, value)?,
            "format" => self.format = parse_scalar(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            other => return Err(QError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(QError::Config(msg));
        if self.audit_kinds.is_empty() {
            return fail("audit_kinds is empty".into());
        }
        if self.q_grid.is_empty() {
            return fail("q_grid is empty".into());
        }
        for &q in &self.q_grid {
            QParam::new(q).map_err(|e| QError::Config(format!("q_grid: {e}")))?;
        }
        if self.x_grid_size < 2 {
            return fail(format!(
                "x_grid_size must be >= 2, got {}",
                self.x_grid_size
            ));
        }
        if self.s_grid_size < 2 {
            return fail(format!(
                "s_grid_size must be >= 2, got {}",
                self.s_grid_size
            ));
        }
        if self.r_values.is_empty() {
            return fail("r_values is empty".into());
        }
        if let Some(r) = self
            .r_values
            .iter()
            .find(|r| !(r.is_finite() && **r >= 1.0))
        {
            return fail(format!("r_values: {r} is not >= 1"));
        }
        if self.pairings.is_empty()
            || self.holder_first_factors.is_empty()
            || self.moment_sources.is_empty()
        {
            return fail("variant selections must be non-empty".into());
        }
        TruncationPolicy::new(self.policy.eps_rel, self.policy.n_max)
            .map_err(|e| QError::Config(e.to_string()))?;
        if self.convexity_samples == 0 {
            return fail("convexity_samples must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigLoadError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error(transparent)]
    Invalid(QError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = CampaignConfig::default();
        c.validate().unwrap();
        assert_eq!(c.q_grid.len(), 9);
        assert_eq!(c.seed, 0x5EED);
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = CampaignConfig::parse(
            "# campaign\naudit_kinds = identity, limits\nq_grid = 0.25,0.5\nseed = 0x10\nr_values = 1.5\nformat = json\n\n",
        )
        .unwrap();
        assert_eq!(c.audit_kinds, vec![AuditKind::Identity, AuditKind::Limits]);
        assert_eq!(c.q_grid, vec![0.25, 0.5]);
        assert_eq!(c.seed, 16);
        assert_eq!(c.r_values, vec![1.5]);
        assert_eq!(c.format, OutputFormat::Json);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "q_grid =",
            "q_grid = 0.5, 1.0",
            "x_grid_size = 1",
            "r_values = 0.5",
            "audit_kinds = everything",
            "colour = blue",
            "just a line",
            "n_max = 0",
        ] {
            assert!(CampaignConfig::parse(text).is_err(), "{text}");
        }
    }
}
