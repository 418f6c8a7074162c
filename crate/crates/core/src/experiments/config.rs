//! Experiment configuration: a TOML document with `[scenario]`,
//! `[optimizer]` and `[output]` sections. Unknown keys are rejected, and
//! dotted-path overrides (`scenario.trials=500`) are applied on top of the
//! file, which is applied on top of the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::uplink::{ReceiveFilter, MAX_ENUMERATED_USERS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Downlink,
    Uplink,
    Region,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Downlink => "downlink",
            ScenarioKind::Uplink => "uplink",
            ScenarioKind::Region => "region",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rsma,
    Sdma,
    Noma,
    Oma,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Rsma => "rsma",
            Scheme::Sdma => "sdma",
            Scheme::Noma => "noma",
            Scheme::Oma => "oma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSource {
    Rayleigh,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Mmse,
    Matched,
}

impl From<FilterKind> for ReceiveFilter {
    fn from(f: FilterKind) -> Self {
        match f {
            FilterKind::Mmse => ReceiveFilter::Mmse,
            FilterKind::Matched => ReceiveFilter::Matched,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n_tx: usize,
    pub n_users: usize,
    pub snr_grid_db: Vec<f64>,
    /// CSIT quality exponent; absent means perfect CSIT.
    pub alpha: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    pub channel: ChannelSource,
    /// Per-user rows of `[re, im]` pairs, used when `channel = "fixture"`.
    pub fixture: Option<Vec<Vec<[f64; 2]>>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Downlink,
            n_tx: 2,
            n_users: 2,
            snr_grid_db: vec![20.0],
            alpha: None,
            trials: 100,
            master_seed: 0,
            schemes: vec![Scheme::Rsma, Scheme::Sdma, Scheme::Noma, Scheme::Oma],
            channel: ChannelSource::Rayleigh,
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Points on the common-power-fraction grid.
    pub grid_size: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Posterior samples for the imperfect-CSIT split search.
    pub robust_samples: usize,
    /// Points per split user on the uplink split-fraction grid.
    pub split_grid: usize,
    pub receive_filter: FilterKind,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_size: crate::precoder::DEFAULT_GRID_SIZE,
            max_iters: crate::precoder::DEFAULT_MAX_ITERS,
            tol: crate::precoder::DEFAULT_TOL,
            robust_samples: 64,
            split_grid: crate::uplink::DEFAULT_SPLIT_GRID,
            receive_filter: FilterKind::Mmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File name (no directories) of the results CSV inside `dir`.
    pub file: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            file: "results.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

/// Every settable dotted key.
pub const KNOWN_KEYS: &[&str] = &[
    "scenario.kind",
    "scenario.n_tx",
    "scenario.n_users",
    "scenario.snr_grid_db",
    "scenario.alpha",
    "scenario.trials",
    "scenario.master_seed",
    "scenario.schemes",
    "scenario.channel",
    "scenario.fixture",
    "optimizer.grid_size",
    "optimizer.max_iters",
    "optimizer.tol",
    "optimizer.robust_samples",
    "optimizer.split_grid",
    "optimizer.receive_filter",
    "output.dir",
    "output.file",
];

fn check_keys(table: &toml::Table) -> Result<()> {
    for (section, value) in table {
        let Some(inner) = value.as_table() else {
            return Err(Error::config(section.as_str(), "expected a [section] table"));
        };
        for key in inner.keys() {
            let path = format!("{section}.{key}");
            if !KNOWN_KEYS.contains(&path.as_str()) {
                return Err(Error::config(path, "unknown key"));
            }
        }
        if !KNOWN_KEYS.iter().any(|k| k.starts_with(&format!("{section}."))) {
            return Err(Error::config(section.as_str(), "unknown section"));
        }
    }
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string (`scenario.kind=uplink`).
fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Splits `KEY=VALUE`.
pub fn parse_assignment(text: &str) -> Result<(String, String)> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::config(text, "override must look like section.key=value")),
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    if !KNOWN_KEYS.contains(&key) {
        return Err(Error::config(key, "unknown key"));
    }
    let (section, field) = key.split_once('.').expect("known keys are dotted");
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let inner = entry
        .as_table_mut()
        .ok_or_else(|| Error::config(section, "expected a [section] table"))?;
    inner.insert(field.to_string(), parse_override_value(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Parses `text`, applies `overrides` in order, and validates.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        check_keys(&table)?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<file>".to_string() } else { path }, e.into_inner().message().to_string())
        })?;
        if config.scenario.alpha == Some(f64::INFINITY) {
            config.scenario.alpha = None;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.n_tx == 0 {
            return Err(Error::config("scenario.n_tx", "must be >= 1"));
        }
        if s.n_users == 0 {
            return Err(Error::config("scenario.n_users", "must be >= 1"));
        }
        if s.snr_grid_db.is_empty() {
            return Err(Error::config("scenario.snr_grid_db", "must be nonempty"));
        }
        if s.snr_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("scenario.snr_grid_db", "entries must be finite"));
        }
        if let Some(a) = s.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::config("scenario.alpha", "must be finite and >= 0"));
            }
        }
        if s.trials == 0 {
            return Err(Error::config("scenario.trials", "must be >= 1"));
        }
        if s.schemes.is_empty() {
            return Err(Error::config("scenario.schemes", "must be nonempty"));
        }
        match (s.channel, &s.fixture) {
            (ChannelSource::Fixture, None) => {
                return Err(Error::config("scenario.fixture", "required when scenario.channel = \"fixture\""));
            }
            (ChannelSource::Fixture, Some(rows)) => {
                if rows.len() != s.n_users || rows.iter().any(|r| r.len() != s.n_tx) {
                    return Err(Error::config(
                        "scenario.fixture",
                        format!("must have n_users = {} rows of n_tx = {} entries", s.n_users, s.n_tx),
                    ));
                }
                if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::config("scenario.fixture", "entries must be finite"));
                }
            }
            _ => {}
        }
        if s.kind == ScenarioKind::Region && s.n_users != 2 {
            return Err(Error::config("scenario.n_users", "region scenario needs exactly 2 users"));
        }
        if s.kind == ScenarioKind::Uplink && s.schemes.contains(&Scheme::Rsma) && s.n_users > MAX_ENUMERATED_USERS {
            return Err(Error::config(
                "scenario.n_users",
                format!("uplink rsma enumerates decoding orders and supports at most {MAX_ENUMERATED_USERS} users"),
            ));
        }
        let o = &self.optimizer;
        if o.grid_size < 2 {
            return Err(Error::config("optimizer.grid_size", "must be >= 2"));
        }
        if o.split_grid < 2 {
            return Err(Error::config("optimizer.split_grid", "must be >= 2"));
        }
        if !(o.tol > 0.0) {
            return Err(Error::config("optimizer.tol", "must be > 0"));
        }
        if o.robust_samples == 0 {
            return Err(Error::config("optimizer.robust_samples", "must be >= 1"));
        }
        let f = &self.output.file;
        if f.is_empty() || f.contains('/') || f.contains('\\') || f == "." || f == ".." {
            return Err(Error::config("output.file", "must be a plain file name inside output.dir"));
        }
        Ok(())
    }

    /// Rows a downlink/uplink run produces.
    pub fn expected_rows(&self) -> usize {
        self.scenario.schemes.len() * self.scenario.snr_grid_db.len() * self.scenario.trials
    }

    pub fn output_path(&self) -> PathBuf {
        self.output.dir.join(&self.output.file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[scenario]
kind = "downlink"
n_tx = 2
n_users = 2
snr_grid_db = [0.0, 10.0]
alpha = 0.5
trials = 3
master_seed = 9
schemes = ["rsma", "sdma"]

[optimizer]
grid_size = 9

[output]
dir = "out"
file = "r.csv"
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml_str(SAMPLE, &[]).unwrap();
        assert_eq!(c.scenario.trials, 3);
        assert_eq!(c.scenario.alpha, Some(0.5));
        assert_eq!(c.optimizer.grid_size, 9);
        assert_eq!(c.optimizer.max_iters, 500);
        assert_eq!(c.expected_rows(), 12);
        assert_eq!(c.output_path(), PathBuf::from("out/r.csv"));
        let empty = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(empty, ExperimentConfig::default());
    }

    #[test]
    fn overrides_take_precedence() {
        let o = vec![
            ("scenario.trials".to_string(), "500".to_string()),
            ("scenario.kind".to_string(), "uplink".to_string()),
            ("optimizer.tol".to_string(), "1e-3".to_string()),
        ];
        let c = ExperimentConfig::from_toml_str(SAMPLE, &o).unwrap();
        assert_eq!(c.scenario.trials, 500);
        assert_eq!(c.scenario.kind, ScenarioKind::Uplink);
        assert_eq!(c.optimizer.tol, 1e-3);
    }

    #[test]
    fn unknown_keys_name_the_field() {
        let err = ExperimentConfig::from_toml_str("[scenario]\nbogus = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "scenario.bogus"), "{err}");
        let err = ExperimentConfig::from_toml_str("[extra]\nx = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "extra.x" || field == "extra"));
        let err = ExperimentConfig::from_toml_str(SAMPLE, &[("scenario.trails".into(), "3".into())]).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "scenario.trails"));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cases = [
            ("scenario.trials", "0"),
            ("scenario.snr_grid_db", "[]"),
            ("scenario.schemes", "[]"),
            ("scenario.alpha", "-1.0"),
            ("optimizer.grid_size", "1"),
            ("output.file", "\"../x.csv\""),
        ];
        for (k, v) in cases {
            let err = ExperimentConfig::from_toml_str(SAMPLE, &[(k.into(), v.into())]).unwrap_err();
            assert!(matches!(err, Error::Config { ref field, .. } if field == k), "{k}: {err}");
        }
    }

    #[test]
    fn fixture_shape_checked() {
        let text = "[scenario]\nchannel = \"fixture\"\nn_tx = 1\nn_users = 2\nfixture = [[[1.0, 0.0]], [[1.0, 0.0]]]\n";
        assert!(ExperimentConfig::from_toml_str(text, &[]).is_ok());
        let bad = "[scenario]\nchannel = \"fixture\"\nn_tx = 2\nn_users = 2\nfixture = [[[1.0, 0.0]], [[1.0, 0.0]]]\n";
        assert!(ExperimentConfig::from_toml_str(bad, &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("[scenario]\nchannel = \"fixture\"\n", &[]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml_str(SAMPLE, &[]).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string(), &[]).unwrap();
        assert_eq!(c, again);
    }
}
