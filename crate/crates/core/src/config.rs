//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::embeddings::{DEFAULT_EMBED_SEED, DEFAULT_FALLBACK_DIM};
use crate::evaluate::PipelineConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} set twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {0}: expected `key = value`")]
    Malformed(usize),
    #[error("bad value for {key:?}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub embed_fallback_dim: usize,
    pub embed_seed: u64,
    pub station: Option<String>,
    pub disease_file: Option<PathBuf>,
    pub symptom_file: Option<PathBuf>,
    pub demographics_file: Option<PathBuf>,
    pub weather_cache_dir: Option<PathBuf>,
    /// Root of the fixture observation tree served to `weather-sync`.
    pub weather_fixture_dir: Option<PathBuf>,
    /// Daily summary file written by `weather-aggregate` and read by training.
    pub weather_daily_file: Option<PathBuf>,
    pub embedding_cache: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub requests_per_second: Option<f64>,
    pub sync_start: Option<NaiveDate>,
    pub sync_end: Option<NaiveDate>,
    /// Directory relative paths were resolved against.
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            embed_fallback_dim: DEFAULT_FALLBACK_DIM,
            embed_seed: DEFAULT_EMBED_SEED,
            station: None,
            disease_file: None,
            symptom_file: None,
            demographics_file: None,
            weather_cache_dir: None,
            weather_fixture_dir: None,
            weather_daily_file: None,
            embedding_cache: None,
            output_dir: None,
            requests_per_second: None,
            sync_start: None,
            sync_end: None,
            base_dir: PathBuf::from("."),
        }
    }
}

pub const KEYS: [&str; 23] = [
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "lambda",
    "epochs",
    "batch_size",
    "seed",
    "layer_sizes",
    "embed_fallback_dim",
    "embed_seed",
    "station",
    "disease_file",
    "symptom_file",
    "demographics_file",
    "weather_cache_dir",
    "weather_fixture_dir",
    "weather_daily_file",
    "embedding_cache",
    "output_dir",
    "requests_per_second",
    "sync_start",
    "sync_end",
];

fn number<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, format!("cannot parse {value:?}")))
}

fn finite(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = number(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, "must be finite"))
    }
}

fn layer_sizes(value: &str) -> Result<Vec<usize>, ConfigError> {
    let sizes = value
        .split(',')
        .map(|p| number::<usize>("layer_sizes", p.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.contains(&0) {
        return Err(bad("layer_sizes", "widths must be positive"));
    }
    if sizes.last() != Some(&1) {
        return Err(bad("layer_sizes", "the last layer must have width 1"));
    }
    Ok(sizes)
}

impl Config {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(content: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Config {
            base_dir: base_dir.to_path_buf(),
            ..Default::default()
        };
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in content.lines().enumerate() {
            let line = idx + 1;
            let text = raw.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let (key, value) = text.split_once('=').ok_or(ConfigError::Malformed(line))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(known) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            cfg.set(key, value)?;
        }
        cfg.pipeline
            .hyper
            .validate()
            .map_err(|e| match e {
                crate::nn::NnError::BadHyperParam(name) => bad(name, "outside its allowed range"),
                other => bad("hyperparameters", other.to_string()),
            })?;
        Ok(cfg)
    }

    fn path(&self, value: &str) -> PathBuf {
        self.base_dir.join(value)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let hp = &mut self.pipeline.hyper;
        match key {
            "learning_rate" => hp.learning_rate = finite(key, value)?,
            "beta1" => hp.beta1 = finite(key, value)?,
            "beta2" => hp.beta2 = finite(key, value)?,
            "epsilon" => hp.epsilon = finite(key, value)?,
            "lambda" => hp.lambda = finite(key, value)?,
            "epochs" => hp.epochs = number(key, value)?,
            "batch_size" => hp.batch_size = number(key, value)?,
            "seed" => hp.seed = number(key, value)?,
            "layer_sizes" => self.pipeline.layer_sizes = layer_sizes(value)?,
            "embed_fallback_dim" => {
                self.embed_fallback_dim = number(key, value)?;
                if self.embed_fallback_dim == 0 {
                    return Err(bad(key, "must be positive"));
                }
            }
            "embed_seed" => self.embed_seed = number(key, value)?,
            "station" => {
                if value.is_empty() {
                    return Err(bad(key, "must not be empty"));
                }
                self.station = Some(value.to_string());
            }
            "requests_per_second" => {
                let r = finite(key, value)?;
                if r <= 0.0 {
                    return Err(bad(key, "must be positive"));
                }
                self.requests_per_second = Some(r);
            }
            "sync_start" | "sync_end" => {
                let d = NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| bad(key, format!("expected YYYY-MM-DD, found {value:?}")))?;
                if key == "sync_start" {
                    self.sync_start = Some(d);
                } else {
                    self.sync_end = Some(d);
                }
            }
            _ => {
                if value.is_empty() {
                    return Err(bad(key, "path must not be empty"));
                }
                let p = Some(self.path(value));
                match key {
                    "disease_file" => self.disease_file = p,
                    "symptom_file" => self.symptom_file = p,
                    "demographics_file" => self.demographics_file = p,
                    "weather_cache_dir" => self.weather_cache_dir = p,
                    "weather_fixture_dir" => self.weather_fixture_dir = p,
                    "weather_daily_file" => self.weather_daily_file = p,
                    "embedding_cache" => self.embedding_cache = p,
                    "output_dir" => self.output_dir = p,
                    _ => unreachable!("every key in KEYS is handled"),
                }
            }
        }
        Ok(())
    }

    /// The configured output directory, or `runs/<local timestamp>` under the
    /// config's directory.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            self.base_dir
                .join("runs")
                .join(chrono::Local::now().format("%Y%m%dT%H%M%S").to_string())
        })
    }
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let content = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Config::parse(&content, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HyperParams;

    fn parse(text: &str) -> Result<Config, ConfigError> {
        Config::parse(text, Path::new("/data/run"))
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert_eq!(c.pipeline.layer_sizes, vec![256, 128, 64, 32, 1]);
        assert_eq!(c.embed_fallback_dim, 64);
        assert_eq!(c.pipeline.hyper.batch_size, 32);
        assert_eq!(c.pipeline.hyper.lambda, 1e-4);
        assert!(c.disease_file.is_none());
    }

    #[test]
    fn single_override() {
        let c = parse("learning_rate = 0.01\n").unwrap();
        let expected = HyperParams {
            learning_rate: 0.01,
            ..Default::default()
        };
        assert_eq!(c.pipeline.hyper, expected);
    }

    #[test]
    fn full_file() {
        let c = parse(
            "# comment\n\nepochs = 10\nlayer_sizes = 8, 4, 1\nstation = VABB\ndisease_file = d.csv\n\
             output_dir = /abs/out\nsync_start = 2020-01-01\nrequests_per_second = 2.5\n",
        )
        .unwrap();
        assert_eq!(c.pipeline.hyper.epochs, 10);
        assert_eq!(c.pipeline.layer_sizes, vec![8, 4, 1]);
        assert_eq!(c.station.as_deref(), Some("VABB"));
        assert_eq!(c.disease_file, Some(PathBuf::from("/data/run/d.csv")));
        assert_eq!(c.output_dir, Some(PathBuf::from("/abs/out")));
        assert_eq!(c.sync_start, NaiveDate::from_ymd_opt(2020, 1, 1));
        assert_eq!(c.requests_per_second, Some(2.5));
        assert_eq!(c.resolved_output_dir(), PathBuf::from("/abs/out"));
    }

    #[test]
    fn rejects() {
        let key_of = |r: Result<Config, ConfigError>| match r {
            Err(ConfigError::BadValue { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key_of(parse("beta1 = 1.5")), "beta1");
        assert_eq!(key_of(parse("learning_rate = -1")), "learning_rate");
        assert_eq!(key_of(parse("epochs = many")), "epochs");
        assert_eq!(key_of(parse("layer_sizes = 8,4")), "layer_sizes");
        assert_eq!(key_of(parse("layer_sizes = 8,0,1")), "layer_sizes");
        assert_eq!(key_of(parse("sync_end = 2020/01/01")), "sync_end");
        assert_eq!(key_of(parse("batch_size = 0")), "batch_size");
        assert!(matches!(parse("\nfoo = 1"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(parse("epochs 3"), Err(ConfigError::Malformed(1))));
        assert!(matches!(parse("seed = 1\nseed = 2"), Err(ConfigError::DuplicateKey { line: 2, .. })));
    }

    #[test]
    fn default_output_dir_is_timestamped() {
        let dir = parse("").unwrap().resolved_output_dir();
        assert!(dir.starts_with("/data/run/runs"));
    }
}
