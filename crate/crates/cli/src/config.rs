//! The run configuration: a `key = value` file overlaid by command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ps8net::data::SplitMode;
use ps8net::model::Ps8Config;
use ps8net::train::TrainConfig;
use ps8net::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetKind {
    #[default]
    Cullpdb6133,
    Cullpdb6133Filtered,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cullpdb6133" => Ok(DatasetKind::Cullpdb6133),
            "cullpdb6133-filtered" => Ok(DatasetKind::Cullpdb6133Filtered),
            _ => Err(Error::Config {
                key: "dataset".into(),
                reason: format!("expected cullpdb6133 or cullpdb6133-filtered, got {s:?}"),
            }),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Cullpdb6133 => "cullpdb6133",
            DatasetKind::Cullpdb6133Filtered => "cullpdb6133-filtered",
        })
    }
}

pub const DEFAULT_OUT: &str = "runs/ps8";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Ps8Config,
    pub train: TrainConfig,
    /// Canonical training dataset; synthetic records are generated when absent.
    pub data: Option<PathBuf>,
    /// Extra canonical evaluation datasets (CB513, CASP10, CASP11, ...).
    pub test_data: Vec<PathBuf>,
    pub dataset: DatasetKind,
    pub split_mode: SplitMode,
    pub out: PathBuf,
    /// Multiplies every width and the epoch count.
    pub scale: f64,
    /// Keep only the first `n` training proteins; 0 keeps all.
    pub train_limit: usize,
    pub synthetic_count: usize,
    pub synthetic_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Ps8Config::default(),
            train: TrainConfig::default(),
            data: None,
            test_data: Vec::new(),
            dataset: DatasetKind::default(),
            split_mode: SplitMode::default(),
            out: PathBuf::from(DEFAULT_OUT),
            scale: 1.0,
            train_limit: 0,
            synthetic_count: 64,
            synthetic_window: ps8net::data::SEQ_LEN,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.into(),
        reason: format!("cannot parse {value:?}"),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "test_data" => {
                self.test_data = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "dataset" => self.dataset = value.parse()?,
            "split_mode" => {
                self.split_mode = value.parse().map_err(|e: Error| Error::Config {
                    key: key.into(),
                    reason: e.to_string(),
                })?
            }
            "out" => self.out = PathBuf::from(value),
            "scale" => self.scale = parse(key, value)?,
            "train_limit" => self.train_limit = parse(key, value)?,
            "synthetic_count" => self.synthetic_count = parse(key, value)?,
            "synthetic_window" => self.synthetic_window = parse(key, value)?,
            "module_count" => {
                let n: usize = parse(key, value)?;
                self.model = self.model.clone().with_module_count(n);
            }
            _ if TrainConfig::default().to_pairs().iter().any(|(k, _)| k == key) => self.train.set(key, value)?,
            _ if Ps8Config::default().to_pairs().iter().any(|(k, _)| k == key) => self.model.set(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    reason: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                reason: format!("line {} is not `key = value`", n + 1),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config {
                key: "scale".into(),
                reason: "must be positive".into(),
            });
        }
        if self.synthetic_count < 2 {
            return Err(Error::Config {
                key: "synthetic_count".into(),
                reason: "must be at least 2".into(),
            });
        }
        if self.synthetic_window < 1 {
            return Err(Error::Config {
                key: "synthetic_window".into(),
                reason: "must be at least 1".into(),
            });
        }
        self.model().validate()?;
        self.train().validate()
    }

    /// Architecture after scaling.
    pub fn model(&self) -> Ps8Config {
        if self.scale == 1.0 {
            self.model.clone()
        } else {
            self.model.clone().scaled(self.scale)
        }
    }

    /// Training settings after scaling the epoch count.
    pub fn train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.epochs = ((t.epochs as f64 * self.scale).round() as usize).max(1);
        t
    }

    /// Resolved settings as a file that [`RunConfig::apply_text`] accepts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        line(
            "test_data",
            self.test_data.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
        );
        line("dataset", self.dataset.to_string());
        line("split_mode", self.split_mode.to_string());
        line("out", self.out.display().to_string());
        line("scale", format!("{:?}", self.scale));
        line("train_limit", self.train_limit.to_string());
        line("synthetic_count", self.synthetic_count.to_string());
        line("synthetic_window", self.synthetic_window.to_string());
        for (k, v) in self.model.to_pairs().into_iter().chain(self.train.to_pairs()) {
            line(&k, v);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_paper() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.epochs, 120);
        assert_eq!(cfg.train.lr, 2e-4);
        assert_eq!(cfg.model.module_widths, vec![256, 128, 128]);
        assert_eq!(cfg.split_mode, SplitMode::Paper);
    }

    #[test]
    fn comments_and_spacing() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# run\n epochs = 3  # short\n\nmodule_dropout=0.1\nsplit_mode = train6128\n")
            .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.model.module_dropout, 0.1);
        assert_eq!(cfg.split_mode, SplitMode::Train6128);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::default().apply_text("epochs = 3\nlearning_rate = 1\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "learning_rate"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("scale = 0.25\nseed = 9\ntest_data = a.psd8,b.psd8\nuse_skip2 = false\n").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn scale_multiplies_widths_and_epochs() {
        let mut cfg = RunConfig::default();
        cfg.set("scale", "0.125").unwrap();
        assert_eq!(cfg.model().front_width, 64);
        assert_eq!(cfg.train().epochs, 15);
    }
}
