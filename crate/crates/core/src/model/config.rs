//! Architecture configuration, serialized as `key=value` lines inside checkpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::LabelOrder;
use crate::ops::BatchNormSettings;

/// Width of the one-hot residue block and of the profile block.
pub const BLOCK_WIDTH: usize = 21;
/// Per-residue input width: one-hot sequence block followed by the profile block.
pub const INPUT_WIDTH: usize = 2 * BLOCK_WIDTH;

/// Which input blocks reach the first convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    Both,
    SequenceOnly,
    ProfileOnly,
}

impl FeatureSet {
    pub fn input_width(self) -> usize {
        match self {
            FeatureSet::Both => INPUT_WIDTH,
            FeatureSet::SequenceOnly | FeatureSet::ProfileOnly => BLOCK_WIDTH,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Both => "both",
            FeatureSet::SequenceOnly => "sequence",
            FeatureSet::ProfileOnly => "profile",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(FeatureSet::Both),
            "sequence" => Ok(FeatureSet::SequenceOnly),
            "profile" => Ok(FeatureSet::ProfileOnly),
            _ => Err(Error::config("features", format!("expected both|sequence|profile, got {s:?}"))),
        }
    }
}

/// How a module's hidden width `h` is spread over its four series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchWidth {
    /// Every convolution has `h` filters; the module emits `4h` channels.
    PerSeries,
    /// Each series gets `h / 4` filters; the module emits about `h` channels.
    Split,
}

impl FromStr for BranchWidth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-series" => Ok(BranchWidth::PerSeries),
            "split" => Ok(BranchWidth::Split),
            _ => Err(Error::config("branch_width", format!("expected per-series|split, got {s:?}"))),
        }
    }
}

impl fmt::Display for BranchWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BranchWidth::PerSeries => "per-series",
            BranchWidth::Split => "split",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ps8Config {
    pub front_width: usize,
    pub front_kernel: usize,
    pub front_layers: usize,
    /// Hidden width of each PS8 module, in network order. Its length is the module count.
    pub module_widths: Vec<usize>,
    pub branch_width: BranchWidth,
    pub skip1_kernel: usize,
    pub skip1_per_series: usize,
    pub skip2_width: usize,
    pub skip2_kernel: usize,
    pub use_skip1: bool,
    pub use_skip2: bool,
    pub dense_widths: Vec<usize>,
    pub module_dropout: f64,
    pub dense_dropout: f64,
    pub features: FeatureSet,
    pub batch_norm: BatchNormSettings,
    pub labels: LabelOrder,
}

impl Default for Ps8Config {
    fn default() -> Self {
        Ps8Config {
            front_width: 512,
            front_kernel: 5,
            front_layers: 2,
            module_widths: vec![256, 128, 128],
            branch_width: BranchWidth::PerSeries,
            skip1_kernel: 3,
            skip1_per_series: 3,
            skip2_width: 128,
            skip2_kernel: 11,
            use_skip1: true,
            use_skip2: true,
            dense_widths: vec![512, 256],
            module_dropout: 0.25,
            dense_dropout: 0.5,
            features: FeatureSet::Both,
            batch_norm: BatchNormSettings::default(),
            labels: LabelOrder::default(),
        }
    }
}

fn scale_width(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).round() as usize).max(1)
}

impl Ps8Config {
    /// Module widths for `count` modules: 256 for the first, 128 after it.
    pub fn with_module_count(mut self, count: usize) -> Self {
        self.module_widths = (0..count).map(|i| if i == 0 { 256 } else { 128 }).collect();
        self
    }

    /// Multiply every width by `scale`, rounding and keeping at least one unit.
    pub fn scaled(mut self, scale: f64) -> Self {
        self.front_width = scale_width(self.front_width, scale);
        self.module_widths = self.module_widths.iter().map(|&w| scale_width(w, scale)).collect();
        self.skip2_width = scale_width(self.skip2_width, scale);
        self.dense_widths = self.dense_widths.iter().map(|&w| scale_width(w, scale)).collect();
        self
    }

    /// Every width set to `width`; handy for oracle-sized networks.
    pub fn uniform(width: usize) -> Self {
        let base = Ps8Config::default();
        Ps8Config {
            front_width: width,
            module_widths: vec![width; base.module_widths.len()],
            skip2_width: width,
            dense_widths: vec![width; base.dense_widths.len()],
            ..base
        }
    }

    pub fn module_count(&self) -> usize {
        self.module_widths.len()
    }

    pub fn series_width(&self, hidden: usize) -> usize {
        match self.branch_width {
            BranchWidth::PerSeries => hidden,
            BranchWidth::Split => (hidden / 4).max(1),
        }
    }

    pub fn module_output_width(&self, hidden: usize) -> usize {
        4 * self.series_width(hidden)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("front_width", self.front_width),
            ("front_kernel", self.front_kernel),
            ("skip1_kernel", self.skip1_kernel),
            ("skip2_width", self.skip2_width),
            ("skip2_kernel", self.skip2_kernel),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.module_widths.is_empty() {
            return Err(Error::config("module_widths", "at least one PS8 module is required"));
        }
        if self.module_widths.contains(&0) {
            return Err(Error::config("module_widths", "widths must be positive"));
        }
        if self.dense_widths.contains(&0) {
            return Err(Error::config("dense_widths", "widths must be positive"));
        }
        for (key, rate) in [("module_dropout", self.module_dropout), ("dense_dropout", self.dense_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config(key, format!("dropout rate must lie in [0, 1), got {rate}")));
            }
        }
        let bn = self.batch_norm;
        if !(bn.epsilon > 0.0) {
            return Err(Error::config("bn_epsilon", "must be positive"));
        }
        if !(0.0..1.0).contains(&bn.momentum) {
            return Err(Error::config("bn_momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `key=value` pairs in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("front_width".into(), self.front_width.to_string()),
            ("front_kernel".into(), self.front_kernel.to_string()),
            ("front_layers".into(), self.front_layers.to_string()),
            ("module_widths".into(), list(&self.module_widths)),
            ("branch_width".into(), self.branch_width.to_string()),
            ("skip1_kernel".into(), self.skip1_kernel.to_string()),
            ("skip1_per_series".into(), self.skip1_per_series.to_string()),
            ("skip2_width".into(), self.skip2_width.to_string()),
            ("skip2_kernel".into(), self.skip2_kernel.to_string()),
            ("use_skip1".into(), self.use_skip1.to_string()),
            ("use_skip2".into(), self.use_skip2.to_string()),
            ("dense_widths".into(), list(&self.dense_widths)),
            ("module_dropout".into(), self.module_dropout.to_string()),
            ("dense_dropout".into(), self.dense_dropout.to_string()),
            ("features".into(), self.features.as_str().into()),
            ("bn_epsilon".into(), self.batch_norm.epsilon.to_string()),
            ("bn_momentum".into(), self.batch_norm.momentum.to_string()),
            ("labels".into(), self.labels.to_string()),
        ]
    }

    /// Parse pairs produced by [`Ps8Config::to_pairs`]; absent keys keep their defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Ps8Config::default();
        for (key, value) in pairs {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one field from its textual form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
        }
        fn list(key: &str, value: &str) -> Result<Vec<usize>> {
            if value.trim().is_empty() {
                return Ok(Vec::new());
            }
            value.split(',').map(|v| num(key, v)).collect()
        }
        match key {
            "front_width" => self.front_width = num(key, value)?,
            "front_kernel" => self.front_kernel = num(key, value)?,
            "front_layers" => self.front_layers = num(key, value)?,
            "module_widths" => self.module_widths = list(key, value)?,
            "branch_width" => self.branch_width = value.parse()?,
            "skip1_kernel" => self.skip1_kernel = num(key, value)?,
            "skip1_per_series" => self.skip1_per_series = num(key, value)?,
            "skip2_width" => self.skip2_width = num(key, value)?,
            "skip2_kernel" => self.skip2_kernel = num(key, value)?,
            "use_skip1" => self.use_skip1 = num(key, value)?,
            "use_skip2" => self.use_skip2 = num(key, value)?,
            "dense_widths" => self.dense_widths = list(key, value)?,
            "module_dropout" => self.module_dropout = num(key, value)?,
            "dense_dropout" => self.dense_dropout = num(key, value)?,
            "features" => self.features = value.parse()?,
            "bn_epsilon" => self.batch_norm.epsilon = num(key, value)?,
            "bn_momentum" => self.batch_norm.momentum = num(key, value)?,
            "labels" => {
                self.labels = value
                    .parse()
                    .map_err(|e: Error| Error::config(key, e.to_string()))?
            }
            _ => return Err(Error::config(key, "unknown architecture key")),
        }
        Ok(())
    }
}
