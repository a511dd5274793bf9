//! Harnesses for the three ablation studies, runnable at reduced scale.
//!
//! Every variant is trained once on the supplied training data and evaluated on
//! each report column. The published full-scale accuracies travel along as
//! annotations; nothing here compares against them.

use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, ProteinRecord};
use crate::error::{Error, Result};
use crate::eval::inference::evaluate;
use crate::model::{FeatureSet, Ps8Config, Ps8Net};
use crate::train::{sig6, train, TrainConfig, TrainState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Features,
    Modules,
    Skip,
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(Study::Features),
            "modules" => Ok(Study::Modules),
            "skip" => Ok(Study::Skip),
            _ => Err(Error::invalid(format!("unknown study {s:?} (expected features, modules or skip)"))),
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Features => "features",
            Study::Modules => "modules",
            Study::Skip => "skip",
        })
    }
}

const TABLE_COLUMNS: [&str; 4] = ["cullpdb6133", "cb513", "casp10", "casp11"];

impl Study {
    /// Evaluation datasets reported by the study, by dataset name.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Study::Features => &TABLE_COLUMNS[1..2],
            Study::Modules | Study::Skip => &TABLE_COLUMNS,
        }
    }

    /// The model variants of the study, derived from `base`, with published Q8 fractions.
    pub fn variants(self, base: &Ps8Config) -> Vec<Variant> {
        let with = |label: &str, config: Ps8Config, reference: &[f64]| Variant {
            label: label.to_string(),
            config,
            reference: reference.iter().map(|v| v / 100.0).collect(),
        };
        match self {
            Study::Features => [
                ("sequence-only", FeatureSet::SequenceOnly, 61.57),
                ("profile-only", FeatureSet::ProfileOnly, 69.72),
                ("both", FeatureSet::Both, 71.94),
            ]
            .into_iter()
            .map(|(label, features, r)| with(label, Ps8Config { features, ..base.clone() }, &[r]))
            .collect(),
            Study::Modules => {
                let table = [
                    [72.97, 68.39, 73.51, 70.24],
                    [75.88, 70.61, 75.70, 72.93],
                    [76.89, 71.94, 76.86, 75.26],
                    [75.19, 70.04, 74.85, 73.63],
                    [74.34, 69.47, 73.79, 72.54],
                ];
                let first = base.module_widths.first().copied().unwrap_or(1);
                let rest = base.module_widths.get(1).copied().unwrap_or(first);
                table
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let n = i + 1;
                        let widths = (0..n).map(|k| if k == 0 { first } else { rest }).collect();
                        let config = Ps8Config {
                            module_widths: widths,
                            ..base.clone()
                        };
                        with(&format!("{n}-modules"), config, r)
                    })
                    .collect()
            }
            Study::Skip => [
                ("no-skip", false, false, [69.52, 63.49, 70.01, 68.73]),
                ("sk1-only", true, false, [73.24, 69.19, 74.63, 73.14]),
                ("sk1+sk2", true, true, [76.89, 71.94, 76.86, 75.26]),
            ]
            .into_iter()
            .map(|(label, use_skip1, use_skip2, r)| {
                with(
                    label,
                    Ps8Config {
                        use_skip1,
                        use_skip2,
                        ..base.clone()
                    },
                    &r,
                )
            })
            .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub config: Ps8Config,
    /// Published Q8 as fractions, one per study column.
    pub reference: Vec<f64>,
}

/// Training pool and named evaluation sets.
#[derive(Debug, Clone)]
pub struct AblationData {
    pub records: Vec<ProteinRecord>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub tests: Vec<Dataset>,
}

impl AblationData {
    fn test(&self, name: &str) -> Result<&Dataset> {
        self.tests
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::invalid(format!("no evaluation dataset named {name}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub parameters: usize,
    pub q8: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub study: Study,
    pub columns: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,parameters");
        for c in &self.columns {
            s.push_str(&format!(",{c}"));
        }
        for c in &self.columns {
            s.push_str(&format!(",paper_{c}"));
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&format!("{},{}", row.variant, row.parameters));
            for v in row.q8.iter().chain(&row.reference) {
                s.push(',');
                s.push_str(&sig6(*v));
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} study: Q8 % (published full-scale value in parentheses)", self.study)?;
        write!(f, "{:<16}{:>12}", "variant", "parameters")?;
        for c in &self.columns {
            write!(f, "{c:>22}")?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<16}{:>12}", row.variant, row.parameters)?;
            for (q, r) in row.q8.iter().zip(&row.reference) {
                write!(f, "{:>22}", format!("{:.2} ({:.2})", q * 100.0, r * 100.0))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Trains and evaluates every variant of `study`.
pub fn run_study(
    study: Study,
    base: &Ps8Config,
    train_config: &TrainConfig,
    data: &AblationData,
    mut progress: impl FnMut(&str),
) -> Result<AblationReport> {
    let columns = study.columns();
    let tests = columns.iter().map(|c| data.test(c)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for variant in study.variants(base) {
        let net = Ps8Net::build(variant.config.clone(), train_config.seed)?;
        let parameters = net.param_count();
        let mut state = TrainState::new(net, train_config.clone())?;
        train(&mut state, &data.records, &data.train, &data.valid, None, |rec| {
            progress(&format!("{study}/{}: {}", variant.label, rec.csv_line()))
        })?;
        let q8 = tests
            .iter()
            .map(|d| {
                let all: Vec<usize> = (0..d.len()).collect();
                evaluate(&state.net, &d.records, &all, train_config.eval_batch_size).map(|e| e.q8())
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(AblationRow {
            variant: variant.label,
            parameters,
            q8,
            reference: variant.reference,
        });
    }
    Ok(AblationReport {
        study,
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows,
    })
}
