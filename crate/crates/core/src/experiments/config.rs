//! Campaign configuration files.
//!
//! ```json
//! {
//!   "name": "batch-sizes",
//!   "n": 300, "b": 300, "m": 90000,
//!   "process": {"kind": "one_plus_beta", "params": {"beta": 0.5}, "tie_breaking": "deterministic"},
//!   "weights": {"kind": "exponential"},
//!   "sweep": [{"field": "b_over_n", "values": [1, 5, 10]}],
//!   "runs_per_point": 30,
//!   "output": "out.csv",
//!   "seed": 1
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graphs::{generate, GraphKind};
use crate::processes::{ProcessKind, ProcessSpec, TieBreaking};
use crate::sim::BatchRunConfig;
use crate::weights::{WeightDistribution, WeightKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessName {
    OneChoice,
    TwoChoice,
    ThreeChoice,
    DChoice,
    OnePlusBeta,
    Quantile,
    Graphical,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub kind: ProcessName,
    #[serde(default)]
    pub params: ProcessParams,
    #[serde(default)]
    pub tie_breaking: TieBreaking,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self::new(ProcessName::TwoChoice)
    }
}

fn missing(name: &str, kind: ProcessName) -> Error {
    Error::invalid(format!("process {kind:?} needs parameter `{name}`"))
}

impl ProcessConfig {
    pub fn new(kind: ProcessName) -> Self {
        Self {
            kind,
            params: ProcessParams::default(),
            tie_breaking: TieBreaking::Deterministic,
        }
    }

    pub fn one_plus_beta(beta: f64) -> Self {
        let mut c = Self::new(ProcessName::OnePlusBeta);
        c.params.beta = Some(beta);
        c
    }

    pub fn quantile(delta: f64) -> Self {
        let mut c = Self::new(ProcessName::Quantile);
        c.params.delta = Some(delta);
        c
    }

    pub fn with_ties(mut self, tie_breaking: TieBreaking) -> Self {
        self.tie_breaking = tie_breaking;
        self
    }

    pub fn kind(&self) -> Result<ProcessKind> {
        let p = &self.params;
        Ok(match self.kind {
            ProcessName::OneChoice => ProcessKind::OneChoice,
            ProcessName::TwoChoice => ProcessKind::DChoice { d: 2 },
            ProcessName::ThreeChoice => ProcessKind::DChoice { d: 3 },
            ProcessName::DChoice => ProcessKind::DChoice {
                d: p.d.ok_or_else(|| missing("d", self.kind))?,
            },
            ProcessName::OnePlusBeta => ProcessKind::OnePlusBeta {
                beta: p.beta.ok_or_else(|| missing("beta", self.kind))?,
            },
            ProcessName::Quantile => ProcessKind::Quantile {
                delta: p.delta.ok_or_else(|| missing("delta", self.kind))?,
            },
            ProcessName::Graphical => {
                let g = p.graph.ok_or_else(|| missing("graph", self.kind))?;
                ProcessKind::Graphical(Arc::new(generate(g)?))
            }
        })
    }

    pub fn spec(&self) -> Result<ProcessSpec> {
        Ok(ProcessSpec::new(self.kind()?, self.tie_breaking))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    Unit,
    Exponential,
    ScaledGeometric,
    UniformBounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub kind: WeightName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Success probability of the scaled geometric law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self::new(WeightName::Unit)
    }
}

impl WeightsConfig {
    pub fn new(kind: WeightName) -> Self {
        Self {
            kind,
            lambda: None,
            q: None,
        }
    }

    pub fn distribution(&self) -> Result<WeightDistribution> {
        let kind = match self.kind {
            WeightName::Unit => WeightKind::Unit,
            WeightName::Exponential => WeightKind::Exponential,
            WeightName::ScaledGeometric => WeightKind::ScaledGeometric {
                q: self
                    .q
                    .ok_or_else(|| Error::invalid("scaled_geometric weights need `q`"))?,
            },
            WeightName::UniformBounded => WeightKind::UniformBounded,
        };
        match self.lambda {
            Some(l) => WeightDistribution::with_lambda(kind, l),
            None => WeightDistribution::new(kind),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepField {
    N,
    B,
    BOverN,
    M,
    Process,
    TieBreaking,
    Weights,
    Beta,
    Delta,
    D,
}

impl SweepField {
    pub fn column(&self) -> &'static str {
        match self {
            SweepField::N => "n",
            SweepField::B => "b",
            SweepField::BOverN => "b_over_n",
            SweepField::M => "m",
            SweepField::Process => "process",
            SweepField::TieBreaking => "tie_breaking",
            SweepField::Weights => "weights",
            SweepField::Beta => "beta",
            SweepField::Delta => "delta",
            SweepField::D => "d",
        }
    }
}

impl fmt::Display for SweepField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub field: SweepField,
    pub values: Vec<Value>,
}

impl SweepAxis {
    pub fn new<T: Serialize>(field: SweepField, values: impl IntoIterator<Item = T>) -> Self {
        Self {
            field,
            values: values
                .into_iter()
                .map(|v| serde_json::to_value(v).expect("sweep values serialize"))
                .collect(),
        }
    }
}

fn default_name() -> String {
    "campaign".into()
}

fn default_runs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    pub b: u64,
    pub m: u64,
    #[serde(default)]
    pub process: ProcessConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default = "default_runs")]
    pub runs_per_point: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Master seed; every run derives its own stream from it.
    #[serde(default)]
    pub seed: u64,
    /// Free-form provenance notes copied into the result metadata.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// One point of the sweep grid.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub id: usize,
    /// CSV rendering of each swept field, in sweep order.
    pub values: Vec<String>,
    pub config: BatchRunConfig,
}

struct Settings {
    n: usize,
    b: u64,
    b_over_n: Option<f64>,
    m: u64,
    process: ProcessConfig,
    weights: WeightsConfig,
}

fn typed<T: serde::de::DeserializeOwned>(field: SweepField, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| Error::invalid(format!("sweep value {v} for `{field}`: {e}")))
}

fn format_real(x: f64) -> String {
    format!("{x}")
}

impl Settings {
    /// Applies one sweep value and returns its CSV rendering.
    fn apply(&mut self, field: SweepField, v: &Value) -> Result<String> {
        Ok(match field {
            SweepField::N => {
                self.n = typed(field, v)?;
                self.n.to_string()
            }
            SweepField::B => {
                self.b = typed(field, v)?;
                self.b_over_n = None;
                self.b.to_string()
            }
            SweepField::BOverN => {
                let r: f64 = typed(field, v)?;
                self.b_over_n = Some(r);
                format_real(r)
            }
            SweepField::M => {
                self.m = typed(field, v)?;
                self.m.to_string()
            }
            SweepField::Process => {
                let ties = self.process.tie_breaking;
                self.process = typed(field, v)?;
                if v.get("tie_breaking").is_none() {
                    self.process.tie_breaking = ties;
                }
                return Ok(String::new());
            }
            SweepField::TieBreaking => {
                self.process.tie_breaking = typed(field, v)?;
                match self.process.tie_breaking {
                    TieBreaking::Deterministic => "deterministic".into(),
                    TieBreaking::Random => "random".into(),
                }
            }
            SweepField::Weights => {
                self.weights = typed(field, v)?;
                self.weights.distribution()?.kind().label()
            }
            SweepField::Beta => {
                let x: f64 = typed(field, v)?;
                self.process.params.beta = Some(x);
                format_real(x)
            }
            SweepField::Delta => {
                let x: f64 = typed(field, v)?;
                self.process.params.delta = Some(x);
                format_real(x)
            }
            SweepField::D => {
                let d: u32 = typed(field, v)?;
                self.process.params.d = Some(d);
                d.to_string()
            }
        })
    }
}

impl Campaign {
    /// A single-point campaign with unit weights and TwoChoice.
    pub fn new(name: impl Into<String>, n: usize, b: u64, m: u64) -> Self {
        Self {
            name: name.into(),
            n,
            b,
            m,
            process: ProcessConfig::default(),
            weights: WeightsConfig::default(),
            sweep: Vec::new(),
            runs_per_point: 1,
            output: None,
            seed: 0,
            notes: Vec::new(),
        }
    }

    pub fn columns(&self) -> Vec<String> {
        self.sweep.iter().map(|a| a.field.column().to_string()).collect()
    }

    pub fn grid_size(&self) -> usize {
        self.sweep.iter().map(|a| a.values.len()).product()
    }

    /// All grid points, the last sweep axis varying fastest.
    pub fn expand(&self) -> Result<Vec<GridPoint>> {
        if self.runs_per_point == 0 {
            return Err(Error::invalid("runs_per_point must be at least 1"));
        }
        if let Some(axis) = self.sweep.iter().find(|a| a.values.is_empty()) {
            return Err(Error::invalid(format!("sweep over `{}` has no values", axis.field)));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(axis) = self.sweep.iter().find(|a| !seen.insert(a.field)) {
            return Err(Error::invalid(format!("field `{}` swept twice", axis.field)));
        }
        let total = self.grid_size();
        let mut points = Vec::with_capacity(total);
        for id in 0..total {
            let mut settings = Settings {
                n: self.n,
                b: self.b,
                b_over_n: None,
                m: self.m,
                process: self.process.clone(),
                weights: self.weights.clone(),
            };
            let mut rest = id;
            let mut picks = vec![0; self.sweep.len()];
            for (k, axis) in self.sweep.iter().enumerate().rev() {
                picks[k] = rest % axis.values.len();
                rest /= axis.values.len();
            }
            let mut values = Vec::with_capacity(self.sweep.len());
            let mut process_columns = Vec::new();
            for (k, axis) in self.sweep.iter().enumerate() {
                let rendered = settings.apply(axis.field, &axis.values[picks[k]])?;
                if axis.field == SweepField::Process {
                    process_columns.push(k);
                }
                values.push(rendered);
            }
            if let Some(r) = settings.b_over_n {
                let b = r * settings.n as f64;
                if b.fract() != 0.0 || b < 1.0 {
                    return Err(Error::invalid(format!(
                        "b_over_n = {r} gives non-integral b for n = {}",
                        settings.n
                    )));
                }
                settings.b = b as u64;
            }
            let spec = settings.process.spec()?;
            for k in process_columns {
                values[k] = spec.kind.label();
            }
            let mut config = BatchRunConfig::new(settings.n, settings.b, settings.m, spec);
            config.weights = settings.weights.distribution()?;
            config.validate()?;
            points.push(GridPoint { id, values, config });
        }
        Ok(points)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("campaigns serialize")
    }
}

/// Parses a campaign, reporting syntax errors, unknown keys and type
/// mismatches with their line and column, and semantic problems as
/// invalid parameters.
pub fn parse_config_str(text: &str, source_name: &str) -> Result<Campaign> {
    let campaign: Campaign = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    campaign.expand()?;
    Ok(campaign)
}

pub fn parse_config(path: &Path) -> Result<Campaign> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(r#"{"n": 8, "b": 8, "m": 64}"#, "mem").unwrap();
        assert_eq!(c.name, "campaign");
        assert_eq!(c.runs_per_point, 1);
        assert_eq!(c.process, ProcessConfig::new(ProcessName::TwoChoice));
        assert_eq!(c.weights.kind, WeightName::Unit);
        assert_eq!(c.expand().unwrap().len(), 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str("{\"n\": 8,\n \"batchsize\": 8, \"b\": 8, \"m\": 8}", "cfg.json").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("batchsize"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        let nested = r#"{"n": 8, "b": 8, "m": 8, "process": {"kind": "quantile", "params": {"dleta": 0.5}}}"#;
        assert!(matches!(parse_config_str(nested, "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn semantic_errors() {
        let bad_m = r#"{"n": 8, "b": 3, "m": 8}"#;
        assert!(matches!(parse_config_str(bad_m, "x"), Err(Error::InvalidParameter(_))));
        let no_beta = r#"{"n": 8, "b": 8, "m": 8, "process": {"kind": "one_plus_beta"}}"#;
        assert!(matches!(parse_config_str(no_beta, "x"), Err(Error::InvalidParameter(_))));
        let bad_sweep = r#"{"n": 8, "b": 8, "m": 8, "sweep": [{"field": "b_over_n", "values": ["x"]}]}"#;
        assert!(matches!(parse_config_str(bad_sweep, "x"), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn round_trip() {
        let mut c = Campaign::new("rt", 30, 30, 900);
        c.process = ProcessConfig::quantile(0.5).with_ties(TieBreaking::Random);
        c.weights = WeightsConfig {
            kind: WeightName::ScaledGeometric,
            lambda: None,
            q: Some(0.25),
        };
        c.sweep = vec![
            SweepAxis::new(SweepField::BOverN, [1, 3]),
            SweepAxis::new(
                SweepField::Process,
                [ProcessConfig::new(ProcessName::ThreeChoice), ProcessConfig::one_plus_beta(0.5)],
            ),
        ];
        c.runs_per_point = 3;
        c.output = Some("x.csv".into());
        c.seed = 17;
        let parsed = parse_config_str(&c.to_json(), "rt").unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn grid_expansion_order_and_labels() {
        let mut c = Campaign::new("g", 10, 10, 100);
        c.sweep = vec![
            SweepAxis::new(SweepField::BOverN, [1, 2]),
            SweepAxis::new(SweepField::Beta, [0.25, 0.5]),
        ];
        c.process = ProcessConfig::one_plus_beta(0.1);
        let pts = c.expand().unwrap();
        let vals: Vec<Vec<String>> = pts.iter().map(|p| p.values.clone()).collect();
        assert_eq!(
            vals,
            vec![
                vec!["1", "0.25"],
                vec!["1", "0.5"],
                vec!["2", "0.25"],
                vec!["2", "0.5"]
            ]
        );
        assert_eq!(pts[2].config.b, 20);
        assert_eq!(pts[3].config.process.kind, ProcessKind::OnePlusBeta { beta: 0.5 });

        let mut c = Campaign::new("p", 10, 10, 100);
        c.sweep = vec![SweepAxis::new(
            SweepField::Process,
            [ProcessConfig::new(ProcessName::TwoChoice), ProcessConfig::quantile(0.5)],
        )];
        let labels: Vec<String> = c.expand().unwrap().iter().map(|p| p.values[0].clone()).collect();
        assert_eq!(labels, vec!["two_choice", "quantile(0.5)"]);
    }

    #[test]
    fn graphical_process_from_config() {
        let text = r#"{"n": 12, "b": 12, "m": 24,
            "process": {"kind": "graphical", "params": {"graph": {"kind": "random_regular", "n": 12, "d": 3, "seed": 4}}}}"#;
        let c = parse_config_str(text, "g").unwrap();
        let pts = c.expand().unwrap();
        assert!(matches!(pts[0].config.process.kind, ProcessKind::Graphical(_)));
    }
}
