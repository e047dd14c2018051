//! Batch-size campaigns comparing processes, weights and tie-breaking.
//!
//! Desk scale uses `n = 300`, 30 runs per point; paper scale uses `n = 1000`,
//! 100 runs per point. Every preset uses `m = n^2` and unit weights unless
//! stated otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::config::{
    Campaign, ProcessConfig, ProcessName, SweepAxis, SweepField, WeightName, WeightsConfig,
};
use crate::processes::TieBreaking;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scale {
    pub fn n(&self) -> usize {
        match self {
            Scale::Desk => 300,
            Scale::Paper => 1000,
        }
    }

    pub fn runs(&self) -> usize {
        match self {
            Scale::Desk => 30,
            Scale::Paper => 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// ThreeChoice, TwoChoice, (1+0.7), (1+0.5) with fixed-order ties across batch sizes.
    Fig5,
    /// Quantile(~1/ln n) and (1+1/ln n) against (1+0.5) at very large batches.
    Fig6,
    /// The four processes of `Fig5` with exponential and unit weights.
    Fig7,
    /// TwoChoice with random against fixed-order tie-breaking at `b = 25n`.
    Fig8,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig5, Preset::Fig6, Preset::Fig7, Preset::Fig8];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset `{s}` (expected fig5..fig8)")))
    }
}

fn four_processes() -> Vec<ProcessConfig> {
    vec![
        ProcessConfig::new(ProcessName::ThreeChoice),
        ProcessConfig::new(ProcessName::TwoChoice),
        ProcessConfig::one_plus_beta(0.7),
        ProcessConfig::one_plus_beta(0.5),
    ]
}

fn batch_ratios(scale: Scale) -> Vec<u64> {
    match scale {
        Scale::Desk => vec![1, 5, 10, 25, 50],
        // b must divide m = n^2 = 10^6, so b/n runs over the divisors of 1000 up to 50
        Scale::Paper => (1..=50).filter(|r| 1000 % r == 0).collect(),
    }
}

/// `delta` nearest to `1/ln n` among multiples of `1/n`.
pub fn rounded_log_quantile(n: usize) -> (usize, f64) {
    let k = (n as f64 / (n as f64).ln()).round().max(1.0) as usize;
    (k, k as f64 / n as f64)
}

pub fn preset(which: Preset, scale: Scale, seed: u64) -> Campaign {
    let n = scale.n();
    let m = (n * n) as u64;
    let mut c = Campaign::new(which.name(), n, n as u64, m);
    c.runs_per_point = scale.runs();
    c.seed = seed;
    match which {
        Preset::Fig5 => {
            c.sweep = vec![
                SweepAxis::new(SweepField::Process, four_processes()),
                SweepAxis::new(SweepField::BOverN, batch_ratios(scale)),
            ];
        }
        Preset::Fig6 => {
            let (k, delta) = rounded_log_quantile(n);
            let beta = 1.0 / (n as f64).ln();
            c.notes.push(format!(
                "quantile parameter 1/ln n = {beta} rounded to the nearest multiple of 1/n: {k}/{n} = {delta}"
            ));
            c.sweep = vec![
                SweepAxis::new(
                    SweepField::Process,
                    [
                        ProcessConfig::quantile(delta),
                        ProcessConfig::one_plus_beta(beta),
                        ProcessConfig::one_plus_beta(0.5),
                    ],
                ),
                SweepAxis::new(
                    SweepField::BOverN,
                    match scale {
                        Scale::Desk => vec![150, 300],
                        Scale::Paper => vec![200, 250, 500, 1000],
                    },
                ),
            ];
        }
        Preset::Fig7 => {
            c.sweep = vec![
                SweepAxis::new(
                    SweepField::Weights,
                    [WeightsConfig::new(WeightName::Exponential), WeightsConfig::new(WeightName::Unit)],
                ),
                SweepAxis::new(SweepField::Process, four_processes()),
                SweepAxis::new(SweepField::BOverN, batch_ratios(scale)),
            ];
        }
        Preset::Fig8 => {
            c.sweep = vec![
                SweepAxis::new(SweepField::TieBreaking, [TieBreaking::Random, TieBreaking::Deterministic]),
                SweepAxis::new(SweepField::BOverN, [25]),
            ];
        }
    }
    c
}
