//! Pilot-calibrated thresholds for the lower-bound experiments.
//!
//! The constants are computed once by [`calibrate`] from a pilot seed that no
//! acceptance run uses, written to `calibration.json` at the crate root, and
//! compiled into the library through [`committed`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::lower_bounds::{log_lower_experiment, poisson_min_gap};
use crate::processes::{ProcessKind, ProcessSpec};

pub const PILOT_SEED: u64 = 0x9117_5eed;

const COMMITTED: &str = include_str!("../../calibration.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogLowerCalibration {
    pub process: String,
    pub n: usize,
    pub b: u64,
    pub runs: usize,
    pub pilot_min_gap: f64,
    /// Half the smallest pilot gap, in units of `ln n`.
    pub k_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonCalibration {
    pub n: usize,
    pub lambda: f64,
    pub trials: u64,
    pub kappa: f64,
    pub pilot_estimate: f64,
    pub pilot_lower: f64,
    /// `max(0.05, pilot_lower / 2)`.
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub pilot_seed: u64,
    pub log_lower: LogLowerCalibration,
    pub poisson: PoissonCalibration,
    /// Required success fraction for the first-batch experiment.
    pub first_batch_floor: f64,
}

pub const POISSON_FLOOR_MIN: f64 = 0.05;
pub const FIRST_BATCH_FLOOR: f64 = 0.9;

pub fn calibrate(pilot_seed: u64) -> Result<Calibration> {
    let (n, runs) = (256, 100);
    let spec = ProcessSpec::deterministic(ProcessKind::OnePlusBeta { beta: 0.5 });
    let log = log_lower_experiment(&spec, n, n as u64, runs, pilot_seed, None)?;
    let log_lower = LogLowerCalibration {
        process: spec.label(),
        n,
        b: log.b,
        runs,
        pilot_min_gap: log.min_gap,
        k_hat: 0.5 * log.min_gap / log.ln_n,
    };

    let pn = 100;
    let lambda = 16.0 * (pn as f64).ln();
    let trials = 10_000;
    let kappa = 0.1;
    let pois = poisson_min_gap(pn, lambda, trials, &[kappa], pilot_seed)?;
    let est = &pois.estimates[0].probability;
    let poisson = PoissonCalibration {
        n: pn,
        lambda,
        trials,
        kappa,
        pilot_estimate: est.estimate,
        pilot_lower: est.lower,
        floor: POISSON_FLOOR_MIN.max(0.5 * est.lower),
    };

    Ok(Calibration {
        pilot_seed,
        log_lower,
        poisson,
        first_batch_floor: FIRST_BATCH_FLOOR,
    })
}

/// Constants compiled from the committed `calibration.json`.
pub fn committed() -> Calibration {
    serde_json::from_str(COMMITTED).expect("committed calibration.json is valid")
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_calibration(cal: &Calibration, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cal)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(1.0)
    }

    #[test]
    fn committed_constants_match_the_pilot() {
        let c = committed();
        let fresh = calibrate(c.pilot_seed).unwrap();
        assert_eq!(c.pilot_seed, PILOT_SEED);
        assert_eq!(c.log_lower.process, fresh.log_lower.process);
        assert_eq!((c.log_lower.n, c.log_lower.b, c.log_lower.runs), (fresh.log_lower.n, fresh.log_lower.b, fresh.log_lower.runs));
        assert!(close(c.log_lower.pilot_min_gap, fresh.log_lower.pilot_min_gap));
        assert!(close(c.log_lower.k_hat, fresh.log_lower.k_hat));
        assert!(close(c.poisson.lambda, fresh.poisson.lambda));
        assert!(close(c.poisson.pilot_estimate, fresh.poisson.pilot_estimate));
        assert!(close(c.poisson.floor, fresh.poisson.floor));
        assert_eq!(c.first_batch_floor, fresh.first_batch_floor);
        assert!(c.poisson.floor >= POISSON_FLOOR_MIN);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        let c = committed();
        write_calibration(&c, &path).unwrap();
        let back = read_calibration(&path).unwrap();
        assert_eq!(back.pilot_seed, c.pilot_seed);
        assert!(close(back.log_lower.k_hat, c.log_lower.k_hat));
    }
}
