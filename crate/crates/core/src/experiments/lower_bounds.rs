//! Lower-bound experiments: the first large batch, logarithmic gaps for
//! vectors bounded away from zero, and the minimum spacing of Poisson samples.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::LoadState;
use crate::processes::{probability_vector, ProcessKind, ProcessSpec, TieBreaking};
use crate::seed::RngSeedPlan;
use crate::sim::{self, BatchRunConfig, ProcessSampler};
use crate::stats::{self, wilson_interval, Proportion, Z_95};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstBatchOutcome {
    pub n: usize,
    pub b: u64,
    /// `n * max p_i`.
    pub c_cap: f64,
    /// `min(C - 1, 0.5)`.
    pub gamma: f64,
    /// `(gamma/4) b/n`.
    pub threshold: f64,
    /// `1 - n^{-gamma^2/8}`.
    pub guaranteed: f64,
    /// Normalized load of the bin at the argmax rank after each run's batch.
    pub ys: Vec<f64>,
    pub mean_y: f64,
    pub success: Proportion,
}

fn closed_form_vector(spec: &ProcessSpec, n: usize) -> Result<crate::ProbabilityVector> {
    if matches!(spec.kind, ProcessKind::Graphical(_)) {
        return Err(Error::precondition(
            "lower-bound experiments need a time-invariant probability vector",
        ));
    }
    probability_vector(&spec.kind, n)
}

/// Runs one batch of `b` unit balls from empty bins, `runs` times, and
/// records the normalized load of the bin holding the largest allocation
/// probability.
pub fn first_batch_lower_bound(
    n: usize,
    b: u64,
    spec: &ProcessSpec,
    runs: usize,
    seed: u64,
) -> Result<FirstBatchOutcome> {
    let nf = n as f64;
    if (b as f64) < nf * nf.ln() {
        return Err(Error::precondition(format!(
            "batch size {b} is below n ln n = {}",
            nf * nf.ln()
        )));
    }
    if spec.tie_breaking == TieBreaking::Random {
        return Err(Error::precondition(
            "the first-batch bound needs a fixed rank order (deterministic ties)",
        ));
    }
    let p = closed_form_vector(spec, n)?;
    let c_cap = nf * p.max();
    if c_cap <= 1.0 + 1e-12 {
        return Err(Error::precondition(format!(
            "max p_i = {} must exceed 1/n",
            p.max()
        )));
    }
    let gamma = (c_cap - 1.0).min(0.5);
    let threshold = gamma / 4.0 * b as f64 / nf;
    let sampler = ProcessSampler::new(spec, n)?;
    let empty = LoadState::empty(n);
    let target = sampler.plan(&empty).rank_order()[p.argmax()];
    let ys: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngSeedPlan::new(seed, r as u64).rng();
            let mut state = LoadState::empty(n);
            let plan = sampler.plan(&state);
            plan.allocate(&mut state, b, &crate::WeightDistribution::unit(), &mut rng);
            state.loads()[target] - state.mean_load()
        })
        .collect();
    let successes = ys.iter().filter(|&&y| y >= threshold).count() as u64;
    Ok(FirstBatchOutcome {
        n,
        b,
        c_cap,
        gamma,
        threshold,
        guaranteed: 1.0 - nf.powf(-gamma * gamma / 8.0),
        mean_y: stats::mean(&ys),
        ys,
        success: wilson_interval(successes, runs as u64, Z_95),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLowerOutcome {
    pub n: usize,
    pub b: u64,
    pub m: u64,
    /// `n * min p_i`.
    pub c_floor: f64,
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    pub ln_n: f64,
    /// Calibrated constant `k` in `Gap(m) >= k ln n`, if supplied.
    pub k_hat: Option<f64>,
    /// Whether every run reached `k_hat ln n`.
    pub all_above: Option<bool>,
}

/// `ceil(n ln n)` rounded up to a multiple of `b`.
pub fn log_lower_steps(n: usize, b: u64) -> u64 {
    let target = (n as f64 * (n as f64).ln()).ceil() as u64;
    target.div_ceil(b) * b
}

/// Gap after `m = ceil(n ln n)` unit balls (rounded up to whole batches of `b`).
pub fn log_lower_experiment(
    spec: &ProcessSpec,
    n: usize,
    b: u64,
    runs: usize,
    seed: u64,
    k_hat: Option<f64>,
) -> Result<LogLowerOutcome> {
    let p = closed_form_vector(spec, n)?;
    let c_floor = n as f64 * p.min();
    // TwoChoice puts exactly 1/n^2 on the heaviest rank, a floor that vanishes
    // relative to C/n; admissible vectors must beat it.
    if c_floor * n as f64 <= 1.0 + 1e-9 {
        return Err(Error::precondition(format!(
            "{} has min p_i = {} <= 1/n^2; the bound needs min p_i >= C/n",
            spec.label(),
            p.min()
        )));
    }
    if b == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let m = log_lower_steps(n, b);
    let gaps: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut cfg = BatchRunConfig::new(n, b, m, spec.clone());
            cfg.seed_plan = RngSeedPlan::new(seed, r as u64);
            sim::run(&cfg).map(|t| t.final_record().gap)
        })
        .collect::<Result<_>>()?;
    let ln_n = (n as f64).ln();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LogLowerOutcome {
        n,
        b,
        m,
        c_floor,
        min_gap,
        ln_n,
        all_above: k_hat.map(|k| gaps.iter().all(|&g| g >= k * ln_n)),
        k_hat,
        gaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    /// `kappa sqrt(lambda / ln n)`.
    pub threshold: f64,
    pub probability: Proportion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonMinGapOutcome {
    pub n: usize,
    pub lambda: f64,
    pub trials: u64,
    pub estimates: Vec<KappaEstimate>,
}

pub const DEFAULT_KAPPAS: [f64; 3] = [0.1, 0.25, 0.5];

const POISSON_CHUNK: u64 = 1000;

/// Estimates `Pr[Y_(n-1) - Y_(n) >= kappa sqrt(lambda/ln n)]` where `Y_(n)` and
/// `Y_(n-1)` are the smallest and second smallest of `n` i.i.d. Poisson(lambda).
pub fn poisson_min_gap(
    n: usize,
    lambda: f64,
    trials: u64,
    kappas: &[f64],
    seed: u64,
) -> Result<PoissonMinGapOutcome> {
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {n}")));
    }
    let ln_n = (n as f64).ln();
    if lambda < 16.0 * ln_n * (1.0 - 1e-12) {
        return Err(Error::precondition(format!(
            "lambda = {lambda} is below 16 ln n = {}",
            16.0 * ln_n
        )));
    }
    let dist = Poisson::new(lambda).map_err(|e| Error::invalid(format!("poisson rate: {e}")))?;
    let chunks = trials.div_ceil(POISSON_CHUNK);
    let spacings: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = RngSeedPlan::new(seed, c).rng();
            let count = POISSON_CHUNK.min(trials - c * POISSON_CHUNK);
            (0..count)
                .map(|_| {
                    let (mut lo, mut second) = (f64::INFINITY, f64::INFINITY);
                    for _ in 0..n {
                        let x: f64 = dist.sample(&mut rng);
                        if x < lo {
                            second = lo;
                            lo = x;
                        } else if x < second {
                            second = x;
                        }
                    }
                    second - lo
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let unit = (lambda / ln_n).sqrt();
    let estimates = kappas
        .iter()
        .map(|&kappa| {
            let threshold = kappa * unit;
            let hits = spacings.iter().filter(|&&s| s >= threshold).count() as u64;
            KappaEstimate {
                kappa,
                threshold,
                probability: wilson_interval(hits, trials, Z_95),
            }
        })
        .collect();
    Ok(PoissonMinGapOutcome {
        n,
        lambda,
        trials,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_batch_preconditions() {
        let one = ProcessSpec::deterministic(ProcessKind::OneChoice);
        assert!(matches!(
            first_batch_lower_bound(16, 1000, &one, 5, 0),
            Err(Error::PreconditionViolated(_))
        ));
        let two = ProcessSpec::deterministic(ProcessKind::two_choice());
        assert!(matches!(
            first_batch_lower_bound(16, 10, &two, 5, 0),
            Err(Error::PreconditionViolated(_))
        ));
        let random = ProcessSpec::random_ties(ProcessKind::two_choice());
        assert!(matches!(
            first_batch_lower_bound(16, 1000, &random, 5, 0),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn first_batch_two_choice_small() {
        let n = 128;
        let b = 2 * (n as f64 * (n as f64).ln()).ceil() as u64;
        let two = ProcessSpec::deterministic(ProcessKind::two_choice());
        let out = first_batch_lower_bound(n, b, &two, 200, 3).unwrap();
        assert_eq!(out.gamma, 0.5);
        assert!(out.success.estimate >= 0.9, "{:?}", out.success);
        assert!(out.guaranteed > 0.13 && out.guaranteed < 0.15);
    }

    #[test]
    fn more_choices_overload_the_target_more() {
        let n = 64;
        let b = 4 * (n as f64 * (n as f64).ln()).ceil() as u64;
        let two = first_batch_lower_bound(n, b, &ProcessSpec::deterministic(ProcessKind::two_choice()), 100, 1).unwrap();
        let three =
            first_batch_lower_bound(n, b, &ProcessSpec::deterministic(ProcessKind::DChoice { d: 3 }), 100, 1).unwrap();
        assert!(three.mean_y > two.mean_y);
    }

    #[test]
    fn log_lower_preconditions_and_run() {
        let two = ProcessSpec::deterministic(ProcessKind::two_choice());
        assert!(matches!(
            log_lower_experiment(&two, 64, 64, 3, 0, None),
            Err(Error::PreconditionViolated(_))
        ));
        let q = ProcessSpec::deterministic(ProcessKind::Quantile { delta: 0.5 });
        let out = log_lower_experiment(&q, 64, 64, 5, 0, Some(0.01)).unwrap();
        assert_eq!(out.m % 64, 0);
        assert!(out.m as f64 >= 64.0 * 64f64.ln());
        assert_eq!(out.all_above, Some(true));
        assert_eq!(out.c_floor, 0.5);
    }

    #[test]
    fn log_lower_steps_round_up() {
        assert_eq!(log_lower_steps(256, 256), 1536);
        assert_eq!(log_lower_steps(256, 1), 1420);
    }

    #[test]
    fn poisson_preconditions_and_monotonicity() {
        assert!(matches!(
            poisson_min_gap(100, 10.0, 10, &DEFAULT_KAPPAS, 0),
            Err(Error::PreconditionViolated(_))
        ));
        let out = poisson_min_gap(2, 16.0 * 2f64.ln(), 2000, &DEFAULT_KAPPAS, 1).unwrap();
        let zero = poisson_min_gap(2, 16.0 * 2f64.ln(), 500, &[0.0], 1).unwrap();
        assert_eq!(zero.estimates[0].probability.estimate, 1.0, "spacing is never negative");
        let ps: Vec<f64> = out.estimates.iter().map(|e| e.probability.estimate).collect();
        assert!(ps.windows(2).all(|w| w[0] >= w[1]), "{ps:?}");
    }
}
