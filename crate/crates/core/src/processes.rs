//! Allocation processes as probability vectors over load ranks.
//!
//! Ranks are 1-based in documentation (rank 1 is the most loaded bin) and
//! 0-based in storage: `p[0]` is the probability of the most loaded bin.
//!
//! Closed-form vectors are exact rationals. They are evaluated with a single
//! correctly-rounded division per entry whenever the parameters have a small
//! rational representation, so e.g. `(1+beta)` with `beta = 0.4` reproduces
//! the decimal values `0.064, 0.072, ...` bit for bit.

use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::RegularGraph;
use crate::loads::{compensated_sum, NormalizedLoads};

/// Largest integer below which every `u64` converts to `f64` exactly.
const EXACT_F64_INT: u128 = 1 << 53;

#[derive(Clone, Debug, PartialEq)]
pub enum ProcessKind {
    OneChoice,
    /// Sample `d` bins, allocate to the least loaded. `d = 2` is TwoChoice.
    DChoice { d: u32 },
    /// TwoChoice with probability `beta`, OneChoice otherwise.
    OnePlusBeta { beta: f64 },
    /// Sample one bin; if it is among the `delta * n` heaviest, place into a second sample.
    Quantile { delta: f64 },
    /// TwoChoice restricted to the endpoints of a uniformly sampled edge.
    Graphical(Arc<RegularGraph>),
}

impl ProcessKind {
    pub fn two_choice() -> Self {
        ProcessKind::DChoice { d: 2 }
    }

    pub fn label(&self) -> String {
        match self {
            ProcessKind::OneChoice => "one_choice".into(),
            ProcessKind::DChoice { d: 2 } => "two_choice".into(),
            ProcessKind::DChoice { d: 3 } => "three_choice".into(),
            ProcessKind::DChoice { d } => format!("d_choice({d})"),
            ProcessKind::OnePlusBeta { beta } => format!("one_plus_beta({beta})"),
            ProcessKind::Quantile { delta } => format!("quantile({delta})"),
            ProcessKind::Graphical(g) => format!("graphical(n={},d={})", g.n(), g.d()),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            ProcessKind::OneChoice => Ok(()),
            ProcessKind::DChoice { d } if d < 2 => {
                Err(Error::invalid(format!("d-choice needs d >= 2, got {d}")))
            }
            ProcessKind::DChoice { .. } => Ok(()),
            ProcessKind::OnePlusBeta { beta } if !(beta > 0.0 && beta <= 1.0) => {
                Err(Error::invalid(format!("beta must lie in (0, 1], got {beta}")))
            }
            ProcessKind::OnePlusBeta { .. } => Ok(()),
            ProcessKind::Quantile { delta } => quantile_count(delta, n).map(|_| ()),
            ProcessKind::Graphical(ref g) if g.n() != n => Err(Error::invalid(format!(
                "graph has {} vertices but the run has {n} bins",
                g.n()
            ))),
            ProcessKind::Graphical(_) => Ok(()),
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreaking {
    /// Equal loads keep a fixed order: ascending bin index within a load level.
    #[default]
    Deterministic,
    /// Probabilities are averaged over blocks of equal load.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub tie_breaking: TieBreaking,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind, tie_breaking: TieBreaking) -> Self {
        Self { kind, tie_breaking }
    }

    pub fn deterministic(kind: ProcessKind) -> Self {
        Self::new(kind, TieBreaking::Deterministic)
    }

    pub fn random_ties(kind: ProcessKind) -> Self {
        Self::new(kind, TieBreaking::Random)
    }

    pub fn label(&self) -> String {
        match self.tie_breaking {
            TieBreaking::Deterministic => self.kind.label(),
            TieBreaking::Random => format!("{}+random_ties", self.kind.label()),
        }
    }
}

/// Probability of allocating into each rank; rank 0 is the most loaded bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    p: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates non-negativity and unit mass (absolute tolerance `1e-12`).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        if let Some(bad) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::invalid(format!("negative or non-finite entry {bad}")));
        }
        let total = compensated_sum(p.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("entries sum to {total}, not 1")));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    /// The extremal vector with `(1 - eps)/n` on the first `delta*n` ranks and
    /// `(1 + eps*delta/(1 - delta))/n` on the rest; it majorizes every vector
    /// satisfying the prefix/suffix condition with the same `(delta, eps)`.
    pub fn worst_case(n: usize, delta: f64, eps: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0 && eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(format!(
                "worst-case vector needs delta, eps in (0, 1), got {delta}, {eps}"
            )));
        }
        let k = quantile_count(delta, n)?;
        let nf = n as f64;
        let eps_tilde = eps * delta / (1.0 - delta);
        let p = (0..n)
            .map(|i| {
                if i < k {
                    (1.0 - eps) / nf
                } else {
                    (1.0 + eps_tilde) / nf
                }
            })
            .collect();
        Ok(Self { p })
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }

    pub fn max(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// 0-based rank of the largest entry (the last one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.p.iter().enumerate() {
            if x >= self.p[best] {
                best = i;
            }
        }
        best
    }

    pub fn prefix_sums(&self) -> Vec<f64> {
        self.p
            .iter()
            .scan(0.0, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }
}

/// Number of ranks `floor(delta * n)` covered by a quantile parameter, with
/// integral products snapped against rounding noise.
pub fn quantile_count(delta: f64, n: usize) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    let x = delta * n as f64;
    let k = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.floor()
    };
    if k < 1.0 {
        return Err(Error::invalid(format!(
            "delta * n = {x} covers no rank (n = {n})"
        )));
    }
    Ok(k as usize)
}

fn require_integral_quantile(delta: f64, n: usize) -> Result<usize> {
    let k = quantile_count(delta, n)?;
    let x = delta * n as f64;
    if (x - k as f64).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "quantile delta * n must be integral, got {delta} * {n} = {x}"
        )));
    }
    Ok(k)
}

/// Small-denominator rational equal to `x` after conversion back to `f64`.
fn exact_ratio(x: f64) -> Option<(i64, i64)> {
    let r = Ratio::<i64>::approximate_float(x)?;
    let (num, den) = (*r.numer(), *r.denom());
    (num as f64 / den as f64 == x).then_some((num, den))
}

/// `num / den`; a single correctly rounded division when both are below 2^53.
fn ratio_to_f64(num: u128, den: u128) -> f64 {
    num as f64 / den as f64
}

/// Closed-form probability vector of a time-invariant process.
///
/// - OneChoice: `1/n`
/// - DChoice(d): `(i^d - (i-1)^d) / n^d`
/// - (1+beta): `(1-beta)/n + beta (2i-1)/n^2`
/// - Quantile(delta): `delta/n` for `i <= delta n`, `(1+delta)/n` after.
pub fn probability_vector(kind: &ProcessKind, n: usize) -> Result<ProbabilityVector> {
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2 bins, got {n}")));
    }
    kind.validate(n)?;
    let nn = n as u128;
    let p: Vec<f64> = match *kind {
        ProcessKind::OneChoice => vec![1.0 / n as f64; n],
        ProcessKind::DChoice { d } => d_choice_vector(n, d),
        ProcessKind::OnePlusBeta { beta } => {
            let exact = exact_ratio(beta).and_then(|(a, c)| {
                let (a, c) = (a as u128, c as u128);
                let den = c.checked_mul(nn * nn)?;
                (den < EXACT_F64_INT).then_some((a, c, den))
            });
            match exact {
                Some((a, c, den)) => (1..=nn)
                    .map(|i| ratio_to_f64((c - a) * nn + a * (2 * i - 1), den))
                    .collect(),
                None => {
                    let nf = n as f64;
                    (1..=n)
                        .map(|i| (1.0 - beta) / nf + beta * (2 * i - 1) as f64 / (nf * nf))
                        .collect()
                }
            }
        }
        ProcessKind::Quantile { delta } => {
            let k = require_integral_quantile(delta, n)? as u128;
            (1..=nn)
                .map(|i| {
                    if i <= k {
                        ratio_to_f64(k, nn * nn)
                    } else {
                        ratio_to_f64(nn + k, nn * nn)
                    }
                })
                .collect()
        }
        ProcessKind::Graphical(_) => {
            return Err(Error::invalid(
                "graphical processes have a load-dependent vector; use graphs::graphical_probability_vector",
            ))
        }
    };
    Ok(ProbabilityVector { p })
}

fn d_choice_vector(n: usize, d: u32) -> Vec<f64> {
    let nn = n as u128;
    match nn.checked_pow(d) {
        Some(den) => (1..=nn)
            .map(|i| ratio_to_f64(i.pow(d) - (i - 1).pow(d), den))
            .collect(),
        None => {
            let nf = n as f64;
            (1..=n)
                .map(|i| {
                    let hi = (i as f64 / nf).powi(d as i32);
                    let lo = ((i - 1) as f64 / nf).powi(d as i32);
                    hi - lo
                })
                .collect()
        }
    }
}

/// Averages `p` over each maximal block of equal normalized load, which is
/// the allocation vector when load ties are broken uniformly at random.
pub fn tie_break_average(p: &ProbabilityVector, y: &NormalizedLoads) -> ProbabilityVector {
    assert_eq!(p.n(), y.n(), "vector and loads must have the same length");
    ProbabilityVector {
        p: average_over_ties(&p.p, y.as_slice()),
    }
}

/// Block-averages `p` over runs of equal `keys` (which must be sorted).
pub(crate) fn average_over_ties(p: &[f64], keys: &[f64]) -> Vec<f64> {
    let mut out = p.to_vec();
    let mut start = 0;
    while start < keys.len() {
        let mut end = start + 1;
        while end < keys.len() && keys[end] == keys[start] {
            end += 1;
        }
        if end - start > 1 {
            let avg = compensated_sum(p[start..end].iter().copied()) / (end - start) as f64;
            out[start..end].fill(avg);
        }
        start = end;
    }
    out
}

/// Outcome of checking one condition on a probability vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub holds: bool,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    /// 1-based rank at which the first violation occurred.
    pub witness_k: Option<usize>,
    /// The offending quantity (entry or partial sum) at `witness_k`.
    pub witness_value: Option<f64>,
}

impl ConditionReport {
    fn new(condition: &str) -> Self {
        Self {
            condition: condition.into(),
            holds: true,
            delta: None,
            epsilon: None,
            c: None,
            witness_k: None,
            witness_value: None,
        }
    }

    fn fail(mut self, k: usize, value: f64) -> Self {
        self.holds = false;
        self.witness_k = Some(k);
        self.witness_value = Some(value);
        self
    }
}

fn tolerance(n: usize) -> f64 {
    1e-12 * n as f64
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {x}")))
    }
}

/// Non-decreasing in rank.
pub fn check_d0(p: &ProbabilityVector) -> ConditionReport {
    let report = ConditionReport::new("D0");
    let tol = tolerance(p.n());
    match p.p.windows(2).position(|w| w[1] < w[0] - tol) {
        Some(i) => report.fail(i + 2, p.p[i + 1]),
        None => report,
    }
}

/// `p_{floor(delta n)} <= (1 - eps)/n`.
pub fn check_d1(p: &ProbabilityVector, delta: f64, eps: f64) -> Result<ConditionReport> {
    check_unit_interval("delta", delta)?;
    check_unit_interval("epsilon", eps)?;
    let n = p.n();
    let k = quantile_count(delta, n)?;
    let mut report = ConditionReport::new("D1");
    report.delta = Some(delta);
    report.epsilon = Some(eps);
    let value = p.p[k - 1];
    if value > (1.0 - eps) / n as f64 + tolerance(n) {
        report = report.fail(k, value);
    }
    Ok(report)
}

/// `max p_i <= C/n`.
pub fn check_d2(p: &ProbabilityVector, c: f64) -> Result<ConditionReport> {
    if !(c > 1.0) {
        return Err(Error::invalid(format!("C must exceed 1, got {c}")));
    }
    let mut report = cap_check("D2", p, c);
    report.c = Some(c);
    Ok(report)
}

/// Prefix bound `sum_{i<=k} p_i <= (1-eps) k/n` for `k <= delta n` and suffix
/// bound `sum_{i>=k} p_i >= (1 + eps delta/(1-delta)) (n-k+1)/n` after.
pub fn check_c1(p: &ProbabilityVector, delta: f64, eps: f64) -> Result<ConditionReport> {
    check_unit_interval("delta", delta)?;
    check_unit_interval("epsilon", eps)?;
    let n = p.n();
    let nf = n as f64;
    let split = quantile_count(delta, n)?;
    let tol = tolerance(n);
    let mut report = ConditionReport::new("C1");
    report.delta = Some(delta);
    report.epsilon = Some(eps);

    let mut prefix = 0.0;
    for k in 1..=split {
        prefix += p.p[k - 1];
        if prefix > (1.0 - eps) * k as f64 / nf + tol {
            return Ok(report.fail(k, prefix));
        }
    }
    let boost = 1.0 + eps * delta / (1.0 - delta);
    let mut suffix = 0.0;
    let mut first_violation = None;
    for k in (split + 1..=n).rev() {
        suffix += p.p[k - 1];
        if suffix < boost * (n - k + 1) as f64 / nf - tol {
            first_violation = Some((k, suffix));
        }
    }
    Ok(match first_violation {
        Some((k, v)) => report.fail(k, v),
        None => report,
    })
}

/// `max p_i <= C/n`, witness at the argmax.
pub fn check_c2(p: &ProbabilityVector, c: f64) -> ConditionReport {
    let mut report = cap_check("C2", p, c);
    report.c = Some(c);
    report
}

fn cap_check(name: &str, p: &ProbabilityVector, c: f64) -> ConditionReport {
    let n = p.n();
    let i = p.argmax();
    let report = ConditionReport::new(name);
    if p.p[i] > c / n as f64 + tolerance(n) {
        report.fail(i + 1, p.p[i])
    } else {
        report
    }
}

/// Whether every prefix sum of `p` dominates the matching prefix sum of `q`.
pub fn majorizes(p: &ProbabilityVector, q: &ProbabilityVector) -> bool {
    assert_eq!(p.n(), q.n(), "vectors must have the same length");
    let tol = tolerance(p.n());
    p.prefix_sums()
        .iter()
        .zip(q.prefix_sums())
        .all(|(a, b)| *a >= b - tol)
}

/// `sum_i p_i c_i`.
pub fn dot(p: &ProbabilityVector, c: &[f64]) -> f64 {
    compensated_sum(p.p.iter().zip(c).map(|(a, b)| a * b))
}
