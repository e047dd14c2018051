//! Exponential potentials over normalized loads and the drift inequalities
//! they satisfy.
//!
//! - Hyperbolic cosine potential `Gamma = Phi + Psi = sum e^{alpha y_i} + sum e^{-alpha y_i}`.
//! - Threshold potential `Lambda = sum_{y_i >= k} e^{gamma (y_i - k)}`.
//! - Deterministic one-step drift bound for vectors satisfying the prefix/suffix
//!   condition, and a Monte Carlo estimator of the one-batch moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::{compensated_sum, CompensatedSum, LoadState, NormalizedLoads};
use crate::processes::{check_c1, ProbabilityVector, ProcessSpec};
use crate::seed::RngSeedPlan;
use crate::sim::BatchPlan;
use crate::weights::WeightDistribution;

/// Largest exponent accepted before a potential term is reported as overflow.
pub const MAX_EXPONENT: f64 = 700.0;

/// `c(delta) = 2 max(delta/4, delta/(1-delta), 2 e^{((1-delta)/(2 delta)) ln(8/3)} delta/(1-delta),
/// 2 e^{(delta/(2(1-delta))) ln(8/3)})`.
pub fn c_delta(delta: f64) -> f64 {
    let l = (8.0f64 / 3.0).ln();
    let r = delta / (1.0 - delta);
    let branches = [
        delta / 4.0,
        r,
        2.0 * (((1.0 - delta) / (2.0 * delta)) * l).exp() * r,
        2.0 * ((delta / (2.0 * (1.0 - delta))) * l).exp(),
    ];
    2.0 * branches.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Smoothing parameters for the two potentials together with the constants
/// they are derived from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    alpha: f64,
    alpha_tilde: f64,
    gamma: f64,
    k_threshold: f64,
    big_k: f64,
    c_delta: f64,
}

/// Process and weight constants the parameter choices depend on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub n: usize,
    pub b: u64,
    /// `n * max p_i`.
    pub c_cap: f64,
    /// Moment constant of the weight distribution.
    pub s: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl DriftConstants {
    /// `K = 5 C^2 S^2 b/n`.
    pub fn big_k(&self) -> f64 {
        5.0 * self.c_cap.powi(2) * self.s.powi(2) * self.b as f64 / self.n as f64
    }
}

impl PotentialParams {
    /// `alpha = eps delta / (8K)` with `K = 5 C^2 S^2 b/n`.
    pub fn weak(k: &DriftConstants) -> Result<Self> {
        k.validate()?;
        let big_k = k.big_k();
        let alpha = k.epsilon * k.delta / (8.0 * big_k);
        Ok(Self::derive(k, alpha, big_k))
    }

    /// `alpha = eps delta / (40 C^2 S^2) min(1/ln n, n/b)`.
    pub fn strong(k: &DriftConstants) -> Result<Self> {
        k.validate()?;
        let (nf, bf) = (k.n as f64, k.b as f64);
        let alpha = k.epsilon * k.delta / (40.0 * k.c_cap.powi(2) * k.s.powi(2))
            * (1.0 / nf.ln()).min(nf / bf);
        Ok(Self::derive(k, alpha, k.big_k()))
    }

    /// `alpha_tilde = alpha/240`, `gamma = min(eps/(4CS), n ln n/b)`,
    /// `k = (1/alpha_tilde) ln(c_tilde/delta)` with `c_tilde = 16 c(delta)/delta`.
    fn derive(k: &DriftConstants, alpha: f64, big_k: f64) -> Self {
        let (nf, bf) = (k.n as f64, k.b as f64);
        let c = c_delta(k.delta);
        let alpha_tilde = alpha / 240.0;
        let c_tilde = 2.0 * 8.0 * c / k.delta;
        Self {
            alpha,
            alpha_tilde,
            gamma: (k.epsilon / (4.0 * k.c_cap * k.s)).min(nf * nf.ln() / bf),
            k_threshold: (c_tilde / k.delta).ln() / alpha_tilde,
            big_k,
            c_delta: c,
        }
    }

    /// Explicit values, for experiments that choose `alpha` directly.
    pub fn explicit(alpha: f64, big_k: f64, delta: f64, gamma: f64, k_threshold: f64) -> Result<Self> {
        if !(alpha > 0.0 && gamma > 0.0 && big_k >= 0.0 && delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "need alpha, gamma > 0, K >= 0 and delta in (0, 1); got {alpha}, {gamma}, {big_k}, {delta}"
            )));
        }
        Ok(Self {
            alpha,
            alpha_tilde: alpha / 240.0,
            gamma,
            k_threshold,
            big_k,
            c_delta: c_delta(delta),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_tilde(&self) -> f64 {
        self.alpha_tilde
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k_threshold(&self) -> f64 {
        self.k_threshold
    }

    pub fn big_k(&self) -> f64 {
        self.big_k
    }

    pub fn c_delta(&self) -> f64 {
        self.c_delta
    }
}

impl DriftConstants {
    fn validate(&self) -> Result<()> {
        let ok = self.n >= 2
            && self.b >= 1
            && self.c_cap > 1.0
            && self.s >= 1.0
            && self.epsilon > 0.0
            && self.epsilon < 1.0
            && self.delta > 0.0
            && self.delta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid drift constants {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSnapshot {
    pub gamma: f64,
    pub phi: f64,
    pub psi: f64,
    /// `(Phi_i, Psi_i)` in rank order.
    pub per_bin: Vec<(f64, f64)>,
    pub lambda: Option<f64>,
}

fn check_exponent(alpha: f64, y: &[f64]) -> Result<()> {
    let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let exponent = alpha * max_abs;
    if exponent > MAX_EXPONENT {
        return Err(Error::Overflow {
            exponent,
            limit: MAX_EXPONENT,
        });
    }
    Ok(())
}

/// `Phi = sum e^{alpha y_i}`, `Psi = sum e^{-alpha y_i}`, `Gamma = Phi + Psi`.
pub fn hyperbolic_potential(y: &NormalizedLoads, alpha: f64) -> Result<PotentialSnapshot> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    check_exponent(alpha, y.as_slice())?;
    let per_bin: Vec<(f64, f64)> = y
        .as_slice()
        .iter()
        .map(|&v| ((alpha * v).exp(), (-alpha * v).exp()))
        .collect();
    let phi = compensated_sum(per_bin.iter().map(|t| t.0));
    let psi = compensated_sum(per_bin.iter().map(|t| t.1));
    Ok(PotentialSnapshot {
        gamma: phi + psi,
        phi,
        psi,
        per_bin,
        lambda: None,
    })
}

/// `sum_{i: y_i >= k} e^{gamma (y_i - k)}`.
pub fn lambda_potential(y: &NormalizedLoads, gamma: f64, k: f64) -> f64 {
    compensated_sum(
        y.as_slice()
            .iter()
            .filter(|&&v| v >= k)
            .map(|&v| (gamma * (v - k)).exp()),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftBounds {
    pub delta_phi: f64,
    pub delta_psi: f64,
    pub delta_gamma: f64,
}

/// `dPhi = sum Phi_i ((p_i - 1/n) alpha + K alpha^2/n)` and
/// `dPsi = sum Psi_i ((1/n - p_i) alpha + K alpha^2/n)`.
pub fn drift_upper_bounds(
    p: &ProbabilityVector,
    snap: &PotentialSnapshot,
    alpha: f64,
    big_k: f64,
) -> DriftBounds {
    assert_eq!(p.n(), snap.per_bin.len(), "vector and snapshot must have the same length");
    let nf = p.n() as f64;
    let second = big_k * alpha * alpha / nf;
    let delta_phi = compensated_sum(
        p.as_slice()
            .iter()
            .zip(&snap.per_bin)
            .map(|(&pi, &(phi, _))| phi * ((pi - 1.0 / nf) * alpha + second)),
    );
    let delta_psi = compensated_sum(
        p.as_slice()
            .iter()
            .zip(&snap.per_bin)
            .map(|(&pi, &(_, psi))| psi * ((1.0 / nf - pi) * alpha + second)),
    );
    DriftBounds {
        delta_phi,
        delta_psi,
        delta_gamma: delta_phi + delta_psi,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// Checks `dGamma <= -(eps delta/8)(alpha/n) Gamma + c(delta) eps alpha` for
/// the drift bounds of `p` at loads `y`.
pub fn verify_main_theorem(
    p: &ProbabilityVector,
    y: &NormalizedLoads,
    alpha: f64,
    epsilon: f64,
    delta: f64,
    big_k: f64,
) -> Result<TheoremCheck> {
    let report = check_c1(p, delta, epsilon)?;
    if !report.holds {
        return Err(Error::precondition(format!(
            "vector violates the prefix/suffix condition at rank {:?} (delta = {delta}, eps = {epsilon})",
            report.witness_k
        )));
    }
    let limit = if big_k > 0.0 {
        (epsilon * delta / (8.0 * big_k)).min(1.0)
    } else {
        1.0
    };
    if !(alpha > 0.0 && alpha < limit) {
        return Err(Error::precondition(format!(
            "alpha = {alpha} must lie in (0, {limit})"
        )));
    }
    let snap = hyperbolic_potential(y, alpha)?;
    let drift = drift_upper_bounds(p, &snap, alpha, big_k);
    let nf = p.n() as f64;
    let rhs = -(epsilon * delta / 8.0) * (alpha / nf) * snap.gamma + c_delta(delta) * epsilon * alpha;
    let lhs = drift.delta_gamma;
    let slack = 1e-12 * (snap.gamma * alpha).max(1.0);
    Ok(TheoremCheck {
        holds: lhs <= rhs + slack,
        lhs,
        rhs,
    })
}

/// Monte Carlo estimate of the one-batch moments `E[Phi_i^{t+b}]`, `E[Psi_i^{t+b}]`
/// from a frozen state, against the bound
/// `sum Phi_i (1 + (p_i - 1/n) alpha b + 5 C^2 S^2 (b/n)(alpha^2/n) b)` and
/// its `Psi` analogue with `(1/n - p_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMomentEstimate {
    pub trials: u64,
    pub alpha: f64,
    pub c_cap: f64,
    pub s: f64,
    /// Start values `Phi_i^t`, `Psi_i^t` in rank order.
    pub phi_start: Vec<f64>,
    pub psi_start: Vec<f64>,
    pub phi_mean: Vec<f64>,
    pub phi_se: Vec<f64>,
    pub psi_mean: Vec<f64>,
    pub psi_se: Vec<f64>,
    pub phi_total: f64,
    pub phi_total_se: f64,
    pub psi_total: f64,
    pub psi_total_se: f64,
    pub phi_bound: f64,
    pub psi_bound: f64,
}

impl BatchMomentEstimate {
    /// Both aggregate estimates lie below their bounds plus `z` standard errors.
    pub fn within_bound(&self, z: f64) -> bool {
        self.phi_total <= self.phi_bound + z * self.phi_total_se
            && self.psi_total <= self.psi_bound + z * self.psi_total_se
    }
}

/// Running mean and sum of squared deviations (Welford), mergeable across chunks.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0.0 {
            return other;
        }
        if other.count == 0.0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }

    fn standard_error(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.count - 1.0) / self.count).sqrt()
    }
}

const TRIALS_PER_CHUNK: u64 = 1000;

/// Runs `trials` independent batches of `b` balls from `state` and averages
/// the resulting per-bin potentials. Increments are accumulated as
/// `Phi_i^t * expm1(alpha * dy)` so that tiny `alpha` keeps full precision.
pub fn monte_carlo_batch_moment(
    spec: &ProcessSpec,
    state: &LoadState,
    b: u64,
    weights: &WeightDistribution,
    alpha: f64,
    trials: u64,
    seed_plan: RngSeedPlan,
) -> Result<BatchMomentEstimate> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let n = state.n();
    let nf = n as f64;
    let plan = BatchPlan::new(state, spec)?;
    let p = plan.effective_vector();
    let c_cap = nf * p.max();
    let s = weights.moment_bound_s()?;
    if b > 0 && alpha > nf / (2.0 * c_cap * s * b as f64) {
        return Err(Error::precondition(format!(
            "alpha = {alpha} exceeds n/(2 C S b) = {}",
            nf / (2.0 * c_cap * s * b as f64)
        )));
    }
    let order = plan.rank_order().to_vec();
    let y0: Vec<f64> = {
        let mean = state.mean_load();
        order.iter().map(|&bin| state.loads()[bin] - mean).collect()
    };
    check_exponent(alpha, &y0)?;
    let phi_start: Vec<f64> = y0.iter().map(|&v| (alpha * v).exp()).collect();
    let psi_start: Vec<f64> = y0.iter().map(|&v| (-alpha * v).exp()).collect();

    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let per_chunk: Vec<Result<(Vec<Moments>, Vec<Moments>, Moments, Moments)>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seed_plan.nested(chunk).rng();
            let count = TRIALS_PER_CHUNK.min(trials - chunk * TRIALS_PER_CHUNK);
            let mut phi_m = vec![Moments::default(); n];
            let mut psi_m = vec![Moments::default(); n];
            let (mut phi_tot, mut psi_tot) = (Moments::default(), Moments::default());
            for _ in 0..count {
                let mut s1 = state.clone();
                plan.allocate(&mut s1, b, weights, &mut rng);
                let mean = s1.mean_load();
                let mut dphi_sum = CompensatedSum::new();
                let mut dpsi_sum = CompensatedSum::new();
                for (r, &bin) in order.iter().enumerate() {
                    let dy = (s1.loads()[bin] - mean) - y0[r];
                    let dphi = phi_start[r] * (alpha * dy).exp_m1();
                    let dpsi = psi_start[r] * (-alpha * dy).exp_m1();
                    phi_m[r].push(dphi);
                    psi_m[r].push(dpsi);
                    dphi_sum.add(dphi);
                    dpsi_sum.add(dpsi);
                }
                phi_tot.push(dphi_sum.value());
                psi_tot.push(dpsi_sum.value());
            }
            Ok((phi_m, psi_m, phi_tot, psi_tot))
        })
        .collect();

    let mut phi_m = vec![Moments::default(); n];
    let mut psi_m = vec![Moments::default(); n];
    let (mut phi_tot, mut psi_tot) = (Moments::default(), Moments::default());
    for chunk in per_chunk {
        let (a, b2, c, d) = chunk?;
        for r in 0..n {
            phi_m[r] = phi_m[r].merge(a[r]);
            psi_m[r] = psi_m[r].merge(b2[r]);
        }
        phi_tot = phi_tot.merge(c);
        psi_tot = psi_tot.merge(d);
    }

    let bf = b as f64;
    let second = 5.0 * c_cap.powi(2) * s.powi(2) * (bf / nf) * (alpha * alpha / nf) * bf;
    let phi_bound = compensated_sum(
        phi_start
            .iter()
            .zip(p.as_slice())
            .map(|(&f, &pi)| f * (1.0 + (pi - 1.0 / nf) * alpha * bf + second)),
    );
    let psi_bound = compensated_sum(
        psi_start
            .iter()
            .zip(p.as_slice())
            .map(|(&f, &pi)| f * (1.0 + (1.0 / nf - pi) * alpha * bf + second)),
    );
    Ok(BatchMomentEstimate {
        trials,
        alpha,
        c_cap,
        s,
        phi_mean: phi_start.iter().zip(&phi_m).map(|(f, m)| f + m.mean).collect(),
        phi_se: phi_m.iter().map(Moments::standard_error).collect(),
        psi_mean: psi_start.iter().zip(&psi_m).map(|(f, m)| f + m.mean).collect(),
        psi_se: psi_m.iter().map(Moments::standard_error).collect(),
        phi_total: compensated_sum(phi_start.iter().copied()) + phi_tot.mean,
        phi_total_se: phi_tot.standard_error(),
        psi_total: compensated_sum(psi_start.iter().copied()) + psi_tot.mean,
        psi_total_se: psi_tot.standard_error(),
        phi_bound,
        psi_bound,
        phi_start,
        psi_start,
    })
}

/// Largest `alpha` admitted by [`monte_carlo_batch_moment`]: `n/(2 C S b)`.
pub fn max_batch_alpha(
    spec: &ProcessSpec,
    state: &LoadState,
    b: u64,
    weights: &WeightDistribution,
) -> Result<f64> {
    let plan = BatchPlan::new(state, spec)?;
    let nf = state.n() as f64;
    let c_cap = nf * plan.effective_vector().max();
    Ok(nf / (2.0 * c_cap * weights.moment_bound_s()? * b as f64))
}

/// One probability vector of a drift sweep with the `(delta, eps)` it satisfies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCase {
    pub label: String,
    pub delta: f64,
    pub epsilon: f64,
    pub checks: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen; non-positive when every check holds.
    pub worst_margin: f64,
}

/// TwoChoice, (1+0.5), Quantile(0.5) and the extremal vector for `(1/4, 1/2)`,
/// each with the prefix/suffix parameters it is known to satisfy.
pub fn standard_drift_vectors(n: usize) -> Result<Vec<(String, ProbabilityVector, f64, f64)>> {
    use crate::processes::{probability_vector, ProcessKind};
    let mut out = Vec::new();
    for (kind, delta, eps) in [
        (ProcessKind::two_choice(), 0.25, 0.5),
        (ProcessKind::OnePlusBeta { beta: 0.5 }, 0.25, 0.25),
        (ProcessKind::Quantile { delta: 0.5 }, 0.5, 0.5),
    ] {
        out.push((kind.label(), probability_vector(&kind, n)?, delta, eps));
    }
    out.push((
        "worst_case(0.25,0.5)".into(),
        ProbabilityVector::worst_case(n, 0.25, 0.5)?,
        0.25,
        0.5,
    ));
    Ok(out)
}

/// Random centered load vector: uniform entries on `[-s, s]` with `s` drawn
/// log-uniformly from `[0.1, max_scale]`.
pub fn random_centered_loads<R: rand::Rng + ?Sized>(n: usize, max_scale: f64, rng: &mut R) -> NormalizedLoads {
    let scale = (rng.random_range(0.1f64.ln()..=max_scale.ln())).exp();
    NormalizedLoads::centered((0..n).map(|_| rng.random_range(-scale..=scale)).collect())
}

/// Checks the one-step drift inequality on `vectors` random load vectors for
/// every standard vector, with `alpha = eps delta / (16 K)`.
pub fn drift_sweep(n: usize, vectors: usize, big_k: f64, seed: u64) -> Result<Vec<DriftCase>> {
    standard_drift_vectors(n)?
        .into_iter()
        .enumerate()
        .map(|(idx, (label, p, delta, eps))| {
            let alpha = eps * delta / (16.0 * big_k);
            let max_scale = (0.9 * MAX_EXPONENT / alpha).min(1e4);
            let mut rng = RngSeedPlan::new(seed, idx as u64).rng();
            let mut case = DriftCase {
                label,
                delta,
                epsilon: eps,
                checks: 0,
                violations: 0,
                worst_margin: f64::NEG_INFINITY,
            };
            for _ in 0..vectors {
                let y = random_centered_loads(n, max_scale, &mut rng);
                let c = verify_main_theorem(&p, &y, alpha, eps, delta, big_k)?;
                case.checks += 1;
                case.violations += usize::from(!c.holds);
                case.worst_margin = case.worst_margin.max(c.lhs - c.rhs);
            }
            Ok(case)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{probability_vector, ProcessKind};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn c_delta_quarter() {
        let c = c_delta(0.25);
        let by_hand = 2.0 * (2.0 * (8.0f64 / 3.0).powf(1.5) / 3.0);
        assert!((c - by_hand).abs() < 1e-12);
        assert!((c - 5.805).abs() < 2e-3, "c = {c}");
    }

    #[test]
    fn hyperbolic_examples() {
        let s = hyperbolic_potential(&NormalizedLoads::zeros(5), 0.3).unwrap();
        assert_eq!(s.gamma, 10.0);
        let s = hyperbolic_potential(&NormalizedLoads::from_values(vec![1.0, -1.0]), 2f64.ln()).unwrap();
        assert!((s.gamma - 5.0).abs() < 1e-14);
        let y = NormalizedLoads::from_values(vec![2.0, -1.0, -1.0]);
        let s = hyperbolic_potential(&y, 1.0).unwrap();
        let e = std::f64::consts::E;
        let expected = e * e + 1.0 / (e * e) + 2.0 * (e + 1.0 / e);
        assert!((s.gamma - expected).abs() < 1e-12);
        assert!((s.gamma - 13.696714).abs() < 1e-6);
        assert_eq!(s.gamma, s.phi + s.psi);
    }

    #[test]
    fn hyperbolic_overflow_is_an_error() {
        let y = NormalizedLoads::from_values(vec![800.0, -800.0]);
        assert!(matches!(hyperbolic_potential(&y, 1.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn lambda_examples() {
        let y = NormalizedLoads::from_values(vec![1.0, 0.0, -1.0]);
        assert_eq!(lambda_potential(&y, 0.5, 2.0), 0.0);
        let y = NormalizedLoads::from_values(vec![2.0, 0.0, -2.0]);
        assert_eq!(lambda_potential(&y, 0.5, 2.0), 1.0);
        let y = NormalizedLoads::from_values(vec![5.0, 3.0, -8.0]);
        let v = lambda_potential(&y, 0.5, 2.0);
        assert!((v - (1.5f64.exp() + 0.5f64.exp())).abs() < 1e-12);
        assert!((v - 6.130).abs() < 1e-3);
    }

    #[test]
    fn lambda_monotone_in_gamma() {
        let y = NormalizedLoads::from_values(vec![7.0, 4.0, 2.5, -13.5]);
        let vals: Vec<f64> = [0.1, 0.2, 0.5, 1.0].iter().map(|&g| lambda_potential(&y, g, 2.0)).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn drift_with_uniform_vector_is_second_order_only() {
        let y = NormalizedLoads::centered(vec![4.0, 1.0, 0.0, 3.0]);
        let snap = hyperbolic_potential(&y, 0.1).unwrap();
        let d = drift_upper_bounds(&ProbabilityVector::uniform(4), &snap, 0.1, 2.0);
        assert!((d.delta_phi - snap.phi * 2.0 * 0.01 / 4.0).abs() < 1e-14);
        assert!((d.delta_psi - snap.psi * 2.0 * 0.01 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn drift_cancels_on_flat_loads() {
        let q = ProbabilityVector::worst_case(8, 0.5, 0.3).unwrap();
        let snap = hyperbolic_potential(&NormalizedLoads::zeros(8), 0.2).unwrap();
        let d = drift_upper_bounds(&q, &snap, 0.2, 0.0);
        assert!(d.delta_gamma.abs() < 1e-15);
    }

    #[test]
    fn drift_matches_independent_evaluation() {
        // q(delta = 1/4, eps = 1/2) on n = 4: first rank (1 - 1/2)/4, rest (1 + 1/6)/4
        let q = ProbabilityVector::worst_case(4, 0.25, 0.5).unwrap();
        assert_eq!(q.as_slice()[0], 0.125);
        let ys = [1.5, 0.5, -0.5, -1.5];
        let (alpha, k) = (0.2, 1.0);
        let snap = hyperbolic_potential(&NormalizedLoads::from_values(ys.to_vec()), alpha).unwrap();
        let d = drift_upper_bounds(&q, &snap, alpha, k);
        let mut phi = 0.0;
        let mut psi = 0.0;
        for i in 0..4 {
            let pi = q.as_slice()[i];
            phi += (alpha * ys[i]).exp() * ((pi - 0.25) * alpha + k * alpha * alpha / 4.0);
            psi += (-alpha * ys[i]).exp() * ((0.25 - pi) * alpha + k * alpha * alpha / 4.0);
        }
        assert!((d.delta_phi - phi).abs() < 1e-15);
        assert!((d.delta_psi - psi).abs() < 1e-15);
    }

    #[test]
    fn main_theorem_preconditions() {
        let one = probability_vector(&ProcessKind::OneChoice, 8).unwrap();
        let y = NormalizedLoads::zeros(8);
        assert!(matches!(
            verify_main_theorem(&one, &y, 0.01, 0.5, 0.25, 1.0),
            Err(Error::PreconditionViolated(_))
        ));
        let two = probability_vector(&ProcessKind::two_choice(), 8).unwrap();
        assert!(matches!(
            verify_main_theorem(&two, &y, 0.5, 0.5, 0.25, 1.0),
            Err(Error::PreconditionViolated(_))
        ));
        let r = verify_main_theorem(&two, &y, 0.01, 0.5, 0.25, 1.0).unwrap();
        assert!(r.holds);
        // flat loads: only the second-order term 2 K alpha^2 survives
        assert!((r.lhs - 2.0 * 0.01 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn main_theorem_randomized_two_choice() {
        let n = 64;
        let (eps, delta) = (0.5, 0.25);
        let alpha = eps * delta / 16.0;
        let p = probability_vector(&ProcessKind::two_choice(), n).unwrap();
        let mut rng = RngSeedPlan::new(3, 0).rng();
        for _ in 0..1000 {
            let scale: f64 = rng.random_range(0.1..200.0);
            let raw: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let y = NormalizedLoads::centered(raw);
            let r = verify_main_theorem(&p, &y, alpha, eps, delta, 1.0).unwrap();
            assert!(r.holds, "{r:?}");
        }
    }

    #[test]
    fn params_follow_their_definitions() {
        let k = DriftConstants {
            n: 256,
            b: 256,
            c_cap: 2.0,
            s: WeightDistribution::unit().moment_bound_s().unwrap(),
            epsilon: 0.5,
            delta: 0.25,
        };
        let weak = PotentialParams::weak(&k).unwrap();
        let big_k = 5.0 * 4.0 * k.s * k.s;
        assert!((weak.big_k() / big_k - 1.0).abs() < 1e-12);
        assert!((weak.alpha() - 0.125 / (8.0 * big_k)).abs() / weak.alpha() < 1e-12);
        assert_eq!(weak.alpha_tilde(), weak.alpha() / 240.0);

        let strong = PotentialParams::strong(&k).unwrap();
        let expected = 0.125 / (40.0 * 4.0 * k.s * k.s) * (1.0 / 256f64.ln());
        assert!((strong.alpha() / expected - 1.0).abs() < 1e-12);
        assert_eq!(strong.gamma(), (0.5 / (8.0 * k.s)).min(256f64.ln()));
        let c_tilde = 16.0 * c_delta(0.25) / 0.25;
        assert!((strong.k_threshold() - (c_tilde / 0.25).ln() / strong.alpha_tilde()).abs() < 1e-6);
        assert_eq!(strong.c_delta(), c_delta(0.25));
    }

    #[test]
    fn batch_moment_with_empty_batch_is_exact() {
        let state = LoadState::from_loads(vec![3.0, 1.0, 0.0, 0.0], 4);
        let spec = ProcessSpec::deterministic(ProcessKind::two_choice());
        let w = WeightDistribution::unit();
        let est = monte_carlo_batch_moment(&spec, &state, 0, &w, 0.1, 10, RngSeedPlan::new(1, 0)).unwrap();
        assert_eq!(est.phi_mean, est.phi_start);
        assert_eq!(est.psi_mean, est.psi_start);
        assert!(est.phi_se.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn batch_moment_precondition() {
        let state = LoadState::empty(8);
        let spec = ProcessSpec::deterministic(ProcessKind::two_choice());
        let w = WeightDistribution::unit();
        let err = monte_carlo_batch_moment(&spec, &state, 8, &w, 0.1, 10, RngSeedPlan::new(1, 0));
        assert!(matches!(err, Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn batch_moment_one_choice_has_no_first_order_drift() {
        let state = LoadState::from_loads(vec![5.0, 3.0, 2.0, 2.0, 1.0, 1.0, 0.0, 2.0], 16);
        let spec = ProcessSpec::deterministic(ProcessKind::OneChoice);
        let w = WeightDistribution::unit();
        let (b, trials) = (8, 20_000);
        let alpha = max_batch_alpha(&spec, &state, b, &w).unwrap();
        let est = monte_carlo_batch_moment(&spec, &state, b, &w, alpha, trials, RngSeedPlan::new(2, 0)).unwrap();
        let start: f64 = est.phi_start.iter().sum();
        // E[Phi^{t+b}] - Phi^t = O(alpha^2 b) per bin when p is uniform
        let band = 8.0 * alpha * alpha * b as f64 * start + 4.0 * est.phi_total_se;
        assert!((est.phi_total - start).abs() <= band, "{} vs {start}", est.phi_total);
        assert!(est.within_bound(3.0));
    }

    #[test]
    fn batch_moment_is_reproducible() {
        let state = LoadState::empty(8);
        let spec = ProcessSpec::deterministic(ProcessKind::two_choice());
        let w = WeightDistribution::unit();
        let alpha = max_batch_alpha(&spec, &state, 8, &w).unwrap();
        let a = monte_carlo_batch_moment(&spec, &state, 8, &w, alpha, 2500, RngSeedPlan::new(5, 0)).unwrap();
        let b = monte_carlo_batch_moment(&spec, &state, 8, &w, alpha, 2500, RngSeedPlan::new(5, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drift_sweep_small() {
        let cases = drift_sweep(16, 200, 1.0, 4).unwrap();
        assert_eq!(cases.len(), 4);
        for c in &cases {
            assert_eq!(c.checks, 200);
            assert_eq!(c.violations, 0, "{c:?}");
            assert!(c.worst_margin <= 0.0);
        }
    }
}
