//! The batched allocation engine.
//!
//! A batch of `b` balls is placed against the loads frozen at the start of the
//! batch: ranks are computed once, the allocation vector (with random
//! tie-breaking applied if requested) is turned into an alias table, and every
//! ball of the batch samples a rank from it. Graphical processes instead
//! sample an edge per ball and compare the endpoints' frozen loads.

use std::sync::Arc;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{graphical_probability_vector, RegularGraph};
use crate::loads::LoadState;
use crate::potentials::{hyperbolic_potential, lambda_potential, PotentialParams};
use crate::processes::{
    average_over_ties, probability_vector, ProbabilityVector, ProcessKind, ProcessSpec, TieBreaking,
};
use crate::seed::{RngSeedPlan, SimRng};
use crate::stats;
use crate::weights::WeightDistribution;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchRunConfig {
    pub n: usize,
    /// Balls per batch.
    pub b: u64,
    /// Total balls; a multiple of `b`.
    pub m: u64,
    pub process: ProcessSpec,
    pub weights: WeightDistribution,
    pub seed_plan: RngSeedPlan,
    pub record_potentials: Option<PotentialParams>,
    /// Number of evenly spaced gap samples taken inside the final batch.
    pub midbatch_samples: usize,
}

impl BatchRunConfig {
    /// Unit weights, seed plan `(0, 0)`, no potentials, no mid-batch samples.
    pub fn new(n: usize, b: u64, m: u64, process: ProcessSpec) -> Self {
        Self {
            n,
            b,
            m,
            process,
            weights: WeightDistribution::unit(),
            seed_plan: RngSeedPlan::new(0, 0),
            record_potentials: None,
            midbatch_samples: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("need n >= 2 bins, got {}", self.n)));
        }
        if self.b == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !self.m.is_multiple_of(self.b) {
            return Err(Error::invalid(format!(
                "total balls m = {} is not a multiple of b = {}",
                self.m, self.b
            )));
        }
        if self.midbatch_samples as u64 >= self.b && self.midbatch_samples > 0 {
            return Err(Error::invalid(format!(
                "{} mid-batch samples do not fit strictly inside a batch of {}",
                self.midbatch_samples, self.b
            )));
        }
        self.process.kind.validate(self.n)?;
        if !matches!(self.process.kind, ProcessKind::Graphical(_)) {
            probability_vector(&self.process.kind, self.n)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub step: u64,
    pub gap: f64,
    pub min_y: f64,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidbatchSample {
    pub step: u64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// The initial state followed by one record per batch.
    pub boundaries: Vec<BoundaryRecord>,
    pub midbatch: Vec<MidbatchSample>,
    pub final_state_digest: u64,
}

impl RunTrace {
    pub fn final_record(&self) -> &BoundaryRecord {
        self.boundaries.last().expect("a trace holds at least the initial state")
    }
}

/// Per-run sampling data that does not depend on the loads: the closed-form
/// vector and its alias table.
#[derive(Clone, Debug)]
pub struct ProcessSampler {
    spec: ProcessSpec,
    base: Option<(Arc<ProbabilityVector>, Arc<WeightedAliasIndex<f64>>)>,
}

fn alias_table(p: &[f64]) -> WeightedAliasIndex<f64> {
    WeightedAliasIndex::new(p.to_vec()).expect("probability vectors have positive mass")
}

impl ProcessSampler {
    pub fn new(spec: &ProcessSpec, n: usize) -> Result<Self> {
        spec.kind.validate(n)?;
        let base = match spec.kind {
            ProcessKind::Graphical(_) => None,
            ref kind => {
                let p = probability_vector(kind, n)?;
                let table = alias_table(p.as_slice());
                Some((Arc::new(p), Arc::new(table)))
            }
        };
        Ok(Self {
            spec: spec.clone(),
            base,
        })
    }

    /// Freezes `state` for one batch.
    pub fn plan(&self, state: &LoadState) -> BatchPlan {
        let order = state.rank_order();
        let sampler = match (&self.spec.kind, &self.base) {
            (ProcessKind::Graphical(g), _) => RankSampler::Edges {
                graph: Arc::clone(g),
                snapshot: state.loads().to_vec(),
            },
            (_, Some((p, table))) => {
                let keys: Vec<f64> = order.iter().map(|&bin| state.loads()[bin]).collect();
                let has_ties = keys.windows(2).any(|w| w[0] == w[1]);
                if self.spec.tie_breaking == TieBreaking::Random && has_ties {
                    let averaged = average_over_ties(p.as_slice(), &keys);
                    let table = alias_table(&averaged);
                    RankSampler::Alias {
                        vector: Arc::new(
                            ProbabilityVector::new(averaged).expect("averaging preserves mass"),
                        ),
                        table: Arc::new(table),
                    }
                } else {
                    RankSampler::Alias {
                        vector: Arc::clone(p),
                        table: Arc::clone(table),
                    }
                }
            }
            (_, None) => unreachable!("closed-form processes always carry a base vector"),
        };
        BatchPlan { order, sampler }
    }
}

#[derive(Clone, Debug)]
enum RankSampler {
    Alias {
        vector: Arc<ProbabilityVector>,
        table: Arc<WeightedAliasIndex<f64>>,
    },
    Edges {
        graph: Arc<RegularGraph>,
        snapshot: Vec<f64>,
    },
}

/// One batch's frozen view of the loads.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    order: Vec<usize>,
    sampler: RankSampler,
}

impl BatchPlan {
    pub fn new(state: &LoadState, spec: &ProcessSpec) -> Result<Self> {
        Ok(ProcessSampler::new(spec, state.n())?.plan(state))
    }

    /// Bins from most to least loaded at batch start.
    pub fn rank_order(&self) -> &[usize] {
        &self.order
    }

    /// The allocation vector by rank in force for this batch.
    pub fn effective_vector(&self) -> ProbabilityVector {
        match &self.sampler {
            RankSampler::Alias { vector, .. } => (**vector).clone(),
            RankSampler::Edges { graph, snapshot } => {
                let mut rank_of_vertex = vec![0; self.order.len()];
                for (r, &v) in self.order.iter().enumerate() {
                    rank_of_vertex[v] = r;
                }
                let frozen = LoadState::from_loads(snapshot.clone(), 0);
                graphical_probability_vector(graph, &frozen.normalize_and_sort(), &rank_of_vertex)
            }
        }
    }

    /// Draws the bin receiving the next ball of the batch.
    pub fn sample_bin<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.sampler {
            RankSampler::Alias { table, .. } => self.order[table.sample(rng)],
            RankSampler::Edges { graph, snapshot } => {
                let edges = graph.edges();
                let (u, v) = edges[rng.random_range(0..edges.len())];
                let (u, v) = (u as usize, v as usize);
                match snapshot[u].total_cmp(&snapshot[v]) {
                    std::cmp::Ordering::Less => u,
                    std::cmp::Ordering::Greater => v,
                    std::cmp::Ordering::Equal => {
                        if rng.random::<bool>() {
                            u
                        } else {
                            v
                        }
                    }
                }
            }
        }
    }

    /// Places `count` balls into `state` using this frozen plan.
    pub fn allocate<R: Rng + ?Sized>(
        &self,
        state: &mut LoadState,
        count: u64,
        weights: &WeightDistribution,
        rng: &mut R,
    ) {
        for _ in 0..count {
            let bin = self.sample_bin(rng);
            let w = weights.sample(rng);
            state.allocate(bin, w);
        }
    }
}

/// Allocates one batch of `b` balls into `state`. `b = 0` leaves it unchanged.
pub fn run_batch<R: Rng + ?Sized>(
    state: &mut LoadState,
    spec: &ProcessSpec,
    b: u64,
    weights: &WeightDistribution,
    rng: &mut R,
) -> Result<()> {
    if b == 0 {
        return Ok(());
    }
    BatchPlan::new(state, spec)?.allocate(state, b, weights, rng);
    Ok(())
}

fn boundary(state: &LoadState, params: Option<&PotentialParams>) -> Result<BoundaryRecord> {
    let (gamma, lambda) = match params {
        Some(pp) => {
            let y = state.normalize_and_sort();
            let snap = hyperbolic_potential(&y, pp.alpha())?;
            (
                Some(snap.gamma),
                Some(lambda_potential(&y, pp.gamma(), pp.k_threshold())),
            )
        }
        None => (None, None),
    };
    Ok(BoundaryRecord {
        step: state.step(),
        gap: state.gap(),
        min_y: state.min_y(),
        gamma,
        lambda,
    })
}

/// Executes `m/b` batches from empty bins and records every batch boundary.
pub fn run(config: &BatchRunConfig) -> Result<RunTrace> {
    run_with_state(config).map(|(trace, _)| trace)
}

/// Like [`run`], also returning the final loads.
pub fn run_with_state(config: &BatchRunConfig) -> Result<(RunTrace, LoadState)> {
    config.validate()?;
    let mut rng: SimRng = config.seed_plan.rng();
    let sampler = ProcessSampler::new(&config.process, config.n)?;
    let mut state = LoadState::empty(config.n);
    let batches = config.m / config.b;
    let params = config.record_potentials.as_ref();
    let mut boundaries = Vec::with_capacity(batches as usize + 1);
    boundaries.push(boundary(&state, params)?);
    let mut midbatch = Vec::new();
    for batch in 0..batches {
        let plan = sampler.plan(&state);
        if batch + 1 == batches && config.midbatch_samples > 0 {
            let k = config.midbatch_samples as u64;
            let mut done = 0;
            for j in 1..=k {
                let offset = j * config.b / (k + 1);
                if offset > done {
                    plan.allocate(&mut state, offset - done, &config.weights, &mut rng);
                    done = offset;
                    midbatch.push(MidbatchSample {
                        step: state.step(),
                        gap: state.gap(),
                    });
                }
            }
            plan.allocate(&mut state, config.b - done, &config.weights, &mut rng);
        } else {
            plan.allocate(&mut state, config.b, &config.weights, &mut rng);
        }
        boundaries.push(boundary(&state, params)?);
    }
    let trace = RunTrace {
        boundaries,
        midbatch,
        final_state_digest: state.digest(),
    };
    Ok((trace, state))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub step: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

/// Per-boundary gap aggregates over runs sharing a configuration shape.
pub fn gap_statistics(traces: &[RunTrace]) -> Result<Vec<BoundarySummary>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::MismatchedTraces("no traces given".into()))?;
    let steps: Vec<u64> = first.boundaries.iter().map(|r| r.step).collect();
    for (i, t) in traces.iter().enumerate() {
        let other: Vec<u64> = t.boundaries.iter().map(|r| r.step).collect();
        if other != steps {
            return Err(Error::MismatchedTraces(format!(
                "trace {i} has boundary steps differing from trace 0"
            )));
        }
    }
    Ok(steps
        .iter()
        .enumerate()
        .map(|(k, &step)| {
            let mut gaps: Vec<f64> = traces.iter().map(|t| t.boundaries[k].gap).collect();
            gaps.sort_by(f64::total_cmp);
            BoundarySummary {
                step,
                mean: stats::mean(&gaps),
                std: stats::population_std(&gaps),
                min: gaps[0],
                max: gaps[gaps.len() - 1],
                q10: stats::quantile_sorted(&gaps, 0.1),
                median: stats::quantile_sorted(&gaps, 0.5),
                q90: stats::quantile_sorted(&gaps, 0.9),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate, GraphKind};

    fn two_choice() -> ProcessSpec {
        ProcessSpec::deterministic(ProcessKind::two_choice())
    }

    #[test]
    fn config_validation() {
        assert!(BatchRunConfig::new(8, 3, 10, two_choice()).validate().is_err());
        assert!(BatchRunConfig::new(8, 0, 0, two_choice()).validate().is_err());
        assert!(BatchRunConfig::new(1, 1, 1, two_choice()).validate().is_err());
        let q = ProcessSpec::deterministic(ProcessKind::Quantile { delta: 0.3 });
        assert!(BatchRunConfig::new(8, 8, 8, q).validate().is_err());
        assert!(BatchRunConfig::new(8, 8, 64, two_choice()).validate().is_ok());
    }

    #[test]
    fn single_batch_has_two_boundaries() {
        let t = run(&BatchRunConfig::new(8, 16, 16, two_choice())).unwrap();
        assert_eq!(t.boundaries.len(), 2);
        assert_eq!(t.boundaries[0].step, 0);
        assert_eq!(t.boundaries[1].step, 16);
        assert_eq!(t.boundaries[0].gap, 0.0);
    }

    #[test]
    fn empty_batch_is_a_no_op() {
        let mut s = LoadState::from_loads(vec![2.0, 1.0], 3);
        let before = s.clone();
        let mut rng = RngSeedPlan::new(0, 0).rng();
        run_batch(&mut s, &two_choice(), 0, &WeightDistribution::unit(), &mut rng).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn one_choice_two_bins_two_balls() {
        // outcomes (bin of ball 1, bin of ball 2): 2 of 4 split evenly, 2 of 4 stack
        let spec = ProcessSpec::deterministic(ProcessKind::OneChoice);
        let runs = 40_000;
        let mut stacked = 0;
        for r in 0..runs {
            let mut s = LoadState::empty(2);
            let mut rng = RngSeedPlan::new(10, r).rng();
            run_batch(&mut s, &spec, 2, &WeightDistribution::unit(), &mut rng).unwrap();
            match s.gap() {
                g if g == 1.0 => stacked += 1,
                g => assert_eq!(g, 0.0),
            }
        }
        let frac = stacked as f64 / runs as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / runs as f64).sqrt(), "{frac}");
    }

    #[test]
    fn two_choice_two_bins_one_ball() {
        // pair oracle: of the 4 ordered samples of ranks {1, 2}, only (1, 1)
        // lands in rank 1, so p = (1/4, 3/4)
        let mut counts = [0u32; 2];
        for a in 0..2 {
            for b in 0..2 {
                counts[usize::max(a, b)] += 1;
            }
        }
        assert_eq!(counts, [1, 3]);
        let p = probability_vector(&ProcessKind::two_choice(), 2).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        // wherever the single ball lands, the gap is 1 - 1/2
        for r in 0..100 {
            let mut s = LoadState::empty(2);
            let mut rng = RngSeedPlan::new(11, r).rng();
            run_batch(&mut s, &two_choice(), 1, &WeightDistribution::unit(), &mut rng).unwrap();
            assert_eq!(s.gap(), 0.5);
        }
    }

    #[test]
    fn determinism_and_conservation() {
        let mut cfg = BatchRunConfig::new(32, 64, 64 * 20, two_choice());
        cfg.weights = WeightDistribution::exponential();
        cfg.seed_plan = RngSeedPlan::new(99, 4);
        let (a, sa) = run_with_state(&cfg).unwrap();
        let (b, _) = run_with_state(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa.step(), 64 * 20);

        // replay the weight draws independently of the engine
        let mut rng = cfg.seed_plan.rng();
        let sampler = ProcessSampler::new(&cfg.process, cfg.n).unwrap();
        let mut replay = LoadState::empty(cfg.n);
        let mut drawn = crate::loads::CompensatedSum::new();
        for _ in 0..20 {
            let plan = sampler.plan(&replay);
            for _ in 0..64 {
                let bin = plan.sample_bin(&mut rng);
                let w = cfg.weights.sample(&mut rng);
                drawn.add(w);
                replay.allocate(bin, w);
            }
        }
        assert_eq!(replay.digest(), a.final_state_digest);
        let total = sa.total_weight();
        assert!((total - drawn.value()).abs() <= 1e-9 * total);
        let direct: f64 = crate::loads::compensated_sum(sa.loads().iter().copied());
        assert!((total - direct).abs() <= 1e-9 * total);
    }

    #[test]
    fn different_seeds_differ() {
        let mut cfg = BatchRunConfig::new(16, 16, 160, two_choice());
        let a = run(&cfg).unwrap();
        cfg.seed_plan = RngSeedPlan::new(0, 1);
        let b = run(&cfg).unwrap();
        assert_ne!(a.final_state_digest, b.final_state_digest);
    }

    #[test]
    fn midbatch_samples_fall_inside_the_final_batch() {
        let mut cfg = BatchRunConfig::new(8, 10, 30, two_choice());
        cfg.midbatch_samples = 4;
        let t = run(&cfg).unwrap();
        let steps: Vec<u64> = t.midbatch.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![22, 24, 26, 28]);
        assert_eq!(t.boundaries.last().unwrap().step, 30);
    }

    #[test]
    fn potentials_are_recorded_when_requested() {
        let mut cfg = BatchRunConfig::new(8, 8, 32, two_choice());
        cfg.record_potentials = Some(PotentialParams::explicit(0.1, 1.0, 0.25, 0.1, 1.0).unwrap());
        let t = run(&cfg).unwrap();
        assert_eq!(t.boundaries[0].gamma, Some(16.0));
        assert_eq!(t.boundaries[0].lambda, Some(0.0));
        assert!(t.boundaries.iter().all(|r| r.gamma.unwrap() >= 16.0));
    }

    #[test]
    fn random_ties_average_the_vector() {
        let s = LoadState::from_loads(vec![1.0, 0.0, 0.0, 2.0], 3);
        let plan = BatchPlan::new(&s, &ProcessSpec::random_ties(ProcessKind::two_choice())).unwrap();
        assert_eq!(plan.rank_order(), &[3, 0, 1, 2]);
        let p = plan.effective_vector();
        assert_eq!(p.as_slice(), &[1.0 / 16.0, 3.0 / 16.0, 6.0 / 16.0, 6.0 / 16.0]);
        let det = BatchPlan::new(&s, &two_choice()).unwrap();
        assert_eq!(det.effective_vector().as_slice(), &[1.0 / 16.0, 3.0 / 16.0, 5.0 / 16.0, 7.0 / 16.0]);
    }

    #[test]
    fn graphical_effective_vector_matches_edge_sampling() {
        let g = Arc::new(generate(GraphKind::Hypercube { dim: 3 }).unwrap());
        let s = LoadState::from_loads(vec![3.0, 1.0, 4.0, 1.0, 5.0, 0.0, 2.0, 6.0], 22);
        let plan = BatchPlan::new(&s, &ProcessSpec::deterministic(ProcessKind::Graphical(g))).unwrap();
        let p = plan.effective_vector();
        let mut rank_of_bin = [0usize; 8];
        for (r, &v) in plan.rank_order().iter().enumerate() {
            rank_of_bin[v] = r;
        }
        let draws = 200_000u64;
        let mut counts = vec![0u64; 8];
        let mut rng = RngSeedPlan::new(77, 0).rng();
        for _ in 0..draws {
            counts[rank_of_bin[plan.sample_bin(&mut rng)]] += 1;
        }
        let (_, pval) = stats::chi_square_gof(&counts, p.as_slice());
        assert!(pval > 1e-4, "p-value {pval}, counts {counts:?}, p {:?}", p.as_slice());
    }

    #[test]
    fn gap_statistics_examples() {
        let mk = |gaps: &[f64]| RunTrace {
            boundaries: gaps
                .iter()
                .enumerate()
                .map(|(i, &g)| BoundaryRecord {
                    step: i as u64,
                    gap: g,
                    min_y: -g,
                    gamma: None,
                    lambda: None,
                })
                .collect(),
            midbatch: vec![],
            final_state_digest: 0,
        };
        let single = gap_statistics(&[mk(&[0.0, 3.0])]).unwrap();
        assert_eq!((single[1].mean, single[1].std), (3.0, 0.0));
        let pair = gap_statistics(&[mk(&[0.0, 4.0]), mk(&[0.0, 6.0])]).unwrap();
        assert_eq!((pair[1].mean, pair[1].std), (5.0, 1.0));
        assert!(matches!(
            gap_statistics(&[mk(&[0.0]), mk(&[0.0, 1.0])]),
            Err(Error::MismatchedTraces(_))
        ));
        assert!(gap_statistics(&[]).is_err());

        let traces: Vec<RunTrace> = (0..100)
            .map(|r| {
                let mut cfg = BatchRunConfig::new(16, 16, 64, ProcessSpec::deterministic(ProcessKind::OneChoice));
                cfg.seed_plan = RngSeedPlan::new(8, r);
                run(&cfg).unwrap()
            })
            .collect();
        assert!(gap_statistics(&traces).unwrap().last().unwrap().std > 0.0);
    }
}
