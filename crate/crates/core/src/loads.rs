//! Bin loads, normalization and the gap.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Loads of `n` bins after `step` balls with cumulative weight `total_weight`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadState {
    loads: Vec<f64>,
    total: CompensatedSum,
    step: u64,
}

impl LoadState {
    /// `n` empty bins.
    pub fn empty(n: usize) -> Self {
        Self {
            loads: vec![0.0; n],
            total: CompensatedSum::new(),
            step: 0,
        }
    }

    /// A state with the given loads; the total weight is their sum.
    ///
    /// Panics on negative or non-finite loads.
    pub fn from_loads(loads: Vec<f64>, step: u64) -> Self {
        assert!(
            loads.iter().all(|x| x.is_finite() && *x >= 0.0),
            "loads must be finite and non-negative"
        );
        let total = loads.iter().copied().collect();
        Self { loads, total, step }
    }

    pub fn n(&self) -> usize {
        self.loads.len()
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn total_weight(&self) -> f64 {
        self.total.value()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn mean_load(&self) -> f64 {
        self.total_weight() / self.n() as f64
    }

    /// Places one ball of weight `w` into `bin`.
    pub fn allocate(&mut self, bin: usize, w: f64) {
        debug_assert!(w >= 0.0);
        self.loads[bin] += w;
        self.total.add(w);
        self.step += 1;
    }

    /// Bin indices ordered by rank: most loaded first, equal loads by
    /// ascending bin index.
    pub fn rank_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| match self.loads[b].total_cmp(&self.loads[a]) {
            Ordering::Equal => a.cmp(&b),
            other => other,
        });
        order
    }

    pub fn normalize_and_sort(&self) -> NormalizedLoads {
        let mean = self.mean_load();
        let mut y: Vec<f64> = self.loads.iter().map(|x| x - mean).collect();
        y.sort_by(|a, b| b.total_cmp(a));
        NormalizedLoads { y }
    }

    /// Maximum load minus the average load.
    pub fn gap(&self) -> f64 {
        self.max_load() - self.mean_load()
    }

    /// Minimum load minus the average load.
    pub fn min_y(&self) -> f64 {
        self.loads.iter().copied().fold(f64::INFINITY, f64::min) - self.mean_load()
    }

    pub fn max_load(&self) -> f64 {
        self.loads.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// FNV-1a over the bit patterns of the loads.
    pub fn digest(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        for x in &self.loads {
            for byte in x.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(PRIME);
            }
        }
        h
    }
}

/// Normalized loads `y_i = x_i - W/n`, sorted non-increasingly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLoads {
    y: Vec<f64>,
}

impl NormalizedLoads {
    /// Sorts `values` non-increasingly without re-centering.
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self { y: values }
    }

    /// Subtracts the mean, then sorts.
    pub fn centered(values: Vec<f64>) -> Self {
        let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
        Self::from_values(values.into_iter().map(|v| v - mean).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self { y: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }

    /// `y_1`, the gap.
    pub fn gap(&self) -> f64 {
        self.y[0]
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.y.iter().copied())
    }
}
