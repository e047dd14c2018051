//! Regular graphs for graphical allocation: generators, exact conductance,
//! the load-dependent allocation vector and its expansion bounds.
//!
//! Edge-list exchange format (0-based vertices):
//!
//! ```text
//! n d
//! u v
//! u v
//! ...
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::NormalizedLoads;
use crate::processes::{ConditionReport, ProbabilityVector};
use crate::seed::RngSeedPlan;

/// Largest vertex count accepted by [`conductance_exact`].
pub const MAX_EXACT_CONDUCTANCE_N: usize = 24;

const MAX_PAIRING_ATTEMPTS: usize = 1000;

/// A connected, simple, `d`-regular undirected graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegularGraph {
    n: usize,
    d: usize,
    edges: Vec<(u32, u32)>,
    adjacency: Vec<Vec<u32>>,
}

impl RegularGraph {
    /// Validates regularity, simplicity and connectivity.
    pub fn from_edges(n: usize, d: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("graph needs at least 2 vertices, got {n}")));
        }
        let mut adjacency = vec![Vec::with_capacity(d); n];
        for &(u, v) in &edges {
            let (ui, vi) = (u as usize, v as usize);
            if ui >= n || vi >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at vertex {u}")));
            }
            if adjacency[ui].contains(&v) {
                return Err(Error::invalid(format!("parallel edge ({u}, {v})")));
            }
            adjacency[ui].push(v);
            adjacency[vi].push(u);
        }
        if let Some(v) = adjacency.iter().position(|a| a.len() != d) {
            return Err(Error::invalid(format!(
                "vertex {v} has degree {} but the graph should be {d}-regular",
                adjacency[v].len()
            )));
        }
        let graph = Self {
            n,
            d,
            edges,
            adjacency,
        };
        if !graph.is_connected() {
            return Err(Error::invalid("graph is not connected"));
        }
        Ok(graph)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[v]
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                let w = w as usize;
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// Serializes to the edge-list exchange format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.d);
        for (u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn parse_edge_list(text: &str, source_name: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: source_name.into(),
            line,
            column: 1,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing \"n d\" header".into()))?;
        let pair = |lineno: usize, s: &str| -> Result<(usize, usize)> {
            let mut it = s.split_whitespace();
            let mut next = || {
                it.next()
                    .ok_or_else(|| parse_err(lineno, format!("expected two integers, got {s:?}")))
                    .and_then(|t| {
                        t.parse::<usize>()
                            .map_err(|e| parse_err(lineno, format!("{t:?}: {e}")))
                    })
            };
            let a = next()?;
            let b = next()?;
            if it.next().is_some() {
                return Err(parse_err(lineno, format!("expected two integers, got {s:?}")));
            }
            Ok((a, b))
        };
        let (n, d) = pair(header_line, header)?;
        let mut edges = Vec::new();
        for (lineno, l) in lines {
            let (u, v) = pair(lineno, l)?;
            edges.push((u as u32, v as u32));
        }
        Self::from_edges(n, d, edges)
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, &path.display().to_string())
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphKind {
    Cycle { n: usize },
    Hypercube { dim: u32 },
    Complete { n: usize },
    RandomRegular { n: usize, d: usize, seed: u64 },
}

pub fn generate(kind: GraphKind) -> Result<RegularGraph> {
    match kind {
        GraphKind::Cycle { n } => {
            if n < 3 {
                return Err(Error::invalid(format!("cycle needs n >= 3, got {n}")));
            }
            let edges = (0..n).map(|i| (i as u32, ((i + 1) % n) as u32)).collect();
            RegularGraph::from_edges(n, 2, edges)
        }
        GraphKind::Hypercube { dim } => {
            if !(1..=20).contains(&dim) {
                return Err(Error::invalid(format!("hypercube dimension {dim} outside 1..=20")));
            }
            let n = 1usize << dim;
            let mut edges = Vec::with_capacity(n * dim as usize / 2);
            for v in 0..n {
                for bit in 0..dim {
                    let w = v ^ (1 << bit);
                    if v < w {
                        edges.push((v as u32, w as u32));
                    }
                }
            }
            RegularGraph::from_edges(n, dim as usize, edges)
        }
        GraphKind::Complete { n } => {
            if n < 2 {
                return Err(Error::invalid(format!("complete graph needs n >= 2, got {n}")));
            }
            let edges = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u as u32, v as u32)))
                .collect();
            RegularGraph::from_edges(n, n - 1, edges)
        }
        GraphKind::RandomRegular { n, d, seed } => random_regular(n, d, seed),
    }
}

/// Pairing (configuration) model: shuffle `n*d` half-edges, pair consecutive
/// ones, reject multigraphs and disconnected results.
fn random_regular(n: usize, d: usize, seed: u64) -> Result<RegularGraph> {
    if d == 0 || d >= n || !(n * d).is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "random regular graph needs 0 < d < n and n*d even, got n = {n}, d = {d}"
        )));
    }
    let mut rng = RngSeedPlan::new(seed, 0).rng();
    let mut points: Vec<u32> = (0..n as u32)
        .flat_map(|v| std::iter::repeat_n(v, d))
        .collect();
    let mut last_reason = String::new();
    for _ in 0..MAX_PAIRING_ATTEMPTS {
        points.shuffle(&mut rng);
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::with_capacity(d); n];
        let mut edges = Vec::with_capacity(n * d / 2);
        let mut simple = true;
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adjacency[u as usize].contains(&v) {
                simple = false;
                break;
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
            edges.push((u.min(v), u.max(v)));
        }
        if !simple {
            last_reason = "pairing produced a loop or parallel edge".into();
            continue;
        }
        edges.sort_unstable();
        match RegularGraph::from_edges(n, d, edges) {
            Ok(g) => return Ok(g),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::GenerationFailure {
        attempts: MAX_PAIRING_ATTEMPTS,
        reason: last_reason,
    })
}

/// Minimum of `|E(S, V \ S)| / (|S| d)` over `1 <= |S| <= n/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductanceResult {
    pub phi: f64,
    pub cut_edges: usize,
    pub set_size: usize,
    pub witness_set: Vec<usize>,
}

impl ConductanceResult {
    /// Recomputes the ratio on the witness set.
    pub fn recompute(&self, g: &RegularGraph) -> f64 {
        let inside: Vec<bool> = (0..g.n()).map(|v| self.witness_set.contains(&v)).collect();
        let cut = g
            .edges()
            .iter()
            .filter(|(u, v)| inside[*u as usize] != inside[*v as usize])
            .count();
        cut as f64 / (self.witness_set.len() * g.d()) as f64
    }
}

/// Brute force over all vertex subsets of size at most `n/2`.
pub fn conductance_exact(g: &RegularGraph) -> Result<ConductanceResult> {
    let n = g.n();
    if n > MAX_EXACT_CONDUCTANCE_N {
        return Err(Error::TooLarge {
            n,
            max: MAX_EXACT_CONDUCTANCE_N,
        });
    }
    let masks: Vec<u32> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |m, &w| m | (1 << w)))
        .collect();
    // best ratio kept as an exact fraction cut / size
    let mut best: Option<(usize, usize, u32)> = None;
    for set in 1u32..(1u32 << n) {
        let size = set.count_ones() as usize;
        if 2 * size > n {
            continue;
        }
        let mut cut = 0usize;
        let mut rest = set;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            cut += (masks[v] & !set).count_ones() as usize;
        }
        let better = match best {
            None => true,
            Some((bc, bs, _)) => cut * bs < bc * size,
        };
        if better {
            best = Some((cut, size, set));
        }
    }
    let (cut, size, set) = best.expect("n >= 2 gives at least one subset");
    Ok(ConductanceResult {
        phi: cut as f64 / (size * g.d()) as f64,
        cut_edges: cut,
        set_size: size,
        witness_set: (0..n).filter(|v| set & (1 << v) != 0).collect(),
    })
}

/// Per-rank allocation mass in half-edge units: for each edge the strictly
/// lighter endpoint gets 2 units, a tied pair 1 unit each. Total is `2|E|`.
pub fn graphical_half_edge_counts(
    g: &RegularGraph,
    y: &NormalizedLoads,
    rank_of_vertex: &[usize],
) -> Vec<u64> {
    assert_eq!(rank_of_vertex.len(), g.n(), "one rank per vertex");
    let ys = y.as_slice();
    let mut units = vec![0u64; g.n()];
    for &(u, v) in g.edges() {
        let (ru, rv) = (rank_of_vertex[u as usize], rank_of_vertex[v as usize]);
        let (yu, yv) = (ys[ru], ys[rv]);
        if yu < yv {
            units[ru] += 2;
        } else if yv < yu {
            units[rv] += 2;
        } else {
            units[ru] += 1;
            units[rv] += 1;
        }
    }
    units
}

/// The probability vector, by rank, of one graphical step from loads `y`
/// where vertex `v` sits at 0-based rank `rank_of_vertex[v]`.
pub fn graphical_probability_vector(
    g: &RegularGraph,
    y: &NormalizedLoads,
    rank_of_vertex: &[usize],
) -> ProbabilityVector {
    let units = graphical_half_edge_counts(g, y, rank_of_vertex);
    let total = (2 * g.edges().len()) as f64;
    ProbabilityVector::new(units.iter().map(|&u| u as f64 / total).collect())
        .expect("half-edge units sum to 2|E|")
}

/// Checks `sum_{i<=k} p_i <= (1 - phi) k/n` for `k <= n/2`,
/// `sum_{i>=k} p_i >= (1 + phi)(n-k+1)/n` for `k >= n/2 + 1`, and
/// `max p_i <= d/n`. Reports the first violation.
pub fn verify_expansion_bounds(
    g: &RegularGraph,
    y: &NormalizedLoads,
    rank_of_vertex: &[usize],
    phi: f64,
) -> ConditionReport {
    let p = graphical_probability_vector(g, y, rank_of_vertex);
    let ps = p.as_slice();
    let n = g.n();
    let nf = n as f64;
    let tol = 1e-12 * nf;
    let mut report = ConditionReport {
        condition: "expansion".into(),
        holds: true,
        delta: Some(0.5),
        epsilon: Some(phi),
        c: Some(g.d() as f64),
        witness_k: None,
        witness_value: None,
    };
    let fail = |k: usize, value: f64, report: &mut ConditionReport| {
        if report.holds {
            report.holds = false;
            report.witness_k = Some(k);
            report.witness_value = Some(value);
        }
    };

    let mut prefix = 0.0;
    for k in (1..=n).take_while(|k| 2 * k <= n) {
        prefix += ps[k - 1];
        if prefix > (1.0 - phi) * k as f64 / nf + tol {
            fail(k, prefix, &mut report);
        }
    }
    let mut suffix = 0.0;
    let mut suffix_violation = None;
    for k in (1..=n).rev().take_while(|k| 2 * k >= n + 2) {
        suffix += ps[k - 1];
        if suffix < (1.0 + phi) * (n - k + 1) as f64 / nf - tol {
            suffix_violation = Some((k, suffix));
        }
    }
    if let Some((k, v)) = suffix_violation {
        fail(k, v, &mut report);
    }
    let cap = g.d() as f64 / nf;
    if let Some(i) = ps.iter().position(|&x| x > cap + tol) {
        fail(i + 1, ps[i], &mut report);
    }
    report
}
