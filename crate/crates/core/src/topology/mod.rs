//! Consensus (mixing) matrices, their spectral gap, and epoch-indexed
//! topology schedules.
//!
//! A valid [`MixingMatrix`] is symmetric, non-negative, and doubly
//! stochastic. Its spectral gap `rho = 1 - max(|l_2|, |l_n|)^2` governs how
//! fast one gossip round contracts disagreement between workers.

mod eigen;
mod schedule;

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::Rng;

pub use eigen::symmetric_eigenvalues;
pub use schedule::TopologySchedule;

use crate::error::{Error, Result};

/// Tolerance for the doubly-stochastic and symmetry checks.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Validated symmetric doubly stochastic gossip weights with cached spectral gap.
#[derive(Clone, PartialEq)]
pub struct MixingMatrix {
    rows: Vec<Vec<f64>>,
    rho: f64,
    label: String,
}

impl fmt::Debug for MixingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixingMatrix")
            .field("label", &self.label)
            .field("n", &self.n())
            .field("rho", &self.rho)
            .finish()
    }
}

impl MixingMatrix {
    /// Wraps arbitrary weights after checking every consensus-matrix property
    /// and a strictly positive spectral gap.
    pub fn from_rows(rows: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let report = validate(&rows);
        if !report.passed() {
            return Err(Error::invalid(format!("not a consensus matrix: {report}")));
        }
        let rho = spectral_gap(&rows)?;
        if rho <= 0.0 {
            return Err(Error::Topology(format!("spectral gap {rho} is not positive; the topology is disconnected")));
        }
        Ok(Self { rows, rho, label: label.into() })
    }

    /// No communication at all: every worker keeps its own vector. Its gap
    /// is 0, so it only serves as a degenerate baseline and in tests.
    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
        let rho = if n == 1 { 1.0 } else { 0.0 };
        Self { rows, rho, label: format!("identity({n})") }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }
}

/// Every pair of workers exchanges with weight `1/n`.
pub fn build_full_mesh(n: usize) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::invalid("full mesh needs at least one worker"));
    }
    let w = 1.0 / n as f64;
    let rows = vec![vec![w; n]; n];
    let rho = spectral_gap(&rows)?;
    Ok(MixingMatrix { rows, rho, label: format!("full_mesh({n})") })
}

/// Metropolis-Hastings weights on a connected undirected graph:
/// `w_ij = min(1/(deg i + 1), 1/(deg j + 1))` on edges, remainder on the diagonal.
pub fn build_metropolis_hastings(adj: &Adjacency) -> Result<MixingMatrix> {
    let n = adj.n();
    if n == 0 {
        return Err(Error::invalid("adjacency matrix is empty"));
    }
    adj.check()?;
    if !adj.is_connected() {
        return Err(Error::Topology("communication graph is disconnected".into()));
    }
    let deg: Vec<usize> = (0..n).map(|i| adj.degree(i)).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if adj.edge(i, j) {
                let w = (1.0 / (deg[i] + 1) as f64).min(1.0 / (deg[j] + 1) as f64);
                rows[i][j] = w;
                rows[j][i] = w;
            }
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, w)| w).sum();
        row[i] = 1.0 - off;
    }
    let rho = spectral_gap(&rows)?;
    Ok(MixingMatrix { rows, rho, label: format!("metropolis_hastings({n})") })
}

/// Metropolis-Hastings weights on the cycle graph.
pub fn build_ring(n: usize) -> Result<MixingMatrix> {
    if n < 3 {
        return Err(Error::invalid(format!("a ring needs at least 3 workers, got {n}")));
    }
    let mut m = build_metropolis_hastings(&Adjacency::cycle(n))?;
    m.label = format!("ring({n})");
    Ok(m)
}

/// `rho = 1 - max(|l_2|, |l_n|)^2` for a symmetric matrix.
///
/// A single worker has no second eigenvalue; its gap is 1. The identity (or
/// any block-diagonal, disconnected) matrix yields 0.
pub fn spectral_gap(w: &[Vec<f64>]) -> Result<f64> {
    let n = w.len();
    if w.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("spectral gap needs a square matrix"));
    }
    let asym = max_asymmetry(w);
    if asym > VALIDATION_TOL {
        return Err(Error::invalid(format!("matrix is not symmetric (max |w_ij - w_ji| = {asym:e})")));
    }
    let ev = symmetric_eigenvalues(w)?;
    if n < 2 {
        return Ok(1.0);
    }
    let worst = ev[1].abs().max(ev[n - 1].abs());
    Ok((1.0 - worst * worst).clamp(0.0, 1.0))
}

fn max_asymmetry(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((w[i][j] - w[j][i]).abs());
        }
    }
    worst
}

/// Outcome of one consensus-matrix property check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub max_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.checks.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            let verdict = if c.passed { "ok" } else { "FAIL" };
            write!(f, "{} {} ({:e})", c.name, verdict, c.max_violation)?;
        }
        Ok(())
    }
}

/// Checks the consensus-matrix properties: square, entries in [0, 1],
/// symmetric, unit row sums and unit column sums (all within 1e-12).
pub fn validate(w: &[Vec<f64>]) -> ValidationReport {
    let n = w.len();
    let square = n > 0 && w.iter().all(|r| r.len() == n);
    let mut checks = vec![Check { name: "square", passed: square, max_violation: 0.0 }];
    if !square {
        return ValidationReport { checks };
    }

    let mut range_viol = 0.0f64;
    for row in w {
        for &x in row {
            let v = if x.is_nan() {
                f64::INFINITY
            } else if x < 0.0 {
                -x
            } else if x > 1.0 {
                x - 1.0
            } else {
                0.0
            };
            range_viol = range_viol.max(v);
        }
    }
    let asym = max_asymmetry(w);
    let row_viol = w.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0f64, f64::max);
    let col_viol = (0..n).map(|j| (w.iter().map(|r| r[j]).sum::<f64>() - 1.0).abs()).fold(0.0f64, f64::max);

    for (name, v) in [
        ("entries_in_unit_interval", range_viol),
        ("symmetric", asym),
        ("row_sums", row_viol),
        ("column_sums", col_viol),
    ] {
        checks.push(Check { name, passed: v <= VALIDATION_TOL, max_violation: v });
    }
    ValidationReport { checks }
}

/// Undirected graph without self-loops, as a dense boolean matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    edges: Vec<Vec<bool>>,
}

impl Adjacency {
    pub fn from_rows(edges: Vec<Vec<bool>>) -> Result<Self> {
        let adj = Self { edges };
        adj.check()?;
        Ok(adj)
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges = vec![vec![false; n]; n];
        if n >= 2 {
            for i in 0..n {
                let j = (i + 1) % n;
                if i != j {
                    edges[i][j] = true;
                    edges[j][i] = true;
                }
            }
        }
        Self { edges }
    }

    /// Worker 0 is the hub.
    pub fn star(n: usize) -> Self {
        let mut edges = vec![vec![false; n]; n];
        for leaf in 1..n {
            edges[0][leaf] = true;
            edges[leaf][0] = true;
        }
        Self { edges }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect();
        Self { edges }
    }

    /// Erdos-Renyi graph with edge probability `p`, redrawn until connected.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Self {
        loop {
            let mut edges = vec![vec![false; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < p {
                        edges[i][j] = true;
                        edges[j][i] = true;
                    }
                }
            }
            let adj = Self { edges };
            if adj.is_connected() {
                return adj;
            }
        }
    }

    /// Whitespace-separated 0/1 rows, one per line. Blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse {
                        path: path.to_owned(),
                        line: lineno + 1,
                        msg: format!("expected 0 or 1, found {other:?}"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            edges.push(row);
        }
        Self::from_rows(edges)
    }

    pub fn n(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.edges[i][j]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges[i].iter().filter(|&&e| e).count()
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.edges[i][j] = false;
        self.edges[j][i] = false;
    }

    fn check(&self) -> Result<()> {
        let n = self.edges.len();
        if self.edges.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("adjacency matrix is not square"));
        }
        for i in 0..n {
            if self.edges[i][i] {
                return Err(Error::invalid(format!("adjacency has a self-loop at {i}")));
            }
            for j in (i + 1)..n {
                if self.edges[i][j] != self.edges[j][i] {
                    return Err(Error::invalid(format!("adjacency is asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Breadth-first reachability from worker 0.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if self.edges[i][j] && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}
