//! Communication graphs and their doubly stochastic mixing matrices.
//!
//! Weights follow the Metropolis rule
//! `W[i][j] = 1 / (1 + max(deg_i, deg_j))` on every edge, with the remaining
//! mass placed on the diagonal. The result is symmetric and doubly stochastic
//! on any undirected graph. The spectral quantity
//! `rho = ‖W − J‖₂²` (with `J = 11ᵀ/n`) is computed once at construction.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Mat;

/// Absolute tolerance for row/column sums and symmetry.
pub const STOCHASTIC_TOL: f64 = 1e-12;

pub const DEFAULT_EXPONENTIAL_OFFSETS: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("disconnected topology")]
    Disconnected,
    #[error("matrix is not symmetric (|W[{i}][{j}] - W[{j}][{i}]| = {gap:e})")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),
    #[error("dimension mismatch: expected {expected} rows, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gossip count d1 must be at least 1")]
    ZeroRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Complete,
    Ring,
    Exponential,
    #[serde(rename = "custom-edge-list", alias = "custom")]
    CustomEdgeList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl TopologySpec {
    pub fn complete(n: usize) -> Self {
        Self {
            kind: TopologyKind::Complete,
            n,
            offsets: None,
            edges: None,
        }
    }

    pub fn ring(n: usize) -> Self {
        Self {
            kind: TopologyKind::Ring,
            n,
            offsets: None,
            edges: None,
        }
    }

    /// Exponential graph with the default offsets `{1, 2, 4, 8, 16}` truncated to `< n`.
    pub fn exponential(n: usize) -> Self {
        Self {
            kind: TopologyKind::Exponential,
            n,
            offsets: None,
            edges: None,
        }
    }

    pub fn exponential_with(n: usize, offsets: Vec<usize>) -> Self {
        Self {
            kind: TopologyKind::Exponential,
            n,
            offsets: Some(offsets),
            edges: None,
        }
    }

    pub fn custom(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Self {
            kind: TopologyKind::CustomEdgeList,
            n,
            offsets: None,
            edges: Some(edges),
        }
    }

    /// Checks every field invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), TopologyError> {
        let invalid = |field, reason: String| Err(TopologyError::Invalid { field, reason });
        if self.n < 2 {
            return invalid("n", format!("need at least 2 nodes, got {}", self.n));
        }
        match self.kind {
            TopologyKind::Exponential => {
                if self.edges.is_some() {
                    return invalid("edges", "only allowed for custom-edge-list".into());
                }
                if let Some(offsets) = &self.offsets {
                    if offsets.is_empty() {
                        return invalid("offsets", "must not be empty".into());
                    }
                    let mut seen = BTreeSet::new();
                    for &o in offsets {
                        if o == 0 || o >= self.n {
                            return invalid("offsets", format!("offset {o} outside [1, {})", self.n));
                        }
                        if !seen.insert(o) {
                            return invalid("offsets", format!("offset {o} repeated"));
                        }
                    }
                }
            }
            TopologyKind::CustomEdgeList => {
                if self.offsets.is_some() {
                    return invalid("offsets", "only allowed for exponential".into());
                }
                let Some(edges) = &self.edges else {
                    return invalid("edges", "required for custom-edge-list".into());
                };
                for &(a, b) in edges {
                    if a >= self.n || b >= self.n {
                        return invalid("edges", format!("edge ({a}, {b}) has endpoint outside [0, {})", self.n));
                    }
                    if a == b {
                        return invalid("edges", format!("self-loop at node {a}"));
                    }
                }
            }
            TopologyKind::Complete | TopologyKind::Ring => {
                if self.offsets.is_some() {
                    return invalid("offsets", "only allowed for exponential".into());
                }
                if self.edges.is_some() {
                    return invalid("edges", "only allowed for custom-edge-list".into());
                }
            }
        }
        Ok(())
    }

    /// Offsets actually used by an exponential graph.
    pub fn effective_offsets(&self) -> Vec<usize> {
        match &self.offsets {
            Some(o) => o.clone(),
            None => DEFAULT_EXPONENTIAL_OFFSETS
                .iter()
                .copied()
                .filter(|&o| o < self.n)
                .collect(),
        }
    }

    /// Undirected edge set as sorted `(min, max)` pairs without duplicates.
    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        let n = self.n;
        let mut set = BTreeSet::new();
        let mut add = |a: usize, b: usize| {
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        };
        match self.kind {
            TopologyKind::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        add(i, j);
                    }
                }
            }
            TopologyKind::Ring => {
                for i in 0..n {
                    add(i, (i + 1) % n);
                }
            }
            TopologyKind::Exponential => {
                for o in self.effective_offsets() {
                    for i in 0..n {
                        add(i, (i + o) % n);
                    }
                }
            }
            TopologyKind::CustomEdgeList => {
                for &(a, b) in self.edges.iter().flatten() {
                    add(a, b);
                }
            }
        }
        set
    }
}

/// Symmetric doubly stochastic mixing matrix with its cached `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: Mat,
    /// Nonzero entries of each row in ascending column order.
    neighbors: Vec<Vec<(usize, f64)>>,
    rho: f64,
}

impl WeightMatrix {
    /// Wraps an explicit matrix after checking it is symmetric, nonnegative
    /// and doubly stochastic.
    pub fn from_entries(entries: Mat) -> Result<Self, TopologyError> {
        check_doubly_stochastic(&entries)?;
        let rho = spectral_radius_sq(&entries)?;
        let neighbors = (0..entries.rows())
            .map(|i| {
                entries
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(j, w)| (j, *w))
                    .collect()
            })
            .collect();
        Ok(Self {
            entries,
            neighbors,
            rho,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Nonzero `(column, weight)` pairs of row `i`, self-weight included.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// `W^d` by repeated multiplication.
    pub fn power(&self, d: u32) -> Mat {
        let mut out = Mat::identity(self.n());
        for _ in 0..d {
            out = out.matmul(&self.entries);
        }
        out
    }

    /// One gossip sweep `out = W z`, reusing `out`'s allocation.
    pub fn mix_once_into(&self, z: &Mat, out: &mut Mat) {
        debug_assert_eq!(z.rows(), self.n());
        debug_assert_eq!((out.rows(), out.cols()), (z.rows(), z.cols()));
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            let row = out.row_mut(i);
            row.fill(0.0);
            for &(j, w) in nbrs {
                for (o, v) in row.iter_mut().zip(z.row(j)) {
                    *o += w * v;
                }
            }
        }
    }
}

/// Metropolis-weighted mixing matrix for a topology spec.
pub fn build_weight_matrix(spec: &TopologySpec) -> Result<WeightMatrix, TopologyError> {
    spec.validate()?;
    let n = spec.n;
    let edges = spec.edge_set();
    if !is_connected(n, &edges) {
        return Err(TopologyError::Disconnected);
    }
    let mut degree = vec![0usize; n];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut w = Mat::zeros(n, n);
    for &(a, b) in &edges {
        let weight = 1.0 / (1 + degree[a].max(degree[b])) as f64;
        w[(a, b)] = weight;
        w[(b, a)] = weight;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix::from_entries(w)
}

fn is_connected(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Checks nonnegativity, unit row/column sums and symmetry.
pub fn check_doubly_stochastic(w: &Mat) -> Result<(), TopologyError> {
    let n = w.rows();
    if w.cols() != n {
        return Err(TopologyError::DimensionMismatch {
            expected: n,
            got: w.cols(),
        });
    }
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] < 0.0 {
                return Err(TopologyError::NotDoublyStochastic(format!(
                    "negative entry W[{i}][{j}] = {}",
                    w[(i, j)]
                )));
            }
        }
        let row: f64 = w.row(i).iter().sum();
        let col: f64 = (0..n).map(|k| w[(k, i)]).sum();
        if (row - 1.0).abs() > STOCHASTIC_TOL {
            return Err(TopologyError::NotDoublyStochastic(format!("row {i} sums to {row}")));
        }
        if (col - 1.0).abs() > STOCHASTIC_TOL {
            return Err(TopologyError::NotDoublyStochastic(format!("column {i} sums to {col}")));
        }
    }
    check_symmetric(w)
}

fn check_symmetric(w: &Mat) -> Result<(), TopologyError> {
    for i in 0..w.rows() {
        for j in i + 1..w.cols() {
            let gap = (w[(i, j)] - w[(j, i)]).abs();
            if gap > STOCHASTIC_TOL {
                return Err(TopologyError::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

/// `‖W − J‖₂²` for a symmetric doubly stochastic `W`, i.e. the largest squared
/// non-principal eigenvalue.
pub fn spectral_radius_sq(w: &Mat) -> Result<f64, TopologyError> {
    let n = w.rows();
    if w.cols() != n {
        return Err(TopologyError::DimensionMismatch {
            expected: n,
            got: w.cols(),
        });
    }
    check_symmetric(w)?;
    let inv_n = 1.0 / n as f64;
    let centered = DMatrix::from_fn(n, n, |i, j| w[(i, j)] - inv_n);
    let eig = SymmetricEigen::new(centered);
    let lambda = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((lambda * lambda).min(1.0))
}

/// `W^{d1} Z` as `d1` successive gossip sweeps.
pub fn mix(w: &WeightMatrix, z: &Mat, d1: u32) -> Result<Mat, TopologyError> {
    if z.rows() != w.n() {
        return Err(TopologyError::DimensionMismatch {
            expected: w.n(),
            got: z.rows(),
        });
    }
    if d1 == 0 {
        return Err(TopologyError::ZeroRounds);
    }
    let mut cur = z.clone();
    let mut next = Mat::zeros(z.rows(), z.cols());
    for _ in 0..d1 {
        w.mix_once_into(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// `P Z` for a precomputed power `P = W^{d1}`.
pub fn mix_with_power(power: &Mat, z: &Mat) -> Result<Mat, TopologyError> {
    if z.rows() != power.cols() {
        return Err(TopologyError::DimensionMismatch {
            expected: power.cols(),
            got: z.rows(),
        });
    }
    Ok(power.matmul(z))
}
