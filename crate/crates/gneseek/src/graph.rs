//! Communication topology and graph Laplacian.
//!
//! Players exchange estimates over a connected undirected weighted graph. The
//! Laplacian L = D - A drives the consensus terms of the dynamics, and its
//! second-smallest eigenvalue (the algebraic connectivity) enters every
//! performance bound denominator.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Undirected weighted communication graph over `n` players (0-based indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl Topology {
    /// Builds a topology with unit edge weights.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let weights = vec![1.0; edges.len()];
        Self::with_weights(n, edges, weights)
    }

    /// Builds a topology with explicit positive edge weights.
    pub fn with_weights(n: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("graph needs at least one node".into()));
        }
        if edges.len() != weights.len() {
            return Err(Error::InvalidTopology(format!(
                "{} edges but {} weights",
                edges.len(),
                weights.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (&(a, b), &w) in edges.iter().zip(&weights) {
            if a >= n || b >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self loop at node {a}")));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) has non-positive weight {w}"
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidTopology(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self { n, edges, weights })
    }

    /// Ring topology 0-1-2-...-(n-1)-0 with unit weights. Degenerates to a
    /// single node for n = 1 and a single edge for n = 2.
    pub fn ring(n: usize) -> Self {
        let edges = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(n.max(1), edges).expect("ring construction is always valid")
    }

    /// Complete graph with unit weights.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::new(n, edges).expect("complete graph construction is always valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Dense matrices and spectral data derived from a [`Topology`].
#[derive(Debug, Clone)]
pub struct LaplacianData {
    /// Symmetric adjacency matrix A with a_ij = edge weight.
    pub adjacency: DMatrix<f64>,
    /// Laplacian L = D - A.
    pub laplacian: DMatrix<f64>,
    /// Weighted node degrees d_i = sum_j a_ij.
    pub degrees: Vec<f64>,
    /// Eigenvalues of L in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Algebraic connectivity, the second-smallest eigenvalue of L.
    pub lambda2: f64,
}

/// Assembles adjacency, Laplacian, degrees, and the eigenvalue data for a
/// connected topology. Disconnected graphs are rejected because the consensus
/// analysis requires lambda2 > 0.
pub fn build_laplacian(topology: &Topology) -> Result<LaplacianData> {
    let n = topology.n;
    if !is_connected(topology) {
        return Err(Error::DisconnectedGraph);
    }
    let mut adjacency = DMatrix::zeros(n, n);
    for (&(a, b), &w) in topology.edges.iter().zip(&topology.weights) {
        adjacency[(a, b)] = w;
        adjacency[(b, a)] = w;
    }
    let degrees: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
    let mut laplacian = -adjacency.clone();
    for i in 0..n {
        laplacian[(i, i)] = degrees[i];
    }
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(laplacian.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let lambda2 = if n > 1 { eigenvalues[1] } else { 0.0 };
    Ok(LaplacianData {
        adjacency,
        laplacian,
        degrees,
        eigenvalues,
        lambda2,
    })
}

/// Neighbors of player `i`, ascending.
pub fn neighbor_set(topology: &Topology, i: usize) -> Vec<usize> {
    let mut out: Vec<usize> = topology
        .edges
        .iter()
        .filter_map(|&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
        .collect();
    out.sort_unstable();
    out
}

fn is_connected(topology: &Topology) -> bool {
    let n = topology.n;
    if n == 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &topology.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut visited = vec![false; n];
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !visited[v] {
                visited[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}
