//! Leader-rooted communication digraph and the matrices derived from it.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Directed edge `from → to`: agent `to` receives data from `from`. Ids are zero-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct GraphTopology {
    n_agents: usize,
    edges: Vec<Edge>,
    pinning: Vec<f64>,
}

impl GraphTopology {
    pub fn new(n_agents: usize, edges: Vec<Edge>, pinning: Vec<f64>) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Config("graph needs at least one agent".into()));
        }
        if pinning.len() != n_agents {
            return Err(Error::DimensionMismatch(format!(
                "pinning has {} entries for {} agents",
                pinning.len(),
                n_agents
            )));
        }
        if let Some(b) = pinning.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(Error::Config(format!("pinning gain {b} must be finite and >= 0")));
        }
        for (k, e) in edges.iter().enumerate() {
            if e.from >= n_agents || e.to >= n_agents {
                return Err(Error::Config(format!("edge {}→{} out of range", e.from + 1, e.to + 1)));
            }
            if e.from == e.to {
                return Err(Error::Config(format!("self-loop on agent {}", e.from + 1)));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::Config(format!("edge weight {} must be positive", e.weight)));
            }
            if edges[..k].iter().any(|o| o.from == e.from && o.to == e.to) {
                return Err(Error::Config(format!("duplicate edge {}→{}", e.from + 1, e.to + 1)));
            }
        }
        Ok(Self { n_agents, edges, pinning })
    }

    /// Build from one-based `(from, to, weight)` triples as written in scenario files.
    pub fn from_one_based(n_agents: usize, edges: &[(usize, usize, f64)], pinning: Vec<f64>) -> Result<Self> {
        let mut out = Vec::with_capacity(edges.len());
        for &(f, t, w) in edges {
            if f == 0 || t == 0 {
                return Err(Error::Config("agent ids are one-based".into()));
            }
            out.push(Edge { from: f - 1, to: t - 1, weight: w });
        }
        Self::new(n_agents, out, pinning)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    /// `a[(i, j)] = a_ij`, the weight agent i puts on data from j.
    pub fn adjacency(&self) -> Mat {
        let mut a = Mat::zeros(self.n_agents, self.n_agents);
        for e in &self.edges {
            a[(e.to, e.from)] = e.weight;
        }
        a
    }

    /// In-neighbours of `i` as `(j, a_ij)`, sorted by `j`.
    pub fn in_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .filter(|e| e.to == i)
            .map(|e| (e.from, e.weight))
            .collect();
        v.sort_by_key(|p| p.0);
        v
    }

    /// In-degree counting the leader link.
    pub fn in_degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|e| e.to == i).count() + usize::from(self.pinning[i] > 0.0)
    }

    pub fn with_edges(&self, extra: &[Edge]) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.extend_from_slice(extra);
        Self::new(self.n_agents, edges, self.pinning.clone())
    }
}

#[derive(Clone, Debug)]
pub struct GraphMatrices {
    pub laplacian: Mat,
    pub pinning: Mat,
    pub h: Mat,
    pub phi: Vector,
    pub phi_mat: Mat,
    pub lambda_min_sym: f64,
    /// Smallest real part over eig(H); used for the baseline coupling-gain bound.
    pub lambda_min_h: f64,
}

impl GraphMatrices {
    pub fn phi_max(&self) -> f64 {
        self.phi.max()
    }
}

pub fn laplacian(topology: &GraphTopology) -> Mat {
    let a = topology.adjacency();
    let mut l = -a.clone();
    for i in 0..topology.n_agents() {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

pub fn build_matrices(topology: &GraphTopology) -> Result<GraphMatrices> {
    if !has_spanning_tree(topology) {
        return Err(Error::SpanningTreeMissing);
    }
    let n = topology.n_agents();
    let laplacian = laplacian(topology);
    let pinning = Mat::from_diagonal(&Vector::from_column_slice(topology.pinning()));
    let h = &laplacian + &pinning;
    let phi = h
        .transpose()
        .lu()
        .solve(&Vector::repeat(n, 1.0))
        .ok_or(Error::SpanningTreeMissing)?;
    if let Some((agent, &value)) = phi.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositivePhi { agent, value });
    }
    let phi_mat = Mat::from_diagonal(&phi);
    let sym = &phi_mat * &h + h.transpose() * &phi_mat;
    let lambda_min_sym = linalg::sym_min_eig(&sym);
    let lambda_min_h = linalg::eigenvalues(&h)
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    Ok(GraphMatrices { laplacian, pinning, h, phi, phi_mat, lambda_min_sym, lambda_min_h })
}

/// True iff every follower is reachable from the leader via pinning links and edges.
pub fn has_spanning_tree(topology: &GraphTopology) -> bool {
    let n = topology.n_agents();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| topology.pinning()[i] > 0.0).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(u) = queue.pop_front() {
        for e in topology.edges().iter().filter(|e| e.from == u) {
            if !seen[e.to] {
                seen[e.to] = true;
                queue.push_back(e.to);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Largest f such that the intact agents that listen to a compromised agent each have at
/// least 2f+1 in-neighbours (leader link included). With no compromised agents every
/// agent is checked.
pub fn connectivity_margin(topology: &GraphTopology, compromised: &[usize]) -> usize {
    let n = topology.n_agents();
    let exposed: Vec<usize> = if compromised.is_empty() {
        (0..n).collect()
    } else {
        (0..n)
            .filter(|i| !compromised.contains(i))
            .filter(|&i| topology.in_neighbors(i).iter().any(|(j, _)| compromised.contains(j)))
            .collect()
    };
    exposed
        .iter()
        .map(|&i| topology.in_degree(i).saturating_sub(1) / 2)
        .min()
        .unwrap_or(0)
}

/// Reference five-agent graph G_A: 1→2, 1→3, 2→4, 4→5, leader pins agent 1.
pub fn paper_graph_a() -> GraphTopology {
    GraphTopology::from_one_based(
        5,
        &[(1, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0), (4, 5, 1.0)],
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
    )
    .expect("static graph is valid")
}

/// `paper_graph_a` plus 5→4 and 1→4, giving agent 4 three in-neighbours.
pub fn paper_graph_b() -> GraphTopology {
    GraphTopology::from_one_based(
        5,
        &[(1, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0), (4, 5, 1.0), (5, 4, 1.0), (1, 4, 1.0)],
        vec![1.0, 0.0, 0.0, 0.0, 0.0],
    )
    .expect("static graph is valid")
}
