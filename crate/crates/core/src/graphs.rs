//! Undirected interaction topologies: incidence matrix, graph Laplacian,
//! edge Laplacian and the Laplacian spectrum.
//!
//! Vertices are numbered `1..=n`. Edges are stored as `(min, max)` pairs in
//! lexicographic order; edge `p` of the incidence matrix is oriented from its
//! smaller endpoint (tail, `-1`) to its larger endpoint (head, `+1`), so the
//! relative state carried by edge `p = (i, j)` is `x_j - x_i`.

use serde::{Deserialize, Serialize};

use crate::matan::sym_eigenvalues;
use crate::{Error, Matrix, Result};

/// Spectral threshold separating `λ₂ = 0` from a connected graph.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct InteractionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawGraph> for InteractionGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        InteractionGraph::new(raw.n, raw.edges.iter().map(|e| (e[0], e[1])))
    }
}

impl From<InteractionGraph> for RawGraph {
    fn from(g: InteractionGraph) -> Self {
        RawGraph {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl InteractionGraph {
    /// Builds a simple undirected graph; rejects an empty vertex set,
    /// self-loops, out-of-range endpoints and duplicate edges.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("vertex set is empty".into()));
        }
        let mut out = Vec::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has an endpoint outside 1..={n}"
                )));
            }
            out.push((i.min(j), i.max(j)));
        }
        out.sort_unstable();
        if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self { n, edges: out })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph("a cycle needs at least 3 vertices".into()));
        }
        Self::new(n, (1..=n).map(|i| (i, i % n + 1)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i, i + 1)))
    }

    pub fn star(n: usize) -> Result<Self> {
        Self::new(n, (2..=n).map(|i| (1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (1..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))))
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(tail, head)` with `tail < head`, in edge-index order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Union-find connectivity.
    pub fn is_connected(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut components = self.n;
        for &(i, j) in &self.edges {
            let (a, b) = (find(&mut parent, i - 1), find(&mut parent, j - 1));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components == 1
    }

    /// Neighbours of vertex `i` (1-based).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAlgebra {
    /// `n×m` incidence matrix `D`.
    pub incidence: Matrix,
    /// `D Dᵀ`.
    pub graph_laplacian: Matrix,
    /// `Dᵀ D`.
    pub edge_laplacian: Matrix,
    /// Eigenvalues of `D Dᵀ`, increasing.
    pub spectrum: Vec<f64>,
}

impl GraphAlgebra {
    pub fn vertex_count(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.incidence.ncols()
    }

    /// Largest Laplacian eigenvalue `λ_n`.
    pub fn lambda_max(&self) -> f64 {
        *self.spectrum.last().expect("n ≥ 1")
    }

    /// `λ₂, …, λ_n`.
    pub fn nonzero_modes(&self) -> &[f64] {
        &self.spectrum[1.min(self.spectrum.len())..]
    }
}

pub fn build_algebra(g: &InteractionGraph) -> GraphAlgebra {
    build_algebra_oriented(g, &vec![false; g.edge_count()])
}

/// As [`build_algebra`], but edge `p` is reversed when `flip[p]` is set.
pub fn build_algebra_oriented(g: &InteractionGraph, flip: &[bool]) -> GraphAlgebra {
    assert_eq!(flip.len(), g.edge_count(), "one orientation flag per edge");
    let (n, m) = (g.vertex_count(), g.edge_count());
    let mut d = Matrix::zeros(n, m);
    for (p, (&(tail, head), &f)) in g.edges().iter().zip(flip).enumerate() {
        let (tail, head) = if f { (head, tail) } else { (tail, head) };
        d[(head - 1, p)] = 1.0;
        d[(tail - 1, p)] = -1.0;
    }
    let graph_laplacian = &d * d.transpose();
    let edge_laplacian = d.transpose() * &d;
    let mut spectrum = sym_eigenvalues(&graph_laplacian);
    // The all-ones vector is an exact null vector; remove solver noise.
    spectrum[0] = 0.0;
    GraphAlgebra {
        incidence: d,
        graph_laplacian,
        edge_laplacian,
        spectrum,
    }
}

pub fn is_connected(g: &InteractionGraph) -> bool {
    g.is_connected()
}

/// `λ₂`; zero for a single vertex.
pub fn algebraic_connectivity(a: &GraphAlgebra) -> f64 {
    a.spectrum.get(1).copied().unwrap_or(0.0)
}
