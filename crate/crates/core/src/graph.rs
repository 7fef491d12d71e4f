//! Communication graphs over blocks, random edge selection, and the
//! Laplacian-based norm used to measure distances in convergence bounds.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Undirected graph on blocks `0..b` with a probability per edge.
#[derive(Clone, Debug)]
pub struct CommGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CommGraph {
    /// Validates and builds a graph. Edges are stored as `(min, max)`.
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>, probabilities: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Topology("graph has no edges".into()));
        }
        if edges.len() != probabilities.len() {
            return Err(Error::Topology(format!(
                "{} edges but {} probabilities",
                edges.len(),
                probabilities.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(i, j) in &edges {
            if i == j {
                return Err(Error::Topology(format!("self-loop at node {i}")));
            }
            if i >= nodes || j >= nodes {
                return Err(Error::Topology(format!("edge ({i},{j}) outside 0..{nodes}")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::Topology(format!("duplicate edge ({},{})", e.0, e.1)));
            }
            normalized.push(e);
        }
        if let Some(p) = probabilities.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::Topology(format!("edge probability {p} is not positive")));
        }
        let total: f64 = probabilities.iter().sum();
        // summation round-off grows with the number of terms
        let slack = 1e-12 + 4.0 * f64::EPSILON * probabilities.len() as f64;
        if (total - 1.0).abs() > slack {
            return Err(Error::Topology(format!("edge probabilities sum to {total}")));
        }
        if !is_connected(nodes, &normalized) {
            return Err(Error::Topology("graph is not connected".into()));
        }
        let mut cumulative = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        for &p in &probabilities {
            acc += p;
            cumulative.push(acc);
        }
        Ok(CommGraph {
            nodes,
            edges: normalized,
            probabilities,
            cumulative,
        })
    }

    /// All edges with equal probability `1/|E|`.
    pub fn uniform(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let p = 1.0 / edges.len().max(1) as f64;
        let probs = vec![p; edges.len()];
        Self::new(nodes, edges, probs)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Index of the edge whose cumulative interval contains `u ∈ [0, 1)`.
    pub fn edge_at(&self, u: f64) -> usize {
        let last = self.cumulative.len() - 1;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(last)
    }

    /// `p_i = Σ_j p_ij`.
    pub fn node_probability(&self, i: usize) -> f64 {
        self.edges
            .iter()
            .zip(&self.probabilities)
            .filter(|((a, b), _)| *a == i || *b == i)
            .map(|(_, p)| p)
            .sum()
    }
}

fn is_connected(nodes: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = nodes;
    for &(i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            components -= 1;
        }
    }
    components == 1
}

/// Named communication layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Topology {
    Ring,
    Clique,
    /// Star centred at node 0 plus the ring.
    StarRing,
    /// Complete binary tree (parent of `k` is `(k-1)/2`) plus the ring.
    TreeRing,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Ring,
        Topology::Clique,
        Topology::StarRing,
        Topology::TreeRing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Ring => "ring",
            Topology::Clique => "clique",
            Topology::StarRing => "star-ring",
            Topology::TreeRing => "tree-ring",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Topology::Ring),
            "clique" => Ok(Topology::Clique),
            "star-ring" => Ok(Topology::StarRing),
            "tree-ring" => Ok(Topology::TreeRing),
            other => Err(Error::Config(format!(
                "unknown topology `{other}` (expected ring|clique|star-ring|tree-ring)"
            ))),
        }
    }
}

/// Edge weighting used by [`build_topology`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    #[default]
    Uniform,
}

/// Builds one of the named layouts on `b >= 3` nodes.
///
/// Overlapping edges of the union layouts are merged before the uniform
/// probability `1/|E|` is assigned.
pub fn build_topology(kind: Topology, b: usize, weighting: Weighting) -> Result<CommGraph> {
    if b < 3 {
        return Err(Error::Topology(format!("topologies need b >= 3 nodes, got {b}")));
    }
    let ring = (0..b).map(|k| (k, (k + 1) % b));
    let mut edges: Vec<(usize, usize)> = Vec::new();
    match kind {
        Topology::Ring => edges.extend(ring),
        Topology::Clique => {
            for i in 0..b {
                for j in i + 1..b {
                    edges.push((i, j));
                }
            }
        }
        Topology::StarRing => {
            edges.extend((1..b).map(|k| (0, k)));
            edges.extend(ring);
        }
        Topology::TreeRing => {
            edges.extend((1..b).map(|k| ((k - 1) / 2, k)));
            edges.extend(ring);
        }
    }
    let mut seen = std::collections::HashSet::new();
    let edges: Vec<_> = edges
        .into_iter()
        .map(|(i, j)| (i.min(j), i.max(j)))
        .filter(|e| seen.insert(*e))
        .collect();
    match weighting {
        Weighting::Uniform => CommGraph::uniform(b, edges),
    }
}

/// i.i.d. edge draws by inversion of the cumulative edge probabilities.
#[derive(Clone, Debug)]
pub struct EdgeSampler<'g> {
    graph: &'g CommGraph,
    rng: ChaCha8Rng,
}

impl<'g> EdgeSampler<'g> {
    pub fn new(graph: &'g CommGraph, seed: u64) -> Self {
        Self::with_stream(graph, seed, 0)
    }

    /// Independent stream `stream` derived from `seed`; stream 0 equals [`EdgeSampler::new`].
    pub fn with_stream(graph: &'g CommGraph, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        EdgeSampler { graph, rng }
    }

    /// Index of the next sampled edge.
    pub fn next_index(&mut self) -> usize {
        if self.graph.num_edges() == 1 {
            return 0;
        }
        let u: f64 = self.rng.gen();
        self.graph.edge_at(u)
    }
}

impl Iterator for EdgeSampler<'_> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        let e = self.next_index();
        Some(self.graph.edge(e))
    }
}

/// Convenience constructor for [`EdgeSampler`].
pub fn edge_sampler(graph: &CommGraph, seed: u64) -> EdgeSampler<'_> {
    EdgeSampler::new(graph, seed)
}

/// Graph Laplacian `𝓛`, diagonal `𝓓` and the composite norm they induce on
/// stacked `(y, z)` vectors, with `y` made of `b` blocks of size `n_y` and `z`
/// of `b` blocks of size `n_z`.
#[derive(Clone, Debug)]
pub struct KMatrix {
    laplacian: DMatrix<f64>,
    diagonal: Vec<f64>,
    laplacian_pinv: DMatrix<f64>,
    n_y: usize,
    n_z: usize,
}

/// Relative eigenvalue cutoff for `𝓛⁺`.
const LAPLACIAN_RCOND: f64 = 1e-12;

impl KMatrix {
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn laplacian_pinv(&self) -> &DMatrix<f64> {
        &self.laplacian_pinv
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn num_blocks(&self) -> usize {
        self.diagonal.len()
    }

    /// Expected length of a stacked `(y, z)` vector.
    pub fn stacked_len(&self) -> usize {
        self.num_blocks() * (self.n_y + self.n_z)
    }

    fn quad(m: &DMatrix<f64>, v: &[f64], b: usize, width: usize) -> f64 {
        // vᵀ (M ⊗ I_width) v
        let mut s = 0.0;
        for r in 0..b {
            for c in 0..b {
                let w = m[(r, c)];
                if w == 0.0 {
                    continue;
                }
                let vr = &v[r * width..(r + 1) * width];
                let vc = &v[c * width..(c + 1) * width];
                s += w * crate::linalg::dot(vr, vc);
            }
        }
        s
    }

    /// `‖x‖_𝓚 = sqrt(yᵀ(𝓛⊗I)y + zᵀ(𝓓⊗I)z)`.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        let (y, z) = self.split(x)?;
        let b = self.num_blocks();
        let mut s = Self::quad(&self.laplacian, y, b, self.n_y);
        for (i, d) in self.diagonal.iter().enumerate() {
            let zi = &z[i * self.n_z..(i + 1) * self.n_z];
            s += d * crate::linalg::dot(zi, zi);
        }
        Ok(s.max(0.0).sqrt())
    }

    fn split<'a>(&self, x: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if x.len() != self.stacked_len() {
            return Err(Error::Dimension(format!(
                "stacked vector has length {}, expected {}",
                x.len(),
                self.stacked_len()
            )));
        }
        Ok(x.split_at(self.num_blocks() * self.n_y))
    }
}

/// Builds `𝓛` and `𝓓` for a uniform Lipschitz constant `lipschitz`.
///
/// `𝓛_ij = -p_ij/(2L)` off the diagonal, `𝓛_ii = Σ_{r≠i} p_ir/(2L)`,
/// `𝓓_ii = p_i/L`.
pub fn build_k_matrix(graph: &CommGraph, lipschitz: f64, n_y: usize, n_z: usize) -> Result<KMatrix> {
    if !(lipschitz > 0.0) {
        return Err(Error::Config(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    if !is_connected(graph.num_nodes(), graph.edges()) {
        return Err(Error::Topology("graph is not connected".into()));
    }
    let b = graph.num_nodes();
    let mut lap = DMatrix::zeros(b, b);
    for (&(i, j), &p) in graph.edges().iter().zip(graph.probabilities()) {
        let w = p / (2.0 * lipschitz);
        lap[(i, j)] -= w;
        lap[(j, i)] -= w;
        lap[(i, i)] += w;
        lap[(j, j)] += w;
    }
    let diagonal = (0..b)
        .map(|i| graph.node_probability(i) / lipschitz)
        .collect();
    let laplacian_pinv = laplacian_pseudo_inverse(&lap);
    Ok(KMatrix {
        laplacian: lap,
        diagonal,
        laplacian_pinv,
        n_y,
        n_z,
    })
}

fn laplacian_pseudo_inverse(lap: &DMatrix<f64>) -> DMatrix<f64> {
    let b = lap.nrows();
    let eig = SymmetricEigen::new(lap.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut out = DMatrix::zeros(b, b);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= LAPLACIAN_RCOND * max {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += v * v.transpose() / l;
    }
    out
}

/// Dual norm `sqrt(yᵀ(𝓛⁺⊗I)y + zᵀ(𝓓⁻¹⊗I)z)` of a stacked `(y, z)` vector.
///
/// `𝓛⁺` annihilates the consensus direction, so the `y` part is implicitly
/// projected onto `range(𝓛)`.
pub fn k_dual_norm(x: &[f64], k: &KMatrix) -> Result<f64> {
    let (y, z) = k.split(x)?;
    let b = k.num_blocks();
    let mut s = KMatrix::quad(&k.laplacian_pinv, y, b, k.n_y);
    for (i, d) in k.diagonal.iter().enumerate() {
        let zi = &z[i * k.n_z..(i + 1) * k.n_z];
        s += crate::linalg::dot(zi, zi) / d;
    }
    Ok(s.max(0.0).sqrt())
}

/// `‖x⁰ - x*‖*_𝓚`, a computable lower bound for the level-set distance
/// `R(x⁰)` that appears in the convergence bounds. Both arguments are stacked
/// `(y, z)` vectors.
pub fn r0_proxy(x0: &[f64], x_star: &[f64], k: &KMatrix) -> Result<f64> {
    if x0.len() != x_star.len() {
        return Err(Error::Dimension("x0 and x_star differ in length".into()));
    }
    let diff: Vec<f64> = x0.iter().zip(x_star).map(|(a, b)| a - b).collect();
    k_dual_norm(&diff, k)
}
