//! Communication graphs and their Laplacian spectra.
//!
//! Nodes are 0-indexed. Grids and lattices use row-major numbering,
//! `(i, j) -> i * m + j`. Edges are stored canonically as `(u, v)` with
//! `u < v`, sorted lexicographically, so that any seeded sampling that walks
//! the edge list is reproducible.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when looking for the Fiedler value.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Laplacian eigenvalues, sorted descending.
    pub eigenvalues: Vec<f64>,
    pub lambda1: f64,
    /// Smallest non-zero Laplacian eigenvalue.
    pub fiedler: f64,
    /// Condition number `lambda1 / fiedler`.
    pub kappa: f64,
}

#[derive(Debug)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    spectrum: OnceLock<SpectralSummary>,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Graph {
            n: self.n,
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
            spectrum,
        }
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.edges == other.edges
    }
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    /// Builds a connected simple graph. Rejects self-loops, duplicate edges,
    /// out-of-range endpoints and disconnected edge sets.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize {
                what: "graph",
                got: 0,
                min: 1,
            });
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has an endpoint >= n = {n}"
                )));
            }
            if !set.insert(canonical(u, v)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let g = Graph {
            n,
            edges,
            neighbors,
            spectrum: OnceLock::new(),
        };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors
            .get(u)
            .map(|nb| nb.binary_search(&v).is_ok())
            .unwrap_or(false)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Integer Laplacian `D - A`; rows sum to zero exactly.
    pub fn laplacian_int(&self) -> Vec<Vec<i64>> {
        laplacian_int(self.n, &self.edges)
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        to_matrix(&self.laplacian_int())
    }

    /// Full Laplacian spectrum, computed once and cached.
    pub fn spectrum(&self) -> Result<&SpectralSummary> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let s = spectrum_from_edges(self.n, &self.edges)?;
        Ok(self.spectrum.get_or_init(|| s))
    }

    pub fn lambda1(&self) -> Result<f64> {
        Ok(self.spectrum()?.lambda1)
    }

    /// Edge-list text: header `n=<N>` then one `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidGraph("empty edge list".into()))?;
        let n = header
            .strip_prefix("n=")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidGraph(format!("bad header line {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => edges.push((u, v)),
                _ => return Err(Error::InvalidGraph(format!("bad edge line {line:?}"))),
            }
        }
        Graph::new(n, edges)
    }
}

fn laplacian_int(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<i64>> {
    let mut lap = vec![vec![0i64; n]; n];
    for &(u, v) in edges {
        lap[u][v] -= 1;
        lap[v][u] -= 1;
        lap[u][u] += 1;
        lap[v][v] += 1;
    }
    lap
}

fn to_matrix(lap: &[Vec<i64>]) -> DMatrix<f64> {
    let n = lap.len();
    DMatrix::from_fn(n, n, |i, j| lap[i][j] as f64)
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Spectrum of the Laplacian of an arbitrary edge set. Fails when the zero
/// eigenvalue has multiplicity above one.
pub fn spectrum_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<SpectralSummary> {
    let eigenvalues = symmetric_eigenvalues(to_matrix(&laplacian_int(n, edges)));
    if n < 2 {
        return Err(Error::InvalidSize {
            what: "graph for spectrum",
            got: n,
            min: 2,
        });
    }
    if eigenvalues[n - 2] <= ZERO_EIGEN_TOL {
        return Err(Error::Disconnected);
    }
    let lambda1 = eigenvalues[0];
    let fiedler = eigenvalues[n - 2];
    Ok(SpectralSummary {
        lambda1,
        fiedler,
        kappa: lambda1 / fiedler,
        eigenvalues,
    })
}

pub fn build_clique(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidSize {
            what: "clique",
            got: n,
            min: 2,
        });
    }
    Graph::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
}

pub fn build_cycle(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidSize {
            what: "cycle",
            got: n,
            min: 3,
        });
    }
    Graph::new(n, (0..n).map(|u| (u, (u + 1) % n)))
}

/// `m x m` grid with 4-neighbour connectivity.
pub fn build_grid2d(m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidSize {
            what: "grid side",
            got: m,
            min: 2,
        });
    }
    let mut edges = Vec::with_capacity(2 * m * (m - 1));
    for i in 0..m {
        for j in 0..m {
            let v = i * m + j;
            if j + 1 < m {
                edges.push((v, v + 1));
            }
            if i + 1 < m {
                edges.push((v, v + m));
            }
        }
    }
    Graph::new(m * m, edges)
}

/// Rook graph on an `m x m` board: nodes sharing a row or a column are adjacent.
pub fn build_lattice(m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::InvalidSize {
            what: "lattice side",
            got: m,
            min: 2,
        });
    }
    let mut edges = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let v = i * m + j;
            for j2 in j + 1..m {
                edges.push((v, i * m + j2));
            }
            for i2 in i + 1..m {
                edges.push((v, i2 * m + j));
            }
        }
    }
    Graph::new(m * m, edges)
}

/// Two disjoint cliques on `0..half` and `half..2*half`, joined by `bridges`
/// distinct cross edges sampled uniformly without replacement.
pub fn build_two_cliques<R: Rng + ?Sized>(half: usize, bridges: usize, rng: &mut R) -> Result<Graph> {
    if half < 2 {
        return Err(Error::InvalidSize {
            what: "two-cliques half",
            got: half,
            min: 2,
        });
    }
    if bridges == 0 || bridges > half * half {
        return Err(Error::InvalidParameter(format!(
            "bridges = {bridges} must lie in [1, {}]",
            half * half
        )));
    }
    let mut edges = Vec::new();
    for offset in [0, half] {
        for u in 0..half {
            for v in u + 1..half {
                edges.push((offset + u, offset + v));
            }
        }
    }
    let mut picks = index::sample(rng, half * half, bridges).into_vec();
    picks.sort_unstable();
    for k in picks {
        edges.push((k / half, half + k % half));
    }
    Graph::new(2 * half, edges)
}

/// Closed-form cycle Laplacian eigenvalues `2 - 2cos(2 pi k / n)`, sorted descending.
pub fn cycle_eigenvalues(n: usize) -> Vec<f64> {
    let mut ev: Vec<f64> = (0..n)
        .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Path-graph eigenvalues `2(1 - cos(pi (m - i) / m))` for `i = 1..=m`.
pub fn path_eigenvalues(m: usize) -> Vec<f64> {
    (1..=m)
        .map(|i| 2.0 * (1.0 - (std::f64::consts::PI * (m - i) as f64 / m as f64).cos()))
        .collect()
}

/// Grid spectrum as all pairwise sums of path eigenvalues, sorted descending.
pub fn grid2d_eigenvalues(m: usize) -> Vec<f64> {
    let mu = path_eigenvalues(m);
    let mut ev: Vec<f64> = mu
        .iter()
        .flat_map(|a| mu.iter().map(move |b| a + b))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Non-trivial adjacency eigenvalues `(r, s)` of a strongly regular graph with
/// degree `k`, `adjacent_common` common neighbours for adjacent pairs and
/// `nonadjacent_common` for non-adjacent pairs. The Laplacian then has
/// `lambda1 = k - s` and `fiedler = k - r`.
pub fn strongly_regular_rs(k: f64, adjacent_common: f64, nonadjacent_common: f64) -> (f64, f64) {
    let diff = adjacent_common - nonadjacent_common;
    let disc = (diff * diff + 4.0 * (k - nonadjacent_common)).sqrt();
    ((diff + disc) / 2.0, (diff - disc) / 2.0)
}

/// `(lambda1, fiedler)` of the `m x m` rook graph from its strongly regular parameters.
pub fn lattice_extremes(m: usize) -> (f64, f64) {
    let k = 2.0 * m as f64 - 2.0;
    let (r, s) = strongly_regular_rs(k, m as f64 - 2.0, 2.0);
    (k - s, k - r)
}

/// Declarative graph description used by configs and the CLI:
/// `clique:N`, `cycle:N`, `grid:M`, `lattice:M`, `two_cliques:HALF:BRIDGES`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSpec {
    Clique(usize),
    Cycle(usize),
    Grid2d(usize),
    Lattice(usize),
    TwoCliques { half: usize, bridges: usize },
}

impl GraphSpec {
    pub fn num_nodes(&self) -> usize {
        match *self {
            GraphSpec::Clique(n) | GraphSpec::Cycle(n) => n,
            GraphSpec::Grid2d(m) | GraphSpec::Lattice(m) => m * m,
            GraphSpec::TwoCliques { half, .. } => 2 * half,
        }
    }

    /// `seed` is only consumed by randomized families.
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match *self {
            GraphSpec::Clique(n) => build_clique(n),
            GraphSpec::Cycle(n) => build_cycle(n),
            GraphSpec::Grid2d(m) => build_grid2d(m),
            GraphSpec::Lattice(m) => build_lattice(m),
            GraphSpec::TwoCliques { half, bridges } => {
                build_two_cliques(half, bridges, &mut crate::rng::from_seed(seed))
            }
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, GraphSpec::TwoCliques { .. })
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Clique(n) => write!(f, "clique:{n}"),
            GraphSpec::Cycle(n) => write!(f, "cycle:{n}"),
            GraphSpec::Grid2d(m) => write!(f, "grid:{m}"),
            GraphSpec::Lattice(m) => write!(f, "lattice:{m}"),
            GraphSpec::TwoCliques { half, bridges } => write!(f, "two_cliques:{half}:{bridges}"),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("bad graph spec {s:?}")))
        };
        let spec = match (parts[0].trim(), parts.len()) {
            ("clique", 2) => GraphSpec::Clique(num(1)?),
            ("cycle", 2) => GraphSpec::Cycle(num(1)?),
            ("grid" | "grid2d", 2) => GraphSpec::Grid2d(num(1)?),
            ("lattice", 2) => GraphSpec::Lattice(num(1)?),
            ("two_cliques", 3) => GraphSpec::TwoCliques {
                half: num(1)?,
                bridges: num(2)?,
            },
            _ => return Err(Error::Config(format!("bad graph spec {s:?}"))),
        };
        Ok(spec)
    }
}
