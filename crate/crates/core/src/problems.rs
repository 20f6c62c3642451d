//! Weighted MaxCut instances, exact ground truth and solution distances.
//!
//! Objectives follow the minimization convention used throughout the crate: the
//! value of an assignment is the negated weight of the edges it cuts, which is
//! also the diagonal of the QAOA cost Hamiltonian `Σ w_ij (Z_i Z_j − I) / 2`.
//!
//! Bitstrings are written vertex-major: character `i` of `"0110"` is the side of
//! vertex `i`. The matching basis index sets bit `i` (least significant = vertex 0).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::seed;

/// Largest vertex count supported by generation and brute force.
pub const MAX_VERTICES: usize = 24;

/// Number of edge redraws attempted before giving up on a connected graph.
pub const MAX_CONNECT_ATTEMPTS: usize = 1000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProblemError {
    #[error("vertex count {0} outside supported range 2..={MAX_VERTICES}")]
    VertexCount(usize),
    #[error("density {0} must lie in (0, 1]")]
    Density(f64),
    #[error("weight range ({0}, {1}) must satisfy 0 < low <= high < inf")]
    WeightRange(f64, f64),
    #[error("no connected graph after {MAX_CONNECT_ATTEMPTS} draws at density {0}")]
    Disconnected(f64),
    #[error("assignment has {got} bits, graph has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid edge ({u}, {v}, {w})")]
    InvalidEdge { u: usize, v: usize, w: f64 },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("malformed graph file: {0}")]
    Parse(String),
    #[error("malformed bitstring {0:?}")]
    Bitstring(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// A MaxCut instance. Edges satisfy `u < v < n_vertices`, are unique and carry
/// strictly positive finite weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n_vertices: usize,
    edges: Vec<Edge>,
    seed: u64,
}

impl WeightedGraph {
    /// Builds a graph after validating every edge.
    pub fn new(n_vertices: usize, edges: Vec<Edge>, seed: u64) -> Result<Self, ProblemError> {
        if !(1..=MAX_VERTICES).contains(&n_vertices) {
            return Err(ProblemError::VertexCount(n_vertices));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            if !(e.u < e.v && e.v < n_vertices && e.w.is_finite() && e.w > 0.0) {
                return Err(ProblemError::InvalidEdge { u: e.u, v: e.v, w: e.w });
            }
            if !seen.insert((e.u, e.v)) {
                return Err(ProblemError::DuplicateEdge(e.u, e.v));
            }
        }
        Ok(Self { n_vertices, edges, seed })
    }

    /// Graph with arbitrary non-negative weights, including zero. Only used to build
    /// degenerate objectives (a zero-weight graph has a constant landscape).
    pub fn with_nonnegative_weights(n_vertices: usize, edges: Vec<Edge>) -> Self {
        assert!(edges.iter().all(|e| e.u < e.v && e.v < n_vertices && e.w >= 0.0));
        Self { n_vertices, edges, seed: 0 }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// Line format: header `n m seed`, then one `u v w` line per edge. Weights use
    /// the shortest representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n_vertices, self.edges.len(), self.seed);
        for e in &self.edges {
            out.push_str(&format!("{} {} {:?}\n", e.u, e.v, e.w));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ProblemError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| ProblemError::Parse("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ProblemError::Parse(format!("header {header:?} is not `n m seed`")));
        }
        let n: usize = parse_field(fields[0], "n")?;
        let m: usize = parse_field(fields[1], "m")?;
        let seed: u64 = parse_field(fields[2], "seed")?;
        let mut edges = Vec::with_capacity(m);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(ProblemError::Parse(format!("edge line {line:?} is not `u v w`")));
            }
            edges.push(Edge {
                u: parse_field(f[0], "u")?,
                v: parse_field(f[1], "v")?,
                w: parse_field(f[2], "w")?,
            });
        }
        if edges.len() != m {
            return Err(ProblemError::Parse(format!(
                "header declares {m} edges, found {}",
                edges.len()
            )));
        }
        Self::new(n, edges, seed)
    }

    fn is_connected(n: usize, edges: &[Edge]) -> bool {
        let mut adjacency = vec![Vec::new(); n];
        for e in edges {
            adjacency[e.u].push(e.v);
            adjacency[e.v].push(e.u);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &adjacency[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn parse_field<T: FromStr>(s: &str, name: &str) -> Result<T, ProblemError> {
    s.parse()
        .map_err(|_| ProblemError::Parse(format!("field {name}: cannot parse {s:?}")))
}

/// Generates a connected random graph.
///
/// Draw order (stream `derive_seed(seed, ["problem"])`): for each attempt, pairs
/// `(u, v)` in lexicographic order each consume two uniforms in `[0, 1)`, the first
/// deciding inclusion (`< density`), the second the weight
/// `low + (high − low)·r`. Attempts repeat until the graph is connected.
pub fn generate_problem(
    n: usize,
    seed: u64,
    density: f64,
    weight_range: (f64, f64),
) -> Result<WeightedGraph, ProblemError> {
    if !(2..=MAX_VERTICES).contains(&n) {
        return Err(ProblemError::VertexCount(n));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(ProblemError::Density(density));
    }
    let (low, high) = weight_range;
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(ProblemError::WeightRange(low, high));
    }
    let mut rng = seed::stream(seed, &["problem"]);
    for _ in 0..MAX_CONNECT_ATTEMPTS {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let include = rng.random::<f64>() < density;
                let w = low + (high - low) * rng.random::<f64>();
                if include {
                    edges.push(Edge { u, v, w });
                }
            }
        }
        if WeightedGraph::is_connected(n, &edges) {
            return WeightedGraph::new(n, edges, seed);
        }
    }
    Err(ProblemError::Disconnected(density))
}

/// One side label per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CutAssignment {
    bits: Vec<bool>,
}

impl CutAssignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Assignment of basis state `index` on `n` qubits (bit `i` = vertex `i`).
    pub fn from_index(index: usize, n: usize) -> Self {
        Self { bits: (0..n).map(|i| (index >> i) & 1 == 1).collect() }
    }

    pub fn to_index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// Representative of the complement class with vertex 0 on side `0`.
    pub fn canonical(&self) -> Self {
        if self.bits.first() == Some(&true) {
            self.complement()
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for CutAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for CutAssignment {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(ProblemError::Bitstring(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }
}

/// Negated weight of the edges crossing the cut.
pub fn cut_value(g: &WeightedGraph, a: &CutAssignment) -> Result<f64, ProblemError> {
    if a.len() != g.n_vertices() {
        return Err(ProblemError::LengthMismatch { expected: g.n_vertices(), got: a.len() });
    }
    Ok(cut_value_of_index(g, a.to_index()))
}

/// [`cut_value`] on a basis index; edges are summed in stored order so the same
/// assignment always produces the same bits.
pub(crate) fn cut_value_of_index(g: &WeightedGraph, index: usize) -> f64 {
    let mut value = 0.0;
    for e in g.edges() {
        if ((index >> e.u) ^ (index >> e.v)) & 1 == 1 {
            value -= e.w;
        }
    }
    value
}

/// Exact minimum of the cut objective with its complement-distinct minimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub optimal_value: f64,
    /// Canonical representatives (vertex 0 on side `0`), sorted by basis index.
    pub optimal_assignments: Vec<CutAssignment>,
}

impl GroundTruth {
    /// Complement-invariant distance to the closest optimal assignment.
    pub fn distance_to_nearest(&self, a: &CutAssignment) -> Result<usize, ProblemError> {
        let mut best = usize::MAX;
        for opt in &self.optimal_assignments {
            best = best.min(hamming_distance(a, opt)?);
        }
        Ok(best)
    }
}

/// Enumerates all `2^(n−1)` assignments with vertex 0 fixed to side `0`.
///
/// Blocks of the index range are scanned in parallel and merged in block order,
/// so the result does not depend on the thread count.
pub fn brute_force(g: &WeightedGraph) -> Result<GroundTruth, ProblemError> {
    let n = g.n_vertices();
    if n > MAX_VERTICES {
        return Err(ProblemError::VertexCount(n));
    }
    // vertex 0 fixed at 0 => even indices only
    let half = 1usize << (n - 1);
    const BLOCK: usize = 1 << 14;
    let n_blocks = half.div_ceil(BLOCK);
    let partials: Vec<(f64, Vec<usize>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut best = f64::INFINITY;
            let mut arg = Vec::new();
            for k in (b * BLOCK)..((b + 1) * BLOCK).min(half) {
                let index = k << 1;
                let value = cut_value_of_index(g, index);
                if value < best {
                    best = value;
                    arg.clear();
                    arg.push(index);
                } else if value == best {
                    arg.push(index);
                }
            }
            (best, arg)
        })
        .collect();

    let mut best = f64::INFINITY;
    let mut arg = Vec::new();
    for (value, indices) in partials {
        if value < best {
            best = value;
            arg = indices;
        } else if value == best {
            arg.extend(indices);
        }
    }
    Ok(GroundTruth {
        optimal_value: best,
        optimal_assignments: arg.into_iter().map(|i| CutAssignment::from_index(i, n)).collect(),
    })
}

/// `min(d(a, b), d(a, complement(b)))`.
pub fn hamming_distance(a: &CutAssignment, b: &CutAssignment) -> Result<usize, ProblemError> {
    if a.len() != b.len() {
        return Err(ProblemError::LengthMismatch { expected: a.len(), got: b.len() });
    }
    let d = a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count();
    Ok(d.min(a.len() - d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k2() -> WeightedGraph {
        generate_problem(2, 1, 1.0, (1.0, 1.0)).unwrap()
    }

    fn triangle() -> WeightedGraph {
        generate_problem(3, 32, 1.0, (1.0, 1.0)).unwrap()
    }

    fn bits(s: &str) -> CutAssignment {
        s.parse().unwrap()
    }

    #[test]
    fn degenerate_generation() {
        assert_eq!(k2().edges(), &[Edge { u: 0, v: 1, w: 1.0 }]);
        let t = triangle();
        assert_eq!(t.edges().len(), 3);
        assert!(t.edges().iter().all(|e| e.w == 1.0));
    }

    #[test]
    fn generation_errors() {
        assert_eq!(generate_problem(1, 0, 1.0, (1.0, 2.0)), Err(ProblemError::VertexCount(1)));
        assert_eq!(generate_problem(25, 0, 1.0, (1.0, 2.0)), Err(ProblemError::VertexCount(25)));
        assert!(matches!(generate_problem(4, 0, 0.0, (1.0, 2.0)), Err(ProblemError::Density(_))));
        assert!(matches!(
            generate_problem(4, 0, 0.5, (2.0, 1.0)),
            Err(ProblemError::WeightRange(..))
        ));
        assert!(matches!(
            generate_problem(4, 0, 0.5, (-1.0, 1.0)),
            Err(ProblemError::WeightRange(..))
        ));
        // a 20-vertex graph needs >= 19 edges; at this density one is expected
        assert_eq!(
            generate_problem(20, 3, 1e-4, (1.0, 2.0)),
            Err(ProblemError::Disconnected(1e-4))
        );
    }

    #[test]
    fn cut_values() {
        assert_eq!(cut_value(&k2(), &bits("01")).unwrap(), -1.0);
        assert_eq!(cut_value(&k2(), &bits("00")).unwrap(), 0.0);
        assert_eq!(cut_value(&triangle(), &bits("001")).unwrap(), -2.0);
        assert_eq!(
            cut_value(&k2(), &bits("011")),
            Err(ProblemError::LengthMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn brute_force_small() {
        let gt = brute_force(&k2()).unwrap();
        assert_eq!(gt.optimal_value, -1.0);
        assert_eq!(gt.optimal_assignments, vec![bits("01")]);

        let gt = brute_force(&triangle()).unwrap();
        assert_eq!(gt.optimal_value, -2.0);
        assert_eq!(gt.optimal_assignments.len(), 3);
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(&bits("010"), &bits("101")).unwrap(), 0);
        assert_eq!(hamming_distance(&bits("000"), &bits("000")).unwrap(), 0);
        assert_eq!(hamming_distance(&bits("0011"), &bits("0101")).unwrap(), 2);
        assert!(hamming_distance(&bits("01"), &bits("011")).is_err());
    }

    #[test]
    fn text_round_trip_and_validation() {
        let g = generate_problem(6, 9, 0.6, (10.0, 100.0)).unwrap();
        assert_eq!(WeightedGraph::from_text(&g.to_text()).unwrap(), g);
        assert!(matches!(WeightedGraph::from_text("2 1 0\n1 0 1.0\n"), Err(ProblemError::InvalidEdge { .. })));
        assert!(matches!(
            WeightedGraph::from_text("3 2 0\n0 1 1.0\n0 1 2.0\n"),
            Err(ProblemError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(WeightedGraph::from_text("3 2 0\n0 1 1.0\n"), Err(ProblemError::Parse(_))));
        assert!(matches!(WeightedGraph::from_text("3 0\n"), Err(ProblemError::Parse(_))));
    }

    #[test]
    fn index_conversion() {
        let a = CutAssignment::from_index(0b0110, 4);
        assert_eq!(a.to_string(), "0110");
        assert_eq!(a.to_index(), 6);
    }

    fn arb_graph() -> impl Strategy<Value = WeightedGraph> {
        (2usize..=10, any::<u64>(), 0.3f64..=1.0)
            .prop_filter_map("connected", |(n, s, d)| generate_problem(n, s, d, (0.5, 5.0)).ok())
    }

    fn arb_bits(n: usize) -> impl Strategy<Value = CutAssignment> {
        proptest::collection::vec(any::<bool>(), n).prop_map(CutAssignment::new)
    }

    proptest! {
        #[test]
        fn cut_value_complement_invariant(g in arb_graph(), seed in any::<u64>()) {
            let n = g.n_vertices();
            let a = CutAssignment::from_index((seed as usize) & ((1 << n) - 1), n);
            prop_assert_eq!(cut_value(&g, &a).unwrap(), cut_value(&g, &a.complement()).unwrap());
        }

        #[test]
        fn generation_is_deterministic(n in 2usize..=12, seed in any::<u64>()) {
            let a = generate_problem(n, seed, 0.8, (1.0, 9.0));
            let b = generate_problem(n, seed, 0.8, (1.0, 9.0));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn hamming_is_pseudometric(
            (a, b, c) in (1usize..=12).prop_flat_map(|n| (arb_bits(n), arb_bits(n), arb_bits(n)))
        ) {
            let d = |x: &CutAssignment, y: &CutAssignment| hamming_distance(x, y).unwrap();
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
            prop_assert_eq!(d(&a, &b), d(&a, &b.complement()));
        }
    }
}
