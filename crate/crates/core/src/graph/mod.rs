//! Undirected graphs, the augmented normalized adjacency operator and the
//! orthonormal basis of its eigenvalue-1 eigenspace.

mod dsu;
mod spectral;

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

pub use dsu::DisjointSet;
pub use spectral::{PropagationOperator, SpectralBasis, DEFAULT_UNIT_EIGENVALUE_TOL};

/// Simple undirected graph on nodes `0..n`.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted. Self-loops are not
/// stored; the propagation operator adds them through `A + I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Normalizes an edge list: orients every pair as `u < v`, drops
    /// duplicates and self-loops, and rejects out-of-range endpoints.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Input(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Graph {
            n,
            edges: set.into_iter().collect(),
        })
    }

    pub fn empty(n: usize) -> Self {
        Graph { n, edges: Vec::new() }
    }

    pub fn path(n: usize) -> Self {
        Graph {
            n,
            edges: (1..n).map(|i| (i - 1, i)).collect(),
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        Graph { n, edges }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Component labels (dense, by first appearance) and component count.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let mut dsu = DisjointSet::new(self.n);
        for &(u, v) in &self.edges {
            dsu.union(u, v);
        }
        dsu.labels()
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().1 == 1
    }

    /// Parses the plain-text edge-list format: a header `n e`, then `e`
    /// lines of `u v`. Text after `#` is ignored; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line_no, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("graph file has no header line".into()))?;
        let header: Vec<&str> = header.split_whitespace().collect();
        if header.len() != 2 {
            return Err(Error::Parse(format!(
                "line {line_no}: expected `n e`, found {} fields",
                header.len()
            )));
        }
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {line}: `{s}`: {e}")))
        };
        let n = parse_usize(header[0], line_no)?;
        let e = parse_usize(header[1], line_no)?;

        let mut edges = Vec::with_capacity(e);
        for (line_no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {line_no}: expected `u v`, found {} fields",
                    fields.len()
                )));
            }
            edges.push((parse_usize(fields[0], line_no)?, parse_usize(fields[1], line_no)?));
        }
        if edges.len() != e {
            return Err(Error::Parse(format!(
                "header announces {e} edges but {} were listed",
                edges.len()
            )));
        }
        Graph::new(n, edges)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Graph::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}
