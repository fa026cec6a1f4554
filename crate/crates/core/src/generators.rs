//! Seeded random graphs: configuration-model graphs with bounded degrees,
//! Erdős–Rényi graphs and two-community stochastic block models.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::Rng;

/// Joins every component to the previous one with a single random edge, in
/// component-label order.
pub fn connect_components(graph: &Graph, rng: &mut Rng) -> Graph {
    let (labels, m) = graph.connected_components();
    if m <= 1 {
        return graph.clone();
    }
    let mut members = vec![Vec::new(); m];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let mut edges = graph.edges().to_vec();
    for c in 1..m {
        let u = members[c - 1][rng.random_range(0..members[c - 1].len())];
        let v = members[c][rng.random_range(0..members[c].len())];
        edges.push((u, v));
    }
    Graph::new(graph.node_count(), edges).expect("bridging keeps endpoints in range")
}

/// Target degrees drawn uniformly from `min_degree..=max_degree`, realized by
/// random stub pairing. Self-loops and repeated pairs are discarded, and the
/// result is bridged into one component.
pub fn configuration_graph(n: usize, min_degree: usize, max_degree: usize, rng: &mut Rng) -> Result<Graph> {
    if n < 2 || min_degree == 0 || min_degree > max_degree || max_degree >= n {
        return Err(Error::Config(format!(
            "degree range {min_degree}..={max_degree} is not realizable on {n} nodes"
        )));
    }
    let mut stubs = Vec::new();
    for v in 0..n {
        let d = rng.random_range(min_degree..=max_degree);
        stubs.extend(std::iter::repeat_n(v, d));
    }
    stubs.shuffle(rng);
    let mut edges = BTreeSet::new();
    for pair in stubs.chunks_exact(2) {
        let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        if u != v {
            edges.insert((u, v));
        }
    }
    let g = Graph::new(n, edges)?;
    Ok(connect_components(&g, rng))
}

/// `G(n, p)`.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).expect("indices in range")
}

pub fn connected_erdos_renyi(n: usize, p: f64, rng: &mut Rng) -> Graph {
    connect_components(&erdos_renyi(n, p, rng), rng)
}

/// Stochastic block model with consecutive blocks. Returns the graph and the
/// block of each node.
pub fn stochastic_block_model(sizes: &[usize], p_in: f64, p_out: f64, rng: &mut Rng) -> Result<(Graph, Vec<usize>)> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
        }
    }
    let blocks: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = blocks.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if blocks[u] == blocks[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok((Graph::new(n, edges)?, blocks))
}
