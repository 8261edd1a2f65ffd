//! Binary graph metrics over connectivity matrices.
//!
//! Six per-node metrics (clustering coefficient, local efficiency, degree
//! centrality, closeness centrality, betweenness centrality, average neighbor
//! degree) plus two global ones (characteristic path length, global
//! efficiency), concatenated node-major into a `6n + 2` feature vector.
//!
//! Disconnected convention: unreachable pairs contribute 0 to efficiency and
//! are excluded from path-length averaging; closeness is computed within a
//! node's component and scaled by `(reachable - 1)/(n - 1)`. Betweenness is
//! unnormalized, with pair counting halved for undirected graphs.

use std::collections::VecDeque;

use crate::cohort::ConnectivityMatrix;
use crate::error::{Error, Result};

/// Undirected simple graph on `n` nodes, no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<bool>,
    pub node_names: Vec<String>,
}

/// Thresholding rule turning a weighted matrix into a binary graph.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "value")]
pub enum BinarizeRule {
    /// Edge iff `|weight| > threshold`.
    Absolute(f64),
    /// Keep the top `density` fraction of nonzero off-diagonal `|weights|`,
    /// ties broken by lexicographic `(i, j)` order.
    Proportional(f64),
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph {
            n,
            adjacency: vec![false; n * n],
            node_names: (0..n).map(|i| format!("n{i}")).collect(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Graph::new(n);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i != j, "self-loops are forbidden");
        self.adjacency[i * self.n + j] = true;
        self.adjacency[j * self.n + i] = true;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// BFS distances from `source`; `None` for unreachable nodes.
    pub fn distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for v in 0..self.n {
                if self.has_edge(u, v) && dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut sub = Graph::new(nodes.len());
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate().skip(a + 1) {
                if self.has_edge(i, j) {
                    sub.add_edge(a, b);
                }
            }
        }
        sub
    }
}

/// Binarize a connectivity matrix. Directedness of the input is ignored:
/// an edge is kept if the rule admits the weight in either direction.
pub fn binarize(matrix: &ConnectivityMatrix, rule: BinarizeRule) -> Result<Graph> {
    let n = matrix.n();
    let mut graph = Graph::new(n);
    graph.node_names = matrix.roi_names.clone();
    let pair_weight = |i: usize, j: usize| matrix.weight(i, j).abs().max(matrix.weight(j, i).abs());

    match rule {
        BinarizeRule::Absolute(theta) => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if pair_weight(i, j) > theta {
                        graph.add_edge(i, j);
                    }
                }
            }
        }
        BinarizeRule::Proportional(density) => {
            if !(density > 0.0 && density <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "proportional density must lie in (0, 1], got {density}"
                )));
            }
            let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = pair_weight(i, j);
                    if w > 0.0 {
                        pairs.push((i, j, w));
                    }
                }
            }
            let total_pairs = n * (n - 1) / 2;
            // Guard against fp noise in d*m, then guarantee at least one edge.
            let keep = ((density * total_pairs as f64) - 1e-9).ceil().max(1.0) as usize;
            let keep = keep.min(pairs.len());
            pairs.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .unwrap()
                    .then(a.0.cmp(&b.0))
                    .then(a.1.cmp(&b.1))
            });
            for &(i, j, _) in &pairs[..keep] {
                graph.add_edge(i, j);
            }
        }
    }
    Ok(graph)
}

/// The six per-node metrics, in vector order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeMetrics {
    pub clustering: f64,
    pub local_efficiency: f64,
    pub degree_centrality: f64,
    pub closeness: f64,
    pub betweenness: f64,
    pub avg_neighbor_degree: f64,
}

pub const NODE_METRIC_NAMES: [&str; 6] = [
    "clustering",
    "local_efficiency",
    "degree_centrality",
    "closeness",
    "betweenness",
    "avg_neighbor_degree",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMetrics {
    /// Mean shortest-path length over reachable ordered pairs; `None` when no
    /// pair is reachable.
    pub characteristic_path_length: Option<f64>,
    pub global_efficiency: f64,
}

/// Brandes' betweenness accumulation, unnormalized, halved for undirected
/// pair counting.
fn betweenness(g: &Graph) -> Vec<f64> {
    let n = g.n();
    let mut centrality = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            stack.push(u);
            for v in 0..n {
                if !g.has_edge(u, v) {
                    continue;
                }
                if dist[v] < 0 {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    for c in &mut centrality {
        *c /= 2.0;
    }
    centrality
}

pub fn node_metrics(g: &Graph) -> Vec<NodeMetrics> {
    let n = g.n();
    let betweenness = betweenness(g);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let neighbors = g.neighbors(i);
        let k = neighbors.len();

        let clustering = if k < 2 {
            0.0
        } else {
            let mut triangles = 0usize;
            for (a, &u) in neighbors.iter().enumerate() {
                for &v in &neighbors[a + 1..] {
                    if g.has_edge(u, v) {
                        triangles += 1;
                    }
                }
            }
            triangles as f64 / (k * (k - 1) / 2) as f64
        };

        let local_efficiency = if k < 2 {
            0.0
        } else {
            global_metrics(&g.induced_subgraph(&neighbors))
                .map(|m| m.global_efficiency)
                .unwrap_or(0.0)
        };

        let degree_centrality = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };

        let closeness = if n > 1 {
            let dist = g.distances(i);
            let mut sum = 0usize;
            let mut reachable = 0usize;
            for (j, d) in dist.iter().enumerate() {
                if j != i {
                    if let Some(d) = d {
                        sum += d;
                        reachable += 1;
                    }
                }
            }
            if reachable == 0 || sum == 0 {
                0.0
            } else {
                (reachable as f64 / (n - 1) as f64) * (reachable as f64 / sum as f64)
            }
        } else {
            0.0
        };

        let avg_neighbor_degree = if k == 0 {
            0.0
        } else {
            neighbors.iter().map(|&j| g.degree(j) as f64).sum::<f64>() / k as f64
        };

        out.push(NodeMetrics {
            clustering,
            local_efficiency,
            degree_centrality,
            closeness,
            betweenness: betweenness[i],
            avg_neighbor_degree,
        });
    }
    out
}

pub fn global_metrics(g: &Graph) -> Result<GlobalMetrics> {
    let n = g.n();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "global graph metric undefined for {n} node(s)"
        )));
    }
    let mut inv_sum = 0.0;
    let mut path_sum = 0usize;
    let mut reachable_pairs = 0usize;
    for i in 0..n {
        let dist = g.distances(i);
        for (j, d) in dist.iter().enumerate() {
            if j == i {
                continue;
            }
            if let Some(d) = d {
                inv_sum += 1.0 / *d as f64;
                path_sum += d;
                reachable_pairs += 1;
            }
        }
    }
    let ordered_pairs = (n * (n - 1)) as f64;
    Ok(GlobalMetrics {
        characteristic_path_length: if reachable_pairs > 0 {
            Some(path_sum as f64 / reachable_pairs as f64)
        } else {
            None
        },
        global_efficiency: inv_sum / ordered_pairs,
    })
}

/// Feature names matching [`graph_feature_vector`] order.
pub fn graph_feature_names(node_names: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(node_names.len() * 6 + 2);
    for node in node_names {
        for metric in NODE_METRIC_NAMES {
            names.push(format!("{node}_{metric}"));
        }
    }
    names.push("characteristic_path_length".to_string());
    names.push("global_efficiency".to_string());
    names
}

/// Per-node metrics node-major, then the two global metrics; length `6n + 2`.
/// An undefined characteristic path length (no reachable pair) is encoded
/// as 0.
pub fn graph_feature_vector(g: &Graph) -> Result<Vec<f64>> {
    let global = global_metrics(g)?;
    let nodes = node_metrics(g);
    let mut out = Vec::with_capacity(g.n() * 6 + 2);
    for m in nodes {
        out.extend_from_slice(&[
            m.clustering,
            m.local_efficiency,
            m.degree_centrality,
            m.closeness,
            m.betweenness,
            m.avg_neighbor_degree,
        ]);
    }
    out.push(global.characteristic_path_length.unwrap_or(0.0));
    out.push(global.global_efficiency);
    Ok(out)
}
