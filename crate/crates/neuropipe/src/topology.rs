//! Directed flag complex construction and mod-2 homology.
//!
//! A k-simplex is an ordered tuple `(v0, ..., vk)` of distinct vertices with
//! an edge `vi -> vj` for every `i < j`. Betti numbers are computed over
//! GF(2) from boundary-matrix ranks, which sidesteps orientation bookkeeping
//! and is exact at desk scale.

use std::collections::HashMap;

use crate::cohort::ConnectivityMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_DIM: usize = 3;

/// Hard cap on total simplex count before `betti_numbers` refuses to run.
pub const SIMPLEX_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    n: usize,
    adjacency: Vec<bool>,
}

impl DirectedGraph {
    pub fn new(n: usize) -> Self {
        DirectedGraph { n, adjacency: vec![false; n * n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = DirectedGraph::new(n);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    /// Build from a connectivity matrix: edge `i -> j` iff `|w(i,j)| > threshold`.
    pub fn from_connectivity(matrix: &ConnectivityMatrix, threshold: f64) -> Self {
        let n = matrix.n();
        let mut g = DirectedGraph::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && matrix.weight(i, j).abs() > threshold {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i != j, "self-loops are forbidden");
        self.adjacency[i * self.n + j] = true;
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Simplices grouped by dimension; each list is duplicate-free and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagComplex {
    pub simplices: Vec<Vec<Vec<usize>>>,
}

impl FlagComplex {
    pub fn counts(&self) -> Vec<usize> {
        self.simplices.iter().map(|s| s.len()).collect()
    }

    pub fn total_simplices(&self) -> usize {
        self.simplices.iter().map(|s| s.len()).sum()
    }

    pub fn max_dim(&self) -> usize {
        self.simplices.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TopologySummary {
    pub counts: Vec<usize>,
    pub euler_characteristic: i64,
    pub betti: Vec<usize>,
}

/// Enumerate all directed cliques up to `max_dim` by extending simplices with
/// common out-neighbors of all their vertices.
pub fn build_flag_complex(g: &DirectedGraph, max_dim: usize) -> Result<FlagComplex> {
    if max_dim < 1 {
        return Err(Error::InvalidConfig("max_dim must be at least 1".into()));
    }
    let n = g.n();
    let mut simplices: Vec<Vec<Vec<usize>>> = Vec::with_capacity(max_dim + 1);
    simplices.push((0..n).map(|v| vec![v]).collect());

    for dim in 1..=max_dim {
        let prev = &simplices[dim - 1];
        let mut next: Vec<Vec<usize>> = Vec::new();
        for simplex in prev {
            // w extends (v0..vk) iff vi -> w for every vi.
            'candidates: for w in 0..n {
                if simplex.contains(&w) {
                    continue;
                }
                for &v in simplex {
                    if !g.has_edge(v, w) {
                        continue 'candidates;
                    }
                }
                let mut extended = simplex.clone();
                extended.push(w);
                next.push(extended);
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort();
        next.dedup();
        simplices.push(next);
    }
    Ok(FlagComplex { simplices })
}

pub fn euler_characteristic(complex: &FlagComplex) -> i64 {
    complex
        .counts()
        .iter()
        .enumerate()
        .map(|(k, &c)| if k % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum()
}

/// Rank over GF(2) of the boundary matrix from dimension `k` to `k - 1`,
/// via sparse column reduction.
fn boundary_rank(complex: &FlagComplex, k: usize) -> usize {
    if k == 0 || k >= complex.simplices.len() {
        return 0;
    }
    let faces: HashMap<&[usize], usize> = complex.simplices[k - 1]
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_slice(), i))
        .collect();

    // pivot row -> reduced column owning that pivot
    let mut pivots: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut rank = 0usize;

    for simplex in &complex.simplices[k] {
        let mut column: Vec<usize> = Vec::with_capacity(k + 1);
        for drop in 0..simplex.len() {
            let mut face = simplex.clone();
            face.remove(drop);
            column.push(faces[face.as_slice()]);
        }
        column.sort_unstable();

        loop {
            let Some(&low) = column.last() else { break };
            let Some(other) = pivots.get(&low) else { break };
            column = symmetric_difference(&column, other);
        }
        if let Some(&low) = column.last() {
            pivots.insert(low, column);
            rank += 1;
        }
    }
    rank
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Mod-2 Betti numbers `betti_k = dim ker d_k - rank d_{k+1}` for every
/// computed dimension.
pub fn betti_numbers(complex: &FlagComplex) -> Result<Vec<usize>> {
    let total = complex.total_simplices();
    if total > SIMPLEX_CAP {
        return Err(Error::InvalidData(format!(
            "complex has {total} simplices, exceeding the cap of {SIMPLEX_CAP}"
        )));
    }
    let dims = complex.simplices.len();
    let ranks: Vec<usize> = (0..=dims).map(|k| boundary_rank(complex, k)).collect();
    let mut betti = Vec::with_capacity(dims);
    for k in 0..dims {
        let kernel = complex.simplices[k].len() - ranks[k];
        betti.push(kernel - ranks[k + 1]);
    }
    Ok(betti)
}

pub fn summarize(g: &DirectedGraph, max_dim: usize) -> Result<TopologySummary> {
    let complex = build_flag_complex(g, max_dim)?;
    let betti = betti_numbers(&complex)?;
    Ok(TopologySummary {
        counts: complex.counts(),
        euler_characteristic: euler_characteristic(&complex),
        betti,
    })
}
