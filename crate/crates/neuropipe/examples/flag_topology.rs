//! Directed flag complex summaries for two classic directed triangles.
//!
//! The cyclic triangle (0->1->2->0) has no directed 2-simplex and a
//! one-dimensional hole; the transitive triangle (0->1, 0->2, 1->2) fills in
//! and is contractible.
//!
//! Run with: `cargo run --example flag_topology`

use neuropipe::topology::{summarize, DirectedGraph};

fn describe(name: &str, g: &DirectedGraph) -> neuropipe::Result<()> {
    let summary = summarize(g, 3)?;
    println!("{name}:");
    println!("  simplex counts:       {:?}", summary.counts);
    println!("  euler characteristic: {}", summary.euler_characteristic);
    println!("  betti numbers:        {:?}", summary.betti);
    Ok(())
}

fn main() -> neuropipe::Result<()> {
    let cyclic = DirectedGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
    let transitive = DirectedGraph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]);
    describe("cyclic triangle", &cyclic)?;
    describe("transitive triangle", &transitive)?;

    // Two transitive triangles glued along the edge 1->2, plus a feedback
    // edge: a slightly richer complex.
    let glued = DirectedGraph::from_edges(4, &[(0, 1), (0, 2), (1, 2), (3, 1), (3, 2), (2, 0)]);
    describe("glued triangles with feedback", &glued)?;
    Ok(())
}
