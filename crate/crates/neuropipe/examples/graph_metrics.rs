//! Compute node and global metrics on a small hand-made graph.
//!
//! Run with: `cargo run --example graph_metrics`

use neuropipe::graph::{global_metrics, node_metrics, Graph, NODE_METRIC_NAMES};

fn main() -> neuropipe::Result<()> {
    // A 5-node "bowtie": two triangles sharing node 2.
    let g = Graph::from_edges(5, &[(0, 1), (0, 2), (1, 2), (2, 3), (2, 4), (3, 4)]);

    println!("bowtie graph, {} nodes", g.n());
    println!("{:<6} {:>10} {:>10} {:>10} {:>10} {:>12} {:>8}", "node", NODE_METRIC_NAMES[0], NODE_METRIC_NAMES[1], "degree_c", NODE_METRIC_NAMES[3], NODE_METRIC_NAMES[4], "avg_nd");
    for (i, m) in node_metrics(&g).iter().enumerate() {
        println!(
            "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12.4} {:>8.4}",
            g.node_names[i],
            m.clustering,
            m.local_efficiency,
            m.degree_centrality,
            m.closeness,
            m.betweenness,
            m.avg_neighbor_degree,
        );
    }

    let global = global_metrics(&g)?;
    println!();
    println!("global efficiency:            {:.4}", global.global_efficiency);
    println!(
        "characteristic path length:   {:.4}",
        global.characteristic_path_length.expect("connected graph")
    );
    Ok(())
}
