//! Relation graph of the slab phantom: which structures overlap, by how much.
//!
//!     cargo run --example overlap_graph

use rtoverlap::overlap::build_relation_graph;
use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::{AnalysisConfig, PlanAnalysis};

fn main() -> rtoverlap::Result<()> {
    let plan = generate_phantom(&presets::slab())?;

    let graph = build_relation_graph(plan.structures())?;
    println!("nodes: {:?}", graph.nodes);
    for e in &graph.edges {
        println!("edge {} ~ {}: {} voxels", graph.nodes[e.a], graph.nodes[e.b], e.voxel_count);
    }
    // A and C never touch, so overlap is not transitive.
    assert!(!graph.contains_edge("A", "C"));

    let analysis = PlanAnalysis::new(plan, AnalysisConfig::default())?;
    for e in analysis.graph_view().edges {
        println!(
            "{} ~ {}: {:.3} ml, {:.0}% of {}, {:.0}% of {}, mean dose {:.2} | {:.2} | {:.2} Gy",
            e.a, e.b, e.ov_volume_ml, e.pct_of_a, e.a, e.pct_of_b, e.b, e.d_mean.a, e.d_mean.ov, e.d_mean.b
        );
    }
    Ok(())
}
