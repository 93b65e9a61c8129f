//! Find every structure receiving more than 105% of the prescription.
//!
//!     cargo run --example hotspot_workflow

use rtoverlap::analysis::DoseRegionRequest;
use rtoverlap::grid::Role;
use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::report::{self, Format};
use rtoverlap::{AnalysisConfig, PlanAnalysis};

fn main() -> rtoverlap::Result<()> {
    let plan = generate_phantom(&presets::hotspot())?;
    let analysis = PlanAnalysis::new(plan, AnalysisConfig::default())?;

    let threshold = analysis.resolve_threshold(&DoseRegionRequest {
        d_pct: Some(105.0),
        d_abs: None,
    })?;
    let out = report::hotspots(&analysis, threshold, Some(105.0), Some(&[Role::Oar]))?;
    report::write_hotspots(&out, Format::Csv, std::io::stdout().lock())?;

    // The same region, added as a structure, joins the relation graph.
    let (with_region, created) = analysis.with_dose_region(threshold)?;
    println!(
        "\n{} has {} voxels and {} edge(s); graph now has {} nodes",
        created.name,
        created.voxel_count,
        created.edges,
        with_region.graph().nodes.len()
    );
    Ok(())
}
