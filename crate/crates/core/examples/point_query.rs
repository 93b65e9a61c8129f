//! Which structures meet at a point, and their pairwise records.
//!
//!     cargo run --example point_query

use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::{AnalysisConfig, PlanAnalysis};

fn main() -> rtoverlap::Result<()> {
    let analysis = PlanAnalysis::new(generate_phantom(&presets::spheres())?, AnalysisConfig::default())?;

    for point in [[24.0, 24.0, 24.0], [2.0, 2.0, 2.0]] {
        let hit = analysis.point_query(point)?;
        println!("point {:?} mm -> voxel {:?}, members {:?}", point, hit.anchor, hit.members);
        for r in &hit.rows {
            println!(
                "  {} ~ {}: {:.3} ml, d_mean {:.2} Gy (originals {:.2} / {:.2})",
                r.ref_name, r.other_name, r.ov_volume_ml, r.ov_stats.d_mean, r.ref_stats.d_mean, r.other_stats.d_mean
            );
        }
    }

    // Points outside the grid are rejected.
    assert!(analysis.point_query([-10.0, 0.0, 0.0]).is_err());
    Ok(())
}
