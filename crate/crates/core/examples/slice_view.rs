//! Outlines, dose samples and the highlighted overlap on one slice.
//!
//!     cargo run --example slice_view

use rtoverlap::analysis::SliceRequest;
use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::slice::SliceAxis;
use rtoverlap::{AnalysisConfig, PlanAnalysis};

fn main() -> rtoverlap::Result<()> {
    let analysis = PlanAnalysis::new(generate_phantom(&presets::slab())?, AnalysisConfig::default())?;

    for x in [1, 3] {
        let mut req = SliceRequest::new(SliceAxis::Sagittal, x);
        req.pair = Some(("A".into(), "B".into()));
        req.dose = true;
        let s = analysis.slice(&req)?;
        println!("sagittal x={x}: {}x{} ({} by {})", s.width, s.height, s.u_axis, s.v_axis);
        for o in &s.outlines {
            println!("  {} outline: {:?}", o.name, o.polylines);
        }
        match &s.overlap {
            Some(fill) => println!("  {} fill {} runs={:?}", fill.name, fill.color, fill.runs),
            None => println!("  overlap not on this slice"),
        }
        if let Some(focus) = &s.focus {
            println!("  overlap center of gravity at voxel {:?}", focus.center_index);
        }
    }
    Ok(())
}
