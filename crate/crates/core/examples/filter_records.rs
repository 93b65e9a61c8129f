//! Narrow the overlap records down with metric ranges.
//!
//!     cargo run --example filter_records

use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::{AnalysisConfig, FilterSpec, Metric, PlanAnalysis, Range};

fn main() -> rtoverlap::Result<()> {
    let analysis = PlanAnalysis::new(generate_phantom(&presets::spheres())?, AnalysisConfig::default())?;

    let all = analysis.records(None, &FilterSpec::new())?;
    println!("{} directed records", all.len());

    let filter = FilterSpec::new()
        .with(Metric::OvPctOfRef, Range::new(Some(20.0), None)?)
        .with(Metric::OvDMean, Range::new(Some(40.0), None)?);
    for r in analysis.records(Some("PTV"), &filter)? {
        println!(
            "PTV -> {}: {:.1}% of PTV, ov d_mean {:.2} Gy, DvhDiff {:.3}/{:.3}",
            r.other_name, r.ov_pct_of_ref, r.ov_stats.d_mean, r.dvhdiff_ref, r.dvhdiff_other
        );
    }
    Ok(())
}
