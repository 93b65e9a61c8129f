//! DVH-derived metrics for one structure and one overlap.
//!
//!     cargo run --example dvh_metrics

use rtoverlap::metrics::{compute_dvh, d_x, dose_stats, dvh_diff, homogeneity_index, v_x};
use rtoverlap::overlap::intersect;
use rtoverlap::phantom::{generate_phantom, presets};

fn main() -> rtoverlap::Result<()> {
    let plan = generate_phantom(&presets::slab())?;
    let dose = plan.dose();
    let a = plan.structure("A").expect("preset has A");
    let b = plan.structure("B").expect("preset has B");
    let bin = 1.0;

    let dvh = compute_dvh(a, dose, bin)?;
    println!("A cumulative DVH at 1 Gy bins: {:?}", dvh.cumulative);
    let stats = dose_stats(a, dose)?;
    println!("A d_min/mean/max: {} / {} / {} Gy", stats.d_min, stats.d_mean, stats.d_max);
    println!("A V1Gy = {}%", v_x(a, dose, 1.0)?);
    println!("A D98 / D50 / D2 = {} / {} / {} Gy", d_x(&dvh, 98.0)?, d_x(&dvh, 50.0)?, d_x(&dvh, 2.0)?);
    println!("A HI (ICRU-83) = {}", homogeneity_index(&dvh)?);

    let ov = intersect(a, b)?;
    let ov_dvh = compute_dvh(&ov, dose, bin)?;
    println!(
        "{}: {} voxels, DvhDiff vs A = {}, vs B = {}",
        ov.name,
        ov.voxel_count(),
        dvh_diff(&ov_dvh, &dvh)?,
        dvh_diff(&ov_dvh, &compute_dvh(b, dose, bin)?)?
    );
    Ok(())
}
