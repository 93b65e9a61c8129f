//! Write a plan bundle to disk and read it back unchanged.
//!
//!     cargo run --example bundle_roundtrip [DIR]

use rtoverlap::phantom::{generate_phantom, presets};
use rtoverlap::{load_bundle, save_bundle};

fn main() -> rtoverlap::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rtoverlap-example-bundle"));

    let plan = generate_phantom(&presets::spheres())?;
    save_bundle(&plan, &dir)?;
    let back = load_bundle(&dir)?;

    let same_dose = plan.dose().values().iter().zip(back.dose().values()).all(|(a, b)| a.to_bits() == b.to_bits());
    let same_masks = plan.structures().iter().zip(back.structures()).all(|(a, b)| a == b);
    println!("bundle at {}", dir.display());
    for s in back.structures() {
        println!("  {:<8} {:<6} {} voxels", s.name, s.role, s.voxel_count());
    }
    println!("dose bit-identical: {same_dose}, masks identical: {same_masks}");
    Ok(())
}
