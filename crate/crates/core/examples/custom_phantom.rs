//! Build a plan from a JSON phantom description.
//!
//!     cargo run --example custom_phantom

use rtoverlap::phantom::generate_phantom;
use rtoverlap::PhantomSpec;

const SPEC: &str = r##"{
  "grid": { "dims": [20, 20, 10], "spacing_mm": [2.5, 2.5, 3.0], "origin_mm": [0, 0, 0] },
  "prescription_dose_gy": 70,
  "shapes": [
    { "name": "PTV", "role": "target", "kind": "sphere", "center": [25, 25, 15], "radius": 8 },
    { "name": "Rectum", "role": "oar", "kind": "ellipsoid", "center": [25, 34, 15], "radii": [6, 4, 10] },
    { "name": "Couch", "role": "helper", "color": "#808080", "kind": "box", "min": [0, 45, 0], "max": [48, 48, 27] }
  ],
  "dose": { "model": "gaussian", "center": [25, 25, 15], "sigma_mm": 10, "peak_gy": 74 }
}"##;

fn main() -> rtoverlap::Result<()> {
    let spec: PhantomSpec = serde_json::from_str(SPEC).expect("valid phantom JSON");
    let plan = generate_phantom(&spec)?;
    for s in plan.structures() {
        println!("{:<7} {:<7} {} {:>5} voxels {:>8.3} ml", s.name, s.role, s.color, s.voxel_count(), s.volume_ml());
    }
    println!("max dose {:.2} Gy", plan.dose().max());
    Ok(())
}
