//! Deterministic synthetic plans built from analytic shapes and dose models.
//!
//! A voxel belongs to a shape when its center lies inside the shape; dose is
//! sampled analytically at voxel centers.

use serde::{Deserialize, Serialize};

use crate::bundle::PlanBundle;
use crate::error::{Error, Result};
use crate::grid::{DoseGrid, Rgb, Role, StructureMask, VoxelGrid3D};

const EXTENT_TOLERANCE_MM: f64 = 1e-9;

const PALETTE: [Rgb; 8] = [
    Rgb([230, 25, 75]),
    Rgb([60, 180, 75]),
    Rgb([0, 130, 200]),
    Rgb([245, 130, 48]),
    Rgb([145, 30, 180]),
    Rgb([70, 240, 240]),
    Rgb([240, 50, 230]),
    Rgb([128, 128, 0]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub grid: VoxelGrid3D,
    pub prescription_dose_gy: f64,
    pub shapes: Vec<ShapeSpec>,
    pub dose: DoseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb>,
    #[serde(flatten)]
    pub shape: Shape,
}

/// Geometry in world millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Half-open box `min <= p < max` per axis.
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DoseModel {
    Uniform {
        dose_gy: f64,
    },
    /// Linear in voxel index along `axis`: `low_gy` at the first voxel
    /// center, `high_gy` at the last.
    LinearRamp {
        axis: Axis,
        low_gy: f64,
        high_gy: f64,
    },
    Gaussian {
        center: [f64; 3],
        sigma_mm: f64,
        peak_gy: f64,
    },
}

impl Shape {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Box { min, max } => (0..3).all(|k| min[k] <= p[k] && p[k] < max[k]),
            Shape::Sphere { center, radius } => {
                (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>() <= radius * radius
            }
            Shape::Ellipsoid { center, radii } => {
                (0..3).map(|k| ((p[k] - center[k]) / radii[k]).powi(2)).sum::<f64>() <= 1.0
            }
        }
    }

    fn bounds(&self) -> [(f64, f64); 3] {
        match self {
            Shape::Box { min, max } => std::array::from_fn(|k| (min[k], max[k])),
            Shape::Sphere { center, radius } => {
                std::array::from_fn(|k| (center[k] - radius, center[k] + radius))
            }
            Shape::Ellipsoid { center, radii } => {
                std::array::from_fn(|k| (center[k] - radii[k], center[k] + radii[k]))
            }
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let (ok, degenerate) = match self {
            Shape::Box { min, max } => (
                finite(min) && finite(max),
                (0..3).any(|k| min[k] >= max[k]),
            ),
            Shape::Sphere { center, radius } => (finite(center) && radius.is_finite(), *radius <= 0.0),
            Shape::Ellipsoid { center, radii } => {
                (finite(center) && finite(radii), radii.iter().any(|&r| r <= 0.0))
            }
        };
        if !ok {
            return Err(Error::InvalidPhantom(format!("shape {name:?} has non-finite geometry")));
        }
        if degenerate {
            return Err(Error::EmptyShape(name.to_owned()));
        }
        Ok(())
    }
}

impl DoseModel {
    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidPhantom(msg.to_owned()));
        match *self {
            DoseModel::Uniform { dose_gy } if !(dose_gy.is_finite() && dose_gy >= 0.0) => {
                bad("uniform dose must be finite and >= 0")
            }
            DoseModel::LinearRamp { low_gy, high_gy, .. }
                if !(low_gy.is_finite() && high_gy.is_finite() && low_gy >= 0.0 && high_gy >= 0.0) =>
            {
                bad("ramp end points must be finite and >= 0")
            }
            DoseModel::Gaussian { center, sigma_mm, peak_gy }
                if !(center.iter().all(|c| c.is_finite())
                    && sigma_mm.is_finite()
                    && sigma_mm > 0.0
                    && peak_gy.is_finite()
                    && peak_gy >= 0.0) =>
            {
                bad("gaussian needs finite center, sigma > 0 and peak >= 0")
            }
            _ => Ok(()),
        }
    }

    /// Dose in Gy at voxel `index` of `grid`.
    pub fn sample(&self, grid: &VoxelGrid3D, index: [usize; 3]) -> f64 {
        match *self {
            DoseModel::Uniform { dose_gy } => dose_gy,
            DoseModel::LinearRamp { axis, low_gy, high_gy } => {
                let n = grid.dims[axis.index()];
                if n < 2 {
                    low_gy
                } else {
                    let t = index[axis.index()] as f64 / (n - 1) as f64;
                    low_gy + (high_gy - low_gy) * t
                }
            }
            DoseModel::Gaussian { center, sigma_mm, peak_gy } => {
                let p = grid.index_to_world(index);
                let r2: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum();
                peak_gy * (-r2 / (2.0 * sigma_mm * sigma_mm)).exp()
            }
        }
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<PlanBundle> {
    spec.grid.validate()?;
    spec.dose.check()?;
    let grid = spec.grid;
    let extent = grid.extent();

    let mut structures = Vec::with_capacity(spec.shapes.len());
    for (i, s) in spec.shapes.iter().enumerate() {
        s.shape.check(&s.name)?;
        let inside = s.shape.bounds().iter().zip(&extent).all(|(&(lo, hi), &(glo, ghi))| {
            lo >= glo - EXTENT_TOLERANCE_MM && hi <= ghi + EXTENT_TOLERANCE_MM
        });
        if !inside {
            return Err(Error::ShapeOutsideGrid(s.name.clone()));
        }
        let color = s.color.unwrap_or(PALETTE[i % PALETTE.len()]);
        let mask = StructureMask::from_fn(s.name.clone(), s.role, color, grid, |idx| {
            s.shape.contains(grid.index_to_world(idx))
        });
        if mask.is_empty() {
            return Err(Error::EmptyShape(s.name.clone()));
        }
        structures.push(mask);
    }

    let dose = DoseGrid::from_fn(grid, |idx| spec.dose.sample(&grid, idx))?;
    Ok(PlanBundle::new(structures, dose, spec.prescription_dose_gy)?.with_metadata("source", "phantom"))
}

/// Ready-made phantoms used by tests, examples and `rtoverlap phantom`.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 4] = ["slab", "disjoint", "spheres", "hotspot"];

    pub fn by_name(name: &str) -> Option<PhantomSpec> {
        match name {
            "slab" => Some(slab()),
            "disjoint" => Some(disjoint()),
            "spheres" => Some(spheres()),
            "hotspot" => Some(hotspot()),
            _ => None,
        }
    }

    fn x_slab(name: &str, role: Role, x0: usize, x1: usize) -> ShapeSpec {
        ShapeSpec {
            name: name.into(),
            role,
            color: None,
            shape: Shape::Box {
                min: [x0 as f64 - 0.5, -0.5, -0.5],
                max: [x1 as f64 + 0.5, 3.5, 3.5],
            },
        }
    }

    /// 4×4×4 unit grid with slabs A = x∈{0,1}, B = x∈{1,2}, C = x∈{2,3} and
    /// dose equal to the x index in Gy.
    pub fn slab() -> PhantomSpec {
        PhantomSpec {
            grid: VoxelGrid3D::unit([4, 4, 4]).expect("static grid"),
            prescription_dose_gy: 2.0,
            shapes: vec![
                x_slab("A", Role::Target, 0, 1),
                x_slab("B", Role::Oar, 1, 2),
                x_slab("C", Role::Oar, 2, 3),
            ],
            dose: DoseModel::LinearRamp {
                axis: Axis::X,
                low_gy: 0.0,
                high_gy: 3.0,
            },
        }
    }

    /// Three non-touching slabs under uniform dose.
    pub fn disjoint() -> PhantomSpec {
        PhantomSpec {
            grid: VoxelGrid3D::unit([6, 4, 4]).expect("static grid"),
            prescription_dose_gy: 10.0,
            shapes: vec![
                x_slab("A", Role::Target, 0, 0),
                x_slab("B", Role::Oar, 2, 2),
                x_slab("C", Role::Oar, 4, 5),
            ],
            dose: DoseModel::Uniform { dose_gy: 10.0 },
        }
    }

    /// Three pairwise-overlapping spheres sharing a common core, with a
    /// gaussian dose centered on the PTV.
    pub fn spheres() -> PhantomSpec {
        let sphere = |name: &str, role, center: [f64; 3], radius| ShapeSpec {
            name: name.into(),
            role,
            color: None,
            shape: Shape::Sphere { center, radius },
        };
        PhantomSpec {
            grid: VoxelGrid3D::new([24, 24, 24], [2.0; 3], [0.0; 3]).expect("static grid"),
            prescription_dose_gy: 60.0,
            shapes: vec![
                sphere("PTV", Role::Target, [20.0, 22.0, 23.0], 10.0),
                sphere("Bladder", Role::Oar, [30.0, 22.0, 23.0], 9.0),
                sphere("Rectum", Role::Oar, [25.0, 30.0, 23.0], 8.0),
            ],
            dose: DoseModel::Gaussian {
                center: [20.0, 22.0, 23.0],
                sigma_mm: 12.0,
                peak_gy: 66.0,
            },
        }
    }

    /// Prescription 50 Gy; the only voxels above 105 % (52.5 Gy) sit inside
    /// the spinal cord.
    pub fn hotspot() -> PhantomSpec {
        PhantomSpec {
            grid: VoxelGrid3D::new([32, 32, 32], [2.0; 3], [0.0; 3]).expect("static grid"),
            prescription_dose_gy: 50.0,
            shapes: vec![
                ShapeSpec {
                    name: "PTV".into(),
                    role: Role::Target,
                    color: Some(Rgb([230, 25, 75])),
                    shape: Shape::Sphere {
                        center: [26.0, 32.0, 32.0],
                        radius: 10.0,
                    },
                },
                ShapeSpec {
                    name: "SpinalCord".into(),
                    role: Role::Oar,
                    color: Some(Rgb([255, 225, 25])),
                    shape: Shape::Ellipsoid {
                        center: [42.0, 32.0, 32.0],
                        radii: [5.0, 5.0, 24.0],
                    },
                },
                ShapeSpec {
                    name: "Esophagus".into(),
                    role: Role::Oar,
                    color: Some(Rgb([60, 180, 75])),
                    shape: Shape::Sphere {
                        center: [30.0, 14.0, 32.0],
                        radius: 6.0,
                    },
                },
                ShapeSpec {
                    name: "Ring".into(),
                    role: Role::Helper,
                    color: Some(Rgb([145, 30, 180])),
                    shape: Shape::Box {
                        min: [10.0, 20.0, 20.0],
                        max: [20.0, 44.0, 44.0],
                    },
                },
            ],
            dose: DoseModel::Gaussian {
                center: [42.0, 32.0, 32.0],
                sigma_mm: 10.0,
                peak_gy: 56.0,
            },
        }
    }
}
