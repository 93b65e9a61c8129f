//! Shared test support: a brute-force oracle that recomputes everything from
//! raw voxel arrays, random phantom generation, and in-process HTTP calls.
#![allow(dead_code)]

use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::Rng;
use rtoverlap::grid::Role;
use rtoverlap::phantom::{Axis, DoseModel, Shape, ShapeSpec};
use rtoverlap::{generate_phantom, PhantomSpec, PlanBundle, VoxelGrid3D};
use tower::ServiceExt;

/// Plan contents as plain arrays, x fastest.
pub struct Raw {
    pub dims: [usize; 3],
    pub voxel_ml: f64,
    pub names: Vec<String>,
    pub roles: Vec<Role>,
    pub masks: Vec<Vec<bool>>,
    pub dose: Vec<f64>,
}

impl Raw {
    pub fn from_plan(plan: &PlanBundle) -> Raw {
        let g = plan.grid();
        let [nx, ny, nz] = g.dims;
        let mut masks = Vec::new();
        for s in plan.structures() {
            let mut m = Vec::with_capacity(nx * ny * nz);
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        m.push(s.contains([x, y, z]));
                    }
                }
            }
            masks.push(m);
        }
        Raw {
            dims: g.dims,
            voxel_ml: g.spacing[0] * g.spacing[1] * g.spacing[2] / 1000.0,
            names: plan.structures().iter().map(|s| s.name.clone()).collect(),
            roles: plan.structures().iter().map(|s| s.role).collect(),
            masks,
            dose: plan.dose().values().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).expect("known name")
    }

    pub fn len(&self) -> usize {
        self.dose.len()
    }

    pub fn and(&self, i: usize, j: usize) -> Vec<bool> {
        self.masks[i].iter().zip(&self.masks[j]).map(|(&a, &b)| a && b).collect()
    }

    pub fn and_mask(&self, i: usize, other: &[bool]) -> Vec<bool> {
        self.masks[i].iter().zip(other).map(|(&a, &b)| a && b).collect()
    }

    pub fn at_least(&self, d: f64) -> Vec<bool> {
        self.dose.iter().map(|&v| v >= d).collect()
    }

    pub fn doses(&self, mask: &[bool]) -> Vec<f64> {
        mask.iter().zip(&self.dose).filter(|(m, _)| **m).map(|(_, &d)| d).collect()
    }
}

pub fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&m| m).count()
}

/// Voxel-center rasterization written independently of the engine.
pub fn rasterize(grid: &VoxelGrid3D, shape: &Shape) -> Vec<bool> {
    let [nx, ny, nz] = grid.dims;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [
                    grid.origin[0] + x as f64 * grid.spacing[0],
                    grid.origin[1] + y as f64 * grid.spacing[1],
                    grid.origin[2] + z as f64 * grid.spacing[2],
                ];
                let inside = match shape {
                    Shape::Box { min, max } => {
                        min[0] <= p[0] && p[0] < max[0] && min[1] <= p[1] && p[1] < max[1] && min[2] <= p[2] && p[2] < max[2]
                    }
                    Shape::Sphere { center, radius } => {
                        let (dx, dy, dz) = (p[0] - center[0], p[1] - center[1], p[2] - center[2]);
                        dx * dx + dy * dy + dz * dz <= radius * radius
                    }
                    Shape::Ellipsoid { center, radii } => {
                        let u = (p[0] - center[0]) / radii[0];
                        let v = (p[1] - center[1]) / radii[1];
                        let w = (p[2] - center[2]) / radii[2];
                        u * u + v * v + w * w <= 1.0
                    }
                };
                out.push(inside);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn stats(doses: &[f64]) -> Stats {
    let mut sorted = doses.to_vec();
    sorted.sort_by(f64::total_cmp);
    Stats {
        min: sorted[0],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        max: sorted[sorted.len() - 1],
    }
}

/// Differential histogram as bin -> voxel count.
pub fn histogram(doses: &[f64], w: f64) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for &d in doses {
        *h.entry((d / w).floor() as u64).or_insert(0) += 1;
    }
    h
}

pub fn dvh_diff(a: &[f64], b: &[f64], w: f64) -> f64 {
    let (ha, hb) = (histogram(a, w), histogram(b, w));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let shared: f64 = ha
        .iter()
        .map(|(k, &ca)| {
            let cb = hb.get(k).copied().unwrap_or(0);
            (ca as f64 / na).min(cb as f64 / nb)
        })
        .sum();
    1.0 - shared
}

/// Highest bin edge k·w such that at least x% of voxels fall in bins >= k.
pub fn d_x(doses: &[f64], w: f64, x: f64) -> f64 {
    let h = histogram(doses, w);
    let top = h.keys().next_back().copied().unwrap_or(0);
    let n = doses.len() as f64;
    (0..=top)
        .rev()
        .find(|&k| h.range(k..).map(|(_, &c)| c).sum::<u64>() as f64 * 100.0 >= x * n)
        .map_or(0.0, |k| k as f64 * w)
}

pub fn hi(doses: &[f64], w: f64) -> Option<f64> {
    let d50 = d_x(doses, w, 50.0);
    (d50 != 0.0).then(|| (d_x(doses, w, 2.0) - d_x(doses, w, 98.0)) / d50)
}

/// Every field of the directed record (ref = i, other = j), recomputed.
#[derive(Debug)]
pub struct Expected {
    pub count: usize,
    pub ml: f64,
    pub pct_ref: f64,
    pub pct_other: f64,
    pub ov: Stats,
    pub r: Stats,
    pub o: Stats,
    pub hi_ref: Option<f64>,
    pub dvhdiff_ref: f64,
    pub dvhdiff_other: f64,
}

pub fn expected_record(raw: &Raw, i: usize, j: usize, w: f64) -> Option<Expected> {
    let ov = raw.and(i, j);
    let n = count(&ov);
    if n == 0 {
        return None;
    }
    let (dov, dr, dother) = (raw.doses(&ov), raw.doses(&raw.masks[i]), raw.doses(&raw.masks[j]));
    Some(Expected {
        count: n,
        ml: n as f64 * raw.voxel_ml,
        pct_ref: 100.0 * n as f64 / dr.len() as f64,
        pct_other: 100.0 * n as f64 / dother.len() as f64,
        ov: stats(&dov),
        r: stats(&dr),
        o: stats(&dother),
        hi_ref: hi(&dr, w),
        dvhdiff_ref: dvh_diff(&dr, &dov, w),
        dvhdiff_other: dvh_diff(&dother, &dov, w),
    })
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Random phantom: grid up to 32³, 2 to 6 shapes, one of three dose models
/// chosen by `model` (0 uniform, 1 linear ramp, 2 gaussian).
pub fn random_spec(rng: &mut StdRng, model: usize) -> PhantomSpec {
    let dims = [rng.random_range(4..=32), rng.random_range(4..=32), rng.random_range(2..=32)];
    let spacings = [0.5, 1.0, 1.25, 2.0, 2.5, 3.0];
    let spacing = [0, 1, 2].map(|_| spacings[rng.random_range(0..spacings.len())]);
    let origin = [0, 1, 2].map(|_| rng.random_range(-50.0..50.0));
    let grid = VoxelGrid3D::new(dims, spacing, origin).expect("valid random grid");
    let extent = grid.extent();

    let dose = match model {
        0 => DoseModel::Uniform {
            dose_gy: rng.random_range(0.0..80.0),
        },
        1 => DoseModel::LinearRamp {
            axis: [Axis::X, Axis::Y, Axis::Z][rng.random_range(0..3)],
            low_gy: rng.random_range(0.0..30.0),
            high_gy: rng.random_range(0.0..80.0),
        },
        _ => DoseModel::Gaussian {
            center: extent.map(|(lo, hi)| rng.random_range(lo..hi)),
            sigma_mm: rng.random_range(2.0..30.0),
            peak_gy: rng.random_range(1.0..80.0),
        },
    };

    let focus = extent.map(|(lo, hi)| rng.random_range(lo + 0.25 * (hi - lo)..hi - 0.25 * (hi - lo)));
    let n_shapes = rng.random_range(2..=6);
    let mut shapes = Vec::new();
    while shapes.len() < n_shapes {
        let shape = random_shape(rng, &extent, focus);
        if !rasterize(&grid, &shape).contains(&true) {
            continue;
        }
        let role = [Role::Target, Role::Oar, Role::Oar, Role::Helper][rng.random_range(0..4)];
        shapes.push(ShapeSpec {
            name: format!("S{}", shapes.len()),
            role,
            color: None,
            shape,
        });
    }

    PhantomSpec {
        grid,
        prescription_dose_gy: rng.random_range(10.0..70.0),
        shapes,
        dose,
    }
}

/// Shapes mostly gather around `focus` so that many pairs overlap.
fn random_shape(rng: &mut StdRng, extent: &[(f64, f64); 3], focus: [f64; 3]) -> Shape {
    let near = rng.random_bool(0.7);
    let center: [f64; 3] = std::array::from_fn(|k| {
        let (lo, hi) = extent[k];
        if near {
            let jitter = 0.15 * (hi - lo);
            rng.random_range((focus[k] - jitter).max(lo)..(focus[k] + jitter).min(hi))
        } else {
            rng.random_range(lo..hi)
        }
    });
    let room: [f64; 3] = std::array::from_fn(|k| (center[k] - extent[k].0).min(extent[k].1 - center[k]));
    match rng.random_range(0..3) {
        0 => {
            let mut min = [0.0; 3];
            let mut max = [0.0; 3];
            for k in 0..3 {
                let (lo, hi) = extent[k];
                min[k] = rng.random_range(lo..=center[k]);
                max[k] = rng.random_range(center[k]..=hi).max(min[k] + 1e-6).min(hi);
            }
            Shape::Box { min, max }
        }
        1 => Shape::Sphere {
            center,
            radius: rng.random_range(0.2..1.0) * room.iter().copied().fold(f64::INFINITY, f64::min),
        },
        _ => Shape::Ellipsoid {
            center,
            radii: room.map(|r| rng.random_range(0.2..1.0) * r),
        },
    }
}

/// A random phantom that generates successfully.
pub fn random_plan(rng: &mut StdRng, model: usize) -> (PhantomSpec, PlanBundle) {
    loop {
        let spec = random_spec(rng, model);
        if let Ok(plan) = generate_phantom(&spec) {
            return (spec, plan);
        }
    }
}

pub async fn call(app: &axum::Router, method: &str, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_owned()))
        .expect("valid request");
    let resp = app.clone().oneshot(req).await.expect("router is infallible");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("readable body").to_bytes();
    (status, bytes.to_vec())
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("JSON body")
}
