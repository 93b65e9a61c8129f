//! Orthogonal 2D slices through the planning grid.
//!
//! A slice is addressed in plane coordinates `(u, v)` with `u` fastest:
//! axial planes are `(x, y)` at fixed `z`, coronal `(x, z)` at fixed `y`,
//! sagittal `(y, z)` at fixed `x`. Outline vertices are expressed in the same
//! index units, so pixel `(u, v)` covers `[u - 0.5, u + 0.5] × [v - 0.5, v + 0.5]`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{StructureMask, VoxelGrid3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    Axial,
    Coronal,
    Sagittal,
}

impl SliceAxis {
    /// Grid axis held fixed by this slice orientation.
    pub fn normal(self) -> usize {
        match self {
            SliceAxis::Axial => 2,
            SliceAxis::Coronal => 1,
            SliceAxis::Sagittal => 0,
        }
    }

    /// Grid axes mapped to plane `u` and `v`.
    pub fn plane_axes(self) -> [usize; 2] {
        match self {
            SliceAxis::Axial => [0, 1],
            SliceAxis::Coronal => [0, 2],
            SliceAxis::Sagittal => [1, 2],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SliceAxis::Axial => "axial",
            SliceAxis::Coronal => "coronal",
            SliceAxis::Sagittal => "sagittal",
        }
    }
}

impl fmt::Display for SliceAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SliceAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "axial" => Ok(SliceAxis::Axial),
            "coronal" => Ok(SliceAxis::Coronal),
            "sagittal" => Ok(SliceAxis::Sagittal),
            other => Err(format!("unknown slice axis {other:?}")),
        }
    }
}

/// Plane geometry of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlicePlane {
    pub axis: SliceAxis,
    pub index: usize,
    pub width: usize,
    pub height: usize,
}

impl SlicePlane {
    pub fn new(grid: &VoxelGrid3D, axis: SliceAxis, index: usize) -> Result<Self> {
        let len = grid.dims[axis.normal()];
        if index >= len {
            return Err(Error::SliceOutOfRange {
                axis: axis.as_str(),
                index,
                len,
            });
        }
        let [ua, va] = axis.plane_axes();
        Ok(SlicePlane {
            axis,
            index,
            width: grid.dims[ua],
            height: grid.dims[va],
        })
    }

    pub fn voxel(&self, u: usize, v: usize) -> [usize; 3] {
        let [ua, va] = self.axis.plane_axes();
        let mut idx = [0; 3];
        idx[self.axis.normal()] = self.index;
        idx[ua] = u;
        idx[va] = v;
        idx
    }

    /// Linear grid indices of the plane's pixels, `u` fastest.
    pub fn linear_indices<'a>(&'a self, grid: &'a VoxelGrid3D) -> impl Iterator<Item = usize> + 'a {
        (0..self.height)
            .flat_map(move |v| (0..self.width).map(move |u| grid.linear_index(self.voxel(u, v))))
    }

    pub fn mask(&self, mask: &StructureMask) -> Vec<bool> {
        self.linear_indices(&mask.grid)
            .map(|i| mask.occupancy().contains(i))
            .collect()
    }

    pub fn sample<T: Copy>(&self, grid: &VoxelGrid3D, values: &[T]) -> Vec<T> {
        self.linear_indices(grid).map(|i| values[i]).collect()
    }
}

/// Closed outlines along pixel boundaries of a binary image (`u` fastest).
///
/// Each polyline runs counter-clockwise around a filled region (clockwise
/// around holes), repeats its first vertex at the end and keeps only corner
/// vertices. Pixels touching only at a corner get separate outlines.
pub fn trace_outlines(width: usize, height: usize, pixels: &[bool]) -> Vec<Vec<[f64; 2]>> {
    assert_eq!(pixels.len(), width * height);
    let inside = |u: i64, v: i64| {
        u >= 0
            && v >= 0
            && (u as usize) < width
            && (v as usize) < height
            && pixels[v as usize * width + u as usize]
    };

    // directed boundary edges between pixel corners, filled side on the left
    let mut edges: Vec<([i64; 2], [i64; 2])> = Vec::new();
    for v in 0..height as i64 {
        for u in 0..width as i64 {
            if !inside(u, v) {
                continue;
            }
            if !inside(u, v - 1) {
                edges.push(([u, v], [u + 1, v]));
            }
            if !inside(u + 1, v) {
                edges.push(([u + 1, v], [u + 1, v + 1]));
            }
            if !inside(u, v + 1) {
                edges.push(([u + 1, v + 1], [u, v + 1]));
            }
            if !inside(u - 1, v) {
                edges.push(([u, v + 1], [u, v]));
            }
        }
    }

    let mut outgoing: HashMap<[i64; 2], Vec<usize>> = HashMap::new();
    for (i, (from, _)) in edges.iter().enumerate() {
        outgoing.entry(*from).or_default().push(i);
    }

    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut corners = vec![edges[start].0];
        let mut current = start;
        let closing_dir = loop {
            used[current] = true;
            let (from, to) = edges[current];
            let dir = [to[0] - from[0], to[1] - from[1]];
            let next = outgoing[&to]
                .iter()
                .copied()
                .filter(|&e| !used[e] || e == start)
                .max_by_key(|&e| turn_priority(dir, edges[e]))
                .expect("boundary edges always form closed loops");
            if next == start {
                break dir;
            }
            let (_, next_to) = edges[next];
            if [next_to[0] - to[0], next_to[1] - to[1]] != dir {
                corners.push(to);
            }
            current = next;
        };
        // the start vertex is a corner only if the path turns there
        let (s_from, s_to) = edges[start];
        if closing_dir == [s_to[0] - s_from[0], s_to[1] - s_from[1]] {
            corners.remove(0);
        }
        let first = corners[0];
        corners.push(first);
        loops.push(
            corners
                .into_iter()
                .map(|[u, v]| [u as f64 - 0.5, v as f64 - 0.5])
                .collect(),
        );
    }
    loops
}

/// Left turns first, then straight, then right: keeps diagonal neighbours apart.
fn turn_priority(dir: [i64; 2], edge: ([i64; 2], [i64; 2])) -> i8 {
    let (from, to) = edge;
    let next = [to[0] - from[0], to[1] - from[1]];
    let cross = dir[0] * next[1] - dir[1] * next[0];
    match cross.signum() {
        1 => 2,
        0 => 1,
        _ => 0,
    }
}

/// Row runs `[v, u_start, length]` of set pixels.
pub fn run_lengths(width: usize, height: usize, pixels: &[bool]) -> Vec<[usize; 3]> {
    assert_eq!(pixels.len(), width * height);
    let mut runs = Vec::new();
    for v in 0..height {
        let row = &pixels[v * width..(v + 1) * width];
        let mut u = 0;
        while u < width {
            if row[u] {
                let start = u;
                while u < width && row[u] {
                    u += 1;
                }
                runs.push([v, start, u - start]);
            } else {
                u += 1;
            }
        }
    }
    runs
}

/// Mean voxel index of a mask and its per-axis rounding, or `None` if empty.
pub fn center_of_gravity(mask: &StructureMask) -> Option<([f64; 3], [usize; 3])> {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for i in mask.occupancy().iter_ones() {
        let idx = mask.grid.voxel_index(i);
        for k in 0..3 {
            sum[k] += idx[k] as u64;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let mean: [f64; 3] = std::array::from_fn(|k| sum[k] as f64 / n as f64);
    Some((mean, mean.map(|m| m.round() as usize)))
}

/// Inclusive per-axis index bounds `[min, max]` of a mask.
pub fn index_bounds(mask: &StructureMask) -> Option<[[usize; 2]; 3]> {
    let mut bounds: Option<[[usize; 2]; 3]> = None;
    for i in mask.occupancy().iter_ones() {
        let idx = mask.grid.voxel_index(i);
        let b = bounds.get_or_insert([[idx[0]; 2], [idx[1]; 2], [idx[2]; 2]]);
        for k in 0..3 {
            b[k][0] = b[k][0].min(idx[k]);
            b[k][1] = b[k][1].max(idx[k]);
        }
    }
    bounds
}
