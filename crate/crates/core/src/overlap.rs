//! Overlap relations between structures and dose regions.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DoseGrid, Rgb, Role, StructureMask, VoxelSet};

/// Fill color used for derived dose-region structures.
pub const DOSE_REGION_COLOR: Rgb = Rgb([255, 215, 0]);

/// Voxel-wise intersection. The result is a helper structure named
/// `OV(a, b)` colored with the mix of both inputs.
pub fn intersect(a: &StructureMask, b: &StructureMask) -> Result<StructureMask> {
    a.check_grid(&b.grid)?;
    StructureMask::new(
        overlap_name(&a.name, &b.name),
        Role::Helper,
        a.color.mix(b.color),
        a.grid,
        a.occupancy().intersection(b.occupancy()),
    )
}

pub fn overlap_name(a: &str, b: &str) -> String {
    format!("OV({a}, {b})")
}

pub fn overlaps(a: &StructureMask, b: &StructureMask) -> Result<bool> {
    a.check_grid(&b.grid)?;
    Ok(a.occupancy().intersects(b.occupancy()))
}

/// Name given to the dose region at `threshold_gy`, e.g. `R_52.5Gy`.
pub fn dose_region_name(threshold_gy: f64) -> String {
    format!("R_{threshold_gy}Gy")
}

/// Voxels receiving at least `threshold_gy` (inclusive).
pub fn dose_region(dose: &DoseGrid, threshold_gy: f64) -> Result<StructureMask> {
    if !threshold_gy.is_finite() || threshold_gy < 0.0 {
        return Err(Error::InvalidThreshold(threshold_gy));
    }
    let occupancy = VoxelSet::from_fn(dose.grid.len(), |i| dose.at(i) >= threshold_gy);
    StructureMask::new(
        dose_region_name(threshold_gy),
        Role::DoseRegion,
        DOSE_REGION_COLOR,
        dose.grid,
        occupancy,
    )
}

/// Structures jointly containing one anchor voxel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PointOverlapSet {
    pub anchor: [usize; 3],
    pub members: Vec<String>,
}

/// Every structure containing the voxel of `point`, provided at least two
/// do; otherwise the member list is empty.
pub fn point_overlap_set(structures: &[StructureMask], point: [f64; 3]) -> Result<PointOverlapSet> {
    let grid = match structures.first() {
        Some(s) => s.grid,
        None => {
            return Err(Error::InvalidGrid(
                "point query needs at least one structure".into(),
            ))
        }
    };
    for s in structures {
        s.check_grid(&grid)?;
    }
    let anchor = grid.world_to_index(point).ok_or(Error::OutOfVolume(point))?;
    let mut members: Vec<String> = structures
        .iter()
        .filter(|s| s.contains(anchor))
        .map(|s| s.name.clone())
        .collect();
    if members.len() < 2 {
        members.clear();
    }
    Ok(PointOverlapSet { anchor, members })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationEdge {
    /// Node indices, `a < b`.
    pub a: usize,
    pub b: usize,
    pub voxel_count: usize,
}

/// Undirected overlap graph over a plan's structures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<RelationEdge>,
}

impl RelationGraph {
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.a == node || e.b == node).count()
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&RelationEdge> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.a == lo && e.b == hi)
    }

    pub fn contains_edge(&self, a: &str, b: &str) -> bool {
        match (self.node_index(a), self.node_index(b)) {
            (Some(i), Some(j)) if i != j => self.edge(i, j).is_some(),
            _ => false,
        }
    }
}

/// Builds the overlap graph over all unordered pairs. Pairs are scanned in
/// parallel; edge order is always `(a, b)` lexicographic by node index.
pub fn build_relation_graph(structures: &[StructureMask]) -> Result<RelationGraph> {
    let mut seen = HashSet::new();
    for s in structures {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::DuplicateName(s.name.clone()));
        }
    }
    if let Some(first) = structures.first() {
        for s in structures {
            s.check_grid(&first.grid)?;
        }
    }

    let n = structures.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let edges = pairs
        .par_iter()
        .filter_map(|&(a, b)| {
            let (sa, sb) = (structures[a].occupancy(), structures[b].occupancy());
            if !sa.intersects(sb) {
                return None;
            }
            Some(RelationEdge {
                a,
                b,
                voxel_count: sa.intersection_count(sb),
            })
        })
        .collect();

    Ok(RelationGraph {
        nodes: structures.iter().map(|s| s.name.clone()).collect(),
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VoxelGrid3D;

    fn grid() -> VoxelGrid3D {
        VoxelGrid3D::unit([4, 4, 4]).unwrap()
    }

    fn slab(name: &str, xs: &[usize]) -> StructureMask {
        let xs = xs.to_vec();
        StructureMask::from_fn(name, Role::Oar, Rgb([200, 40, 0]), grid(), move |[x, _, _]| {
            xs.contains(&x)
        })
    }

    fn ramp() -> DoseGrid {
        DoseGrid::from_fn(grid(), |[x, _, _]| x as f64).unwrap()
    }

    #[test]
    fn intersect_examples() {
        let s = slab("S", &[1, 3]);
        let ss = intersect(&s, &s).unwrap();
        assert_eq!(ss.occupancy(), s.occupancy());

        let a = slab("A", &[0, 1]);
        let b = slab("B", &[1, 2]);
        let c = slab("C", &[2, 3]);
        assert_eq!(intersect(&a, &c).unwrap().voxel_count(), 0);

        let ab = intersect(&a, &b).unwrap();
        assert_eq!(ab.name, "OV(A, B)");
        assert_eq!(ab.role, Role::Helper);
        assert_eq!(ab.voxel_count(), 16);
        for i in 0..64 {
            let [x, _, _] = grid().voxel_index(i);
            assert_eq!(ab.occupancy().contains(i), x == 1);
        }
    }

    #[test]
    fn intersect_mixes_colors() {
        let mut a = slab("A", &[0, 1]);
        let mut b = slab("B", &[1, 2]);
        a.color = Rgb([255, 0, 0]);
        b.color = Rgb([0, 0, 255]);
        assert_eq!(intersect(&a, &b).unwrap().color, Rgb([128, 0, 128]));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = slab("A", &[0, 1]);
        let other = VoxelGrid3D::new([4, 4, 4], [1.0, 1.0, 2.0], [0.0; 3]).unwrap();
        let b = StructureMask::from_fn("B", Role::Oar, Rgb([0; 3]), other, |_| true);
        assert!(matches!(intersect(&a, &b), Err(Error::GridMismatch)));
        assert!(matches!(overlaps(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn non_transitivity_witness() {
        let a = slab("A", &[0, 1]);
        let b = slab("B", &[1, 2]);
        let c = slab("C", &[2, 3]);
        assert!(overlaps(&a, &b).unwrap());
        assert!(overlaps(&b, &c).unwrap());
        assert!(!overlaps(&a, &c).unwrap());
        let empty = slab("E", &[]);
        assert!(!overlaps(&a, &empty).unwrap());
    }

    #[test]
    fn dose_region_examples() {
        let dose = ramp();
        assert_eq!(dose_region(&dose, 0.0).unwrap().voxel_count(), 64);
        assert_eq!(dose_region(&dose, 3.5).unwrap().voxel_count(), 0);
        let r2 = dose_region(&dose, 2.0).unwrap();
        assert_eq!(r2.voxel_count(), 32);
        assert_eq!(r2.name, "R_2Gy");
        assert_eq!(r2.role, Role::DoseRegion);
        assert_eq!(r2.occupancy(), slab("x", &[2, 3]).occupancy());
        assert!(matches!(dose_region(&dose, -1.0), Err(Error::InvalidThreshold(_))));
    }

    #[test]
    fn dose_region_threshold_is_inclusive() {
        let dose = ramp();
        // voxels at exactly 1 Gy belong to R_1
        assert_eq!(dose_region(&dose, 1.0).unwrap().voxel_count(), 48);
        assert_eq!(dose_region_name(52.5), "R_52.5Gy");
    }

    #[test]
    fn point_overlap_examples() {
        let a = slab("A", &[0, 1]);
        let b = slab("B", &[1, 2]);
        let c = slab("C", &[2, 3]);
        let all = [a.clone(), b.clone(), c.clone()];

        let set = point_overlap_set(&all, [1.0, 2.0, 2.0]).unwrap();
        assert_eq!(set.anchor, [1, 2, 2]);
        assert_eq!(set.members, vec!["A", "B"]);

        // inside only A
        let only = point_overlap_set(&[a.clone(), c.clone()], [0.0, 0.0, 0.0]).unwrap();
        assert!(only.members.is_empty());

        let none = point_overlap_set(&[a.clone(), b.clone()], [3.0, 0.0, 0.0]).unwrap();
        assert!(none.members.is_empty());

        assert!(matches!(
            point_overlap_set(&all, [9.0, 0.0, 0.0]),
            Err(Error::OutOfVolume(_))
        ));
    }

    #[test]
    fn relation_graph_examples() {
        let disjoint = [slab("A", &[0]), slab("B", &[1]), slab("C", &[3])];
        assert!(build_relation_graph(&disjoint).unwrap().edges.is_empty());

        let abc = [slab("A", &[0, 1]), slab("B", &[1, 2]), slab("C", &[2, 3])];
        let g = build_relation_graph(&abc).unwrap();
        assert_eq!(
            g.edges,
            vec![
                RelationEdge { a: 0, b: 1, voxel_count: 16 },
                RelationEdge { a: 1, b: 2, voxel_count: 16 },
            ]
        );
        assert_eq!(g.degree(1), 2);
        assert!(g.contains_edge("C", "B"));
        assert!(!g.contains_edge("A", "C"));

        let a = slab("A", &[0, 1]);
        let mut a2 = a.clone();
        a2.name = "A'".into();
        let g = build_relation_graph(&[a.clone(), a2]).unwrap();
        assert_eq!(g.edges[0].voxel_count, a.voxel_count());

        let dup = [slab("A", &[0]), slab("A", &[1])];
        assert!(matches!(build_relation_graph(&dup), Err(Error::DuplicateName(_))));
    }
}
