//! Planning-grid geometry, binary structure masks and the dose field.
//!
//! Every volume in a plan lives on one axis-aligned grid. Voxels are stored
//! in x-fastest row-major order: `index = x + nx * (y + ny * z)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Geometry of the planning grid. `origin` is the world position (mm) of
/// the center of voxel (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid3D {
    pub dims: [usize; 3],
    #[serde(rename = "spacing_mm")]
    pub spacing: [f64; 3],
    #[serde(rename = "origin_mm")]
    pub origin: [f64; 3],
}

impl VoxelGrid3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let grid = VoxelGrid3D {
            dims,
            spacing,
            origin,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Unit-spacing grid anchored at the world origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidGrid(format!(
                "dims must all be >= 1, got {:?}",
                self.dims
            )));
        }
        if self.dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none() {
            return Err(Error::InvalidGrid("voxel count overflows".into()));
        }
        if self.spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be finite and > 0, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one voxel in ml (1 ml = 1000 mm³).
    pub fn voxel_volume_ml(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2] / 1000.0
    }

    #[inline]
    pub fn linear_index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn voxel_index(&self, linear: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    /// World position (mm) of a voxel center.
    pub fn index_to_world(&self, index: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|k| self.origin[k] + index[k] as f64 * self.spacing[k])
    }

    /// Nearest-center lookup; `None` when the point falls outside the grid.
    pub fn world_to_index(&self, point: [f64; 3]) -> Option<[usize; 3]> {
        let mut index = [0usize; 3];
        for k in 0..3 {
            let i = ((point[k] - self.origin[k]) / self.spacing[k]).round();
            if !(i >= 0.0 && i < self.dims[k] as f64) {
                return None;
            }
            index[k] = i as usize;
        }
        Some(index)
    }

    /// World-space bounds (mm) of the voxel boxes, per axis `(low, high)`.
    pub fn extent(&self) -> [(f64, f64); 3] {
        std::array::from_fn(|k| {
            let half = self.spacing[k] / 2.0;
            (
                self.origin[k] - half,
                self.origin[k] + (self.dims[k] as f64 - 1.0) * self.spacing[k] + half,
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Oar,
    Helper,
    DoseRegion,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::Oar => "oar",
            Role::Helper => "helper",
            Role::DoseRegion => "dose_region",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target" => Ok(Role::Target),
            "oar" => Ok(Role::Oar),
            "helper" => Ok(Role::Helper),
            "dose_region" => Ok(Role::DoseRegion),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// Display color, serialized as `#rrggbb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    /// Per-channel mean, rounding halves up.
    pub fn mix(self, other: Rgb) -> Rgb {
        Rgb(std::array::from_fn(|k| {
            (u16::from(self.0[k]) + u16::from(other.0[k])).div_ceil(2) as u8
        }))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b] = self.0;
        write!(f, "#{r:02x}{g:02x}{b:02x}")
    }
}

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix('#')
            .filter(|h| h.len() == 6 && h.is_ascii())
            .ok_or_else(|| format!("color must be #rrggbb, got {s:?}"))?;
        let mut rgb = [0u8; 3];
        for (k, c) in rgb.iter_mut().enumerate() {
            *c = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                .map_err(|_| format!("color must be #rrggbb, got {s:?}"))?;
        }
        Ok(Rgb(rgb))
    }
}

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Packed voxel occupancy bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoxelSet {
    words: Vec<u64>,
    len: usize,
}

impl VoxelSet {
    pub fn empty(len: usize) -> Self {
        VoxelSet {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut set = VoxelSet {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        set.clear_tail();
        set
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut set = Self::empty(len);
        for i in 0..len {
            if f(i) {
                set.insert(i);
            }
        }
        set
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "voxel {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersection(&self, other: &VoxelSet) -> VoxelSet {
        debug_assert_eq!(self.len, other.len);
        VoxelSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    pub fn union(&self, other: &VoxelSet) -> VoxelSet {
        debug_assert_eq!(self.len, other.len);
        VoxelSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
            len: self.len,
        }
    }

    /// Early-exit test for a non-empty intersection.
    pub fn intersects(&self, other: &VoxelSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn intersection_count(&self, other: &VoxelSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset(&self, other: &VoxelSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Indices of set voxels in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }
}

/// Named binary occupancy volume on the planning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureMask {
    pub name: String,
    pub role: Role,
    pub color: Rgb,
    pub grid: VoxelGrid3D,
    occupancy: VoxelSet,
}

impl StructureMask {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        color: Rgb,
        grid: VoxelGrid3D,
        occupancy: VoxelSet,
    ) -> Result<Self> {
        if occupancy.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                file: "occupancy".into(),
                expected: grid.len(),
                actual: occupancy.len(),
            });
        }
        Ok(StructureMask {
            name: name.into(),
            role,
            color,
            grid,
            occupancy,
        })
    }

    /// Builds a mask from a predicate over voxel indices.
    pub fn from_fn(
        name: impl Into<String>,
        role: Role,
        color: Rgb,
        grid: VoxelGrid3D,
        mut inside: impl FnMut([usize; 3]) -> bool,
    ) -> Self {
        let occupancy = VoxelSet::from_fn(grid.len(), |i| inside(grid.voxel_index(i)));
        StructureMask {
            name: name.into(),
            role,
            color,
            grid,
            occupancy,
        }
    }

    pub fn occupancy(&self) -> &VoxelSet {
        &self.occupancy
    }

    pub fn contains(&self, index: [usize; 3]) -> bool {
        self.occupancy.contains(self.grid.linear_index(index))
    }

    pub fn voxel_count(&self) -> usize {
        self.occupancy.count()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.words.iter().all(|&w| w == 0)
    }

    pub fn volume_ml(&self) -> f64 {
        self.voxel_count() as f64 * self.grid.voxel_volume_ml()
    }

    pub(crate) fn check_grid(&self, other: &VoxelGrid3D) -> Result<()> {
        if self.grid == *other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub fn voxel_count(mask: &StructureMask) -> usize {
    mask.voxel_count()
}

pub fn volume_ml(mask: &StructureMask) -> f64 {
    mask.volume_ml()
}

/// Absorbed dose in Gy per voxel. Values are held as `f32`, which is the
/// bundle storage precision; arithmetic on them is carried out in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseGrid {
    pub grid: VoxelGrid3D,
    values: Vec<f32>,
}

impl DoseGrid {
    pub fn new(grid: VoxelGrid3D, values: Vec<f32>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                file: "dose".into(),
                expected: grid.len(),
                actual: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteDose {
                    file: "dose".into(),
                    index,
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeDose {
                    file: "dose".into(),
                    index,
                    value,
                });
            }
        }
        Ok(DoseGrid { grid, values })
    }

    pub fn from_fn(grid: VoxelGrid3D, mut f: impl FnMut([usize; 3]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| f(grid.voxel_index(i)) as f32)
            .collect();
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn at(&self, linear: usize) -> f64 {
        f64::from(self.values[linear])
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(f64::from(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid4() -> VoxelGrid3D {
        VoxelGrid3D::unit([4, 4, 4]).unwrap()
    }

    fn red() -> Rgb {
        Rgb([255, 0, 0])
    }

    #[test]
    fn world_to_index_examples() {
        let g = grid4();
        assert_eq!(g.world_to_index([0.0, 0.0, 0.0]), Some([0, 0, 0]));
        assert_eq!(g.world_to_index([3.4, 0.0, 0.0]), Some([3, 0, 0]));
        assert_eq!(g.world_to_index([-1.0, 0.0, 0.0]), None);
        assert_eq!(g.world_to_index([3.6, 0.0, 0.0]), None);
        assert_eq!(g.world_to_index([f64::NAN, 0.0, 0.0]), None);
    }

    #[test]
    fn world_index_round_trip_on_anisotropic_grid() {
        let g = VoxelGrid3D::new([5, 3, 7], [0.8, 2.5, 3.0], [-12.0, 4.0, 100.5]).unwrap();
        for i in 0..g.len() {
            let idx = g.voxel_index(i);
            assert_eq!(g.linear_index(idx), i);
            assert_eq!(g.world_to_index(g.index_to_world(idx)), Some(idx));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(VoxelGrid3D::unit([0, 4, 4]).is_err());
        assert!(VoxelGrid3D::new([4, 4, 4], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(VoxelGrid3D::new([4, 4, 4], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
        assert!(VoxelGrid3D::new([4, 4, 4], [1.0; 3], [f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn voxel_counts() {
        let g = grid4();
        let none = StructureMask::from_fn("none", Role::Oar, red(), g, |_| false);
        let all = StructureMask::from_fn("all", Role::Oar, red(), g, |_| true);
        let half = StructureMask::from_fn("half", Role::Oar, red(), g, |[x, _, _]| x < 2);
        assert_eq!(voxel_count(&none), 0);
        assert_eq!(voxel_count(&all), 64);
        // brute-force enumeration of the half space
        let mut expected = 0;
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    if x < 2 && y < 4 && z < 4 {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(voxel_count(&half), expected);
        assert_eq!(expected, 32);
    }

    #[test]
    fn volume_examples() {
        let empty = StructureMask::from_fn("e", Role::Oar, red(), grid4(), |_| false);
        assert_eq!(volume_ml(&empty), 0.0);

        let g = VoxelGrid3D::unit([10, 10, 10]).unwrap();
        let cube = StructureMask::from_fn("c", Role::Oar, red(), g, |_| true);
        assert_eq!(volume_ml(&cube), 1.0);

        let g = VoxelGrid3D::new([4, 4, 4], [2.0, 2.0, 2.5], [0.0; 3]).unwrap();
        let slab = StructureMask::from_fn("s", Role::Oar, red(), g, |[x, _, _]| x < 2);
        assert_eq!(voxel_count(&slab), 32);
        assert!((volume_ml(&slab) - 32.0 * 10.0 / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn mask_length_is_checked() {
        let err = StructureMask::new("m", Role::Oar, red(), grid4(), VoxelSet::empty(63));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dose_validation() {
        let g = grid4();
        assert!(DoseGrid::new(g, vec![1.0; 63]).is_err());
        let mut v = vec![1.0f32; 64];
        v[5] = f32::NAN;
        assert!(matches!(DoseGrid::new(g, v.clone()), Err(Error::NonFiniteDose { index: 5, .. })));
        v[5] = -0.5;
        assert!(matches!(DoseGrid::new(g, v), Err(Error::NegativeDose { index: 5, .. })));
    }

    #[test]
    fn color_hex_and_mix() {
        let c: Rgb = "#ff8000".parse().unwrap();
        assert_eq!(c, Rgb([255, 128, 0]));
        assert_eq!(c.to_string(), "#ff8000");
        assert_eq!(Rgb([255, 0, 10]).mix(Rgb([0, 0, 3])), Rgb([128, 0, 7]));
        assert!("ff8000".parse::<Rgb>().is_err());
        assert!("#ff80zz".parse::<Rgb>().is_err());
    }

    #[test]
    fn voxel_set_tail_bits_stay_clear() {
        let s = VoxelSet::full(70);
        assert_eq!(s.count(), 70);
        assert_eq!(s.iter_ones().last(), Some(69));
        assert!(!s.contains(70));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn set_strategy(len: usize) -> impl Strategy<Value = VoxelSet> {
        proptest::collection::vec(any::<bool>(), len)
            .prop_map(move |bits| VoxelSet::from_fn(len, |i| bits[i]))
    }

    proptest! {
        #[test]
        fn volume_additive_over_disjoint_sets(a in set_strategy(200), b in set_strategy(200)) {
            let g = VoxelGrid3D::new([10, 5, 4], [1.5, 2.0, 0.5], [0.0; 3]).unwrap();
            // carve b out of a so the pair is disjoint
            let b_only = VoxelSet::from_fn(200, |i| b.contains(i) && !a.contains(i));
            let ma = StructureMask::new("a", Role::Oar, Rgb([0; 3]), g, a.clone()).unwrap();
            let mb = StructureMask::new("b", Role::Oar, Rgb([0; 3]), g, b_only.clone()).unwrap();
            let mu = StructureMask::new("u", Role::Oar, Rgb([0; 3]), g, a.union(&b_only)).unwrap();
            prop_assert!((mu.volume_ml() - (ma.volume_ml() + mb.volume_ml())).abs() < 1e-12);
            prop_assert!(ma.volume_ml() <= mu.volume_ml());
            prop_assert!(a.is_subset(&a.union(&b_only)));
        }

        #[test]
        fn iter_ones_matches_contains(a in set_strategy(333)) {
            let ones: Vec<usize> = a.iter_ones().collect();
            let brute: Vec<usize> = (0..333).filter(|&i| a.contains(i)).collect();
            prop_assert_eq!(ones.len(), a.count());
            prop_assert_eq!(ones, brute);
        }
    }
}
