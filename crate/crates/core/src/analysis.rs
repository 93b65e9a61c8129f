//! Plan-wide analysis cache and the queries served to clients.
//!
//! A [`PlanAnalysis`] is built once per loaded plan (and again after each
//! added dose region). It holds per-structure metrics, the relation graph and
//! every directed overlap record, so queries only select and filter.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::PlanBundle;
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::grid::{Rgb, Role, StructureMask, VoxelGrid3D};
use crate::metrics::{
    compute_dvh, v_x, DoseStats, DvhCurve, HiConvention, OverlapRecord, StructureMetrics,
    DEFAULT_BIN_WIDTH_GY,
};
use crate::overlap::{build_relation_graph, dose_region, intersect, point_overlap_set, RelationGraph};
use crate::slice::{self, SliceAxis, SlicePlane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bin_width_gy: f64,
    pub hi_convention: HiConvention,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bin_width_gy: DEFAULT_BIN_WIDTH_GY,
            hi_convention: HiConvention::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanAnalysis {
    config: AnalysisConfig,
    plan: Arc<PlanBundle>,
    structures: Vec<StructureMask>,
    /// `None` for dose regions that contain no voxel.
    metrics: Vec<Option<StructureMetrics>>,
    graph: RelationGraph,
    /// Two directed records per edge, `a → b` then `b → a`, in edge order.
    records: Vec<OverlapRecord>,
    dose_regions: Vec<DoseRegionInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoseRegionInfo {
    pub name: String,
    pub threshold_gy: f64,
    pub voxel_count: usize,
}

impl PlanAnalysis {
    pub fn new(plan: PlanBundle, config: AnalysisConfig) -> Result<Self> {
        let plan = Arc::new(plan);
        let structures = plan.structures().to_vec();
        Self::build(plan, structures, Vec::new(), config)
    }

    fn build(
        plan: Arc<PlanBundle>,
        structures: Vec<StructureMask>,
        dose_regions: Vec<DoseRegionInfo>,
        config: AnalysisConfig,
    ) -> Result<Self> {
        if !(config.bin_width_gy.is_finite() && config.bin_width_gy > 0.0) {
            return Err(Error::InvalidBinWidth(config.bin_width_gy));
        }
        let dose = plan.dose();
        let metrics = structures
            .par_iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    StructureMetrics::compute(s, dose, config.bin_width_gy, config.hi_convention).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let graph = build_relation_graph(&structures)?;

        let per_edge = graph
            .edges
            .par_iter()
            .map(|e| -> Result<[OverlapRecord; 2]> {
                let (a, b) = (&structures[e.a], &structures[e.b]);
                let ov = intersect(a, b)?;
                let ov_metrics =
                    StructureMetrics::compute(&ov, dose, config.bin_width_gy, config.hi_convention)?;
                let (ma, mb) = (
                    metrics[e.a].as_ref().expect("overlapping structure is non-empty"),
                    metrics[e.b].as_ref().expect("overlapping structure is non-empty"),
                );
                let forward = OverlapRecord::assemble(&a.name, ma, &b.name, mb, &ov_metrics)?;
                let backward = forward.reversed(mb.hi);
                Ok([forward, backward])
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(PlanAnalysis {
            config,
            plan,
            structures,
            metrics,
            graph,
            records: per_edge.into_iter().flatten().collect(),
            dose_regions,
        })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn plan(&self) -> &PlanBundle {
        &self.plan
    }

    pub fn grid(&self) -> &VoxelGrid3D {
        self.plan.grid()
    }

    /// Plan structures followed by any added dose regions.
    pub fn structures(&self) -> &[StructureMask] {
        &self.structures
    }

    pub fn graph(&self) -> &RelationGraph {
        &self.graph
    }

    pub fn dose_regions(&self) -> &[DoseRegionInfo] {
        &self.dose_regions
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.structures
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownStructure(name.to_owned()))
    }

    pub fn structure(&self, name: &str) -> Result<&StructureMask> {
        Ok(&self.structures[self.index_of(name)?])
    }

    pub fn structure_metrics(&self, name: &str) -> Result<Option<&StructureMetrics>> {
        Ok(self.metrics[self.index_of(name)?].as_ref())
    }

    /// All cached directed records, two per overlapping pair.
    pub fn all_records(&self) -> &[OverlapRecord] {
        &self.records
    }

    pub fn record(&self, reference: &str, other: &str) -> Result<&OverlapRecord> {
        self.index_of(reference)?;
        self.index_of(other)?;
        self.records
            .iter()
            .find(|r| r.ref_name == reference && r.other_name == other)
            .ok_or_else(|| Error::Disjoint(reference.to_owned(), other.to_owned()))
    }

    /// Directed records passing `filter`; restricted to records whose first
    /// element is `reference` when one is given.
    pub fn records(&self, reference: Option<&str>, filter: &FilterSpec) -> Result<Vec<&OverlapRecord>> {
        filter.validate()?;
        if let Some(r) = reference {
            self.index_of(r)?;
        }
        Ok(self
            .records
            .iter()
            .filter(|r| reference.is_none_or(|name| r.ref_name == name))
            .filter(|r| filter.matches(r))
            .collect())
    }

    pub fn summary(&self) -> PlanSummary {
        let structures = self
            .structures
            .iter()
            .zip(&self.metrics)
            .map(|(s, m)| StructureSummary {
                name: s.name.clone(),
                role: s.role,
                color: s.color,
                voxel_count: s.voxel_count(),
                volume_ml: s.volume_ml(),
                stats: m.as_ref().map(|m| m.stats),
                hi: m.as_ref().and_then(|m| m.hi),
            })
            .collect();
        PlanSummary {
            grid: *self.plan.grid(),
            voxel_volume_ml: self.plan.grid().voxel_volume_ml(),
            prescription_dose_gy: self.plan.prescription_dose(),
            max_dose_gy: self.plan.dose().max(),
            bin_width_gy: self.config.bin_width_gy,
            hi_convention: HiConventionInfo {
                label: self.config.hi_convention.label(),
                formula: self.config.hi_convention.formula(),
            },
            has_background: self.plan.background().is_some(),
            structures,
            dose_regions: self.dose_regions.clone(),
        }
    }

    pub fn graph_view(&self) -> GraphView {
        let nodes = self
            .structures
            .iter()
            .enumerate()
            .map(|(i, s)| GraphNode {
                name: s.name.clone(),
                role: s.role,
                color: s.color,
                degree: self.graph.degree(i),
                volume_ml: s.volume_ml(),
                d_mean: self.metrics[i].as_ref().map(|m| m.stats.d_mean),
                d_max: self.metrics[i].as_ref().map(|m| m.stats.d_max),
            })
            .collect();
        // records are stored as (a → b, b → a) pairs in edge order
        let edges = self
            .records
            .chunks_exact(2)
            .map(|pair| {
                let r = &pair[0];
                GraphEdge {
                    a: r.ref_name.clone(),
                    b: r.other_name.clone(),
                    ov_voxel_count: r.ov_voxel_count,
                    ov_volume_ml: r.ov_volume_ml,
                    pct_of_a: r.ov_pct_of_ref,
                    pct_of_b: r.ov_pct_of_other,
                    d_mean: DoseTriplet {
                        a: r.ref_stats.d_mean,
                        ov: r.ov_stats.d_mean,
                        b: r.other_stats.d_mean,
                    },
                    d_max: DoseTriplet {
                        a: r.ref_stats.d_max,
                        ov: r.ov_stats.d_max,
                        b: r.other_stats.d_max,
                    },
                }
            })
            .collect();
        GraphView { nodes, edges }
    }

    /// DVHs for `names`, followed by the overlap curve of `pair` when one is
    /// given. Without `names` the curves are the pair's two originals, or
    /// every structure when there is no pair either.
    pub fn dvh(&self, names: Option<&[String]>, pair: Option<(&str, &str)>) -> Result<Vec<DvhCurve>> {
        let selected: Vec<usize> = match (names, pair) {
            (Some(names), _) => names.iter().map(|n| self.index_of(n)).collect::<Result<_>>()?,
            (None, Some((a, b))) => vec![self.index_of(a)?, self.index_of(b)?],
            (None, None) => (0..self.structures.len()).collect(),
        };
        let mut curves = Vec::with_capacity(selected.len() + 1);
        for i in selected {
            match &self.metrics[i] {
                Some(m) => curves.push(m.dvh.clone()),
                None => return Err(Error::EmptyMask(self.structures[i].name.clone())),
            }
        }
        if let Some((a, b)) = pair {
            let ov = self.overlap_mask(a, b)?;
            curves.push(compute_dvh(&ov, self.plan.dose(), self.config.bin_width_gy)?);
        }
        Ok(curves)
    }

    /// Intersection of an overlapping pair.
    pub fn overlap_mask(&self, a: &str, b: &str) -> Result<StructureMask> {
        let ov = intersect(self.structure(a)?, self.structure(b)?)?;
        if ov.is_empty() {
            return Err(Error::Disjoint(a.to_owned(), b.to_owned()));
        }
        Ok(ov)
    }

    pub fn slice(&self, req: &SliceRequest) -> Result<SlicePayload> {
        let grid = self.plan.grid();
        let plane = SlicePlane::new(grid, req.axis, req.index)?;
        let overlays: Vec<usize> = match &req.overlays {
            Some(names) => names.iter().map(|n| self.index_of(n)).collect::<Result<_>>()?,
            None => (0..self.structures.len()).collect(),
        };
        let outlines = overlays
            .into_iter()
            .map(|i| {
                let s = &self.structures[i];
                StructureOutline {
                    name: s.name.clone(),
                    color: s.color,
                    polylines: slice::trace_outlines(plane.width, plane.height, &plane.mask(s)),
                }
            })
            .collect();
        let (overlap, focus) = match &req.pair {
            Some((a, b)) => {
                let ov = self.overlap_mask(a, b)?;
                let (mean, center) = slice::center_of_gravity(&ov).expect("overlap is non-empty");
                let focus = OverlapFocus {
                    center_of_gravity: mean,
                    center_index: center,
                    center_mm: grid.index_to_world(center),
                    bounds: slice::index_bounds(&ov).expect("overlap is non-empty"),
                };
                let runs = slice::run_lengths(plane.width, plane.height, &plane.mask(&ov));
                let fill = (!runs.is_empty()).then(|| OverlapFill {
                    name: ov.name.clone(),
                    color: ov.color,
                    opacity: 0.5,
                    voxel_count: runs.iter().map(|r| r[2]).sum(),
                    runs,
                });
                (fill, Some(focus))
            }
            None => (None, None),
        };
        Ok(SlicePayload {
            axis: req.axis,
            index: req.index,
            width: plane.width,
            height: plane.height,
            u_axis: AXIS_NAMES[req.axis.plane_axes()[0]],
            v_axis: AXIS_NAMES[req.axis.plane_axes()[1]],
            outlines,
            dose: req.dose.then(|| plane.sample(grid, self.plan.dose().values())),
            background: match (req.background, self.plan.background()) {
                (true, Some(bg)) => Some(plane.sample(grid, bg)),
                _ => None,
            },
            overlap,
            focus,
        })
    }

    /// Point query: the structures sharing the voxel at `point_mm` and every
    /// pairwise record among them.
    pub fn point_query(&self, point_mm: [f64; 3]) -> Result<PointQueryResponse> {
        let set = point_overlap_set(&self.structures, point_mm)?;
        let mut rows = Vec::new();
        for (i, a) in set.members.iter().enumerate() {
            for b in &set.members[i + 1..] {
                rows.push(self.record(a, b)?.clone());
            }
        }
        Ok(PointQueryResponse {
            point_mm,
            anchor: set.anchor,
            members: set.members,
            rows,
        })
    }

    pub fn resolve_threshold(&self, req: &DoseRegionRequest) -> Result<f64> {
        let d = match (req.d_pct, req.d_abs) {
            (Some(pct), None) => self.plan.prescription_dose() * pct / 100.0,
            (None, Some(abs)) => abs,
            _ => {
                return Err(Error::InvalidRequest(
                    "give exactly one of d_pct and d_abs".into(),
                ))
            }
        };
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidThreshold(d));
        }
        Ok(d)
    }

    /// New analysis with the dose region `R_d` added as a structure.
    pub fn with_dose_region(&self, threshold_gy: f64) -> Result<(PlanAnalysis, DoseRegionCreated)> {
        let region = dose_region(self.plan.dose(), threshold_gy)?;
        if self.structures.iter().any(|s| s.name == region.name) {
            return Err(Error::RegionExists(region.name));
        }
        let info = DoseRegionInfo {
            name: region.name.clone(),
            threshold_gy,
            voxel_count: region.voxel_count(),
        };
        let mut structures = self.structures.clone();
        structures.push(region);
        let mut regions = self.dose_regions.clone();
        regions.push(info.clone());
        let next = Self::build(self.plan.clone(), structures, regions, self.config)?;
        let index = next.structures.len() - 1;
        let warning = (info.voxel_count == 0).then(|| {
            format!(
                "threshold {threshold_gy} Gy exceeds the maximum dose {} Gy; region is empty",
                self.plan.dose().max()
            )
        });
        let created = DoseRegionCreated {
            name: info.name,
            threshold_gy,
            voxel_count: info.voxel_count,
            volume_ml: info.voxel_count as f64 * self.grid().voxel_volume_ml(),
            edges: next.graph.degree(index),
            warning,
        };
        Ok((next, created))
    }

    /// Hotspot rows: every structure of the plan (optionally restricted to
    /// `roles`) overlapping `R_d`, with its `V_d`.
    pub fn hotspots(&self, threshold_gy: f64, roles: Option<&[Role]>) -> Result<HotspotReport> {
        let (with_region, created) = self.with_dose_region(threshold_gy)?;
        let mut rows = Vec::new();
        for s in self.plan.structures() {
            if roles.is_some_and(|r| !r.contains(&s.role)) {
                continue;
            }
            let Ok(record) = with_region.record(&s.name, &created.name) else {
                continue;
            };
            rows.push(HotspotRow {
                role: s.role,
                v_d_pct: v_x(s, self.plan.dose(), threshold_gy)?,
                record: record.clone(),
            });
        }
        Ok(HotspotReport {
            threshold_gy,
            region: created,
            rows,
        })
    }
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Serialize)]
pub struct HiConventionInfo {
    pub label: &'static str,
    pub formula: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureSummary {
    pub name: String,
    pub role: Role,
    pub color: Rgb,
    pub voxel_count: usize,
    pub volume_ml: f64,
    pub stats: Option<DoseStats>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanSummary {
    pub grid: VoxelGrid3D,
    pub voxel_volume_ml: f64,
    pub prescription_dose_gy: f64,
    pub max_dose_gy: f64,
    pub bin_width_gy: f64,
    pub hi_convention: HiConventionInfo,
    pub has_background: bool,
    pub structures: Vec<StructureSummary>,
    pub dose_regions: Vec<DoseRegionInfo>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphNode {
    pub name: String,
    pub role: Role,
    pub color: Rgb,
    /// Number of structures this one overlaps.
    pub degree: usize,
    pub volume_ml: f64,
    pub d_mean: Option<f64>,
    pub d_max: Option<f64>,
}

/// Dose at the `a` end, the overlap middle and the `b` end of a chord.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DoseTriplet {
    pub a: f64,
    pub ov: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphEdge {
    pub a: String,
    pub b: String,
    pub ov_voxel_count: usize,
    pub ov_volume_ml: f64,
    pub pct_of_a: f64,
    pub pct_of_b: f64,
    pub d_mean: DoseTriplet,
    pub d_max: DoseTriplet,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphView {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SliceRequest {
    pub axis: SliceAxis,
    pub index: usize,
    /// Structures to outline; all when `None`.
    pub overlays: Option<Vec<String>>,
    pub pair: Option<(String, String)>,
    pub dose: bool,
    pub background: bool,
}

impl SliceRequest {
    pub fn new(axis: SliceAxis, index: usize) -> Self {
        SliceRequest {
            axis,
            index,
            overlays: None,
            pair: None,
            dose: false,
            background: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureOutline {
    pub name: String,
    pub color: Rgb,
    pub polylines: Vec<Vec<[f64; 2]>>,
}

/// The selected overlap as it appears on this slice.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapFill {
    pub name: String,
    pub color: Rgb,
    pub opacity: f64,
    /// Overlap voxels on this slice.
    pub voxel_count: usize,
    /// `[v, u_start, length]` runs, `v` ascending.
    pub runs: Vec<[usize; 3]>,
}

/// Where to move the crosshair to see the whole selected overlap.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapFocus {
    /// Mean voxel index of the overlap volume.
    pub center_of_gravity: [f64; 3],
    pub center_index: [usize; 3],
    pub center_mm: [f64; 3],
    /// Inclusive index bounds per axis, for zooming.
    pub bounds: [[usize; 2]; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct SlicePayload {
    pub axis: SliceAxis,
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub u_axis: &'static str,
    pub v_axis: &'static str,
    pub outlines: Vec<StructureOutline>,
    /// Dose in Gy, `u` fastest.
    pub dose: Option<Vec<f32>>,
    pub background: Option<Vec<f32>>,
    /// Absent when the selected overlap does not reach this slice.
    pub overlap: Option<OverlapFill>,
    pub focus: Option<OverlapFocus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointQueryResponse {
    pub point_mm: [f64; 3],
    pub anchor: [usize; 3],
    pub members: Vec<String>,
    pub rows: Vec<OverlapRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoseRegionRequest {
    pub d_pct: Option<f64>,
    pub d_abs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoseRegionCreated {
    pub name: String,
    pub threshold_gy: f64,
    pub voxel_count: usize,
    pub volume_ml: f64,
    pub edges: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotspotRow {
    pub role: Role,
    pub v_d_pct: f64,
    pub record: OverlapRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HotspotReport {
    pub threshold_gy: f64,
    pub region: DoseRegionCreated,
    pub rows: Vec<HotspotRow>,
}
