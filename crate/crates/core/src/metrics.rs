//! Dose-volume histograms and plan-evaluation metrics.
//!
//! DVH bins are anchored at 0 Gy: bin `k` holds doses in `[k·w, (k+1)·w)`.
//! `D_x` is read off the cumulative curve at bin edges, while `V_x` and the
//! min/mean/max statistics are computed exactly from voxel doses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DoseGrid, StructureMask};
use crate::overlap::intersect;

pub const DEFAULT_BIN_WIDTH_GY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvhCurve {
    pub structure_name: String,
    pub bin_width: f64,
    pub voxel_count: usize,
    /// Fraction of voxels per bin; sums to 1.
    pub differential: Vec<f64>,
    /// Fraction of voxels with dose >= the bin's lower edge.
    pub cumulative: Vec<f64>,
    #[serde(skip)]
    counts: Vec<u64>,
}

impl DvhCurve {
    /// Builds a curve from raw per-bin voxel counts.
    pub fn from_counts(name: impl Into<String>, bin_width: f64, counts: Vec<u64>) -> Result<Self> {
        let name = name.into();
        check_bin_width(bin_width)?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyMask(name));
        }
        let mut counts = counts;
        while counts.len() > 1 && counts.last() == Some(&0) {
            counts.pop();
        }
        let n = total as f64;
        let differential = counts.iter().map(|&c| c as f64 / n).collect();
        let mut cumulative = vec![0.0; counts.len()];
        let mut above = 0u64;
        for k in (0..counts.len()).rev() {
            above += counts[k];
            cumulative[k] = above as f64 / n;
        }
        Ok(DvhCurve {
            structure_name: name,
            bin_width,
            voxel_count: total as usize,
            differential,
            cumulative,
            counts,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Lower edge of bin `k` in Gy.
    pub fn edge(&self, k: usize) -> f64 {
        k as f64 * self.bin_width
    }

    /// Cumulative fraction at bin `k`; zero past the last populated bin.
    pub fn cumulative_at(&self, k: usize) -> f64 {
        self.cumulative.get(k).copied().unwrap_or(0.0)
    }
}

fn check_bin_width(bin_width: f64) -> Result<()> {
    if bin_width.is_finite() && bin_width > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBinWidth(bin_width))
    }
}

#[inline]
pub fn bin_index(dose_gy: f64, bin_width: f64) -> usize {
    (dose_gy / bin_width).floor() as usize
}

pub fn compute_dvh(mask: &StructureMask, dose: &DoseGrid, bin_width: f64) -> Result<DvhCurve> {
    check_bin_width(bin_width)?;
    mask.check_grid(&dose.grid)?;
    let mut counts: Vec<u64> = Vec::new();
    for i in mask.occupancy().iter_ones() {
        let k = bin_index(dose.at(i), bin_width);
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    DvhCurve::from_counts(mask.name.clone(), bin_width, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseStats {
    pub d_min: f64,
    pub d_mean: f64,
    pub d_max: f64,
}

/// Exact min/mean/max over the mask's voxel doses. The mean uses
/// compensated summation in ascending voxel order, so it is reproducible.
pub fn dose_stats(mask: &StructureMask, dose: &DoseGrid) -> Result<DoseStats> {
    mask.check_grid(&dose.grid)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = NeumaierSum::default();
    let mut n = 0usize;
    for i in mask.occupancy().iter_ones() {
        let d = dose.at(i);
        min = min.min(d);
        max = max.max(d);
        sum.add(d);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask(mask.name.clone()));
    }
    // mean of values in [min, max] can round just outside it
    let mean = (sum.total() / n as f64).clamp(min, max);
    Ok(DoseStats {
        d_min: min,
        d_mean: mean,
        d_max: max,
    })
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Minimum dose received by the hottest `percent` of the volume: the
/// highest bin edge whose cumulative fraction is still >= `percent / 100`.
pub fn d_x(dvh: &DvhCurve, percent: f64) -> Result<f64> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::InvalidPercent(percent));
    }
    let n = dvh.voxel_count as f64;
    let mut above = 0u64;
    for k in (0..dvh.counts.len()).rev() {
        above += dvh.counts[k];
        if above as f64 * 100.0 >= percent * n {
            return Ok(dvh.edge(k));
        }
    }
    Ok(0.0)
}

/// Percentage of the mask's volume receiving at least `threshold_gy`.
pub fn v_x(mask: &StructureMask, dose: &DoseGrid, threshold_gy: f64) -> Result<f64> {
    if !threshold_gy.is_finite() || threshold_gy < 0.0 {
        return Err(Error::InvalidThreshold(threshold_gy));
    }
    mask.check_grid(&dose.grid)?;
    let n = mask.voxel_count();
    if n == 0 {
        return Err(Error::EmptyMask(mask.name.clone()));
    }
    let hit = mask
        .occupancy()
        .iter_ones()
        .filter(|&i| dose.at(i) >= threshold_gy)
        .count();
    Ok(100.0 * hit as f64 / n as f64)
}

/// Homogeneity-index formula. Only the ICRU-83 form is implemented; the
/// label travels with service output so consumers know what they read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiConvention {
    /// (D2 − D98) / D50
    #[default]
    Icru83,
}

impl HiConvention {
    pub fn label(self) -> &'static str {
        match self {
            HiConvention::Icru83 => "icru83",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            HiConvention::Icru83 => "(D2 - D98) / D50",
        }
    }

    pub fn evaluate(self, dvh: &DvhCurve) -> Result<f64> {
        match self {
            HiConvention::Icru83 => {
                let d50 = d_x(dvh, 50.0)?;
                if d50 == 0.0 {
                    return Err(Error::UndefinedHomogeneity(dvh.structure_name.clone()));
                }
                Ok((d_x(dvh, 2.0)? - d_x(dvh, 98.0)?) / d50)
            }
        }
    }
}

impl fmt::Display for HiConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for HiConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "icru83" | "icru-83" => Ok(HiConvention::Icru83),
            other => Err(format!("unsupported HI convention {other:?} (supported: icru83)")),
        }
    }
}

pub fn homogeneity_index(dvh: &DvhCurve) -> Result<f64> {
    HiConvention::Icru83.evaluate(dvh)
}

/// One minus the histogram intersection of two differential DVHs.
pub fn dvh_diff(a: &DvhCurve, b: &DvhCurve) -> Result<f64> {
    if a.bin_width != b.bin_width {
        return Err(Error::BinWidthMismatch(a.bin_width, b.bin_width));
    }
    // Both histograms are anchored at 0 Gy; bins past either end contribute 0.
    // min(ca/na, cb/nb) = min(ca·nb, cb·na) / (na·nb), summed exactly in integers.
    let (na, nb) = (a.voxel_count as u128, b.voxel_count as u128);
    let shared: u128 = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&ca, &cb)| (u128::from(ca) * nb).min(u128::from(cb) * na))
        .sum();
    let total = na * nb;
    Ok((total - shared) as f64 / total as f64)
}

/// Per-structure quantities reused across every record the structure takes
/// part in.
#[derive(Debug, Clone)]
pub struct StructureMetrics {
    pub voxel_count: usize,
    pub volume_ml: f64,
    pub stats: DoseStats,
    pub dvh: DvhCurve,
    pub hi: Option<f64>,
}

impl StructureMetrics {
    pub fn compute(
        mask: &StructureMask,
        dose: &DoseGrid,
        bin_width: f64,
        hi: HiConvention,
    ) -> Result<Self> {
        let dvh = compute_dvh(mask, dose, bin_width)?;
        Ok(StructureMetrics {
            voxel_count: dvh.voxel_count,
            volume_ml: mask.volume_ml(),
            stats: dose_stats(mask, dose)?,
            hi: hi.evaluate(&dvh).ok(),
            dvh,
        })
    }
}

/// Directed metric bundle for an overlapping pair `(ref, other)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRecord {
    pub ref_name: String,
    pub other_name: String,
    pub ov_voxel_count: usize,
    pub ov_volume_ml: f64,
    pub ov_pct_of_ref: f64,
    pub ov_pct_of_other: f64,
    pub ov_stats: DoseStats,
    pub ref_stats: DoseStats,
    pub other_stats: DoseStats,
    /// `None` when the reference receives no dose at its median.
    pub hi_ref: Option<f64>,
    pub dvhdiff_ref: f64,
    pub dvhdiff_other: f64,
}

impl OverlapRecord {
    pub(crate) fn assemble(
        ref_name: &str,
        reference: &StructureMetrics,
        other_name: &str,
        other: &StructureMetrics,
        overlap: &StructureMetrics,
    ) -> Result<Self> {
        Ok(OverlapRecord {
            ref_name: ref_name.to_owned(),
            other_name: other_name.to_owned(),
            ov_voxel_count: overlap.voxel_count,
            ov_volume_ml: overlap.volume_ml,
            ov_pct_of_ref: 100.0 * overlap.voxel_count as f64 / reference.voxel_count as f64,
            ov_pct_of_other: 100.0 * overlap.voxel_count as f64 / other.voxel_count as f64,
            ov_stats: overlap.stats,
            ref_stats: reference.stats,
            other_stats: other.stats,
            hi_ref: reference.hi,
            dvhdiff_ref: dvh_diff(&reference.dvh, &overlap.dvh)?,
            dvhdiff_other: dvh_diff(&other.dvh, &overlap.dvh)?,
        })
    }

    /// The same overlap seen from the other structure.
    pub(crate) fn reversed(&self, other_hi: Option<f64>) -> Self {
        OverlapRecord {
            ref_name: self.other_name.clone(),
            other_name: self.ref_name.clone(),
            ov_voxel_count: self.ov_voxel_count,
            ov_volume_ml: self.ov_volume_ml,
            ov_pct_of_ref: self.ov_pct_of_other,
            ov_pct_of_other: self.ov_pct_of_ref,
            ov_stats: self.ov_stats,
            ref_stats: self.other_stats,
            other_stats: self.ref_stats,
            hi_ref: other_hi,
            dvhdiff_ref: self.dvhdiff_other,
            dvhdiff_other: self.dvhdiff_ref,
        }
    }
}

pub fn overlap_record(
    reference: &StructureMask,
    other: &StructureMask,
    dose: &DoseGrid,
    bin_width: f64,
) -> Result<OverlapRecord> {
    let ov = intersect(reference, other)?;
    if ov.is_empty() {
        return Err(Error::Disjoint(reference.name.clone(), other.name.clone()));
    }
    let hi = HiConvention::default();
    OverlapRecord::assemble(
        &reference.name,
        &StructureMetrics::compute(reference, dose, bin_width, hi)?,
        &other.name,
        &StructureMetrics::compute(other, dose, bin_width, hi)?,
        &StructureMetrics::compute(&ov, dose, bin_width, hi)?,
    )
}
