//! Range filters over overlap-record metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::OverlapRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    OvVolumeMl,
    OvPctOfRef,
    OvPctOfOther,
    OvDMin,
    OvDMean,
    OvDMax,
    RefDMin,
    RefDMean,
    RefDMax,
    OtherDMin,
    OtherDMean,
    OtherDMax,
    Hi,
    DvhdiffRef,
    DvhdiffOther,
}

impl Metric {
    pub const ALL: [Metric; 15] = [
        Metric::OvVolumeMl,
        Metric::OvPctOfRef,
        Metric::OvPctOfOther,
        Metric::OvDMin,
        Metric::OvDMean,
        Metric::OvDMax,
        Metric::RefDMin,
        Metric::RefDMean,
        Metric::RefDMax,
        Metric::OtherDMin,
        Metric::OtherDMean,
        Metric::OtherDMax,
        Metric::Hi,
        Metric::DvhdiffRef,
        Metric::DvhdiffOther,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::OvVolumeMl => "ov_volume_ml",
            Metric::OvPctOfRef => "ov_pct_of_ref",
            Metric::OvPctOfOther => "ov_pct_of_other",
            Metric::OvDMin => "ov_d_min",
            Metric::OvDMean => "ov_d_mean",
            Metric::OvDMax => "ov_d_max",
            Metric::RefDMin => "ref_d_min",
            Metric::RefDMean => "ref_d_mean",
            Metric::RefDMax => "ref_d_max",
            Metric::OtherDMin => "other_d_min",
            Metric::OtherDMean => "other_d_mean",
            Metric::OtherDMax => "other_d_max",
            Metric::Hi => "hi",
            Metric::DvhdiffRef => "dvhdiff_ref",
            Metric::DvhdiffOther => "dvhdiff_other",
        }
    }

    /// `None` only for an undefined homogeneity index.
    pub fn value(self, r: &OverlapRecord) -> Option<f64> {
        Some(match self {
            Metric::OvVolumeMl => r.ov_volume_ml,
            Metric::OvPctOfRef => r.ov_pct_of_ref,
            Metric::OvPctOfOther => r.ov_pct_of_other,
            Metric::OvDMin => r.ov_stats.d_min,
            Metric::OvDMean => r.ov_stats.d_mean,
            Metric::OvDMax => r.ov_stats.d_max,
            Metric::RefDMin => r.ref_stats.d_min,
            Metric::RefDMean => r.ref_stats.d_mean,
            Metric::RefDMax => r.ref_stats.d_max,
            Metric::OtherDMin => r.other_stats.d_min,
            Metric::OtherDMean => r.other_stats.d_mean,
            Metric::OtherDMax => r.other_stats.d_max,
            Metric::Hi => return r.hi_ref,
            Metric::DvhdiffRef => r.dvhdiff_ref,
            Metric::DvhdiffOther => r.dvhdiff_other,
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidFilter(format!("unknown metric {s:?}")))
    }
}

/// Closed interval; a missing bound is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Range {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Range {
    pub fn new(min: Option<f64>, max: Option<f64>) -> Result<Self> {
        let r = Range { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn closed(min: f64, max: f64) -> Result<Self> {
        Self::new(Some(min), Some(max))
    }

    fn validate(&self) -> Result<()> {
        if self.min.is_some_and(f64::is_nan) || self.max.is_some_and(f64::is_nan) {
            return Err(Error::InvalidFilter("range bounds must be numbers".into()));
        }
        if let (Some(lo), Some(hi)) = (self.min, self.max) {
            if lo > hi {
                return Err(Error::InvalidFilter(format!("empty range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min.is_none_or(|lo| x >= lo) && self.max.is_none_or(|hi| x <= hi)
    }

    /// Parses `lo,hi`; either side may be left blank.
    pub fn parse(text: &str) -> Result<Self> {
        let (lo, hi) = text
            .split_once(',')
            .ok_or_else(|| Error::InvalidFilter(format!("expected \"lo,hi\", got {text:?}")))?;
        let bound = |s: &str| -> Result<Option<f64>> {
            let s = s.trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::InvalidFilter(format!("bad bound {s:?}")))
        };
        Range::new(bound(lo)?, bound(hi)?)
    }
}

/// Conjunction of per-metric ranges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterSpec {
    ranges: BTreeMap<Metric, Range>,
}

impl FilterSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, metric: Metric, range: Range) -> Self {
        self.set(metric, range);
        self
    }

    /// Narrows the constraint on `metric`, intersecting with any existing range.
    pub fn set(&mut self, metric: Metric, range: Range) {
        let merged = match self.ranges.get(&metric) {
            Some(old) => Range {
                min: max_opt(old.min, range.min),
                max: min_opt(old.max, range.max),
            },
            None => range,
        };
        self.ranges.insert(metric, merged);
    }

    pub fn ranges(&self) -> impl Iterator<Item = (Metric, Range)> + '_ {
        self.ranges.iter().map(|(m, r)| (*m, *r))
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.ranges.values().try_for_each(Range::validate)
    }

    pub fn matches(&self, record: &OverlapRecord) -> bool {
        self.ranges
            .iter()
            .all(|(m, r)| m.value(record).is_some_and(|v| r.contains(v)))
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DoseStats;

    fn record(pct: f64, hi: Option<f64>) -> OverlapRecord {
        let s = DoseStats { d_min: 1.0, d_mean: 2.0, d_max: 3.0 };
        OverlapRecord {
            ref_name: "A".into(),
            other_name: "B".into(),
            ov_voxel_count: 16,
            ov_volume_ml: 0.016,
            ov_pct_of_ref: pct,
            ov_pct_of_other: pct,
            ov_stats: s,
            ref_stats: s,
            other_stats: s,
            hi_ref: hi,
            dvhdiff_ref: 0.5,
            dvhdiff_other: 0.5,
        }
    }

    #[test]
    fn closed_ranges() {
        let keep = FilterSpec::new().with(Metric::OvPctOfRef, Range::closed(40.0, 60.0).unwrap());
        let drop = FilterSpec::new().with(Metric::OvPctOfRef, Range::closed(60.0, 80.0).unwrap());
        assert!(keep.matches(&record(50.0, None)));
        assert!(!drop.matches(&record(50.0, None)));
        // bounds are inclusive
        let edge = FilterSpec::new().with(Metric::OvPctOfRef, Range::closed(50.0, 50.0).unwrap());
        assert!(edge.matches(&record(50.0, None)));
    }

    #[test]
    fn undefined_hi_fails_a_hi_constraint() {
        let f = FilterSpec::new().with(Metric::Hi, Range::new(None, Some(1.0)).unwrap());
        assert!(!f.matches(&record(50.0, None)));
        assert!(f.matches(&record(50.0, Some(0.2))));
        assert!(FilterSpec::new().matches(&record(50.0, None)));
    }

    #[test]
    fn parse_and_validate() {
        assert_eq!(Range::parse("40,60").unwrap(), Range::closed(40.0, 60.0).unwrap());
        assert_eq!(Range::parse(",0.5").unwrap(), Range::new(None, Some(0.5)).unwrap());
        assert!(Range::parse("60,40").is_err());
        assert!(Range::parse("abc").is_err());
        assert!(Range::parse("1,x").is_err());
        assert!("nope".parse::<Metric>().is_err());
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
    }

    #[test]
    fn repeated_constraints_intersect() {
        let mut f = FilterSpec::new();
        f.set(Metric::OvVolumeMl, Range::new(Some(1.0), None).unwrap());
        f.set(Metric::OvVolumeMl, Range::new(Some(0.5), Some(4.0)).unwrap());
        assert_eq!(f.ranges().next().unwrap().1, Range::closed(1.0, 4.0).unwrap());
    }

    #[test]
    fn json_form() {
        let f = FilterSpec::new().with(Metric::DvhdiffRef, Range::closed(0.1, 0.9).unwrap());
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"dvhdiff_ref":{"min":0.1,"max":0.9}}"#);
        assert_eq!(serde_json::from_str::<FilterSpec>(&json).unwrap(), f);
    }
}
