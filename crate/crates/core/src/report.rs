//! Batch reports: overlap tables, hotspot tables and DVH exports.
//!
//! CSV numbers use 6 significant digits in `%g` style so golden files stay
//! stable; JSON carries full-precision values from the same rows.

use std::io::Write;

use serde::Serialize;

use crate::analysis::{HotspotReport, PlanAnalysis};
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::grid::Role;
use crate::metrics::{DvhCurve, OverlapRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// One directed overlap, flattened with structure roles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub ref_name: String,
    pub ref_role: Role,
    pub other_name: String,
    pub other_role: Role,
    pub ov_voxel_count: usize,
    pub ov_volume_ml: f64,
    pub ov_pct_of_ref: f64,
    pub ov_pct_of_other: f64,
    pub ov_d_min: f64,
    pub ov_d_mean: f64,
    pub ov_d_max: f64,
    pub ref_d_min: f64,
    pub ref_d_mean: f64,
    pub ref_d_max: f64,
    pub other_d_min: f64,
    pub other_d_mean: f64,
    pub other_d_max: f64,
    pub hi_ref: Option<f64>,
    pub dvhdiff_ref: f64,
    pub dvhdiff_other: f64,
}

pub const REPORT_COLUMNS: [&str; 20] = [
    "ref_name",
    "ref_role",
    "other_name",
    "other_role",
    "ov_voxel_count",
    "ov_volume_ml",
    "ov_pct_of_ref",
    "ov_pct_of_other",
    "ov_d_min",
    "ov_d_mean",
    "ov_d_max",
    "ref_d_min",
    "ref_d_mean",
    "ref_d_max",
    "other_d_min",
    "other_d_mean",
    "other_d_max",
    "hi_ref",
    "dvhdiff_ref",
    "dvhdiff_other",
];

impl ReportRow {
    pub fn new(record: &OverlapRecord, ref_role: Role, other_role: Role) -> Self {
        ReportRow {
            ref_name: record.ref_name.clone(),
            ref_role,
            other_name: record.other_name.clone(),
            other_role,
            ov_voxel_count: record.ov_voxel_count,
            ov_volume_ml: record.ov_volume_ml,
            ov_pct_of_ref: record.ov_pct_of_ref,
            ov_pct_of_other: record.ov_pct_of_other,
            ov_d_min: record.ov_stats.d_min,
            ov_d_mean: record.ov_stats.d_mean,
            ov_d_max: record.ov_stats.d_max,
            ref_d_min: record.ref_stats.d_min,
            ref_d_mean: record.ref_stats.d_mean,
            ref_d_max: record.ref_stats.d_max,
            other_d_min: record.other_stats.d_min,
            other_d_mean: record.other_stats.d_mean,
            other_d_max: record.other_stats.d_max,
            hi_ref: record.hi_ref,
            dvhdiff_ref: record.dvhdiff_ref,
            dvhdiff_other: record.dvhdiff_other,
        }
    }

    fn csv_fields(&self) -> Vec<String> {
        let mut out = vec![
            self.ref_name.clone(),
            self.ref_role.to_string(),
            self.other_name.clone(),
            self.other_role.to_string(),
            self.ov_voxel_count.to_string(),
        ];
        out.extend(
            [
                self.ov_volume_ml,
                self.ov_pct_of_ref,
                self.ov_pct_of_other,
                self.ov_d_min,
                self.ov_d_mean,
                self.ov_d_max,
                self.ref_d_min,
                self.ref_d_mean,
                self.ref_d_max,
                self.other_d_min,
                self.other_d_mean,
                self.other_d_max,
            ]
            .map(format_sig6),
        );
        out.push(self.hi_ref.map(format_sig6).unwrap_or_default());
        out.push(format_sig6(self.dvhdiff_ref));
        out.push(format_sig6(self.dvhdiff_other));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub reference: Option<String>,
    pub filter: FilterSpec,
    pub bin_width_gy: f64,
    pub hi_convention: &'static str,
    pub rows: Vec<ReportRow>,
}

/// Directed records passing `filter`, sorted by reference name, then by
/// descending overlap share of the reference, then by the other name.
pub fn analyze(analysis: &PlanAnalysis, reference: Option<&str>, filter: &FilterSpec) -> Result<AnalyzeReport> {
    let mut rows = analysis
        .records(reference, filter)?
        .into_iter()
        .map(|r| {
            Ok(ReportRow::new(
                r,
                analysis.structure(&r.ref_name)?.role,
                analysis.structure(&r.other_name)?.role,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.ref_name
            .cmp(&b.ref_name)
            .then(b.ov_pct_of_ref.total_cmp(&a.ov_pct_of_ref))
            .then(a.other_name.cmp(&b.other_name))
    });
    Ok(AnalyzeReport {
        reference: reference.map(str::to_owned),
        filter: filter.clone(),
        bin_width_gy: analysis.config().bin_width_gy,
        hi_convention: analysis.config().hi_convention.label(),
        rows,
    })
}

pub fn write_analyze<W: Write>(report: &AnalyzeReport, format: Format, out: W) -> Result<()> {
    match format {
        Format::Json => write_json(report, out),
        Format::Csv => {
            let mut w = csv_writer(out);
            write_record(&mut w, REPORT_COLUMNS)?;
            for row in &report.rows {
                write_record(&mut w, row.csv_fields())?;
            }
            flush(w)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HotspotRowOut {
    pub v_d_pct: f64,
    #[serde(flatten)]
    pub row: ReportRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct HotspotOutput {
    pub threshold_gy: f64,
    /// Human-readable threshold, e.g. `52.5 Gy`.
    pub threshold: String,
    pub threshold_pct_of_prescription: Option<f64>,
    pub prescription_dose_gy: f64,
    pub region: String,
    pub region_voxel_count: usize,
    pub region_volume_ml: f64,
    pub roles: Option<Vec<Role>>,
    pub warning: Option<String>,
    pub rows: Vec<HotspotRowOut>,
}

pub fn threshold_label(threshold_gy: f64) -> String {
    format!("{threshold_gy} Gy")
}

/// Runs the hotspot workflow: `R_d` at `threshold_gy` against every plan
/// structure (optionally only those with a role in `roles`).
pub fn hotspots(
    analysis: &PlanAnalysis,
    threshold_gy: f64,
    pct: Option<f64>,
    roles: Option<&[Role]>,
) -> Result<HotspotOutput> {
    let HotspotReport {
        threshold_gy,
        region,
        rows,
    } = analysis.hotspots(threshold_gy, roles)?;
    let mut rows: Vec<HotspotRowOut> = rows
        .into_iter()
        .map(|r| HotspotRowOut {
            v_d_pct: r.v_d_pct,
            row: ReportRow::new(&r.record, r.role, Role::DoseRegion),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.row
            .ov_volume_ml
            .total_cmp(&a.row.ov_volume_ml)
            .then(a.row.ref_name.cmp(&b.row.ref_name))
    });
    Ok(HotspotOutput {
        threshold: threshold_label(threshold_gy),
        threshold_gy,
        threshold_pct_of_prescription: pct,
        prescription_dose_gy: analysis.plan().prescription_dose(),
        region: region.name,
        region_voxel_count: region.voxel_count,
        region_volume_ml: region.volume_ml,
        roles: roles.map(<[Role]>::to_vec),
        warning: region.warning,
        rows,
    })
}

pub fn write_hotspots<W: Write>(report: &HotspotOutput, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Json => write_json(report, out),
        Format::Csv => {
            let header = match report.threshold_pct_of_prescription {
                Some(p) => format!(
                    "# threshold: {} ({p}% of prescription {} Gy)\n",
                    report.threshold, report.prescription_dose_gy
                ),
                None => format!("# threshold: {}\n", report.threshold),
            };
            out.write_all(header.as_bytes()).map_err(stdout_err)?;
            let mut w = csv_writer(out);
            let mut columns = vec!["v_d_pct"];
            columns.extend(REPORT_COLUMNS);
            write_record(&mut w, columns)?;
            for r in &report.rows {
                let mut fields = vec![format_sig6(r.v_d_pct)];
                fields.extend(r.row.csv_fields());
                write_record(&mut w, fields)?;
            }
            flush(w)
        }
    }
}

/// Cumulative DVHs as CSV: a `dose_gy` column of bin edges, then one
/// column per curve. Curves shorter than the longest are padded with 0.
pub fn write_dvh_csv<W: Write>(curves: &[DvhCurve], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header = vec!["dose_gy".to_owned()];
    header.extend(curves.iter().map(|c| c.structure_name.clone()));
    write_record(&mut w, header)?;
    let rows = curves.iter().map(DvhCurve::bins).max().unwrap_or(0);
    let bin_width = curves.first().map_or(0.0, |c| c.bin_width);
    for k in 0..rows {
        let mut fields = vec![format_sig6(k as f64 * bin_width)];
        fields.extend(curves.iter().map(|c| format_sig6(c.cumulative_at(k))));
        write_record(&mut w, fields)?;
    }
    flush(w)
}

fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| stdout_err(e.into()))?;
    out.write_all(b"\n").map_err(stdout_err)
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn write_record<W: Write, I, T>(w: &mut csv::Writer<W>, fields: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| stdout_err(e.into()))
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(stdout_err)
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<report output>", e)
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
