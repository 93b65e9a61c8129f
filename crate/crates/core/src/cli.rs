//! Command-line front end. The `rtoverlap` binary is a thin wrapper around
//! [`run`], which tests can also drive in-process.
//!
//! Exit codes: 0 on success (including empty reports), 1 on usage errors,
//! 2 when the data or a named structure is bad.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{AnalysisConfig, DoseRegionRequest, PlanAnalysis};
use crate::bundle::{load_bundle, save_bundle};
use crate::error::Error;
use crate::filter::{FilterSpec, Metric, Range};
use crate::grid::Role;
use crate::metrics::HiConvention;
use crate::phantom::{generate_phantom, presets, PhantomSpec};
use crate::report::{self, Format};
use crate::service::{self, AppState, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rtoverlap", version, about = "Overlap-volume analytics for radiotherapy plans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report directed overlap records, optionally filtered.
    Analyze(AnalyzeArgs),
    /// Create a dose region and report which structures reach it.
    Hotspots(HotspotArgs),
    /// Export cumulative DVHs as CSV.
    ExportDvh(ExportDvhArgs),
    /// Write a synthetic phantom bundle.
    Phantom(PhantomArgs),
    /// Serve the JSON query API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Plan bundle directory.
    pub bundle: PathBuf,
    /// DVH bin width in Gy.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_BIN_WIDTH_GY)]
    pub bin_width: f64,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Only records whose first structure is this one.
    #[arg(long)]
    pub reference: Option<String>,
    /// Metric range, `metric=lo,hi` (either bound may be blank). Repeatable.
    #[arg(long = "filter", value_parser = parse_filter_arg)]
    pub filters: Vec<(Metric, Range)>,
    /// Shorthand for `--filter ov_volume_ml=X,`.
    #[arg(long)]
    pub min_ov_ml: Option<f64>,
    /// Shorthand for `--filter ov_pct_of_ref=X,`.
    #[arg(long)]
    pub min_ov_pct: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("threshold").required(true).args(["pct", "gy"])))]
pub struct HotspotArgs {
    #[command(flatten)]
    pub common: Common,
    /// Threshold as a percentage of the prescription dose.
    #[arg(long)]
    pub pct: Option<f64>,
    /// Absolute threshold in Gy.
    #[arg(long)]
    pub gy: Option<f64>,
    /// Restrict to structures with these roles, e.g. `oar` or `target,oar`.
    #[arg(long, value_delimiter = ',')]
    pub roles: Option<Vec<Role>>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("which").required(true).args(["names", "all"])))]
pub struct ExportDvhArgs {
    #[command(flatten)]
    pub common: Common,
    /// Structures to export, in column order.
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    /// Export every structure in bundle order.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["preset", "spec"])))]
pub struct PhantomArgs {
    /// Built-in phantom: slab, disjoint, spheres or hotspot.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(presets::NAMES))]
    pub preset: Option<String>,
    /// Phantom description as JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Bundle directory to write (replaced atomically if present).
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Plan bundle to load (overrides the config file).
    pub bundle: Option<PathBuf>,
    /// TOML config with `bundle`, `listen`, `bin_width_gy`, `hi_convention`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub hi_convention: Option<HiConvention>,
}

fn parse_filter_arg(s: &str) -> Result<(Metric, Range), String> {
    let (name, range) = s
        .split_once('=')
        .ok_or_else(|| format!("expected metric=lo,hi, got {s:?}"))?;
    let metric = name.trim().parse::<Metric>().map_err(|e| e.to_string())?;
    let range = Range::parse(range).map_err(|e| e.to_string())?;
    Ok((metric, range))
}

/// Runs the CLI with explicit argv and output streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error[{}]: {e}", e.code());
            EXIT_DATA
        }
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Analyze(a) => analyze(a, stdout),
        Command::Hotspots(a) => hotspots(a, stdout, stderr),
        Command::ExportDvh(a) => export_dvh(a, stdout),
        Command::Phantom(a) => phantom(a, stderr),
        Command::Serve(a) => serve(a, stderr),
    }
}

fn load(common: &Common) -> Result<PlanAnalysis, Failure> {
    let config = AnalysisConfig {
        bin_width_gy: common.bin_width,
        ..AnalysisConfig::default()
    };
    let plan = load_bundle(&common.bundle)?;
    Ok(PlanAnalysis::new(plan, config)?)
}

/// Calls `f` with either the output file or stdout.
fn emit(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> crate::Result<()>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| Error::io(p, e))?;
        }
        None => f(stdout)?,
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let mut filter = FilterSpec::new();
    for (metric, range) in a.filters {
        filter.set(metric, range);
    }
    let at_least = |x: f64| Range::new(Some(x), None).map_err(|e| Failure::Usage(e.to_string()));
    if let Some(ml) = a.min_ov_ml {
        filter.set(Metric::OvVolumeMl, at_least(ml)?);
    }
    if let Some(pct) = a.min_ov_pct {
        filter.set(Metric::OvPctOfRef, at_least(pct)?);
    }
    let analysis = load(&a.common)?;
    let report = report::analyze(&analysis, a.reference.as_deref(), &filter)?;
    emit(a.common.output.as_deref(), stdout, |w| report::write_analyze(&report, a.format, w))
}

fn hotspots(a: HotspotArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let analysis = load(&a.common)?;
    let threshold = analysis.resolve_threshold(&DoseRegionRequest {
        d_pct: a.pct,
        d_abs: a.gy,
    })?;
    let out = report::hotspots(&analysis, threshold, a.pct, a.roles.as_deref())?;
    if let Some(warning) = &out.warning {
        let _ = writeln!(stderr, "warning: {warning}");
    } else if out.rows.is_empty() {
        let _ = writeln!(stderr, "warning: no selected structure reaches {}", out.threshold);
    }
    emit(a.common.output.as_deref(), stdout, |w| report::write_hotspots(&out, a.format, w))
}

fn export_dvh(a: ExportDvhArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let analysis = load(&a.common)?;
    let names: Vec<String> = if a.all {
        analysis.plan().structures().iter().map(|s| s.name.clone()).collect()
    } else {
        a.names
    };
    let curves = analysis.dvh(Some(&names), None)?;
    emit(a.common.output.as_deref(), stdout, |w| report::write_dvh_csv(&curves, w))
}

fn phantom(a: PhantomArgs, stderr: &mut dyn Write) -> Result<(), Failure> {
    let spec = match (&a.preset, &a.spec) {
        (Some(name), _) => presets::by_name(name)
            .ok_or_else(|| Failure::Usage(format!("unknown preset {name:?}")))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<PhantomSpec>(&text)
                .map_err(|e| Error::InvalidPhantom(format!("{}: {e}", path.display())))?
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let plan = generate_phantom(&spec)?;
    save_bundle(&plan, &a.out)?;
    let _ = writeln!(
        stderr,
        "wrote {} ({} structures) to {}",
        a.preset.as_deref().unwrap_or("phantom"),
        plan.structures().len(),
        a.out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs, stderr: &mut dyn Write) -> Result<(), Failure> {
    let mut config = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ServiceConfig::from_toml(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ServiceConfig::default(),
    };
    if let Some(b) = a.bundle {
        config.bundle = Some(b);
    }
    if let Some(l) = a.listen {
        config.listen = l;
    }
    if let Some(w) = a.bin_width {
        config.bin_width_gy = w;
    }
    if let Some(h) = a.hi_convention {
        config.hi_convention = h;
    }

    let state = match &config.bundle {
        Some(path) => AppState::new(PlanAnalysis::new(load_bundle(path)?, config.analysis())?),
        None => {
            let _ = writeln!(stderr, "warning: no bundle given; data routes answer 503");
            AppState::empty()
        }
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<tokio runtime>", e))?;
    let listen = config.listen;
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(listen).await?;
            let _ = writeln!(stderr, "listening on http://{}{}", listener.local_addr()?, service::API_PREFIX);
            service::serve_on(listener, state).await
        })
        .map_err(|e| Error::io(listen.to_string(), e))?;
    Ok(())
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("rtoverlap").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["analyze"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["hotspots", "x", "--pct", "1", "--gy", "2"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["hotspots", "x"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["analyze", "x", "--filter", "bogus=1,2"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["analyze", "x", "--filter", "hi=2,1"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["export-dvh", "x"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["phantom", "--preset", "nope", "out"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        for sub in ["analyze", "hotspots", "export-dvh", "phantom", "serve"] {
            assert!(out.contains(sub), "{sub} missing from help");
        }
    }

    #[test]
    fn missing_bundle_is_a_data_error() {
        let (code, _, err) = run_args(&["analyze", "/nonexistent/bundle"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.starts_with("error["), "{err}");
    }

    #[test]
    fn filter_arg_syntax() {
        assert_eq!(
            parse_filter_arg("ov_pct_of_ref=40,60").unwrap(),
            (Metric::OvPctOfRef, Range::closed(40.0, 60.0).unwrap())
        );
        assert!(parse_filter_arg("ov_pct_of_ref").is_err());
    }
}
