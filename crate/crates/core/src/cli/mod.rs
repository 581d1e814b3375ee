//! Command-line front end. Every command writes one JSON document tagged
//! with its schema name and version; `simulate` writes a points CSV.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 runtime error,
//! 3 degenerate result (no hits, or too many failed replicates).

mod config;

pub use config::RunConfig;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::bands::{band_radii, BandResult};
use crate::density::{read_points_csv, KdeField, PointCloud};
use crate::eigenfield::DegeneracyGuard;
use crate::error::FilamentError;
use crate::flow::Bounds;
use crate::kernel::{constants, KernelConstants};
use crate::mc;
use crate::ridge::{estimate_filament_scaled, FilamentEstimate, Polyline};

pub const SCHEMA_VERSION: u32 = 1;

/// Schema files shipped in `schemas/`, by document name.
pub const SCHEMAS: &[(&str, &str)] = &[
    ("constants", include_str!("../../schemas/constants.v1.json")),
    ("estimate", include_str!("../../schemas/estimate.v1.json")),
    ("band", include_str!("../../schemas/band.v1.json")),
    ("mc_sup", include_str!("../../schemas/mc_sup.v1.json")),
    ("mc_pointwise", include_str!("../../schemas/mc_pointwise.v1.json")),
    ("mc_rate", include_str!("../../schemas/mc_rate.v1.json")),
    ("gaussfield", include_str!("../../schemas/gaussfield.v1.json")),
];

#[derive(Debug, Parser)]
#[command(name = "filament", version, about = "Density ridge estimation in the plane")]
struct Cli {
    /// Suppress the summary line on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration, one `key = value` per line.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output` in the config; standard output when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the kernel constants.
    Constants {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the filament from a points CSV.
    Estimate {
        /// CSV with an `x,y` header.
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Confidence band radii along an estimated filament.
    Band {
        /// Document written by `estimate`.
        #[arg(long)]
        filament: PathBuf,
        /// The CSV the filament was estimated from.
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a sample from the configured model as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Scaled sup deviation against the limit law.
    McSup {
        #[command(flatten)]
        common: Common,
    },
    /// Law of the deviation at `x_star`.
    McPointwise {
        #[command(flatten)]
        common: Common,
    },
    /// Path error against the convergence rate.
    McRate {
        #[command(flatten)]
        common: Common,
    },
    /// Extremes of the limiting Gaussian field on a filament segment.
    Gaussfield {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError { code: 1, message: e.to_string() }
}

fn runtime(e: FilamentError) -> CliError {
    let code = match e {
        FilamentError::TooManyFailures { .. } | FilamentError::HitNotFound => 3,
        _ => 2,
    };
    CliError { code, message: e.to_string() }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    schema: &'static str,
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    result: T,
}

fn render<T: Serialize>(schema: &'static str, config: Option<&RunConfig>, result: T) -> CliResult<String> {
    let doc = Document { schema, schema_version: SCHEMA_VERSION, seed: config.map(RunConfig::seed), config, result };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| runtime(e.into()))?;
    text.push('\n');
    Ok(text)
}

fn round_sig(x: f64, digits: usize) -> f64 {
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Constants rounded to 12 significant digits.
pub fn rounded_constants(k: &KernelConstants) -> KernelConstants {
    let r = |x| round_sig(x, 12);
    KernelConstants {
        mu2: r(k.mu2),
        r_matrix: k.r_matrix.map(|row| row.map(r)),
        b1: r(k.b1),
        b2: r(k.b2),
        integral_of_k: r(k.integral_of_k),
        int_k30_sq: r(k.int_k30_sq),
        int_k21_sq: r(k.int_k21_sq),
        int_k12_sq: r(k.int_k12_sq),
        int_k03_sq: r(k.int_k03_sq),
    }
}

/// Body of an `estimate` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub n: usize,
    pub h: f64,
    pub merge_radius: f64,
    pub found: usize,
    #[serde(flatten)]
    pub estimate: FilamentEstimate,
}

#[derive(Debug, Deserialize)]
struct EstimateDocument {
    schema: String,
    result: EstimateResult,
}

/// Body of a `band` document.
#[derive(Debug, Clone, Serialize)]
pub struct BandOutput {
    pub level: Option<f64>,
    pub polyline: Polyline,
    #[serde(flatten)]
    pub band: BandResult,
}

struct Outcome {
    text: String,
    summary: String,
    code: i32,
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| usage(format!("{}: {e}", common.config.display())))?;
    let mut config = RunConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    Ok(config)
}

fn load_points(path: &Path) -> CliResult<PointCloud> {
    read_points_csv(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn guard(config: &RunConfig) -> CliResult<DegeneracyGuard> {
    DegeneracyGuard::new(config.guard_delta()).map_err(usage)
}

/// Bounding box of the cloud padded by `pad`.
fn cloud_bounds(cloud: &PointCloud, pad: f64) -> Bounds {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in cloud.points() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Bounds { min: [lo[0] - pad, lo[1] - pad], max: [hi[0] + pad, hi[1] + pad] }
}

fn estimate(points: &Path, config: &RunConfig) -> CliResult<Outcome> {
    let cloud = load_points(points)?;
    let n = cloud.n();
    if config.n.is_some_and(|m| m != n) {
        return Err(usage(format!("config n = {} but the data has {n} points", config.n.unwrap_or(0))));
    }
    let h = config.bandwidth(n).map_err(usage)?;
    let flow = config.flow(cloud_bounds(&cloud, 2.0 * h)).map_err(usage)?;
    let starts = config.start_spec().and_then(|s| s.points()).map_err(usage)?;
    let guard = guard(config)?;
    let merge_radius = config.merge_radius.unwrap_or(h / 2.0);
    let kde = KdeField::new(cloud, h).map_err(runtime)?;
    let est = estimate_filament_scaled(&kde, &starts, &flow, &guard, merge_radius).map_err(runtime)?;

    let found = est.hits.iter().filter(|h| h.found).count();
    let code = if found > 0 { 0 } else { 3 };
    let summary = format!(
        "estimate: n = {n}, h = {h:.4}, {found} hits from {} starts, {} failures, {} vertices",
        starts.len(),
        est.failures.len(),
        est.polyline.len()
    );
    let result = EstimateResult { n, h, merge_radius, found, estimate: est };
    Ok(Outcome { text: render("estimate", Some(config), result)?, summary, code })
}

fn band(filament: &Path, points: &Path, config: &RunConfig) -> CliResult<Outcome> {
    let text = std::fs::read_to_string(filament).map_err(|e| usage(format!("{}: {e}", filament.display())))?;
    let doc: EstimateDocument =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", filament.display())))?;
    if doc.schema != "estimate" {
        return Err(usage(format!("{} is a {:?} document, expected estimate", filament.display(), doc.schema)));
    }
    let est = doc.result;
    let cloud = load_points(points)?;
    let n = cloud.n();
    if n != est.n || config.n.is_some_and(|m| m != n) {
        return Err(usage(format!(
            "sample size mismatch: data {n}, filament document {}, config {:?}",
            est.n, config.n
        )));
    }
    let h = config.bandwidth(n).map_err(usage)?;
    if (h - est.h).abs() > 1e-12 * est.h {
        return Err(usage(format!("bandwidth mismatch: config gives {h}, filament document has {}", est.h)));
    }
    let z = config.z_value().map_err(usage)?;
    let guard = guard(config)?;
    let kde = KdeField::new(cloud, h).map_err(runtime)?;
    let line = est.estimate.polyline;
    let band = band_radii(&line, &kde, constants(), n, h, z, &guard).map_err(runtime)?;
    let summary = format!("band: z = {z:.4}, c = {:.4}, b_h = {:.4}, {} radii", band.c, band.b_h, band.radii.len());
    let level = if config.z.is_some() { None } else { Some(config.level.unwrap_or(0.95)) };
    let result = BandOutput { level, polyline: line, band };
    Ok(Outcome { text: render("band", Some(config), result)?, summary, code: 0 })
}

fn simulate(config: &RunConfig) -> CliResult<Outcome> {
    let model = config.model().map_err(usage)?;
    let n = config.n.ok_or_else(|| usage("config needs n"))?;
    let cloud = model.sample(n, config.seed());
    let mut text = String::from("x,y\n");
    for p in cloud.points() {
        let _ = writeln!(text, "{},{}", p[0], p[1]);
    }
    Ok(Outcome { text, summary: format!("simulate: {n} points, seed {}", config.seed()), code: 0 })
}

fn experiment<T: Serialize>(
    schema: &'static str,
    config: &RunConfig,
    run: impl FnOnce(&mc::ExperimentConfig) -> crate::Result<T>,
) -> CliResult<Outcome> {
    let exp = config.experiment().map_err(usage)?;
    let result = run(&exp).map_err(runtime)?;
    let summary = format!("{schema}: {} reps at n = {:?}, seed {}", exp.reps, exp.n_grid, exp.seed);
    Ok(Outcome { text: render(schema, Some(config), result)?, summary, code: 0 })
}

fn dispatch(command: Command) -> CliResult<(Outcome, Option<PathBuf>)> {
    let with_config = |common: &Common, f: &dyn Fn(&RunConfig) -> CliResult<Outcome>| {
        let config = load_config(common)?;
        Ok((f(&config)?, common.out.clone().or_else(|| config.output.clone())))
    };
    match command {
        Command::Constants { out } => {
            let text = render("constants", None, rounded_constants(constants()))?;
            Ok((Outcome { text, summary: "constants".into(), code: 0 }, out))
        }
        Command::Estimate { points, common } => with_config(&common, &|c| estimate(&points, c)),
        Command::Band { filament, points, common } => with_config(&common, &|c| band(&filament, &points, c)),
        Command::Simulate { common } => with_config(&common, &simulate),
        Command::McSup { common } => with_config(&common, &|c| experiment("mc_sup", c, mc::run_sup_deviation)),
        Command::McPointwise { common } => with_config(&common, &|c| {
            let x = c.x_star.ok_or_else(|| usage("config needs x_star"))?;
            experiment("mc_pointwise", c, |e| mc::run_pointwise(e, Vector2::from(x)))
        }),
        Command::McRate { common } => with_config(&common, &|c| experiment("mc_rate", c, mc::run_rate)),
        Command::Gaussfield { common } => with_config(&common, &|c| {
            let model = c.model().map_err(usage)?;
            let gf = c.gauss_field().map_err(usage)?;
            let levels = mc::simulate_gauss_field(&gf, &model, constants()).map_err(runtime)?;
            let summary = format!("gaussfield: {} reps at h = {:?}", gf.reps, gf.h_grid);
            Ok(Outcome { text: render("gaussfield", Some(c), levels)?, summary, code: 0 })
        }),
    }
}

/// Run with `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let quiet = cli.quiet;
    match dispatch(cli.command) {
        Ok((outcome, out)) => {
            let written = match &out {
                Some(path) => std::fs::write(path, &outcome.text),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(outcome.text.as_bytes())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return 2;
            }
            if !quiet {
                eprintln!("{}", outcome.summary);
            }
            if outcome.code == 3 {
                eprintln!("error: degenerate result, no filament points found");
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
