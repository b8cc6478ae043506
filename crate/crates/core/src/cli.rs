//! Command-line front end for the `drm` binary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{ku_fit, ku_quantile};
use crate::basis::{Basis, FixedBasis};
use crate::el_drm::{fit_drm_values, DrmFit};
use crate::error::{DrmError, Result};
use crate::estimators::{drm_quantile, DrmDensity};
use crate::fpca_basis::{self, AdaptiveBasis};
use crate::kde::{FloorPolicy, KGrid, ReferenceFamily};
use crate::multisample::{Layout, MultiSample};
use crate::pipeline::{self, AdaptiveConfig, BandwidthPolicy, DPolicy};
use crate::simbench::{self, format_sig, Estimator, ScenarioId, ScenarioSpec};

const OP: &str = "cli::main";
const CURVE_POINTS: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "drm", version, about = "Density ratio model fitting with a data-adaptive basis")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the adaptive basis and report its eigenvalues.
    Basis(BasisArgs),
    /// Fit the density ratio model.
    Fit(FitArgs),
    /// Quantiles of every population under the fitted model.
    Quantiles(QuantileArgs),
    /// Fitted densities on a grid.
    Density(DensityArgs),
    /// Low-rank functional PCA reconstruction of the densities.
    Ku(KuArgs),
    /// Monte Carlo benchmark on a simulated scenario.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with the samples.
    #[arg(long)]
    input: PathBuf,
    /// `long` (group,value) or `wide` (one column per population).
    #[arg(long, default_value = "long")]
    layout: String,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// silverman, adaptive or fixed:<h>.
    #[arg(long, default_value = "adaptive")]
    bandwidth: String,
    /// Reference family for the adaptive bandwidth search.
    #[arg(long, default_value = "normal")]
    bw_family: String,
    /// Scale-factor grid lo:hi:step for the adaptive bandwidth search.
    #[arg(long)]
    bw_grid: Option<String>,
    /// Floor the KDEs; with no value the floor is 0.1/(n_r h_r).
    #[arg(long, num_args = 0..=1, default_missing_value = "auto")]
    kde_floor: Option<String>,
    /// Basis dimension: auto or an integer.
    #[arg(long)]
    d: Option<String>,
    /// Share of eigenvalue mass for the threshold rule.
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
    /// Largest dimension considered by BIC.
    #[arg(long, default_value_t = 4)]
    bic_max: usize,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// auto, rich, or poly:<terms>.
    #[arg(long, default_value = "auto")]
    basis: String,
    /// Adaptive basis saved by `drm basis --dump`.
    #[arg(long)]
    basis_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BasisArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Write the basis as JSON.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Write the basis functions on a grid as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct QuantileArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
    levels: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// lo:hi:n evaluation grid.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct KuArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of retained components.
    #[arg(long = "L", default_value_t = 2)]
    l: usize,
    /// Grid size.
    #[arg(long, default_value_t = crate::baselines::DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
    levels: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "truth,adaptive,rich,np,ku2")]
    estimators: String,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-repetition errors as CSV.
    #[arg(long)]
    raw: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind().exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Basis(a) => cmd_basis(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Quantiles(a) => cmd_quantiles(a),
        Command::Density(a) => cmd_density(a),
        Command::Ku(a) => cmd_ku(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn usage(msg: impl Into<String>) -> DrmError {
    DrmError::Usage { op: OP, msg: msg.into() }
}

fn load(data: &DataArgs) -> Result<MultiSample> {
    MultiSample::load_csv(&data.input, data.layout.parse::<Layout>()?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| DrmError::Io {
        op: OP,
        path: path.to_path_buf(),
        source,
    })
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| DrmError::Io {
            op: OP,
            path: PathBuf::from("<stdout>"),
            source,
        })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| DrmError::numeric(OP, format!("serialization failed: {e}")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| usage(format!("bad {what} {s:?}")))
}

impl PipelineArgs {
    fn d_policy(&self) -> Result<DPolicy> {
        match self.d.as_deref() {
            None | Some("auto") => Ok(DPolicy::Auto),
            Some(s) => s
                .parse::<usize>()
                .ok()
                .filter(|&d| d >= 1)
                .map(DPolicy::Fixed)
                .ok_or_else(|| usage(format!("bad --d {s:?}; use auto or a positive integer"))),
        }
    }

    fn config(&self) -> Result<AdaptiveConfig> {
        let family: ReferenceFamily = self.bw_family.parse()?;
        let mut bandwidth: BandwidthPolicy = self.bandwidth.parse()?;
        if let BandwidthPolicy::Adaptive { family: f, grid } = &mut bandwidth {
            *f = family;
            if let Some(g) = &self.bw_grid {
                *grid = g.parse::<KGrid>()?;
            }
        } else if self.bw_grid.is_some() {
            return Err(usage("--bw-grid only applies to --bandwidth adaptive"));
        }
        let floor = match self.kde_floor.as_deref() {
            None => FloorPolicy::Off,
            Some("auto") => FloorPolicy::Auto,
            Some(c) => {
                let c = parse_f64(c, "--kde-floor")?;
                if !(c > 0.0) {
                    return Err(usage("--kde-floor must be positive"));
                }
                FloorPolicy::Constant(c)
            }
        };
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(usage("--threshold must lie in (0, 1]"));
        }
        if self.bic_max < 1 {
            return Err(usage("--bic-max must be at least 1"));
        }
        Ok(AdaptiveConfig {
            bandwidth,
            floor,
            d: self.d_policy()?,
            threshold: self.threshold,
            bic_candidates: (1..=self.bic_max).collect(),
        })
    }
}

/// The fitted model together with the adaptive basis when one was used.
struct Fitted {
    fit: DrmFit,
    basis: String,
    adaptive: Option<AdaptiveBasis>,
}

fn fit_model(ms: &MultiSample, pipeline_args: &PipelineArgs, model: &ModelArgs) -> Result<Fitted> {
    let cfg = pipeline_args.config()?;
    let pooled = ms.pool();
    if let Some(path) = &model.basis_file {
        if model.basis != "auto" {
            return Err(usage("--basis-file and --basis are mutually exclusive"));
        }
        let mut basis = AdaptiveBasis::load(path)?;
        if let DPolicy::Fixed(d) = cfg.d {
            basis = basis.truncated(d)?;
        }
        if basis.offsets().len() != ms.num_populations() {
            return Err(usage(format!(
                "basis file describes {} populations but the data have {}",
                basis.offsets().len(),
                ms.num_populations()
            )));
        }
        let fit = fit_drm_values(&pooled, basis.values_at(&pooled)?)?;
        return Ok(Fitted {
            fit,
            basis: basis.describe(),
            adaptive: Some(basis),
        });
    }
    let fixed = match model.basis.as_str() {
        "auto" => None,
        "rich" => Some(FixedBasis::rich()),
        s => match s.strip_prefix("poly:") {
            Some(spec) => Some(FixedBasis::parse(spec)?),
            None => return Err(usage(format!("bad --basis {s:?}; use auto, rich or poly:<terms>"))),
        },
    };
    match fixed {
        Some(basis) => {
            if pipeline_args.d.is_some() {
                return Err(usage("--d applies only to the adaptive basis; it conflicts with --basis"));
            }
            let fit = fit_drm_values(&pooled, basis.values_at(&pooled)?)?;
            Ok(Fitted {
                fit,
                basis: basis.describe(),
                adaptive: None,
            })
        }
        None => {
            let a = pipeline::fit_adaptive(ms, &cfg)?;
            Ok(Fitted {
                fit: a.fit,
                basis: a.basis.describe(),
                adaptive: Some(a.basis),
            })
        }
    }
}

#[derive(Serialize)]
struct EigenReport<'a> {
    eigenvalues: &'a [f64],
    variance_explained: Vec<f64>,
    d: usize,
    provenance: &'a fpca_basis::Provenance,
}

fn cmd_basis(a: BasisArgs) -> Result<()> {
    let ms = load(&a.data)?;
    let cfg = a.pipeline.config()?;
    if ms.m() < 1 {
        return Err(usage("the adaptive basis needs at least two populations"));
    }
    let run = pipeline::estimate_eigensystem(&ms, &cfg)?;
    let fitted = pipeline::fit_from_run(&run, &ms.pool(), &cfg)?;
    let basis = fitted.basis;
    let shares = fpca_basis::variance_explained(&run.eig.values)?;
    if let Some(path) = &a.dump {
        basis.save(path)?;
    }
    if let Some(path) = &a.curves {
        write_file(path, &basis_curves(&ms, &basis, &run.bandwidths)?)?;
    }
    if a.json {
        return emit(&to_json(&EigenReport {
            eigenvalues: &run.eig.values,
            variance_explained: shares,
            d: basis.dim(),
            provenance: basis.provenance(),
        })?);
    }
    let mut out = String::from("j\teigenvalue\tcumulative_share\tselected\n");
    for (j, (v, s)) in run.eig.values.iter().zip(&shares).enumerate() {
        let _ = writeln!(
            out,
            "{j}\t{}\t{}\t{}",
            format_sig(*v, 6),
            format_sig(*s, 6),
            if j < basis.dim() { "yes" } else { "no" }
        );
    }
    emit(&out)
}

/// `x, psi0, psi1, …` on a uniform grid over `[min - h, max + h]`.
fn basis_curves(ms: &MultiSample, basis: &AdaptiveBasis, bandwidths: &[f64]) -> Result<String> {
    let pooled = ms.pool();
    let pts = pooled.points();
    let h = bandwidths.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = (pts[0] - h, pts[pts.len() - 1] + h);
    let step = (hi - lo) / (CURVE_POINTS - 1) as f64;
    let mut out = String::from("x");
    for j in 0..basis.dim() {
        let _ = write!(out, ",psi{j}");
    }
    out.push('\n');
    let mut row = vec![0.0; basis.dim()];
    for i in 0..CURVE_POINTS {
        let x = lo + i as f64 * step;
        basis.eval_into(x, &mut row)?;
        out.push_str(&format_sig(x, 6));
        for v in &row {
            out.push(',');
            out.push_str(&format_sig(*v, 6));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct FitReport {
    basis: String,
    alpha: Vec<f64>,
    beta: Vec<Vec<f64>>,
    loglik: f64,
    converged: bool,
    iterations: usize,
    constraint_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<fpca_basis::Provenance>,
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let ms = load(&a.data)?;
    let f = fit_model(&ms, &a.pipeline, &a.model)?;
    let s = f.fit.summary();
    emit(&to_json(&FitReport {
        basis: f.basis,
        alpha: s.alpha,
        beta: s.beta,
        loglik: s.loglik,
        converged: s.converged,
        iterations: s.iterations,
        constraint_residual: s.constraint_residual,
        provenance: f.adaptive.map(|b| b.provenance().clone()),
    })?)
}

fn parse_levels(s: &str) -> Result<Vec<f64>> {
    let levels: Vec<f64> = s.split(',').map(|t| parse_f64(t, "level")).collect::<Result<_>>()?;
    if levels.is_empty() {
        return Err(usage("no levels given"));
    }
    Ok(levels)
}

/// Rows are populations, columns are levels.
fn quantile_table(labels: &[String], levels: &[f64], values: &[Vec<f64>], json: bool) -> Result<String> {
    if json {
        #[derive(Serialize)]
        struct Row<'a> {
            population: &'a str,
            quantiles: &'a [f64],
        }
        #[derive(Serialize)]
        struct Table<'a> {
            levels: &'a [f64],
            rows: Vec<Row<'a>>,
        }
        let rows = labels
            .iter()
            .zip(values)
            .map(|(l, q)| Row { population: l, quantiles: q })
            .collect();
        return to_json(&Table { levels, rows });
    }
    let mut out = String::from("population");
    for l in levels {
        let _ = write!(out, "\t{}", format_sig(*l, 6));
    }
    out.push('\n');
    for (label, q) in labels.iter().zip(values) {
        out.push_str(label);
        for v in q {
            let _ = write!(out, "\t{}", format_sig(*v, 6));
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_quantiles(a: QuantileArgs) -> Result<()> {
    let levels = parse_levels(&a.levels)?;
    let ms = load(&a.data)?;
    let f = fit_model(&ms, &a.pipeline, &a.model)?;
    let values: Vec<Vec<f64>> = (0..ms.num_populations())
        .map(|r| levels.iter().map(|&t| drm_quantile(&f.fit, r, t)).collect())
        .collect::<Result<_>>()?;
    emit(&quantile_table(ms.labels(), &levels, &values, a.json)?)
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(usage(format!("bad --grid {s:?}; expected lo:hi:n")));
    }
    let lo = parse_f64(parts[0], "grid bound")?;
    let hi = parse_f64(parts[1], "grid bound")?;
    let n: usize = parts[2]
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 2)
        .ok_or_else(|| usage(format!("bad grid size in {s:?}; need at least 2 points")))?;
    if !(hi > lo) {
        return Err(usage("grid needs lo < hi"));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

fn curves_output(grid: &[f64], labels: &[String], curves: &[Vec<f64>], json: bool) -> Result<String> {
    if json {
        #[derive(Serialize)]
        struct Curves<'a> {
            x: &'a [f64],
            populations: &'a [String],
            density: &'a [Vec<f64>],
        }
        return to_json(&Curves {
            x: grid,
            populations: labels,
            density: curves,
        });
    }
    let mut out = String::from("x");
    for l in labels {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (i, x) in grid.iter().enumerate() {
        out.push_str(&format_sig(*x, 6));
        for c in curves {
            out.push(',');
            out.push_str(&format_sig(c[i], 6));
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_density(a: DensityArgs) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let ms = load(&a.data)?;
    let f = fit_model(&ms, &a.pipeline, &a.model)?;
    let curves: Vec<Vec<f64>> = (0..ms.num_populations())
        .map(|r| {
            let d = DrmDensity::new(&f.fit, r)?;
            Ok(grid.iter().map(|&x| d.eval(x)).collect())
        })
        .collect::<Result<_>>()?;
    emit(&curves_output(&grid, ms.labels(), &curves, a.json)?)
}

fn cmd_ku(a: KuArgs) -> Result<()> {
    let levels = parse_levels(&a.levels)?;
    let ms = load(&a.data)?;
    let model = ku_fit(&ms, a.l, a.grid)?;
    let quantiles: Vec<Vec<f64>> = (0..ms.num_populations())
        .map(|r| levels.iter().map(|&t| ku_quantile(&model, r, t)).collect())
        .collect::<Result<_>>()?;
    if a.json {
        #[derive(Serialize)]
        struct KuReport {
            summary: crate::baselines::KuSummary,
            levels: Vec<f64>,
            quantiles: Vec<Vec<f64>>,
        }
        return emit(&to_json(&KuReport {
            summary: model.summary(),
            levels,
            quantiles,
        })?);
    }
    let s = model.summary();
    let mut out = String::from("component\teigenvalue\n");
    for (j, v) in s.eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{j}\t{}", format_sig(*v, 6));
    }
    out.push('\n');
    out.push_str(&quantile_table(ms.labels(), &levels, &quantiles, false)?);
    emit(&out)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("DRM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .map(Some)
            .ok_or_else(|| usage(format!("bad DRM_THREADS {v:?}"))),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let id: ScenarioId = a.scenario.parse()?;
    let estimators = Estimator::parse_list(&a.estimators)?;
    let spec = ScenarioSpec::new(id, a.n, a.reps, a.seed)?;
    let report = simbench::run_benchmark(&spec, &estimators, threads_from_env()?)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.raw {
        write_file(path, &report.raw_csv())?;
    }
    let text = if a.json { to_json(&report)? } else { report.to_tsv() };
    match &a.out {
        Some(path) => write_file(path, &text),
        None => emit(&text),
    }
}
