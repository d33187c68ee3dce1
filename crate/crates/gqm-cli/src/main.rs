//! Batch front end for the gqm library: single-point QFI reports, (x, y)
//! grid scans, energy-split optimization, and the truncated-basis oracle
//! cross-check.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage/configuration error,
//! 3 numeric failure inside the library.

mod config;

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use gqm::error::GqmError;
use gqm::interferometer::{self, Objective};
use gqm::metrology::{self, DerivativeMethod};
use gqm::{estimation, fock};

/// Grid cells below y = |1 - x| + margin describe non-CP channels and are
/// skipped; the margin also keeps the default scan off the pure-state
/// Williamson boundary.
const CP_MARGIN: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "gqm",
    version,
    about = "Quantum Fisher information and measurement compatibility for Gaussian interferometry"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Information matrices, variance figures and compatibility at one point.
    Qfi(QfiArgs),
    /// Sweep an (x, y) grid and emit one record per valid point.
    Scan(ScanArgs),
    /// Optimize the displacement fraction p of the probe energy.
    Optimize(OptimizeArgs),
    /// Cross-check the Gaussian engine against the number-basis oracle.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    IndCombined,
    IndIndependent,
    Sim,
    All,
}

#[derive(Args)]
struct QfiArgs {
    /// Mean photon number per probe mode.
    #[arg(long)]
    nbar: Option<f64>,
    /// Fraction of the probe energy in displacement (the rest squeezes).
    #[arg(long)]
    p: Option<f64>,
    /// Channel transmissivity/gain parameter x.
    #[arg(long)]
    x: Option<f64>,
    /// Channel noise parameter y.
    #[arg(long)]
    y: Option<f64>,
    /// Interferometer phase (the reported figures do not depend on it).
    #[arg(long)]
    phi: Option<f64>,
    /// Threshold for the compatibility verdicts on J and the F off-diagonals.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Flat key = value file consulted for any flag not given explicitly.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    nbar: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    x_steps: Option<usize>,
    #[arg(long)]
    y_min: Option<f64>,
    #[arg(long)]
    y_max: Option<f64>,
    #[arg(long)]
    y_steps: Option<usize>,
    /// Evaluate points on the exact CP boundary y = |1 - x| instead of
    /// keeping the default safety margin above it.
    #[arg(long)]
    include_boundary: bool,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Thread count for the grid sweep; defaults to available parallelism.
    /// Results are identical for every worker count.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    nbar: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    y: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Probe displacement amplitude (real).
    #[arg(long)]
    alpha: Option<f64>,
    /// Probe squeezing.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    y: Option<f64>,
    /// Thermal occupation of the initial state.
    #[arg(long)]
    nth: Option<f64>,
    /// Photon-number cutoff of the truncated basis.
    #[arg(long)]
    cutoff: Option<usize>,
    /// Largest tolerated |engine - oracle| entry of F and J.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Additional random parameter tuples to check beyond the base point.
    #[arg(long)]
    families: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Check(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Check(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<GqmError> for CliError {
    fn from(e: GqmError) -> Self {
        match e {
            GqmError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

/// Flag value if given, else config file, else default; missing everywhere
/// with no default is a usage error.
struct Resolver {
    cfg: HashMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Self, CliError> {
        let cfg = match config {
            Some(path) => config::load(path).map_err(CliError::Usage)?,
            None => HashMap::new(),
        };
        Ok(Self { cfg })
    }

    fn lookup<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.cfg.get(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("config key '{key}': cannot parse value '{s}'"))
            }),
        }
    }

    fn f64(&self, flag: Option<f64>, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(v) = self.lookup::<f64>(key)? {
            return Ok(v);
        }
        default.ok_or_else(|| CliError::Usage(format!("missing parameter: --{key} (or '{key}' in the config file)")))
    }

    fn usize(&self, flag: Option<usize>, key: &str, default: usize) -> Result<usize, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.lookup::<usize>(key)?.unwrap_or(default))
    }

    fn u64(&self, flag: Option<u64>, key: &str, default: u64) -> Result<u64, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.lookup::<u64>(key)?.unwrap_or(default))
    }

    fn format(
        &self,
        flag: Option<OutputFormat>,
        default: OutputFormat,
    ) -> Result<OutputFormat, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.cfg.get("format").map(String::as_str) {
            None => Ok(default),
            Some("csv") => Ok(OutputFormat::Csv),
            Some("json") => Ok(OutputFormat::Json),
            Some(other) => Err(CliError::Usage(format!(
                "config key 'format': expected 'csv' or 'json', got '{other}'"
            ))),
        }
    }

    fn output(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.cfg.get("output").map(PathBuf::from))
    }

    fn workers(&self, flag: Option<usize>) -> Result<Option<usize>, CliError> {
        let n = match flag {
            Some(n) => Some(n),
            None => self.lookup::<usize>("workers")?,
        };
        if n == Some(0) {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        Ok(n)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Qfi(args) => cmd_qfi(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

// ---------------------------------------------------------------- output --

/// JSON with every f64 printed as 17 significant digits in scientific
/// notation, so records parse back bit-for-bit.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        writer: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn to_json_string(value: &serde_json::Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(out).expect("json is utf-8")
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, format!("{text}\n"))
            .map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")
                .map_err(|e| CliError::Numeric(format!("cannot write to stdout: {e}")))
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

// ------------------------------------------------------------------- qfi --

fn cmd_qfi(args: QfiArgs) -> Result<(), CliError> {
    let r = Resolver::new(args.config.as_ref())?;
    let nbar = r.f64(args.nbar, "nbar", None)?;
    let p = r.f64(args.p, "p", None)?;
    let x = r.f64(args.x, "x", None)?;
    let y = r.f64(args.y, "y", None)?;
    let phi = r.f64(args.phi, "phi", Some(0.0))?;
    let tol = r.f64(args.tolerance, "tolerance", Some(1e-8))?;
    if r.format(args.format, OutputFormat::Json)? != OutputFormat::Json {
        return Err(CliError::Usage("the qfi command emits json only".into()));
    }

    let family = interferometer::scheme_family(nbar, p)?;
    let report = metrology::qfi_matrix(&family, &[phi, x, y], &DerivativeMethod::Analytic)?;
    let delta_ind = estimation::delta_ind(&report.f)?;
    let delta_sim = estimation::delta_sim(&report.f)?;
    let compat = estimation::compatibility_report(&report.f, &report.j, tol, tol)?;

    let regularized: usize = report.diagnostics.regularized_terms.iter().sum();
    if report.diagnostics.near_pure_boundary {
        eprintln!(
            "warning: near pure-state boundary (min symplectic eigenvalue {:.12}); \
             {regularized} regularized SLD term(s)",
            report.nu.min()
        );
    }

    let value = json!({
        "input": { "nbar": nbar, "p": p, "x": x, "y": y, "phi": phi },
        "f": matrix_rows(&report.f),
        "j": matrix_rows(&report.j),
        "symplectic_spectrum": report.nu.iter().copied().collect::<Vec<f64>>(),
        "delta_ind": delta_ind,
        "delta_sim": delta_sim,
        "ratio": delta_ind / delta_sim,
        "compatibility": {
            "commuting_slds": compat.commuting_slds,
            "max_abs_j": compat.max_abs_j,
            "independent_parameters": compat.independent_parameters,
            "max_normalized_offdiag": compat.max_normalized_offdiag,
            "single_probe_optimality": compat.single_probe_optimality,
            "kappa": compat.kappa,
            "tol_j": compat.tol_j,
            "tol_f": compat.tol_f,
        },
        "diagnostics": {
            "derivative_method": "analytic",
            "near_pure_boundary": report.diagnostics.near_pure_boundary,
            "regularized_terms": report.diagnostics.regularized_terms,
            "warnings": report.diagnostics.warnings,
        },
    });
    emit(&to_json_string(&value), r.output(args.output).as_ref())
}

// ------------------------------------------------------------------ scan --

struct ScanRow {
    x: f64,
    y: f64,
    p_ind_com: f64,
    p_phi: f64,
    p_x: f64,
    p_y: f64,
    p_sim: f64,
    delta_ind_com: f64,
    delta_ind_ind: f64,
    delta_sim: f64,
    ratio: f64,
}

fn scan_row(nbar: f64, x: f64, y: f64) -> Result<ScanRow, GqmError> {
    let ind = interferometer::optimize_p(nbar, x, y, Objective::IndCombined)?;
    let (delta_ind_ind, p_each) = interferometer::delta_ind_independent(nbar, x, y)?;
    let sim = interferometer::optimize_p(nbar, x, y, Objective::Sim)?;
    Ok(ScanRow {
        x,
        y,
        p_ind_com: ind.p_opt,
        p_phi: p_each[0],
        p_x: p_each[1],
        p_y: p_each[2],
        p_sim: sim.p_opt,
        delta_ind_com: ind.delta_opt,
        delta_ind_ind,
        delta_sim: sim.delta_opt,
        ratio: ind.delta_opt / sim.delta_opt,
    })
}

const SCAN_HEADER: &str = "x,y,nbar,p_opt_ind_com,p_opt_ind_ind_phi,p_opt_ind_ind_x,\
p_opt_ind_ind_y,p_opt_sim,delta_ind_com,delta_ind_ind,delta_sim,ratio";

fn cmd_scan(args: ScanArgs) -> Result<(), CliError> {
    let r = Resolver::new(args.config.as_ref())?;
    let nbar = r.f64(args.nbar, "nbar", None)?;
    let phi = r.f64(args.phi, "phi", Some(0.0))?;
    let x_min = r.f64(args.x_min, "x-min", Some(0.25))?;
    let x_max = r.f64(args.x_max, "x-max", Some(2.0))?;
    let x_steps = r.usize(args.x_steps, "x-steps", 20)?;
    let y_min = r.f64(args.y_min, "y-min", Some(0.5))?;
    let y_max = r.f64(args.y_max, "y-max", Some(2.0))?;
    let y_steps = r.usize(args.y_steps, "y-steps", 20)?;
    let format = r.format(args.format, OutputFormat::Csv)?;
    let workers = r.workers(args.workers)?;
    let output = r.output(args.output);

    if x_steps == 0 || y_steps == 0 {
        return Err(CliError::Usage("empty grid: x-steps and y-steps must be at least 1".into()));
    }
    if !(x_min <= x_max) || !(y_min <= y_max) {
        return Err(CliError::Usage("grid ranges must satisfy min <= max".into()));
    }

    let margin = if args.include_boundary { 0.0 } else { CP_MARGIN };
    let xs = linspace(x_min, x_max, x_steps);
    let ys = linspace(y_min, y_max, y_steps);
    let mut points = Vec::new();
    let mut skipped = 0usize;
    for &yv in &ys {
        for &xv in &xs {
            if yv < (1.0 - xv).abs() + margin {
                skipped += 1;
            } else {
                points.push((xv, yv));
            }
        }
    }

    let sweep = || -> Result<Vec<ScanRow>, GqmError> {
        points
            .par_iter()
            .map(|&(x, y)| scan_row(nbar, x, y))
            .collect()
    };
    let rows = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Numeric(format!("thread pool: {e}")))?
            .install(sweep),
        None => sweep(),
    }?;

    let text = match format {
        OutputFormat::Csv => {
            let mut out = String::with_capacity(64 * (rows.len() + 1));
            out.push_str(SCAN_HEADER);
            for row in &rows {
                out.push('\n');
                let cells = [
                    row.x,
                    row.y,
                    nbar,
                    row.p_ind_com,
                    row.p_phi,
                    row.p_x,
                    row.p_y,
                    row.p_sim,
                    row.delta_ind_com,
                    row.delta_ind_ind,
                    row.delta_sim,
                    row.ratio,
                ];
                let line: Vec<String> = cells.iter().map(|&v| sci(v)).collect();
                out.push_str(&line.join(","));
            }
            out
        }
        OutputFormat::Json => {
            let rows_json: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    json!({
                        "x": row.x,
                        "y": row.y,
                        "nbar": nbar,
                        "p_opt_ind_com": row.p_ind_com,
                        "p_opt_ind_ind_phi": row.p_phi,
                        "p_opt_ind_ind_x": row.p_x,
                        "p_opt_ind_ind_y": row.p_y,
                        "p_opt_sim": row.p_sim,
                        "delta_ind_com": row.delta_ind_com,
                        "delta_ind_ind": row.delta_ind_ind,
                        "delta_sim": row.delta_sim,
                        "ratio": row.ratio,
                    })
                })
                .collect();
            let value = json!({
                "meta": {
                    "nbar": nbar,
                    "phi": phi,
                    "x_range": { "min": x_min, "max": x_max, "steps": x_steps },
                    "y_range": { "min": y_min, "max": y_max, "steps": y_steps },
                    "cp_margin": margin,
                    "evaluated": rows.len(),
                    "skipped": skipped,
                },
                "rows": rows_json,
            });
            to_json_string(&value)
        }
    };
    emit(&text, output.as_ref())
}

// -------------------------------------------------------------- optimize --

fn cmd_optimize(args: OptimizeArgs) -> Result<(), CliError> {
    let r = Resolver::new(args.config.as_ref())?;
    let nbar = r.f64(args.nbar, "nbar", None)?;
    let x = r.f64(args.x, "x", None)?;
    let y = r.f64(args.y, "y", None)?;
    let objective = match args.objective {
        Some(o) => o,
        None => match r.cfg.get("objective").map(String::as_str) {
            None => ObjectiveArg::All,
            Some("ind-combined") => ObjectiveArg::IndCombined,
            Some("ind-independent") => ObjectiveArg::IndIndependent,
            Some("sim") => ObjectiveArg::Sim,
            Some("all") => ObjectiveArg::All,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "config key 'objective': unknown value '{other}'"
                )))
            }
        },
    };

    let mut value = json!({ "input": { "nbar": nbar, "x": x, "y": y } });
    let all = objective == ObjectiveArg::All;
    if all || objective == ObjectiveArg::IndCombined {
        let opt = interferometer::optimize_p(nbar, x, y, Objective::IndCombined)?;
        value["ind_combined"] = json!({
            "p_opt": opt.p_opt,
            "delta_opt": opt.delta_opt,
            "multimodal": opt.multimodal,
        });
    }
    if all || objective == ObjectiveArg::IndIndependent {
        let (delta, p_each) = interferometer::delta_ind_independent(nbar, x, y)?;
        value["ind_independent"] = json!({
            "delta_opt": delta,
            "p_opt_phi": p_each[0],
            "p_opt_x": p_each[1],
            "p_opt_y": p_each[2],
        });
    }
    if all || objective == ObjectiveArg::Sim {
        let opt = interferometer::optimize_p(nbar, x, y, Objective::Sim)?;
        value["sim"] = json!({
            "p_opt": opt.p_opt,
            "delta_opt": opt.delta_opt,
            "multimodal": opt.multimodal,
        });
    }
    emit(&to_json_string(&value), r.output(args.output).as_ref())
}

// ---------------------------------------------------------- oracle-check --

fn oracle_point(
    nth: f64,
    cutoff: usize,
    theta: [f64; 4],
) -> Result<(f64, f64, f64), GqmError> {
    let family = fock::SingleModeFamily { nth, cutoff };
    let oracle = fock::oracle_qfi_j(|t| family.density(t), &theta, 1e-5)?;
    let engine = metrology::qfi_matrix(&family, &theta, &DerivativeMethod::Analytic)?;
    let df = (&oracle.f - &engine.f).amax();
    let dj = (&oracle.j - &engine.j).amax();
    Ok((df, dj, oracle.sld_zero_mean_max))
}

fn cmd_oracle_check(args: OracleArgs) -> Result<(), CliError> {
    let r = Resolver::new(args.config.as_ref())?;
    let alpha = r.f64(args.alpha, "alpha", Some(0.5))?;
    let sq = r.f64(args.r, "r", Some(0.3))?;
    let x = r.f64(args.x, "x", Some(0.7))?;
    let y = r.f64(args.y, "y", Some(0.5))?;
    let nth = r.f64(args.nth, "nth", Some(0.0))?;
    let cutoff = r.usize(args.cutoff, "cutoff", 64)?;
    let tolerance = r.f64(args.tolerance, "tolerance", Some(1e-4))?;
    let families = r.usize(args.families, "families", 0)?;
    let seed = r.u64(args.seed, "seed", 7)?;

    let mut thetas = vec![[alpha, sq, x, y]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..families {
        let a = rng.gen_range(0.1..0.7);
        let rr = rng.gen_range(0.0..0.35);
        let xx: f64 = rng.gen_range(0.6..1.1);
        let gap = (1.0 - xx).abs() + 0.05;
        let yy = rng.gen_range(gap..gap + 0.4);
        thetas.push([a, rr, xx, yy]);
    }

    let mut checks = Vec::with_capacity(thetas.len());
    let mut max_dev = 0.0f64;
    for theta in &thetas {
        let (df, dj, mean) = oracle_point(nth, cutoff, *theta)?;
        max_dev = max_dev.max(df).max(dj);
        checks.push(json!({
            "theta": theta.to_vec(),
            "max_df": df,
            "max_dj": dj,
            "sld_zero_mean": mean,
        }));
    }

    let pass = max_dev <= tolerance;
    let value = json!({
        "nth": nth,
        "cutoff": cutoff,
        "tolerance": tolerance,
        "checks": checks,
        "max_deviation": max_dev,
        "pass": pass,
    });
    emit(&to_json_string(&value), r.output(args.output).as_ref())?;
    eprintln!(
        "oracle check: {} point(s), max deviation {max_dev:.3e}, tolerance {tolerance:.3e}: {}",
        thetas.len(),
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "oracle deviation {max_dev:.3e} exceeds tolerance {tolerance:.3e}"
        )))
    }
}
