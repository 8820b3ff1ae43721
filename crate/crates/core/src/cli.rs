//! Command-line front end.
//!
//! Exit status: 0 on success, 2 for invalid flags or arguments, 1 when a
//! computation fails. Failures print one `error:` line on stderr.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    self, run_convergence_study, surface, write_study_csv, write_surface_csv, StudyConfig,
    TestFunction, DEFAULT_LADDER,
};
use crate::fmt::g17;
use crate::geometry::{build_patch_cover, grid_coords, read_points_csv, PointSet};
use crate::kernels::ShapeParameter;
use crate::localfit::{FitConfig, DEFAULT_MDI};
use crate::pum::{error_bound_report, fit_global_with, Deriv, GlobalModel, ERROR_BOUND_SLACK};
use crate::{Execution, Point};

/// Largest tolerated `|Σ ω − 1|` in `verify`.
pub const PARTITION_OF_UNITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "drrbfpu",
    version,
    about = "Rational RBF partition-of-unity approximation of 2-D functions and their first derivatives"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convergence study over a ladder of uniform node grids.
    Study(StudyArgs),
    /// Fit a global model and save it.
    Fit(FitArgs),
    /// Evaluate a saved model at the points of a CSV file.
    Eval(EvalArgs),
    /// Approximate and exact values on an evaluation grid.
    DumpSurface(DumpSurfaceArgs),
    /// Check partition of unity and the error bound on a benchmark fit.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Number of patches, a perfect square m² (m ≥ 2).
    #[arg(long, default_value_t = 1024)]
    pub n_patches: usize,
    /// Shape parameter of the C6 Matérn kernel.
    #[arg(long, default_value_t = 35.0)]
    pub shape_c: f64,
    /// Patch radius as a multiple of the centre spacing.
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
    /// Absolute diagonal increment of the kernel matrix.
    #[arg(long, default_value_t = DEFAULT_MDI)]
    pub mdi_mu: f64,
}

impl ModelArgs {
    fn fit_config(&self) -> Result<FitConfig, CliError> {
        let shape =
            ShapeParameter::new(self.shape_c).map_err(|e| CliError::Usage(e.to_string()))?;
        let config = FitConfig::default().with_shape(shape).with_mu(self.mdi_mu);
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, default_value = "steep-front")]
    pub function: TestFunction,
    /// Node counts, comma separated; each a perfect square.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LADDER.to_vec())]
    pub n_ladder: Vec<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Derivative whose error is reported: x or y.
    #[arg(long, default_value = "x")]
    pub deriv: Deriv,
    /// Side of the uniform evaluation grid (boundaries included).
    #[arg(long, default_value_t = 100)]
    pub eval_grid: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with columns `x,y` and optionally `f`.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Sample this function (required unless the CSV has an `f` column).
    #[arg(long)]
    pub function: Option<TestFunction>,
    /// Uniform grid size when no point file is given.
    #[arg(long, default_value_t = 1089)]
    pub n_nodes: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with columns `x,y`.
    #[arg(long)]
    pub points: PathBuf,
    /// none, x or y.
    #[arg(long, default_value = "none")]
    pub deriv: Deriv,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpSurfaceArgs {
    #[arg(long, default_value = "steep-front")]
    pub function: TestFunction,
    #[arg(long, default_value_t = 16641)]
    pub n_nodes: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "none")]
    pub deriv: Deriv,
    #[arg(long, default_value_t = 100)]
    pub eval_grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "steep-front")]
    pub function: TestFunction,
    #[arg(long, default_value_t = 4225)]
    pub n_nodes: usize,
    #[arg(long, default_value_t = 64)]
    pub n_patches: usize,
    #[arg(long, default_value_t = 35.0)]
    pub shape_c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
    #[arg(long, default_value_t = DEFAULT_MDI)]
    pub mdi_mu: f64,
    #[arg(long, default_value_t = 100)]
    pub eval_grid: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m,
        }
    }
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.message().replace('\n', " ");
            eprintln!("error: {line}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Study(a) => study(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::DumpSurface(a) => dump_surface(a),
        Command::Verify(a) => verify(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| fail(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn usage_or_failure(e: bench::BenchError) -> CliError {
    match e {
        bench::BenchError::InvalidArgument(m) => CliError::Usage(m),
        other => fail(other),
    }
}

fn study(a: StudyArgs) -> Result<(), CliError> {
    let config = StudyConfig {
        function: a.function,
        n_ladder: a.n_ladder,
        n_patches: a.model.n_patches,
        shape_c: a.model.shape_c,
        overlap: a.model.overlap,
        mu: a.model.mdi_mu,
        eval_grid: a.eval_grid,
        deriv: a.deriv,
    };
    config.validate().map_err(usage_or_failure)?;
    let rows = run_convergence_study(&config).map_err(usage_or_failure)?;
    let mut w = output(a.out.as_deref())?;
    write_study_csv(&rows, &config, &mut w).map_err(fail)?;
    w.flush().map_err(fail)
}

fn check_cover_args(n_patches: usize, overlap: f64) -> Result<(), CliError> {
    let m = (n_patches as f64).sqrt().round() as usize;
    if m < 2 || m * m != n_patches {
        return Err(CliError::Usage(format!(
            "--n-patches must be m² with m ≥ 2, got {n_patches}"
        )));
    }
    if !(overlap.is_finite() && overlap >= std::f64::consts::FRAC_1_SQRT_2) {
        return Err(CliError::Usage(format!(
            "--overlap must be at least 1/√2, got {overlap}"
        )));
    }
    Ok(())
}

fn fit_benchmark(
    function: TestFunction,
    n_nodes: usize,
    model: &ModelArgs,
) -> Result<GlobalModel, CliError> {
    let config = model.fit_config()?;
    check_cover_args(model.n_patches, model.overlap)?;
    bench::grid_side(n_nodes).map_err(usage_or_failure)?;
    bench::fit_reference_model(
        function,
        n_nodes,
        model.n_patches,
        model.overlap,
        &config,
        Execution::default(),
    )
    .map_err(usage_or_failure)
}

fn fit(a: FitArgs) -> Result<(), CliError> {
    let config = a.model.fit_config()?;
    check_cover_args(a.model.n_patches, a.model.overlap)?;
    let model = match &a.points {
        None => {
            let function = a.function.ok_or_else(|| {
                CliError::Usage("--function is required when --points is not given".into())
            })?;
            fit_benchmark(function, a.n_nodes, &a.model)?
        }
        Some(path) => {
            let (coords, f_column) = read_points_csv(open(path)?).map_err(fail)?;
            let values = match (f_column, a.function) {
                (Some(f), _) => f,
                (None, Some(function)) => coords
                    .iter()
                    .map(|&p| function.value(p))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(fail)?,
                (None, None) => {
                    return Err(CliError::Usage(
                        "point file has no `f` column; pass --function".into(),
                    ))
                }
            };
            let points = PointSet::new(coords).map_err(fail)?;
            let cover = build_patch_cover(a.model.n_patches, a.model.overlap).map_err(fail)?;
            fit_global_with(&points, &values, &cover, &config, Execution::default())
                .map_err(fail)?
        }
    };
    let mut w = output(Some(&a.out))?;
    model.write_to(&mut w).map_err(fail)?;
    w.flush().map_err(fail)
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let model = GlobalModel::read_from(BufReader::new(open(&a.model)?)).map_err(fail)?;
    let (points, _) = read_points_csv(open(&a.points)?).map_err(fail)?;
    let values = model
        .eval_points(&points, a.deriv, Execution::default())
        .map_err(fail)?;
    let mut w = output(a.out.as_deref())?;
    write_values(&mut w, &points, &values).map_err(fail)?;
    w.flush().map_err(fail)
}

fn write_values<W: Write>(w: &mut W, points: &[Point], values: &[f64]) -> io::Result<()> {
    writeln!(w, "x,y,value")?;
    for (p, v) in points.iter().zip(values) {
        writeln!(w, "{},{},{}", g17(p[0]), g17(p[1]), g17(*v))?;
    }
    Ok(())
}

fn dump_surface(a: DumpSurfaceArgs) -> Result<(), CliError> {
    if a.eval_grid < 2 {
        return Err(CliError::Usage("--eval-grid must be at least 2".into()));
    }
    let model = fit_benchmark(a.function, a.n_nodes, &a.model)?;
    let rows = surface(
        &model,
        a.function,
        a.eval_grid,
        a.deriv,
        Execution::default(),
    )
    .map_err(fail)?;
    let mut w = output(a.out.as_deref())?;
    write_surface_csv(&rows, &mut w).map_err(fail)?;
    w.flush().map_err(fail)
}

fn verify(a: VerifyArgs) -> Result<(), CliError> {
    if a.eval_grid < 2 {
        return Err(CliError::Usage("--eval-grid must be at least 2".into()));
    }
    let model_args = ModelArgs {
        n_patches: a.n_patches,
        shape_c: a.shape_c,
        overlap: a.overlap,
        mdi_mu: a.mdi_mu,
    };
    let model = fit_benchmark(a.function, a.n_nodes, &model_args)?;
    let points: Vec<Point> = grid_coords(a.eval_grid)
        .into_iter()
        .map(|p| a.function.prepare_point(p))
        .collect();

    let mut ok = true;
    let defect = model.max_partition_of_unity_defect(&points).map_err(fail)?;
    let pu_ok = defect <= PARTITION_OF_UNITY_TOLERANCE;
    ok &= pu_ok;
    println!(
        "{} partition-of-unity max|sum(w)-1| = {}",
        verdict(pu_ok),
        crate::fmt::e(defect, 3)
    );
    for deriv in [Deriv::None, Deriv::Dx] {
        let f = a.function;
        let report = error_bound_report(
            &model,
            |p| f.eval(p, deriv).unwrap_or(f64::NAN),
            &points,
            deriv,
        )
        .map_err(fail)?;
        let pass = report.violations == 0;
        ok &= pass;
        println!(
            "{} error-bound deriv={} violations={}/{} max_excess={} (slack {})",
            verdict(pass),
            deriv,
            report.violations,
            report.points,
            crate::fmt::e(report.max_excess, 3),
            crate::fmt::e(ERROR_BOUND_SLACK, 0),
        );
    }
    if ok {
        Ok(())
    } else {
        Err(fail("verification failed"))
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
