//! Convergence studies on the two benchmark functions.
//!
//! * `steep-front`: `atan(125(s − 0.92))`, `s = ‖(x, y) − (1.5, 0.25)‖`, a
//!   sharp circular front crossing the unit square.
//! * `tan-lines`: `tan(9(y − x) + 1) / (tan 9 + 1)`, with poles along lines
//!   parallel to `y = x`.
//!
//! A study walks a ladder of uniform node grids, fits the global model on
//! each, and measures ℓ₂ relative errors of the function and one first
//! partial derivative on a uniform evaluation grid. Orders are
//! `log₂(e_prev / e_curr)`; each ladder rung halves the node spacing.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::fmt::{e as fmt_e, g17, shortest};
use crate::geometry::{build_patch_cover, grid_coords, PointSet};
use crate::kernels::ShapeParameter;
use crate::localfit::{FitConfig, DEFAULT_MDI};
use crate::par::{map_slice, Execution};
use crate::pum::{fit_global_with, Deriv, GlobalModel, PumError};
use crate::Point;

/// Points closer than this to a `tan-lines` pole line are nudged.
pub const SINGULAR_NUDGE_RADIUS: f64 = 1e-10;
/// Size of the nudge, applied along x.
pub const SINGULAR_NUDGE: f64 = 1e-8;
/// `tan-lines` refuses to evaluate this close to a pole line.
pub const SINGULAR_REJECT_RADIUS: f64 = 1e-12;

/// Node counts of the reference ladder: 33², 65², 129², 256².
pub const DEFAULT_LADDER: [usize; 4] = [1089, 4225, 16641, 65536];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("({x}, {y}) lies on a singular line of tan-lines", x = point[0], y = point[1])]
    SingularLine { point: Point },
    #[error("relative error undefined: exact data has zero norm")]
    ZeroNorm,
    #[error("N = {n}: {source}")]
    Rung { n: usize, source: PumError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// steep-front

const T1_CENTER: Point = [1.5, 0.25];
const T1_RADIUS: f64 = 0.92;
const T1_SLOPE: f64 = 125.0;

#[inline]
fn t1_distance(x: f64, y: f64) -> f64 {
    let s = (x - T1_CENTER[0]).hypot(y - T1_CENTER[1]);
    // the centre lies outside the unit square
    debug_assert!(s > 0.0);
    s
}

pub fn test1_value(x: f64, y: f64) -> f64 {
    (T1_SLOPE * (t1_distance(x, y) - T1_RADIUS)).atan()
}

/// `125 (x − 1.5) / (s (1 + 125² (s − 0.92)²))`.
pub fn test1_dx(x: f64, y: f64) -> f64 {
    let s = t1_distance(x, y);
    let t = T1_SLOPE * (s - T1_RADIUS);
    T1_SLOPE * (x - T1_CENTER[0]) / (s * (1.0 + t * t))
}

pub fn test1_dy(x: f64, y: f64) -> f64 {
    let s = t1_distance(x, y);
    let t = T1_SLOPE * (s - T1_RADIUS);
    T1_SLOPE * (y - T1_CENTER[1]) / (s * (1.0 + t * t))
}

// ---------------------------------------------------------------------------
// tan-lines

#[inline]
fn t2_argument(x: f64, y: f64) -> f64 {
    9.0 * (y - x) + 1.0
}

#[inline]
fn t2_scale() -> f64 {
    9f64.tan() + 1.0
}

/// Euclidean distance from `(x, y)` to the nearest pole line
/// `9(y − x) + 1 = π/2 + kπ`.
pub fn tan_lines_pole_distance(x: f64, y: f64) -> f64 {
    let u = t2_argument(x, y);
    let k = ((u - FRAC_PI_2) / PI).round();
    (u - (FRAC_PI_2 + k * PI)).abs() / (9.0 * std::f64::consts::SQRT_2)
}

/// Moves a point sitting within [`SINGULAR_NUDGE_RADIUS`] of a pole line by
/// [`SINGULAR_NUDGE`] in x (towards the interior at `x = 1`).
pub fn nudge_off_pole_lines(p: Point) -> Point {
    if tan_lines_pole_distance(p[0], p[1]) < SINGULAR_NUDGE_RADIUS {
        let step = if p[0] + SINGULAR_NUDGE <= 1.0 {
            SINGULAR_NUDGE
        } else {
            -SINGULAR_NUDGE
        };
        [p[0] + step, p[1]]
    } else {
        p
    }
}

fn t2_check(x: f64, y: f64) -> Result<f64, BenchError> {
    if tan_lines_pole_distance(x, y) < SINGULAR_REJECT_RADIUS {
        Err(BenchError::SingularLine { point: [x, y] })
    } else {
        Ok(t2_argument(x, y))
    }
}

pub fn test2_value(x: f64, y: f64) -> Result<f64, BenchError> {
    Ok(t2_check(x, y)?.tan() / t2_scale())
}

/// `−9 sec²(9(y − x) + 1) / (tan 9 + 1)`.
pub fn test2_dx(x: f64, y: f64) -> Result<f64, BenchError> {
    let c = t2_check(x, y)?.cos();
    Ok(-9.0 / (c * c) / t2_scale())
}

pub fn test2_dy(x: f64, y: f64) -> Result<f64, BenchError> {
    Ok(-test2_dx(x, y)?)
}

/// The benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestFunction {
    SteepFront,
    TanLines,
}

impl TestFunction {
    pub fn id(self) -> &'static str {
        match self {
            TestFunction::SteepFront => "steep-front",
            TestFunction::TanLines => "tan-lines",
        }
    }

    pub fn value(self, p: Point) -> Result<f64, BenchError> {
        match self {
            TestFunction::SteepFront => Ok(test1_value(p[0], p[1])),
            TestFunction::TanLines => test2_value(p[0], p[1]),
        }
    }

    pub fn d_dx(self, p: Point) -> Result<f64, BenchError> {
        match self {
            TestFunction::SteepFront => Ok(test1_dx(p[0], p[1])),
            TestFunction::TanLines => test2_dx(p[0], p[1]),
        }
    }

    pub fn d_dy(self, p: Point) -> Result<f64, BenchError> {
        match self {
            TestFunction::SteepFront => Ok(test1_dy(p[0], p[1])),
            TestFunction::TanLines => test2_dy(p[0], p[1]),
        }
    }

    pub fn eval(self, p: Point, deriv: Deriv) -> Result<f64, BenchError> {
        match deriv {
            Deriv::None => self.value(p),
            Deriv::Dx => self.d_dx(p),
            Deriv::Dy => self.d_dy(p),
        }
    }

    /// Identity for `steep-front`; pole-line nudging for `tan-lines`.
    pub fn prepare_point(self, p: Point) -> Point {
        match self {
            TestFunction::SteepFront => p,
            TestFunction::TanLines => nudge_off_pole_lines(p),
        }
    }
}

impl FromStr for TestFunction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "steep-front" => Ok(TestFunction::SteepFront),
            "tan-lines" => Ok(TestFunction::TanLines),
            other => Err(format!(
                "unknown function `{other}` (expected steep-front or tan-lines)"
            )),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// `‖exact − approx‖₂ / ‖exact‖₂`.
pub fn relative_l2_error(approx: &[f64], exact: &[f64]) -> Result<f64, BenchError> {
    if approx.len() != exact.len() {
        return Err(BenchError::InvalidArgument(format!(
            "{} approximations for {} exact values",
            approx.len(),
            exact.len()
        )));
    }
    let den: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(BenchError::ZeroNorm);
    }
    let num: f64 = exact
        .iter()
        .zip(approx)
        .map(|(e, a)| (e - a) * (e - a))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// `log₂(e_prev / e_curr)`.
pub fn convergence_order(e_prev: f64, e_curr: f64) -> Result<f64, BenchError> {
    if !(e_prev > 0.0 && e_curr > 0.0) {
        return Err(BenchError::InvalidArgument(format!(
            "errors must be positive, got {e_prev} and {e_curr}"
        )));
    }
    Ok((e_prev / e_curr).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub function: TestFunction,
    /// Node counts, each a perfect square, strictly increasing.
    pub n_ladder: Vec<usize>,
    pub n_patches: usize,
    pub shape_c: f64,
    pub overlap: f64,
    pub mu: f64,
    pub eval_grid: usize,
    /// Direction of the derivative whose error is reported as `e1`.
    pub deriv: Deriv,
}

impl StudyConfig {
    /// The reference experiment for `function`.
    pub fn reference(function: TestFunction) -> Self {
        Self {
            function,
            n_ladder: DEFAULT_LADDER.to_vec(),
            n_patches: 1024,
            shape_c: 35.0,
            overlap: 1.0,
            mu: DEFAULT_MDI,
            eval_grid: 100,
            deriv: Deriv::Dx,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidArgument(m));
        if self.n_ladder.is_empty() {
            return bad("empty node ladder".into());
        }
        if !self.n_ladder.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!(
                "node ladder must increase strictly: {:?}",
                self.n_ladder
            ));
        }
        for &n in &self.n_ladder {
            grid_side(n)?;
        }
        let m = (self.n_patches as f64).sqrt().round() as usize;
        if m * m != self.n_patches || m < 2 {
            return bad(format!(
                "patch count must be m² with m ≥ 2, got {}",
                self.n_patches
            ));
        }
        if let Err(e) = ShapeParameter::new(self.shape_c) {
            return bad(e.to_string());
        }
        if !(self.overlap.is_finite() && self.overlap >= std::f64::consts::FRAC_1_SQRT_2) {
            return bad(format!(
                "overlap must be at least 1/√2, got {}",
                self.overlap
            ));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return bad(format!("mu must be nonnegative, got {}", self.mu));
        }
        if self.eval_grid < 2 {
            return bad(format!(
                "evaluation grid side must be ≥ 2, got {}",
                self.eval_grid
            ));
        }
        if self.deriv == Deriv::None {
            return bad("derivative axis must be x or y".into());
        }
        Ok(())
    }

    pub fn fit_config(&self) -> Result<FitConfig, BenchError> {
        let shape = ShapeParameter::new(self.shape_c)
            .map_err(|e| BenchError::InvalidArgument(e.to_string()))?;
        Ok(FitConfig::default().with_shape(shape).with_mu(self.mu))
    }
}

/// `√n` when `n` is a perfect square with side ≥ 2.
pub fn grid_side(n: usize) -> Result<usize, BenchError> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || side < 2 {
        return Err(BenchError::InvalidArgument(format!(
            "node count {n} is not a square grid n² with n ≥ 2"
        )));
    }
    Ok(side)
}

/// One rung of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub e0: f64,
    pub order0: Option<f64>,
    pub e1: f64,
    pub order1: Option<f64>,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
}

/// Uniform `side × side` nodes for `function`, with pole-line nudging.
pub fn study_nodes(function: TestFunction, side: usize) -> Result<PointSet, BenchError> {
    let coords = grid_coords(side)
        .into_iter()
        .map(|p| function.prepare_point(p))
        .collect();
    PointSet::new(coords).map_err(|e| BenchError::InvalidArgument(e.to_string()))
}

/// Samples `function` at `points`.
pub fn sample(
    function: TestFunction,
    points: &[Point],
    deriv: Deriv,
) -> Result<Vec<f64>, BenchError> {
    points.iter().map(|&p| function.eval(p, deriv)).collect()
}

/// Fits the global model for `function` on a `side × side` grid.
pub fn fit_reference_model(
    function: TestFunction,
    n_nodes: usize,
    n_patches: usize,
    overlap: f64,
    config: &FitConfig,
    exec: Execution,
) -> Result<GlobalModel, BenchError> {
    let side = grid_side(n_nodes)?;
    let nodes = study_nodes(function, side)?;
    let values = sample(function, nodes.coords(), Deriv::None)?;
    let wrap = |source: PumError| BenchError::Rung { n: n_nodes, source };
    let cover = build_patch_cover(n_patches, overlap).map_err(|e| wrap(e.into()))?;
    fit_global_with(&nodes, &values, &cover, config, exec).map_err(wrap)
}

/// Runs every rung of the ladder in order.
pub fn run_convergence_study(config: &StudyConfig) -> Result<Vec<ConvergenceRow>, BenchError> {
    run_convergence_study_with(config, Execution::default())
}

pub fn run_convergence_study_with(
    config: &StudyConfig,
    exec: Execution,
) -> Result<Vec<ConvergenceRow>, BenchError> {
    config.validate()?;
    let fit_config = config.fit_config()?;
    let f = config.function;
    let eval_points: Vec<Point> = grid_coords(config.eval_grid)
        .into_iter()
        .map(|p| f.prepare_point(p))
        .collect();
    let exact0 = sample(f, &eval_points, Deriv::None)?;
    let exact1 = sample(f, &eval_points, config.deriv)?;
    let axis = match config.deriv {
        Deriv::Dy => 1,
        _ => 0,
    };

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(config.n_ladder.len());
    for &n in &config.n_ladder {
        let started = Instant::now();
        let model = fit_reference_model(f, n, config.n_patches, config.overlap, &fit_config, exec)?;
        let fit_seconds = started.elapsed().as_secs_f64();

        let started = Instant::now();
        let approx = model
            .eval_points_with_gradient(&eval_points, exec)
            .map_err(|source| BenchError::Rung { n, source })?;
        let eval_seconds = started.elapsed().as_secs_f64();

        let a0: Vec<f64> = approx.iter().map(|(v, _)| *v).collect();
        let a1: Vec<f64> = approx.iter().map(|(_, g)| g[axis]).collect();
        let e0 = relative_l2_error(&a0, &exact0)?;
        let e1 = relative_l2_error(&a1, &exact1)?;
        let (order0, order1) = match rows.last() {
            Some(prev) => (
                convergence_order(prev.e0, e0).ok(),
                convergence_order(prev.e1, e1).ok(),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n,
            e0,
            order0,
            e1,
            order1,
            fit_seconds,
            eval_seconds,
        });
    }
    Ok(rows)
}

/// Column header of the study CSV.
pub const STUDY_CSV_HEADER: &str = "N,Nc,c,overlap,mu,e0,order0,e1,order1,fit_seconds,eval_seconds";

/// Writes a `#` metadata line, the header and one row per rung.
pub fn write_study_csv<W: Write>(
    rows: &[ConvergenceRow],
    config: &StudyConfig,
    mut w: W,
) -> Result<(), BenchError> {
    writeln!(
        w,
        "# drrbfpu study function={} n_patches={} c={} overlap={} mu={} deriv={} eval_grid={}x{} eval_boundaries=included",
        config.function,
        config.n_patches,
        shortest(config.shape_c),
        shortest(config.overlap),
        shortest(config.mu),
        config.deriv,
        config.eval_grid,
        config.eval_grid,
    )?;
    writeln!(w, "{STUDY_CSV_HEADER}")?;
    let order = |o: Option<f64>| o.map(|v| format!("{v:.3}")).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
            r.n,
            config.n_patches,
            shortest(config.shape_c),
            shortest(config.overlap),
            shortest(config.mu),
            fmt_e(r.e0, 6),
            order(r.order0),
            fmt_e(r.e1, 6),
            order(r.order1),
            r.fit_seconds,
            r.eval_seconds,
        )?;
    }
    Ok(())
}

/// One evaluation point of a surface dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub x: f64,
    pub y: f64,
    pub approx: f64,
    pub exact: f64,
    pub abs_err: f64,
}

/// Approximate and exact `D f` on a `side × side` evaluation grid.
pub fn surface(
    model: &GlobalModel,
    function: TestFunction,
    side: usize,
    deriv: Deriv,
    exec: Execution,
) -> Result<Vec<SurfaceRow>, BenchError> {
    if side < 2 {
        return Err(BenchError::InvalidArgument(format!(
            "evaluation grid side must be ≥ 2, got {side}"
        )));
    }
    let points: Vec<Point> = grid_coords(side)
        .into_iter()
        .map(|p| function.prepare_point(p))
        .collect();
    let approx = map_slice(exec, &points, |&p| model.eval(p, deriv))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| BenchError::Rung { n: 0, source })?;
    points
        .iter()
        .zip(approx)
        .map(|(&p, a)| {
            let exact = function.eval(p, deriv)?;
            Ok(SurfaceRow {
                x: p[0],
                y: p[1],
                approx: a,
                exact,
                abs_err: (a - exact).abs(),
            })
        })
        .collect()
}

pub fn write_surface_csv<W: Write>(rows: &[SurfaceRow], mut w: W) -> Result<(), BenchError> {
    writeln!(w, "x,y,approx,exact,abs_err")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            g17(r.x),
            g17(r.y),
            g17(r.approx),
            g17(r.exact),
            g17(r.abs_err)
        )?;
    }
    Ok(())
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn steep_front_reference_values() {
        // mpmath, 40 digits
        assert_relative_eq!(
            test1_value(0.0, 0.0),
            1.5574791105242550545,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            test1_dx(0.3, 0.7),
            -0.057259536845841434570,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            test1_dy(0.3, 0.7),
            0.021472326317190537964,
            max_relative = 1e-12
        );
        // on the circle s = 0.92
        let t = 2.5f64;
        let p = [1.5 + 0.92 * t.cos(), 0.25 + 0.92 * t.sin()];
        assert!(test1_value(p[0], p[1]).abs() < 1e-12);
    }

    #[test]
    fn tan_lines_reference_values() {
        assert_relative_eq!(
            test2_value(0.4, 0.4).unwrap(),
            2.8436228851597617689,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            test2_value(0.2, 0.5).unwrap(),
            1.1406809159229324675,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            test2_dx(0.2, 0.5).unwrap(),
            -22.846413181657192177,
            max_relative = 1e-12
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (x, y) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            if let (Ok(a), Ok(b)) = (test2_dx(x, y), test2_dy(x, y)) {
                assert_eq!(a + b, 0.0);
            }
        }
    }

    #[test]
    fn pole_lines_are_detected() {
        for k in 2..=7 {
            let b = ((k as f64 - 4.5) * PI - 1.0) / 9.0;
            // a point of the line y = x + b inside the square
            let x = if b >= 0.0 { 0.1 } else { 0.9 };
            let p = [x, x + b];
            assert!(tan_lines_pole_distance(p[0], p[1]) < 1e-15);
            assert!(matches!(
                test2_value(p[0], p[1]),
                Err(BenchError::SingularLine { .. })
            ));
            let q = nudge_off_pole_lines(p);
            assert_eq!(q, [p[0] + SINGULAR_NUDGE, p[1]]);
            assert!(test2_value(q[0], q[1]).is_ok());
        }
        assert_eq!(nudge_off_pole_lines([0.3, 0.3]), [0.3, 0.3]);
    }

    #[test]
    fn error_metric() {
        let e = [1.0, -2.0, 3.0];
        assert_eq!(relative_l2_error(&e, &e).unwrap(), 0.0);
        let twice: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(relative_l2_error(&twice, &e).unwrap(), 1.0);
        assert!(matches!(
            relative_l2_error(&[1.0], &[0.0]),
            Err(BenchError::ZeroNorm)
        ));
        assert!(relative_l2_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn order_formula() {
        assert!((convergence_order(2.74e-1, 8.66e-2).unwrap() - 1.66).abs() < 0.01);
        assert!((convergence_order(4.43e-3, 2.71e-4).unwrap() - 4.03).abs() < 0.01);
        assert_eq!(convergence_order(0.5, 0.25).unwrap(), 1.0);
        assert!(convergence_order(0.0, 1.0).is_err());
        assert!(convergence_order(1.0, -1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = StudyConfig::reference(TestFunction::SteepFront);
        assert!(c.validate().is_ok());
        c.n_ladder = vec![4225, 1089];
        assert!(c.validate().is_err());
        c.n_ladder = vec![1000];
        assert!(c.validate().is_err());
        c.n_ladder = vec![1089];
        c.deriv = Deriv::None;
        assert!(c.validate().is_err());
        c.deriv = Deriv::Dy;
        c.overlap = 0.5;
        assert!(c.validate().is_err());
        assert_eq!(grid_side(65536).unwrap(), 256);
    }

    #[test]
    fn small_study_writes_csv() {
        let config = StudyConfig {
            n_ladder: vec![289, 1089],
            n_patches: 16,
            ..StudyConfig::reference(TestFunction::SteepFront)
        };
        let rows = run_convergence_study(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].order0.is_none() && rows[1].order0.is_some());
        let mut buf = Vec::new();
        write_study_csv(&rows, &config, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# drrbfpu study function=steep-front"));
        assert_eq!(lines[1], STUDY_CSV_HEADER);
        let first: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(first[0], "289");
        assert_eq!(first[1], "16");
        assert_eq!(first[6], "");
        assert_eq!(first[8], "");
        assert!(first[5].contains("e-"));
    }
}
