//! Partition-of-unity blending of the local rational approximants.
//!
//! Values are blended as `S(x) = Σ ω_ℓ(x) R_ℓ(x)` and first derivatives
//! directly as `Σ ω_ℓ(x) ∂R_ℓ(x)`: only the local approximants are
//! differentiated. The Shepard weights
//! `ω_ℓ = ψ(‖x − x_ℓ‖/ρ_ℓ) / Σ_k ψ(‖x − x_k‖/ρ_k)` use the Wendland C4
//! function `ψ` and are evaluated but never differentiated.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::fmt::g17;
use crate::geometry::{assign_members, GeometryError, PatchCover, PointSet};
use crate::kernels::{distance, wendland_c4, ShapeParameter};
use crate::localfit::{
    fit_local_rational, Axis, EvalError, FitConfig, FitError, LocalRationalModel, ModelKind,
};
use crate::par::{map_range, map_slice, Execution};
use crate::Point;

/// First line of a serialized model.
pub const MODEL_HEADER: &str = "drrbfpu-model v1";

/// What to evaluate: the function or one first partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Deriv {
    None,
    Dx,
    Dy,
}

impl Deriv {
    pub fn axis(self) -> Option<Axis> {
        match self {
            Deriv::None => None,
            Deriv::Dx => Some(Axis::X),
            Deriv::Dy => Some(Axis::Y),
        }
    }
}

impl FromStr for Deriv {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Deriv::None),
            "x" | "dx" => Ok(Deriv::Dx),
            "y" | "dy" => Ok(Deriv::Dy),
            other => Err(format!(
                "unknown derivative `{other}` (expected none, x or y)"
            )),
        }
    }
}

impl fmt::Display for Deriv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Deriv::None => "none",
            Deriv::Dx => "x",
            Deriv::Dy => "y",
        })
    }
}

#[derive(Debug, Error)]
pub enum PumError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("patches with fewer than 2 trial points: {0:?}")]
    UndersizedPatches(Vec<usize>),
    #[error("{} patch fit(s) failed; first: patch {}: {}", .0.len(), .0[0].0, .0[0].1)]
    FitFailures(Vec<(usize, FitError)>),
    #[error("patch {patch}: {source}")]
    Eval { patch: usize, source: EvalError },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shepard weights of the patches covering one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShepardWeights {
    pub patches: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ShepardWeights {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn shepard_from(x: Point, cover: &PatchCover, patches: Vec<usize>) -> ShepardWeights {
    let centers = cover.centers();
    let radii = cover.radii();
    let mut weights: Vec<f64> = patches
        .iter()
        .map(|&l| wendland_c4(distance(x, centers[l]) / radii[l]))
        .collect();
    let total: f64 = weights.iter().sum();
    // ψ > 0 strictly inside every covering disc.
    assert!(
        total > 0.0,
        "Shepard denominator vanished at a covered point"
    );
    for w in &mut weights {
        *w /= total;
    }
    ShepardWeights { patches, weights }
}

/// Shepard weights at `x` over the covering patches.
pub fn shepard_weights(x: Point, cover: &PatchCover) -> Result<ShepardWeights, PumError> {
    let patches = crate::geometry::covering_patches(x, cover)?;
    Ok(shepard_from(x, cover, patches))
}

/// The blended approximant: one local model per patch.
#[derive(Debug, Clone)]
pub struct GlobalModel {
    cover: PatchCover,
    locals: Vec<LocalRationalModel>,
    config: FitConfig,
}

/// Fits every patch; see [`fit_global_with`].
pub fn fit_global(
    points: &PointSet,
    values: &[f64],
    cover: &PatchCover,
    config: &FitConfig,
) -> Result<GlobalModel, PumError> {
    fit_global_with(points, values, cover, config, Execution::default())
}

/// Fits the local approximant of every patch on its member points.
///
/// Patch fits are independent and run under `exec`. Any failed fit aborts
/// the whole model; all failures are reported together.
pub fn fit_global_with(
    points: &PointSet,
    values: &[f64],
    cover: &PatchCover,
    config: &FitConfig,
    exec: Execution,
) -> Result<GlobalModel, PumError> {
    if values.len() != points.len() {
        return Err(PumError::InvalidInput(format!(
            "{} points but {} values",
            points.len(),
            values.len()
        )));
    }
    config
        .validate()
        .map_err(|e| PumError::InvalidInput(e.to_string()))?;
    let membership = assign_members(points, cover)?;
    let undersized = membership.undersized(2);
    if !undersized.is_empty() {
        return Err(PumError::UndersizedPatches(undersized));
    }

    let results = map_range(exec, cover.count(), |l| {
        let idx = membership.members(l);
        let nodes: Vec<Point> = idx.iter().map(|&j| points[j]).collect();
        let vals: Vec<f64> = idx.iter().map(|&j| values[j]).collect();
        fit_local_rational(&nodes, &vals, config).map(|m| m.with_node_indices(idx.to_vec()))
    });

    let mut locals = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (l, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => locals.push(m),
            Err(e) => failures.push((l, e)),
        }
    }
    if !failures.is_empty() {
        return Err(PumError::FitFailures(failures));
    }
    Ok(GlobalModel {
        cover: cover.clone(),
        locals,
        config: *config,
    })
}

impl GlobalModel {
    pub fn cover(&self) -> &PatchCover {
        &self.cover
    }

    pub fn locals(&self) -> &[LocalRationalModel] {
        &self.locals
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    /// Shepard weights at `x`.
    pub fn weights(&self, x: Point) -> Result<ShepardWeights, PumError> {
        shepard_weights(x, &self.cover)
    }

    /// `S(x)` for [`Deriv::None`], otherwise the direct derivative
    /// `Σ ω_ℓ(x) ∂R_ℓ(x)`.
    pub fn eval(&self, x: Point, deriv: Deriv) -> Result<f64, PumError> {
        let w = self.weights(x)?;
        let mut acc = 0.0;
        for (&l, &wl) in w.patches.iter().zip(&w.weights) {
            let local = &self.locals[l];
            let v = match deriv.axis() {
                None => local.eval(x),
                Some(axis) => local.eval_derivative(x, axis),
            }
            .map_err(|source| PumError::Eval { patch: l, source })?;
            acc += wl * v;
        }
        Ok(acc)
    }

    /// Value and both direct partial derivatives in one pass.
    pub fn eval_with_gradient(&self, x: Point) -> Result<(f64, [f64; 2]), PumError> {
        let w = self.weights(x)?;
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for (&l, &wl) in w.patches.iter().zip(&w.weights) {
            let (v, g) = self.locals[l]
                .eval_with_gradient(x)
                .map_err(|source| PumError::Eval { patch: l, source })?;
            value += wl * v;
            grad[0] += wl * g[0];
            grad[1] += wl * g[1];
        }
        Ok((value, grad))
    }

    /// Evaluates at many points under `exec`.
    pub fn eval_points(
        &self,
        points: &[Point],
        deriv: Deriv,
        exec: Execution,
    ) -> Result<Vec<f64>, PumError> {
        map_slice(exec, points, |&x| self.eval(x, deriv))
            .into_iter()
            .collect()
    }

    /// `(S, ∂S/∂x, ∂S/∂y)` at many points.
    pub fn eval_points_with_gradient(
        &self,
        points: &[Point],
        exec: Execution,
    ) -> Result<Vec<(f64, [f64; 2])>, PumError> {
        map_slice(exec, points, |&x| self.eval_with_gradient(x))
            .into_iter()
            .collect()
    }

    /// `max |Σ_ℓ ω_ℓ(x) − 1|` over `points`.
    pub fn max_partition_of_unity_defect(&self, points: &[Point]) -> Result<f64, PumError> {
        max_partition_of_unity_defect(&self.cover, points)
    }
}

/// `max |Σ_ℓ ω_ℓ(x) − 1|` over `points` for a bare cover.
pub fn max_partition_of_unity_defect(
    cover: &PatchCover,
    points: &[Point],
) -> Result<f64, PumError> {
    let mut worst: f64 = 0.0;
    for &x in points {
        worst = worst.max((shepard_weights(x, cover)?.sum() - 1.0).abs());
    }
    Ok(worst)
}

/// Free-function form of [`GlobalModel::eval`].
pub fn eval_global(model: &GlobalModel, x: Point, deriv: Deriv) -> Result<f64, PumError> {
    model.eval(x, deriv)
}

/// Outcome of checking that the blended error never exceeds the worst local
/// error among the covering patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundReport {
    pub deriv: Deriv,
    pub points: usize,
    /// Points where `global > max_local + 10⁻¹²·max(1, |exact|)`.
    pub violations: usize,
    /// `max(global − max_local)` over all points; `≤ 0` up to rounding.
    pub max_excess: f64,
    pub max_global_error: f64,
    pub max_local_error: f64,
}

/// Relative slack granted to the bound for floating-point rounding.
pub const ERROR_BOUND_SLACK: f64 = 1e-12;

/// Checks `|D f(x) − Ŝ(x)| ≤ max_ℓ |D f(x) − D R_ℓ(x)|` over the covering
/// patches at every evaluation point.
pub fn error_bound_report<F>(
    model: &GlobalModel,
    exact: F,
    eval_points: &[Point],
    deriv: Deriv,
) -> Result<ErrorBoundReport, PumError>
where
    F: Fn(Point) -> f64 + Sync,
{
    let per_point = map_slice(Execution::default(), eval_points, |&x| {
        let target = exact(x);
        let global = model.eval(x, deriv)?;
        let w = model.weights(x)?;
        let mut local_max: f64 = 0.0;
        for &l in &w.patches {
            let local = &model.locals[l];
            let v = match deriv.axis() {
                None => local.eval(x),
                Some(axis) => local.eval_derivative(x, axis),
            }
            .map_err(|source| PumError::Eval { patch: l, source })?;
            local_max = local_max.max((target - v).abs());
        }
        Ok(((target - global).abs(), local_max, target.abs()))
    })
    .into_iter()
    .collect::<Result<Vec<_>, PumError>>()?;

    let mut report = ErrorBoundReport {
        deriv,
        points: eval_points.len(),
        violations: 0,
        max_excess: f64::NEG_INFINITY,
        max_global_error: 0.0,
        max_local_error: 0.0,
    };
    for (global, local, scale) in per_point {
        let excess = global - local;
        if excess > ERROR_BOUND_SLACK * scale.max(1.0) {
            report.violations += 1;
        }
        report.max_excess = report.max_excess.max(excess);
        report.max_global_error = report.max_global_error.max(global);
        report.max_local_error = report.max_local_error.max(local);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Text serialization

impl GlobalModel {
    /// Writes the `drrbfpu-model v1` text format; all reals as `%.17g`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), PumError> {
        let c = &self.config;
        writeln!(w, "{MODEL_HEADER}")?;
        writeln!(
            w,
            "config c {} mu {} overlap {} zero_threshold {} denominator_floor {} duplicate_tolerance {}",
            g17(c.shape.get()),
            g17(c.mu),
            self.cover.overlap().map(g17).unwrap_or_else(|| "none".into()),
            g17(c.zero_function_threshold),
            g17(c.denominator_floor),
            g17(c.duplicate_tolerance),
        )?;
        writeln!(w, "cover {}", self.cover.count())?;
        for (p, r) in self.cover.centers().iter().zip(self.cover.radii()) {
            writeln!(w, "{} {} {}", g17(p[0]), g17(p[1]), g17(*r))?;
        }
        for (l, m) in self.locals.iter().enumerate() {
            let kind = match m.kind() {
                ModelKind::Rational => "rational",
                ModelKind::Zero => "zero",
            };
            writeln!(
                w,
                "patch {l} kind {kind} nodes {} lambda_min {} f_norm {} mu_used {}",
                m.len(),
                g17(m.lambda_min()),
                g17(m.f_norm()),
                g17(m.mu_used()),
            )?;
            for k in 0..m.len() {
                let p = m.nodes()[k];
                writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    m.node_indices()[k],
                    g17(p[0]),
                    g17(p[1]),
                    g17(m.q_values()[k]),
                    g17(m.alpha()[k]),
                    g17(m.beta()[k]),
                )?;
            }
        }
        writeln!(w, "end")?;
        Ok(())
    }

    /// Reads the format written by [`write_to`](Self::write_to).
    pub fn read_from<R: BufRead>(r: R) -> Result<Self, PumError> {
        let mut lines = Lines {
            inner: r.lines(),
            number: 0,
        };
        let header = lines.next_line()?;
        if header.trim() != MODEL_HEADER {
            return Err(lines.error(format!("expected `{MODEL_HEADER}`, found `{header}`")));
        }

        let config_line = lines.next_line()?;
        let kv = lines.keyed(&config_line, "config")?;
        let c = lines.real(&kv, "c")?;
        let shape = ShapeParameter::new(c).map_err(|e| lines.error(e.to_string()))?;
        let overlap = match lines.field(&kv, "overlap")? {
            "none" => None,
            s => Some(lines.parse_real(s)?),
        };
        let config = FitConfig {
            shape,
            mu: lines.real(&kv, "mu")?,
            zero_function_threshold: lines.real(&kv, "zero_threshold")?,
            denominator_floor: lines.real(&kv, "denominator_floor")?,
            duplicate_tolerance: lines.real(&kv, "duplicate_tolerance")?,
        };
        config.validate().map_err(|e| lines.error(e.to_string()))?;

        let cover_line = lines.next_line()?;
        let count = match cover_line.split_whitespace().collect::<Vec<_>>()[..] {
            ["cover", n] => lines.parse_usize(n)?,
            _ => return Err(lines.error("expected `cover <count>`".into())),
        };
        let mut centers = Vec::with_capacity(count);
        let mut radii = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines.next_line()?;
            let v = lines.reals(&line, 3)?;
            centers.push([v[0], v[1]]);
            radii.push(v[2]);
        }
        let cover = PatchCover::from_serialized(centers, radii, overlap)?;

        let mut locals = Vec::with_capacity(count);
        for l in 0..count {
            let line = lines.next_line()?;
            let mut tokens = line.split_whitespace();
            if tokens.next() != Some("patch") {
                return Err(lines.error(format!("expected block for patch {l}")));
            }
            let id = lines.parse_usize(tokens.next().unwrap_or(""))?;
            if id != l {
                return Err(lines.error(format!("expected patch {l}, found {id}")));
            }
            let rest: Vec<&str> = tokens.collect();
            let kv = pairs(&rest).map_err(|m| lines.error(m))?;
            let kind = match lines.field(&kv, "kind")? {
                "rational" => ModelKind::Rational,
                "zero" => ModelKind::Zero,
                other => return Err(lines.error(format!("unknown patch kind `{other}`"))),
            };
            let n = lines.parse_usize(lines.field(&kv, "nodes")?)?;
            let lambda_min = lines.real(&kv, "lambda_min")?;
            let f_norm = lines.real(&kv, "f_norm")?;
            let mu_used = lines.real(&kv, "mu_used")?;
            let mut idx = Vec::with_capacity(n);
            let mut nodes = Vec::with_capacity(n);
            let (mut q, mut alpha, mut beta) = (
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
            );
            for _ in 0..n {
                let row = lines.next_line()?;
                let mut parts = row.split_whitespace();
                idx.push(lines.parse_usize(parts.next().unwrap_or(""))?);
                let rest: Vec<&str> = parts.collect();
                if rest.len() != 5 {
                    return Err(lines.error(format!("expected 6 fields, found {}", rest.len() + 1)));
                }
                let v = rest
                    .iter()
                    .map(|s| lines.parse_real(s))
                    .collect::<Result<Vec<_>, _>>()?;
                nodes.push([v[0], v[1]]);
                q.push(v[2]);
                alpha.push(v[3]);
                beta.push(v[4]);
            }
            locals.push(LocalRationalModel::from_parts(
                kind,
                idx,
                nodes,
                q,
                alpha,
                beta,
                lambda_min,
                f_norm,
                mu_used,
                shape,
                config.denominator_floor,
            ));
        }
        let end = lines.next_line()?;
        if end.trim() != "end" {
            return Err(lines.error(format!("expected `end`, found `{end}`")));
        }
        Ok(Self {
            cover,
            locals,
            config,
        })
    }
}

fn pairs<'a>(tokens: &[&'a str]) -> Result<Vec<(&'a str, &'a str)>, String> {
    if !tokens.len().is_multiple_of(2) {
        return Err("unbalanced key/value list".into());
    }
    Ok(tokens.chunks(2).map(|c| (c[0], c[1])).collect())
}

struct Lines<B> {
    inner: std::io::Lines<B>,
    number: usize,
}

impl<B: BufRead> Lines<B> {
    fn error(&self, message: String) -> PumError {
        PumError::Format {
            line: self.number,
            message,
        }
    }

    fn next_line(&mut self) -> Result<String, PumError> {
        loop {
            self.number += 1;
            match self.inner.next() {
                None => return Err(self.error("unexpected end of file".into())),
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        return Ok(line);
                    }
                }
            }
        }
    }

    fn keyed<'a>(&self, line: &'a str, tag: &str) -> Result<Vec<(&'a str, &'a str)>, PumError> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&tag) {
            return Err(self.error(format!("expected `{tag}` line")));
        }
        pairs(&tokens[1..]).map_err(|m| self.error(m))
    }

    fn field<'a>(&self, kv: &[(&'a str, &'a str)], key: &str) -> Result<&'a str, PumError> {
        kv.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| self.error(format!("missing `{key}`")))
    }

    fn real(&self, kv: &[(&str, &str)], key: &str) -> Result<f64, PumError> {
        self.parse_real(self.field(kv, key)?)
    }

    fn parse_real(&self, s: &str) -> Result<f64, PumError> {
        s.parse::<f64>()
            .map_err(|_| self.error(format!("invalid number `{s}`")))
    }

    fn parse_usize(&self, s: &str) -> Result<usize, PumError> {
        s.parse::<usize>()
            .map_err(|_| self.error(format!("invalid count `{s}`")))
    }

    fn reals(&self, line: &str, n: usize) -> Result<Vec<f64>, PumError> {
        let v = line
            .split_whitespace()
            .map(|s| self.parse_real(s))
            .collect::<Result<Vec<_>, _>>()?;
        if v.len() != n {
            return Err(self.error(format!("expected {n} numbers, found {}", v.len())));
        }
        Ok(v)
    }
}
