//! Local rational RBF approximants.
//!
//! On a patch with nodes `x_1..x_n` and data `f`, the approximant is
//!
//! ```text
//! R(x) = p(x) / q(x),   p(x) = Σ α_j φ(‖x − x_j‖),   q(x) = Σ β_j φ(‖x − x_j‖)
//! ```
//!
//! The denominator's node values `q` minimize the Rayleigh quotient of the
//! pencil
//!
//! ```text
//! Λ = (1/‖f‖²) D A⁻¹ D + A⁻¹,    Θ = (1/‖f‖²) D² + I,    D = diag(f)
//! ```
//!
//! after which `(A + μI)β = q` and `(A + μI)α = f∘q`. Any nonzero multiple of
//! `q` yields the same rational function.

use thiserror::Error;

use crate::kernels::{
    kernel_matrix_with_tolerance, matern_eval_raw, KernelError, ShapeParameter,
    DEFAULT_DUPLICATE_TOLERANCE, MATERN_C6_AT_ZERO,
};
use crate::linalg::{
    cholesky_factor, norm2, smallest_generalized_eigenpair, CholeskyFactor, LinalgError,
    SymmetricMatrix,
};
use crate::Point;

/// Default diagonal increment: `10⁻⁸` relative to the kernel diagonal.
pub const DEFAULT_MDI: f64 = 1e-8 * MATERN_C6_AT_ZERO;

/// Multiplier applied to `μ` on the single retry after a failed Cholesky.
pub const MDI_ESCALATION: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub shape: ShapeParameter,
    /// Diagonal increment added to the kernel matrix.
    pub mu: f64,
    /// Patches with `‖f‖₂` at or below this are fitted as `R ≡ 0`.
    pub zero_function_threshold: f64,
    /// Evaluation fails where `|q(x)| < floor · max_i |q_i|`.
    pub denominator_floor: f64,
    pub duplicate_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            shape: ShapeParameter::default(),
            mu: DEFAULT_MDI,
            zero_function_threshold: 1e-14,
            denominator_floor: 1e-12,
            duplicate_tolerance: DEFAULT_DUPLICATE_TOLERANCE,
        }
    }
}

impl FitConfig {
    pub fn with_shape(mut self, c: ShapeParameter) -> Self {
        self.shape = c;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let checks = [
            ("mu", self.mu),
            ("zero_function_threshold", self.zero_function_threshold),
            ("denominator_floor", self.denominator_floor),
            ("duplicate_tolerance", self.duplicate_tolerance),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FitError::InvalidInput(format!(
                    "{name} must be nonnegative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(
        "fit failed on {nodes} nodes (mu tried {mu_initial:e} and {mu_escalated:e}): {source}"
    )]
    Failure {
        nodes: usize,
        mu_initial: f64,
        mu_escalated: f64,
        source: LinalgError,
    },
    #[error("generalized eigenproblem on {nodes} nodes: {source}")]
    Eigen { nodes: usize, source: LinalgError },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(
        "vanishing denominator q = {q:e} at ({x}, {y}) (floor {floor:e})",
        x = point[0],
        y = point[1]
    )]
    VanishingDenominator { point: Point, q: f64, floor: f64 },
    #[error("Lagrange form unavailable: q_{index} = {q:e} is below the floor")]
    LagrangeUnavailable { index: usize, q: f64 },
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Coordinate direction of a first derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rational,
    /// `‖f‖₂` fell below the zero threshold; `R ≡ 0`.
    Zero,
}

/// Fitted rational approximant on one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRationalModel {
    pub(crate) kind: ModelKind,
    pub(crate) node_indices: Vec<usize>,
    pub(crate) nodes: Vec<Point>,
    pub(crate) q_values: Vec<f64>,
    pub(crate) alpha: Vec<f64>,
    pub(crate) beta: Vec<f64>,
    pub(crate) lambda_min: f64,
    pub(crate) f_norm: f64,
    pub(crate) mu_used: f64,
    pub(crate) shape: ShapeParameter,
    pub(crate) denominator_floor: f64,
    q_scale: f64,
}

/// The pencil `(Λ, Θ)` whose smallest eigenvector gives the denominator
/// values. Both matrices are exactly symmetric by storage.
pub fn rational_pencil(
    kernel_inverse: &SymmetricMatrix,
    values: &[f64],
) -> (SymmetricMatrix, SymmetricMatrix) {
    let n = values.len();
    let s = 1.0 / values.iter().map(|v| v * v).sum::<f64>();
    let lambda = SymmetricMatrix::from_lower_fn(n, |i, j| {
        kernel_inverse.get(i, j) * (1.0 + s * values[i] * values[j])
    });
    let theta: Vec<f64> = values.iter().map(|v| 1.0 + s * v * v).collect();
    (lambda, SymmetricMatrix::from_diagonal(&theta))
}

fn validate_inputs(nodes: &[Point], values: &[f64], config: &FitConfig) -> Result<(), FitError> {
    config.validate()?;
    if nodes.len() < 2 {
        return Err(FitError::InvalidInput(format!(
            "a local fit needs at least 2 nodes, got {}",
            nodes.len()
        )));
    }
    if nodes.len() != values.len() {
        return Err(FitError::InvalidInput(format!(
            "{} nodes but {} values",
            nodes.len(),
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput(format!("non-finite data value {v}")));
    }
    Ok(())
}

/// Kernel matrix and its Cholesky factor, retrying once with `100μ`.
fn factor_kernel(nodes: &[Point], config: &FitConfig) -> Result<(CholeskyFactor, f64), FitError> {
    let build =
        |mu: f64| kernel_matrix_with_tolerance(nodes, config.shape, mu, config.duplicate_tolerance);
    match cholesky_factor(&build(config.mu)?) {
        Ok(f) => Ok((f, config.mu)),
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            let escalated = if config.mu > 0.0 {
                config.mu * MDI_ESCALATION
            } else {
                DEFAULT_MDI
            };
            cholesky_factor(&build(escalated)?)
                .map(|f| (f, escalated))
                .map_err(|source| FitError::Failure {
                    nodes: nodes.len(),
                    mu_initial: config.mu,
                    mu_escalated: escalated,
                    source,
                })
        }
        Err(other) => Err(FitError::Failure {
            nodes: nodes.len(),
            mu_initial: config.mu,
            mu_escalated: config.mu,
            source: other,
        }),
    }
}

/// Fits the local rational approximant to `values` at `nodes`.
pub fn fit_local_rational(
    nodes: &[Point],
    values: &[f64],
    config: &FitConfig,
) -> Result<LocalRationalModel, FitError> {
    validate_inputs(nodes, values, config)?;
    let n = nodes.len();
    let (factor, mu_used) = factor_kernel(nodes, config)?;
    let f_norm = norm2(values);

    if f_norm <= config.zero_function_threshold {
        let q = vec![1.0 / (n as f64).sqrt(); n];
        return Ok(assemble(
            ModelKind::Zero,
            nodes,
            values,
            q,
            &factor,
            0.0,
            f_norm,
            mu_used,
            config,
        ));
    }

    let (lambda, theta) = rational_pencil(&factor.spd_inverse(), values);
    let pair = smallest_generalized_eigenpair(&lambda, &theta)
        .map_err(|source| FitError::Eigen { nodes: n, source })?;
    Ok(assemble(
        ModelKind::Rational,
        nodes,
        values,
        pair.eigenvector,
        &factor,
        pair.eigenvalue,
        f_norm,
        mu_used,
        config,
    ))
}

/// Builds the approximant from prescribed denominator node values `q`
/// instead of the eigenvector.
pub fn fit_with_denominator_values(
    nodes: &[Point],
    values: &[f64],
    q: Vec<f64>,
    config: &FitConfig,
) -> Result<LocalRationalModel, FitError> {
    validate_inputs(nodes, values, config)?;
    if q.len() != nodes.len() {
        return Err(FitError::InvalidInput(format!(
            "{} denominator values for {} nodes",
            q.len(),
            nodes.len()
        )));
    }
    let (factor, mu_used) = factor_kernel(nodes, config)?;
    Ok(assemble(
        ModelKind::Rational,
        nodes,
        values,
        q,
        &factor,
        f64::NAN,
        norm2(values),
        mu_used,
        config,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    kind: ModelKind,
    nodes: &[Point],
    values: &[f64],
    q: Vec<f64>,
    factor: &CholeskyFactor,
    lambda_min: f64,
    f_norm: f64,
    mu_used: f64,
    config: &FitConfig,
) -> LocalRationalModel {
    let mut beta = q.clone();
    factor.solve_lower_in_place(&mut beta);
    factor.solve_upper_in_place(&mut beta);
    let alpha = match kind {
        ModelKind::Zero => vec![0.0; nodes.len()],
        ModelKind::Rational => {
            let mut a: Vec<f64> = values.iter().zip(&q).map(|(f, q)| f * q).collect();
            factor.solve_lower_in_place(&mut a);
            factor.solve_upper_in_place(&mut a);
            a
        }
    };
    LocalRationalModel::from_parts(
        kind,
        (0..nodes.len()).collect(),
        nodes.to_vec(),
        q,
        alpha,
        beta,
        lambda_min,
        f_norm,
        mu_used,
        config.shape,
        config.denominator_floor,
    )
}

/// Value and gradient of the numerator and denominator sums at a point.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    p: f64,
    q: f64,
    dp: [f64; 2],
    dq: [f64; 2],
}

impl LocalRationalModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        kind: ModelKind,
        node_indices: Vec<usize>,
        nodes: Vec<Point>,
        q_values: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        lambda_min: f64,
        f_norm: f64,
        mu_used: f64,
        shape: ShapeParameter,
        denominator_floor: f64,
    ) -> Self {
        let q_scale = q_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            kind,
            node_indices,
            nodes,
            q_values,
            alpha,
            beta,
            lambda_min,
            f_norm,
            mu_used,
            shape,
            denominator_floor,
            q_scale,
        }
    }

    /// Replaces the local `0..n` numbering with global point indices.
    pub fn with_node_indices(mut self, indices: Vec<usize>) -> Self {
        assert_eq!(indices.len(), self.nodes.len());
        self.node_indices = indices;
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn node_indices(&self) -> &[usize] {
        &self.node_indices
    }
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }
    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
    /// Smallest pencil eigenvalue; zero for [`ModelKind::Zero`].
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }
    pub fn f_norm(&self) -> f64 {
        self.f_norm
    }
    pub fn mu_used(&self) -> f64 {
        self.mu_used
    }
    pub fn shape(&self) -> ShapeParameter {
        self.shape
    }

    #[inline]
    fn sums(&self, x: Point, with_gradient: bool) -> Sums {
        let c = self.shape.get();
        let mut s = Sums::default();
        for ((node, a), b) in self.nodes.iter().zip(&self.alpha).zip(&self.beta) {
            let d = [x[0] - node[0], x[1] - node[1]];
            let r = d[0].hypot(d[1]);
            if with_gradient {
                let k = matern_eval_raw(r, c);
                s.p += a * k.value;
                s.q += b * k.value;
                let ga = a * k.radial_slope_over_r;
                let gb = b * k.radial_slope_over_r;
                s.dp[0] += ga * d[0];
                s.dp[1] += ga * d[1];
                s.dq[0] += gb * d[0];
                s.dq[1] += gb * d[1];
            } else {
                let k = crate::kernels::matern_value_raw(r, c);
                s.p += a * k;
                s.q += b * k;
            }
        }
        s
    }

    fn checked_denominator(&self, x: Point, q: f64) -> Result<(), EvalError> {
        let floor = self.denominator_floor * self.q_scale;
        if q.abs() < floor || !q.is_finite() {
            Err(EvalError::VanishingDenominator { point: x, q, floor })
        } else {
            Ok(())
        }
    }

    /// `p(x)/q(x)`.
    pub fn eval(&self, x: Point) -> Result<f64, EvalError> {
        let s = self.sums(x, false);
        self.checked_denominator(x, s.q)?;
        Ok(s.p / s.q)
    }

    /// `∂R/∂x_axis` by the quotient rule on the analytic kernel gradients.
    pub fn eval_derivative(&self, x: Point, axis: Axis) -> Result<f64, EvalError> {
        Ok(self.eval_with_gradient(x)?.1[axis.index()])
    }

    /// `R(x)` and `∇R(x)` from one pass over the nodes.
    pub fn eval_with_gradient(&self, x: Point) -> Result<(f64, [f64; 2]), EvalError> {
        let s = self.sums(x, true);
        self.checked_denominator(x, s.q)?;
        let inv_q = 1.0 / s.q;
        let value = s.p * inv_q;
        let grad = [
            (s.dp[0] - value * s.dq[0]) * inv_q,
            (s.dp[1] - value * s.dq[1]) * inv_q,
        ];
        Ok((value, grad))
    }

    /// Denominator `q(x)`; no floor check.
    pub fn denominator(&self, x: Point) -> f64 {
        self.sums(x, false).q
    }

    /// Lagrange form `Φ_R(x)ᵀ A_R⁻¹ values` with the scaled kernel
    /// `φ_R(x, x_j) = φ(‖x − x_j‖) / (q(x) q_j)`.
    ///
    /// For the fitted data this represents the same rational function as
    /// [`eval`](Self::eval); it is kept as an independent consistency check.
    pub fn eval_lagrange(&self, x: Point, values: &[f64]) -> Result<f64, EvalError> {
        let n = self.nodes.len();
        if values.len() != n {
            return Err(EvalError::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        let floor = self.denominator_floor * self.q_scale;
        for (index, &q) in self.q_values.iter().enumerate() {
            if q.abs() < floor || q == 0.0 {
                return Err(EvalError::LagrangeUnavailable { index, q });
            }
        }
        let a = kernel_matrix_with_tolerance(&self.nodes, self.shape, self.mu_used, 0.0)?;
        let qv = &self.q_values;
        let scaled = SymmetricMatrix::from_lower_fn(n, |i, j| a.get(i, j) / (qv[i] * qv[j]));
        let weights = cholesky_factor(&scaled)?.solve(values)?;

        let qx = self.denominator(x);
        self.checked_denominator(x, qx)?;
        let c = self.shape.get();
        let mut acc = 0.0;
        for ((node, w), qj) in self.nodes.iter().zip(&weights).zip(qv) {
            let r = (x[0] - node[0]).hypot(x[1] - node[1]);
            acc += crate::kernels::matern_value_raw(r, c) / (qx * qj) * w;
        }
        Ok(acc)
    }
}

/// Free-function form of [`LocalRationalModel::eval`].
pub fn eval_local(model: &LocalRationalModel, x: Point) -> Result<f64, EvalError> {
    model.eval(x)
}

/// Free-function form of [`LocalRationalModel::eval_derivative`].
pub fn eval_local_derivative(
    model: &LocalRationalModel,
    x: Point,
    axis: Axis,
) -> Result<f64, EvalError> {
    model.eval_derivative(x, axis)
}

/// Free-function form of [`LocalRationalModel::eval_lagrange`].
pub fn eval_local_lagrange(
    model: &LocalRationalModel,
    x: Point,
    values: &[f64],
) -> Result<f64, EvalError> {
    model.eval_lagrange(x, values)
}
