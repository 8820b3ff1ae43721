//! Radial kernels: the C6 Matérn trial kernel and the Wendland C4 weight.

use std::fmt;

use thiserror::Error;

use crate::linalg::SymmetricMatrix;
use crate::Point;

/// Default minimum separation between kernel-matrix nodes.
pub const DEFAULT_DUPLICATE_TOLERANCE: f64 = 1e-12;

/// Value of the C6 Matérn kernel at the origin.
pub const MATERN_C6_AT_ZERO: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nodes {first} and {second} coincide (distance {distance:e}); degenerate patch")]
    DuplicateNodes {
        first: usize,
        second: usize,
        distance: f64,
    },
}

/// Positive scaling of the radial distance inside the Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ShapeParameter(f64);

impl ShapeParameter {
    pub fn new(c: f64) -> Result<Self, KernelError> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(KernelError::InvalidArgument(format!(
                "shape parameter must be positive and finite, got {c}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for ShapeParameter {
    fn default() -> Self {
        Self(35.0)
    }
}

impl fmt::Display for ShapeParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Kernel value together with `φ'(r)/r`.
///
/// The ratio is what Cartesian gradients need:
/// `∂/∂x_i φ(‖x − x_j‖) = (φ'(r)/r)·(x_i − x_{j,i})`. It has a removable
/// singularity at `r = 0` which is resolved analytically, so it is finite
/// everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialKernelEval {
    pub value: f64,
    pub radial_slope_over_r: f64,
}

/// `e^{-cr}(15 + 15cr + 6(cr)² + (cr)³)`, no argument checks.
#[inline]
pub(crate) fn matern_value_raw(r: f64, c: f64) -> f64 {
    let s = c * r;
    (-s).exp() * (15.0 + s * (15.0 + s * (6.0 + s)))
}

/// Value and slope-over-r of the C6 Matérn kernel, no argument checks.
///
/// `φ'(r) = −c²·r·e^{−cr}(3 + 3cr + (cr)²)`, so `φ'(r)/r` carries no `1/r`.
#[inline]
pub(crate) fn matern_eval_raw(r: f64, c: f64) -> RadialKernelEval {
    let s = c * r;
    let decay = (-s).exp();
    RadialKernelEval {
        value: decay * (15.0 + s * (15.0 + s * (6.0 + s))),
        radial_slope_over_r: -c * c * decay * (3.0 + s * (3.0 + s)),
    }
}

/// Wendland C4 without argument checks; zero outside the unit ball.
#[inline]
pub(crate) fn wendland_c4(r: f64) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    let t = 1.0 - r;
    let t2 = t * t;
    let t6 = t2 * t2 * t2;
    t6 * (3.0 + r * (18.0 + 35.0 * r))
}

fn check_radius(r: f64) -> Result<(), KernelError> {
    if r >= 0.0 && !r.is_nan() {
        Ok(())
    } else {
        Err(KernelError::InvalidArgument(format!(
            "radial distance must be nonnegative, got {r}"
        )))
    }
}

/// The C6 Matérn kernel `e^{-cr}(15 + 15cr + 6(cr)² + (cr)³)`.
pub fn matern_c6_value(r: f64, c: ShapeParameter) -> Result<f64, KernelError> {
    check_radius(r)?;
    Ok(matern_value_raw(r, c.get()))
}

/// `φ'(r)/r` for the C6 Matérn kernel; equals `−3c²` at the origin.
pub fn matern_c6_slope_over_r(r: f64, c: ShapeParameter) -> Result<f64, KernelError> {
    check_radius(r)?;
    Ok(matern_eval_raw(r, c.get()).radial_slope_over_r)
}

/// Both quantities at once.
pub fn matern_c6(r: f64, c: ShapeParameter) -> Result<RadialKernelEval, KernelError> {
    check_radius(r)?;
    Ok(matern_eval_raw(r, c.get()))
}

/// `(1−r)⁶(35r² + 18r + 3)` on `[0, 1]`, zero beyond.
pub fn wendland_c4_value(r: f64) -> Result<f64, KernelError> {
    check_radius(r)?;
    Ok(wendland_c4(r))
}

#[inline]
pub(crate) fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Matérn kernel matrix with a diagonal increment, `A + μI`.
///
/// Only the lower triangle is computed; the packed storage makes the result
/// exactly symmetric. Pairs of nodes closer than `duplicate_tolerance` are
/// rejected.
pub fn kernel_matrix_with_tolerance(
    nodes: &[Point],
    c: ShapeParameter,
    mu: f64,
    duplicate_tolerance: f64,
) -> Result<SymmetricMatrix, KernelError> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(KernelError::InvalidArgument(format!(
            "diagonal increment must be nonnegative, got {mu}"
        )));
    }
    let n = nodes.len();
    let c = c.get();
    let mut m = SymmetricMatrix::zeros(n);
    for i in 0..n {
        let row = m.row_mut(i);
        for j in 0..i {
            let r = distance(nodes[i], nodes[j]);
            if r < duplicate_tolerance {
                return Err(KernelError::DuplicateNodes {
                    first: j,
                    second: i,
                    distance: r,
                });
            }
            row[j] = matern_value_raw(r, c);
        }
        row[i] = MATERN_C6_AT_ZERO + mu;
    }
    Ok(m)
}

/// [`kernel_matrix_with_tolerance`] with the default duplicate tolerance.
pub fn kernel_matrix(
    nodes: &[Point],
    c: ShapeParameter,
    mu: f64,
) -> Result<SymmetricMatrix, KernelError> {
    kernel_matrix_with_tolerance(nodes, c, mu, DEFAULT_DUPLICATE_TOLERANCE)
}
