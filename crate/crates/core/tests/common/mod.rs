//! Independent oracles shared by the integration tests.
//!
//! Everything here is deliberately naive: dense nalgebra matrices, explicit
//! inverses, a full eigendecomposition of `Θ^{-1/2} Λ Θ^{-1/2}`, and
//! double-double sums. None of it reuses the crate's linear algebra.
#![allow(dead_code)]

use drrbfpu::linalg::SymmetricMatrix;
use drrbfpu::localfit::LocalRationalModel;
use drrbfpu::Point;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// C6 Matérn, written out independently of the crate.
pub fn matern(r: f64, c: f64) -> f64 {
    let t = c * r;
    (-t).exp() * (15.0 + 15.0 * t + 6.0 * t * t + t * t * t)
}

pub fn dense(m: &SymmetricMatrix) -> DMatrix<f64> {
    let n = m.order();
    DMatrix::from_row_slice(n, n, &m.to_dense())
}

/// Largest-magnitude entry positive, unit length.
pub fn sign_normalize(mut v: DVector<f64>) -> DVector<f64> {
    v /= v.norm();
    let k = v.iamax();
    if v[k] < 0.0 {
        v = -v;
    }
    v
}

/// Angle between the lines spanned by `a` and `b`.
pub fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = (dot.abs() / (na * nb)).min(1.0);
    // sin from the component of a orthogonal to b; accurate for small angles
    let s = dot / (nb * nb);
    let perp: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - s * y).powi(2))
        .sum::<f64>()
        .sqrt()
        / na;
    perp.atan2(cos)
}

/// Smallest eigenpair of `Λq = λΘq` through the symmetric square root of Θ.
pub fn brute_smallest_pair(lambda: &DMatrix<f64>, theta: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let te = theta.clone().symmetric_eigen();
    let inv_sqrt = &te.eigenvectors
        * DMatrix::from_diagonal(&te.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * te.eigenvectors.transpose();
    let c = &inv_sqrt * lambda * &inv_sqrt;
    let c = (&c + c.transpose()) * 0.5;
    let ce = c.symmetric_eigen();
    let k = ce.eigenvalues.imin();
    let y = ce.eigenvectors.column(k).into_owned();
    (ce.eigenvalues[k], sign_normalize(&inv_sqrt * y))
}

pub struct OraclePatch {
    pub lambda_min: f64,
    pub q: DVector<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

/// Local rational fit with explicit inverses.
pub fn brute_patch(nodes: &[Point], f: &[f64], c: f64, mu: f64) -> OraclePatch {
    let n = nodes.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let r = ((nodes[i][0] - nodes[j][0]).powi(2) + (nodes[i][1] - nodes[j][1]).powi(2)).sqrt();
        matern(r, c) + if i == j { mu } else { 0.0 }
    });
    let a_inv = a.try_inverse().expect("invertible kernel matrix");
    let fv = DVector::from_column_slice(f);
    let d = DMatrix::from_diagonal(&fv);
    let s = 1.0 / fv.norm_squared();
    let lambda = &d * &a_inv * &d * s + &a_inv;
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    let theta = &d * &d * s + DMatrix::identity(n, n);
    let (lambda_min, q) = brute_smallest_pair(&lambda, &theta);
    let beta = &a_inv * &q;
    let alpha = &a_inv * fv.component_mul(&q);
    OraclePatch {
        lambda_min,
        q,
        alpha,
        beta,
    }
}

/// Unevaluated sum `hi + lo` with about 106 bits of precision.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl DoubleDouble {
    /// Adds the exact product `a·b`.
    pub fn add_product(self, a: f64, b: f64) -> Self {
        let p = a * b;
        let perr = a.mul_add(b, -p);
        let (s, e) = two_sum(self.hi, p);
        let lo = e + self.lo + perr;
        let (hi, lo) = two_sum(s, lo);
        DoubleDouble { hi, lo }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `p(x)/q(x)` with double-double sums, and the condition scale of the
/// ordinary floating-point evaluation.
pub fn extended_eval(model: &LocalRationalModel, x: Point) -> (f64, f64) {
    let c = model.shape().get();
    let mut p = DoubleDouble::default();
    let mut q = DoubleDouble::default();
    let (mut p_abs, mut q_abs) = (0.0, 0.0);
    for ((node, a), b) in model.nodes().iter().zip(model.alpha()).zip(model.beta()) {
        let phi = matern((x[0] - node[0]).hypot(x[1] - node[1]), c);
        p = p.add_product(*a, phi);
        q = q.add_product(*b, phi);
        p_abs += (a * phi).abs();
        q_abs += (b * phi).abs();
    }
    let (pv, qv) = (p.value(), q.value());
    let r = pv / qv;
    (r, (p_abs + r.abs() * q_abs) / qv.abs())
}

/// `n` points in the disc of radius `radius` about `center` with pairwise
/// separation at least `min_sep`, inside the unit square.
pub fn separated_nodes<R: Rng>(
    rng: &mut R,
    n: usize,
    center: Point,
    radius: f64,
    min_sep: f64,
) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < 1_000_000, "cannot place {n} separated nodes");
        let p = [
            center[0] + rng.gen_range(-radius..radius),
            center[1] + rng.gen_range(-radius..radius),
        ];
        let inside = (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
            && (0.0..=1.0).contains(&p[0])
            && (0.0..=1.0).contains(&p[1]);
        if inside
            && out
                .iter()
                .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_sep)
        {
            out.push(p);
        }
    }
    out
}

/// Uniform point in the disc, not restricted to the square.
pub fn point_in_disc<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let t = rng.gen_range(0.0..std::f64::consts::TAU);
    [center[0] + r * t.cos(), center[1] + r * t.sin()]
}

/// Random symmetric matrix with standard normal-ish entries.
pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

/// Random SPD matrix `BBᵀ + δI`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, delta: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * delta
}

pub fn packed(m: &DMatrix<f64>) -> SymmetricMatrix {
    let n = m.nrows();
    SymmetricMatrix::from_lower_fn(n, |i, j| m[(i, j)])
}
