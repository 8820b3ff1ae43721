//! Trial nodes, the overlapping patch cover and patch membership.
//!
//! The domain is the unit square. Patches are open discs `B(x_ℓ, ρ_ℓ)`.
//! Lookups go through a uniform bin grid whose cell size is the largest
//! patch radius, so a query inspects at most the 3×3 block of cells around
//! the query point.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{Read, Write};

use thiserror::Error;

use crate::fmt::g17;
use crate::kernels::{distance, DEFAULT_DUPLICATE_TOLERANCE};
use crate::Point;

/// Side of the probe grid used to verify coverage.
pub const COVERAGE_PROBE_SIDE: usize = 200;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point {index} ({x}, {y}) lies outside the unit square", x = point[0], y = point[1])]
    OutsideDomain { index: usize, point: Point },
    #[error("points {first} and {second} coincide")]
    DuplicatePoints { first: usize, second: usize },
    #[error("patch cover leaves ({x}, {y}) uncovered", x = point[0], y = point[1])]
    CoverageFailure { point: Point },
    #[error("no patch covers ({x}, {y})", x = point[0], y = point[1])]
    Uncovered { point: Point },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for GeometryError {
    fn from(e: csv::Error) -> Self {
        GeometryError::Csv(e.to_string())
    }
}

/// Trial nodes in the closed unit square, pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<Point>,
}

impl PointSet {
    /// Validates domain membership and pairwise distinctness.
    pub fn new(coords: Vec<Point>) -> Result<Self, GeometryError> {
        for (index, p) in coords.iter().enumerate() {
            let inside = (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
            if !inside {
                return Err(GeometryError::OutsideDomain { index, point: *p });
            }
        }
        if let Some((first, second)) = find_duplicate(&coords, DEFAULT_DUPLICATE_TOLERANCE) {
            return Err(GeometryError::DuplicatePoints { first, second });
        }
        Ok(Self { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.coords.iter()
    }

    pub fn into_inner(self) -> Vec<Point> {
        self.coords
    }

    /// Writes `x,y` CSV with `%.17g` coordinates.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), GeometryError> {
        writeln!(w, "x,y")?;
        for p in &self.coords {
            writeln!(w, "{},{}", g17(p[0]), g17(p[1]))?;
        }
        Ok(())
    }

    /// Reads a CSV whose first two columns are `x,y`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, GeometryError> {
        let (points, _) = read_points_csv(r)?;
        Self::new(points)
    }
}

impl std::ops::Index<usize> for PointSet {
    type Output = Point;
    fn index(&self, i: usize) -> &Point {
        &self.coords[i]
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;
    fn into_iter(self) -> Self::IntoIter {
        self.coords.iter()
    }
}

/// Reads `x,y[,f]` CSV. Coordinates are not validated against the domain;
/// the optional `f` column is returned alongside.
pub fn read_points_csv<R: Read>(r: R) -> Result<(Vec<Point>, Option<Vec<f64>>), GeometryError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(GeometryError::Csv(format!(
            "expected header starting with `x,y`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let f_col = headers.iter().position(|h| h == "f");
    let mut points = Vec::new();
    let mut values = f_col.map(|_| Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> Result<f64, GeometryError> {
            record
                .get(k)
                .ok_or_else(|| GeometryError::Csv(format!("row {}: missing column {k}", line + 2)))?
                .parse::<f64>()
                .map_err(|e| GeometryError::Csv(format!("row {}: {e}", line + 2)))
        };
        points.push([field(0)?, field(1)?]);
        if let (Some(k), Some(v)) = (f_col, values.as_mut()) {
            v.push(field(k)?);
        }
    }
    Ok((points, values))
}

fn find_duplicate(coords: &[Point], tol: f64) -> Option<(usize, usize)> {
    if coords.len() < 2 {
        return None;
    }
    let cell = (1.0 / (coords.len() as f64).sqrt()).max(tol);
    let key = |p: &Point| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut bins: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in coords.iter().enumerate() {
        let (cx, cy) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = bins.get(&(cx + dx, cy + dy)) {
                    for &j in list {
                        if distance(*p, coords[j]) < tol {
                            return Some((j, i));
                        }
                    }
                }
            }
        }
        bins.entry((cx, cy)).or_default().push(i);
    }
    None
}

/// `n × n` tensor grid on `[0,1]²` including the boundary, row-major
/// (x varies fastest).
pub fn build_uniform_grid(n_per_side: usize) -> Result<PointSet, GeometryError> {
    if n_per_side < 2 {
        return Err(GeometryError::InvalidArgument(format!(
            "grid needs at least 2 points per side, got {n_per_side}"
        )));
    }
    Ok(PointSet {
        coords: grid_coords(n_per_side),
    })
}

pub(crate) fn grid_coords(n: usize) -> Vec<Point> {
    let h = 1.0 / (n - 1) as f64;
    let mut coords = Vec::with_capacity(n * n);
    for i in 0..n {
        let y = if i == n - 1 { 1.0 } else { i as f64 * h };
        for j in 0..n {
            let x = if j == n - 1 { 1.0 } else { j as f64 * h };
            coords.push([x, y]);
        }
    }
    coords
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// First `n` points of the 2-D Halton sequence (bases 2 and 3) after
/// skipping `skip` leading terms; index 0 (the origin) is always skipped.
pub fn build_halton_points(n: usize, skip: usize) -> PointSet {
    let coords = (0..n)
        .map(|k| {
            let i = k + skip + 1;
            [radical_inverse(i, 2), radical_inverse(i, 3)]
        })
        .collect();
    PointSet { coords }
}

/// Uniform bins over the patch centers.
#[derive(Debug, Clone)]
struct PatchIndex {
    cell: f64,
    origin: Point,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl PatchIndex {
    fn new(centers: &[Point], radii: &[f64]) -> Self {
        let cell = radii.iter().cloned().fold(0.0, f64::max);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in centers {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let nx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (l, c) in centers.iter().enumerate() {
            let ix = (((c[0] - lo[0]) / cell) as usize).min(nx - 1);
            let iy = (((c[1] - lo[1]) / cell) as usize).min(ny - 1);
            cells[iy * nx + ix].push(l);
        }
        Self {
            cell,
            origin: lo,
            nx,
            ny,
            cells,
        }
    }

    /// Patch ids whose centers lie in the 3×3 block around `x`.
    fn candidates(&self, x: Point) -> impl Iterator<Item = usize> + '_ {
        let fx = ((x[0] - self.origin[0]) / self.cell).floor();
        let fy = ((x[1] - self.origin[1]) / self.cell).floor();
        let span = |f: f64, n: usize| -> std::ops::Range<usize> {
            let lo = (f - 1.0).max(0.0);
            let hi = (f + 2.0).min(n as f64);
            if hi <= lo || !f.is_finite() {
                0..0
            } else {
                lo as usize..hi as usize
            }
        };
        let xs = span(fx, self.nx);
        let ys = span(fy, self.ny);
        ys.flat_map(move |iy| xs.clone().map(move |ix| iy * self.nx + ix))
            .flat_map(move |cell| self.cells[cell].iter().copied())
    }
}

/// Overlapping disc cover of the unit square.
#[derive(Debug, Clone)]
pub struct PatchCover {
    centers: Vec<Point>,
    radii: Vec<f64>,
    overlap: Option<f64>,
    index: PatchIndex,
}

impl PatchCover {
    /// Arbitrary discs; coverage of the unit square is verified on the probe
    /// grid.
    pub fn new(centers: Vec<Point>, radii: Vec<f64>) -> Result<Self, GeometryError> {
        Self::with_overlap(centers, radii, None)
    }

    fn with_overlap(
        centers: Vec<Point>,
        radii: Vec<f64>,
        overlap: Option<f64>,
    ) -> Result<Self, GeometryError> {
        if centers.is_empty() {
            return Err(GeometryError::InvalidArgument("empty patch cover".into()));
        }
        if centers.len() != radii.len() {
            return Err(GeometryError::InvalidArgument(format!(
                "{} centers but {} radii",
                centers.len(),
                radii.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(GeometryError::InvalidArgument(format!(
                "patch radii must be positive, got {r}"
            )));
        }
        let index = PatchIndex::new(&centers, &radii);
        let cover = Self {
            centers,
            radii,
            overlap,
            index,
        };
        cover.verify_coverage(COVERAGE_PROBE_SIDE)?;
        Ok(cover)
    }

    pub(crate) fn from_serialized(
        centers: Vec<Point>,
        radii: Vec<f64>,
        overlap: Option<f64>,
    ) -> Result<Self, GeometryError> {
        Self::with_overlap(centers, radii, overlap)
    }

    /// One disc centred at `(0.5, 0.5)` whose radius exceeds the half-diagonal.
    pub fn single(radius: f64) -> Result<Self, GeometryError> {
        Self::new(vec![[0.5, 0.5]], vec![radius])
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Overlap factor when the cover came from [`build_patch_cover`].
    pub fn overlap(&self) -> Option<f64> {
        self.overlap
    }

    /// Fails with the first probe point not strictly inside some disc.
    pub fn verify_coverage(&self, probe_side: usize) -> Result<(), GeometryError> {
        let mut buf = Vec::new();
        for p in grid_coords(probe_side.max(2)) {
            self.covering_into(p, &mut buf);
            if buf.is_empty() {
                return Err(GeometryError::CoverageFailure { point: p });
            }
        }
        Ok(())
    }

    /// Fills `out` with the ascending ids of patches whose open disc holds `x`.
    pub fn covering_into(&self, x: Point, out: &mut Vec<usize>) {
        out.clear();
        for l in self.index.candidates(x) {
            if distance(x, self.centers[l]) < self.radii[l] {
                out.push(l);
            }
        }
        out.sort_unstable();
    }
}

/// Cover with `n_c = m²` patches centred on the `m × m` grid over the unit
/// square (corners included) and common radius `overlap / (m − 1)`.
pub fn build_patch_cover(n_c: usize, overlap: f64) -> Result<PatchCover, GeometryError> {
    let m = (n_c as f64).sqrt().round() as usize;
    if m * m != n_c || m < 2 {
        return Err(GeometryError::InvalidArgument(format!(
            "patch count must be a perfect square m² with m ≥ 2, got {n_c}"
        )));
    }
    if !(overlap.is_finite() && overlap >= FRAC_1_SQRT_2) {
        return Err(GeometryError::InvalidArgument(format!(
            "overlap must be at least 1/√2, got {overlap}"
        )));
    }
    let h = 1.0 / (m - 1) as f64;
    let rho = overlap * h;
    PatchCover::with_overlap(grid_coords(m), vec![rho; n_c], Some(overlap))
}

/// Patch ids covering `x`, ascending.
pub fn covering_patches(x: Point, cover: &PatchCover) -> Result<Vec<usize>, GeometryError> {
    let mut out = Vec::new();
    cover.covering_into(x, &mut out);
    if out.is_empty() {
        Err(GeometryError::Uncovered { point: x })
    } else {
        Ok(out)
    }
}

/// Index sets `J_ℓ` of trial points inside each patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMembership {
    members: Vec<Vec<usize>>,
}

impl PatchMembership {
    pub fn members(&self, patch: usize) -> &[usize] {
        &self.members[patch]
    }

    pub fn all(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Patches with fewer than `min` members.
    pub fn undersized(&self, min: usize) -> Vec<usize> {
        (0..self.members.len())
            .filter(|&l| self.members[l].len() < min)
            .collect()
    }
}

/// `J_ℓ = { j : ‖x_j − x_ℓ‖ < ρ_ℓ }`, each list ascending.
///
/// Every point must fall into at least one patch. Undersized patches are not
/// an error here; see [`PatchMembership::undersized`].
pub fn assign_members(
    points: &PointSet,
    cover: &PatchCover,
) -> Result<PatchMembership, GeometryError> {
    let mut members = vec![Vec::new(); cover.count()];
    let mut buf = Vec::new();
    for (j, &p) in points.iter().enumerate() {
        cover.covering_into(p, &mut buf);
        if buf.is_empty() {
            return Err(GeometryError::Uncovered { point: p });
        }
        for &l in &buf {
            members[l].push(j);
        }
    }
    Ok(PatchMembership { members })
}
