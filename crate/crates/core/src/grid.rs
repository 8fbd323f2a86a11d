//! Uniform box grids and the discrete calculus shared by every other module.
//!
//! Nodes are stored with axis 0 varying fastest. Under `DirichletZero` the
//! nodes include the box faces `±L` and any value requested outside the box
//! reads as zero; under `Periodic` the box is `[-L, L)` and indices wrap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    DirichletZero,
    Periodic,
}

/// Finite-difference order of the derivative stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    #[default]
    Second,
    Fourth,
}

/// Declarative grid description, as found in experiment configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    #[serde(alias = "L")]
    pub half_width: f64,
    #[serde(alias = "N")]
    pub points: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
    boundary: Boundary,
    spacing: f64,
    #[serde(skip)]
    strides: [usize; 3],
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points: usize, boundary: Boundary) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        if points < 8 {
            return Err(Error::InvalidGrid(format!("{points} points per axis, need at least 8")));
        }
        let spacing = match boundary {
            Boundary::DirichletZero => 2.0 * half_width / (points - 1) as f64,
            Boundary::Periodic => 2.0 * half_width / points as f64,
        };
        let strides = [1, points, points * points];
        Ok(Self { dim, half_width, points, boundary, spacing, strides })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::new(spec.dim, spec.half_width, spec.points, spec.boundary)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            half_width: self.half_width,
            points: self.points,
            boundary: self.boundary,
        }
    }

    /// Same box and boundary convention with a different resolution.
    pub fn with_points(&self, points: usize) -> Result<Self> {
        Self::new(self.dim, self.half_width, points, self.boundary)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total node count `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    #[inline]
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.points
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let mut m = [0; 3];
        for (a, slot) in m.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_index(idx, a);
        }
        m
    }

    pub fn flat_index(&self, m: [usize; 3]) -> usize {
        (0..self.dim).map(|a| m[a] * self.strides[a]).sum()
    }

    /// Node coordinates; unused axes are zero.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (a, slot) in p.iter_mut().enumerate().take(self.dim) {
            *slot = self.coordinate(self.axis_index(idx, a));
        }
        p
    }

    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// True for nodes on a box face under the Dirichlet convention.
    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.boundary == Boundary::Periodic {
            return false;
        }
        (0..self.dim).any(|a| {
            let i = self.axis_index(idx, a);
            i == 0 || i == self.points - 1
        })
    }

    /// Number of nodes between `idx` and the nearest box face.
    pub fn depth(&self, idx: usize) -> usize {
        if self.boundary == Boundary::Periodic {
            return usize::MAX;
        }
        (0..self.dim)
            .map(|a| {
                let i = self.axis_index(idx, a);
                i.min(self.points - 1 - i)
            })
            .min()
            .unwrap_or(0)
    }

    /// Trapezoid weight (without the `h^n` factor).
    #[inline]
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        if self.boundary == Boundary::Periodic {
            return 1.0;
        }
        let mut w = 1.0;
        for a in 0..self.dim {
            let i = self.axis_index(idx, a);
            if i == 0 || i == self.points - 1 {
                w *= 0.5;
            }
        }
        w
    }

    /// Flat-index distance between neighbors along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Neighbor of `idx` displaced by `offset` nodes along `axis`.
    #[inline]
    pub fn shifted(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let n = self.points as isize;
        let i = self.axis_index(idx, axis) as isize;
        let mut j = i + offset;
        if j < 0 || j >= n {
            match self.boundary {
                Boundary::DirichletZero => return None,
                Boundary::Periodic => j = j.rem_euclid(n),
            }
        }
        let stride = self.strides[axis] as isize;
        Some((idx as isize + (j - i) * stride) as usize)
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim
            && y.iter().all(|&c| match self.boundary {
                Boundary::DirichletZero => c >= -self.half_width && c <= self.half_width,
                Boundary::Periodic => c >= -self.half_width && c < self.half_width,
            })
    }

    /// Nearest node to `y` (coordinates clamped to the box).
    pub fn nearest_node(&self, y: &[f64]) -> usize {
        let mut m = [0; 3];
        for a in 0..self.dim {
            let u = ((y[a] + self.half_width) / self.spacing).round();
            m[a] = (u.max(0.0) as usize).min(self.points - 1);
        }
        self.flat_index(m)
    }

    pub fn sample<F>(&self, f: F) -> ScalarField
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; self.len()];
        par::fill(&mut values, |i| f(self.point(i)));
        ScalarField { grid: *self, values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F>(&self, f: F) -> ScalarField
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let mut values = vec![0.0; self.values.len()];
        par::fill(&mut values, |i| f(self.values[i]));
        ScalarField { grid: self.grid, values }
    }

    pub fn zip_map<F>(&self, other: &ScalarField, f: F) -> Result<ScalarField>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        if self.grid != other.grid {
            return Err(Error::Mismatch("fields live on different grids".into()));
        }
        let mut values = vec![0.0; self.values.len()];
        par::fill(&mut values, |i| f(self.values[i], other.values[i]));
        Ok(ScalarField { grid: self.grid, values })
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn max(&self) -> f64 {
        par::max(self.values.len(), |i| self.values[i])
    }

    pub fn min(&self) -> f64 {
        par::min(self.values.len(), |i| self.values[i])
    }

    pub fn max_abs(&self) -> f64 {
        par::max(self.values.len(), |i| self.values[i].abs())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Multilinear interpolation at an arbitrary point of the box.
    pub fn interpolate(&self, y: &[f64]) -> Result<f64> {
        let corners = multilinear_corners(&self.grid, y)?;
        Ok(corners.iter().map(|&(idx, w)| w * self.values[idx]).sum())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Mismatch("vector components do not match the grid".into()));
        }
        Ok(Self { grid, components })
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> [f64; 3] + Sync + Send,
    {
        let components = (0..grid.dim())
            .map(|a| {
                let mut c = vec![0.0; grid.len()];
                par::fill(&mut c, |i| f(grid.point(i))[a]);
                c
            })
            .collect();
        Self { grid, components }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, components: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn norm_squared(&self) -> ScalarField {
        let mut values = vec![0.0; self.grid.len()];
        par::fill(&mut values, |i| self.components.iter().map(|c| c[i] * c[i]).sum());
        ScalarField { grid: self.grid, values }
    }

    pub fn dot(&self, other: &VectorField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("fields live on different grids".into()));
        }
        let mut values = vec![0.0; self.grid.len()];
        par::fill(&mut values, |i| {
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a[i] * b[i])
                .sum()
        });
        Ok(ScalarField { grid: self.grid, values })
    }

    pub fn cross(&self, other: &VectorField) -> Result<VectorField> {
        require_dim(&self.grid, 3)?;
        if self.grid != other.grid {
            return Err(Error::Mismatch("fields live on different grids".into()));
        }
        let (a, b) = (&self.components, &other.components);
        let comp = |k: usize| {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let mut c = vec![0.0; self.grid.len()];
            par::fill(&mut c, |n| a[i][n] * b[j][n] - a[j][n] * b[i][n]);
            c
        };
        Ok(VectorField { grid: self.grid, components: vec![comp(0), comp(1), comp(2)] })
    }

    pub fn map_components<F>(&self, f: F) -> VectorField
    where
        F: Fn(usize, usize, f64) -> f64 + Sync + Send,
    {
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(a, c)| {
                let mut out = vec![0.0; c.len()];
                par::fill(&mut out, |i| f(a, i, c[i]));
                out
            })
            .collect();
        VectorField { grid: self.grid, components }
    }
}

/// Scalar samples on a grid at times `t0 + k*dt`.
///
/// A field with a single slice is time-independent: it is returned for every
/// time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    t0: f64,
    dt: f64,
    slices: Vec<ScalarField>,
}

impl SpaceTimeField {
    pub fn new(t0: f64, dt: f64, slices: Vec<ScalarField>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("space-time field needs at least one slice".into()))?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
        }
        let grid = first.grid;
        if slices.iter().any(|s| s.grid != grid) {
            return Err(Error::Mismatch("slices live on different grids".into()));
        }
        Ok(Self { grid, t0, dt, slices })
    }

    /// Time-independent field.
    pub fn stationary(field: ScalarField, dt: f64) -> Result<Self> {
        Self::new(0.0, dt, vec![field])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn slices(&self) -> &[ScalarField] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<ScalarField> {
        self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn is_stationary(&self) -> bool {
        self.slices.len() == 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last(&self) -> &ScalarField {
        self.slices.last().expect("nonempty by construction")
    }

    /// Linear interpolation in time, clamped to the stored range.
    pub fn sample_into(&self, t: f64, out: &mut [f64]) {
        let (k, theta) = self.bracket(t);
        let a = self.slices[k].values();
        if theta == 0.0 {
            out.copy_from_slice(a);
        } else {
            let b = self.slices[k + 1].values();
            par::fill(out, |i| (1.0 - theta) * a[i] + theta * b[i]);
        }
    }

    pub fn at_time(&self, t: f64) -> ScalarField {
        let mut values = vec![0.0; self.grid.len()];
        self.sample_into(t, &mut values);
        ScalarField { grid: self.grid, values }
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        if self.slices.len() == 1 {
            return (0, 0.0);
        }
        let u = (t - self.t0) / self.dt;
        if u <= 0.0 {
            return (0, 0.0);
        }
        let last = self.slices.len() - 1;
        if u >= last as f64 {
            return (last, 0.0);
        }
        let k = u.floor() as usize;
        let theta = u - k as f64;
        // snap to a slice when the requested time hits it up to rounding
        if theta < 1e-9 {
            (k, 0.0)
        } else if theta > 1.0 - 1e-9 {
            (k + 1, 0.0)
        } else {
            (k, theta)
        }
    }

    pub fn map<F>(&self, f: F) -> SpaceTimeField
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        SpaceTimeField {
            grid: self.grid,
            t0: self.t0,
            dt: self.dt,
            slices: self.slices.iter().map(|s| s.map(&f)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().map(|s| s.max_abs()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.slices.iter().all(|s| s.all_finite())
    }
}

pub(crate) fn require_dim(grid: &Grid, dim: usize) -> Result<()> {
    if grid.dim() != dim {
        return Err(Error::Dimension { expected: dim, found: grid.dim() });
    }
    Ok(())
}

#[inline]
fn value_at(values: &[f64], idx: Option<usize>) -> f64 {
    idx.map_or(0.0, |i| values[i])
}

/// First derivative along `axis`.
pub fn derivative(values: &[f64], grid: &Grid, axis: usize, stencil: Stencil) -> Vec<f64> {
    let h = grid.spacing();
    let mut out = vec![0.0; values.len()];
    match stencil {
        Stencil::Second => par::fill(&mut out, |i| {
            let p = value_at(values, grid.shifted(i, axis, 1));
            let m = value_at(values, grid.shifted(i, axis, -1));
            (p - m) / (2.0 * h)
        }),
        Stencil::Fourth => par::fill(&mut out, |i| {
            let p1 = value_at(values, grid.shifted(i, axis, 1));
            let m1 = value_at(values, grid.shifted(i, axis, -1));
            let p2 = value_at(values, grid.shifted(i, axis, 2));
            let m2 = value_at(values, grid.shifted(i, axis, -2));
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
        }),
    }
    out
}

fn second_derivative_sum(values: &[f64], grid: &Grid, stencil: Stencil, i: usize) -> f64 {
    let h2 = grid.spacing() * grid.spacing();
    let c = values[i];
    let mut acc = 0.0;
    for a in 0..grid.dim() {
        let p1 = value_at(values, grid.shifted(i, a, 1));
        let m1 = value_at(values, grid.shifted(i, a, -1));
        acc += match stencil {
            Stencil::Second => (p1 - 2.0 * c + m1) / h2,
            Stencil::Fourth => {
                let p2 = value_at(values, grid.shifted(i, a, 2));
                let m2 = value_at(values, grid.shifted(i, a, -2));
                (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h2)
            }
        };
    }
    acc
}

pub fn laplacian(field: &ScalarField) -> ScalarField {
    laplacian_with(field, Stencil::Second)
}

pub fn laplacian_with(field: &ScalarField, stencil: Stencil) -> ScalarField {
    let grid = field.grid;
    let mut values = vec![0.0; grid.len()];
    par::fill(&mut values, |i| second_derivative_sum(&field.values, &grid, stencil, i));
    ScalarField { grid, values }
}

pub fn gradient(field: &ScalarField) -> VectorField {
    gradient_with(field, Stencil::Second)
}

pub fn gradient_with(field: &ScalarField, stencil: Stencil) -> VectorField {
    let grid = field.grid;
    let components = (0..grid.dim())
        .map(|a| derivative(&field.values, &grid, a, stencil))
        .collect();
    VectorField { grid, components }
}

pub fn divergence(field: &VectorField) -> ScalarField {
    let grid = field.grid;
    let mut values = vec![0.0; grid.len()];
    for (a, c) in field.components.iter().enumerate() {
        let d = derivative(c, &grid, a, Stencil::Second);
        values.iter_mut().zip(d).for_each(|(v, x)| *v += x);
    }
    ScalarField { grid, values }
}

/// Central-difference curl; three dimensions only.
pub fn curl(field: &VectorField) -> Result<VectorField> {
    let grid = field.grid;
    require_dim(&grid, 3)?;
    let d = |comp: usize, axis: usize| derivative(&field.components[comp], &grid, axis, Stencil::Second);
    let component = |k: usize| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let a = d(j, i);
        let b = d(i, j);
        a.into_iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()
    };
    Ok(VectorField { grid, components: vec![component(0), component(1), component(2)] })
}

/// Trapezoid-weighted `h^n` sum.
pub fn integrate(field: &ScalarField) -> f64 {
    let grid = field.grid;
    grid.cell_volume() * par::sum(grid.len(), |i| grid.quadrature_weight(i) * field.values[i])
}

/// `(integral |f|^p)^(1/p)`; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(field: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("L^p exponent {p} must be at least 1")));
    }
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let grid = field.grid;
    let s = grid.cell_volume()
        * par::sum(grid.len(), |i| grid.quadrature_weight(i) * field.values[i].abs().powf(p));
    Ok(s.powf(1.0 / p))
}

/// Nodes and weights of the multilinear interpolation stencil at `y`.
pub(crate) fn multilinear_corners(grid: &Grid, y: &[f64]) -> Result<Vec<(usize, f64)>> {
    if !grid.contains(y) {
        return Err(Error::OutsideBox(y.to_vec()));
    }
    let n = grid.points();
    let mut base = [0usize; 3];
    let mut next = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..grid.dim() {
        let u = (y[a] + grid.half_width()) / grid.spacing();
        let mut i = u.floor() as usize;
        let mut t = u - i as f64;
        match grid.boundary() {
            Boundary::DirichletZero => {
                if i >= n - 1 {
                    i = n - 2;
                    t = 1.0;
                }
                next[a] = i + 1;
            }
            Boundary::Periodic => {
                i %= n;
                next[a] = (i + 1) % n;
            }
        }
        if t < 1e-12 {
            t = 0.0;
        }
        base[a] = i;
        frac[a] = t;
    }
    let mut out = Vec::with_capacity(1 << grid.dim());
    for corner in 0..(1usize << grid.dim()) {
        let mut m = [0usize; 3];
        let mut w = 1.0;
        for a in 0..grid.dim() {
            if corner >> a & 1 == 1 {
                m[a] = next[a];
                w *= frac[a];
            } else {
                m[a] = base[a];
                w *= 1.0 - frac[a];
            }
        }
        if w > 0.0 {
            out.push((grid.flat_index(m), w));
        }
    }
    Ok(out)
}

/// Unit-mass field concentrated at `y`, split multilinearly over the
/// surrounding nodes.
pub fn discrete_delta(grid: &Grid, y: &[f64]) -> Result<ScalarField> {
    let mut field = ScalarField::zeros(*grid);
    let vol = grid.cell_volume();
    for (idx, w) in multilinear_corners(grid, y)? {
        field.values[idx] += w / (vol * grid.quadrature_weight(idx));
    }
    Ok(field)
}
