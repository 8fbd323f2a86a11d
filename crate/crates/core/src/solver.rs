//! Time stepping for `∂ₜu = Δu + Vu` with bounded potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Boundary, Grid, ScalarField, SpaceTimeField};
use crate::kernels;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Half potential step, Crank–Nicolson diffusion, half potential step.
    #[default]
    CrankNicolsonStrang,
    /// Full potential step followed by implicit Euler diffusion. Positive for every `dt`.
    BackwardEuler,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_iters() -> usize {
    500
}
fn default_save() -> usize {
    1
}
fn default_startup() -> usize {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub linear_tol: f64,
    #[serde(default = "default_iters")]
    pub max_linear_iters: usize,
    /// Store every `save_every`-th step.
    #[serde(default = "default_save")]
    pub save_every: usize,
    /// Crank–Nicolson steps replaced by two implicit Euler half steps at the
    /// start, which damps the unresolved modes of rough initial data.
    #[serde(default = "default_startup")]
    pub startup_steps: usize,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        Self {
            scheme,
            dt,
            linear_tol: default_tol(),
            max_linear_iters: default_iters(),
            save_every: default_save(),
            startup_steps: default_startup(),
        }
    }

    pub fn crank_nicolson(dt: f64) -> Self {
        Self::new(Scheme::CrankNicolsonStrang, dt)
    }

    pub fn backward_euler(dt: f64) -> Self {
        Self::new(Scheme::BackwardEuler, dt)
    }

    pub fn saving_every(mut self, k: usize) -> Self {
        self.save_every = k;
        self
    }

    pub fn with_startup(mut self, steps: usize) -> Self {
        self.startup_steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {} must be positive", self.dt)));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::InvalidArgument("linear tolerance must be positive".into()));
        }
        if self.max_linear_iters == 0 || self.save_every == 0 {
            return Err(Error::InvalidArgument("iteration and save counts must be positive".into()));
        }
        Ok(())
    }

    /// Time between stored slices.
    pub fn save_dt(&self) -> f64 {
        self.dt * self.save_every as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceNorms {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Clone, Debug)]
pub struct CauchySolution {
    pub field: SpaceTimeField,
    pub potential: SpaceTimeField,
    pub initial: ScalarField,
    /// Time at which `initial` is imposed; potential times are absolute.
    pub start: f64,
    pub config: SolverConfig,
    pub diagnostics: Vec<SliceNorms>,
    pub linear_iterations: usize,
}

impl CauchySolution {
    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    /// Smallest node value over all stored slices.
    pub fn min_value(&self) -> f64 {
        self.field.slices().iter().map(|s| s.min()).fold(f64::INFINITY, f64::min)
    }
}

/// `out = Δ_h x` with the seven-point stencil. On a Dirichlet grid the box
/// faces carry the zero boundary value: boundary rows of `out` are zero and
/// boundary entries of `x` are ignored.
pub fn laplacian_into(grid: &Grid, x: &[f64], out: &mut [f64]) {
    stencil_into(grid, 0.0, 1.0, 0.0, x, out);
}

/// `out = a·x + c·Δ_h x` on interior nodes, zero on Dirichlet boundary nodes.
pub fn shifted_laplacian_into(grid: &Grid, a: f64, c: f64, x: &[f64], out: &mut [f64]) {
    stencil_into(grid, a, c, 0.0, x, out);
}

/// Interior operator `a + cΔ_h` with `out_i = boundary_diag·x_i` on Dirichlet faces.
/// With `boundary_diag > 0` and `a > 0, c < 0` the operator is symmetric positive definite.
fn stencil_into(grid: &Grid, a: f64, c: f64, boundary_diag: f64, x: &[f64], out: &mut [f64]) {
    let inv_h2 = c / (grid.spacing() * grid.spacing());
    let dim = grid.dim();
    let n = grid.points();
    if grid.boundary() == Boundary::Periodic {
        par::fill(out, |i| {
            let mut acc = -2.0 * dim as f64 * x[i];
            for axis in 0..dim {
                acc += x[grid.shifted(i, axis, -1).unwrap_or(i)];
                acc += x[grid.shifted(i, axis, 1).unwrap_or(i)];
            }
            a * x[i] + acc * inv_h2
        });
        return;
    }
    par::fill(out, |i| {
        let mut acc = -2.0 * dim as f64 * x[i];
        for axis in 0..dim {
            let k = grid.axis_index(i, axis);
            if k == 0 || k == n - 1 {
                return boundary_diag * x[i];
            }
            let s = grid.stride(axis);
            if k > 1 {
                acc += x[i - s];
            }
            if k + 2 < n {
                acc += x[i + s];
            }
        }
        a * x[i] + acc * inv_h2
    });
}

/// Conjugate gradients for a symmetric positive definite operator.
/// Returns the iteration count.
pub fn conjugate_gradient<A>(apply: A, b: &[f64], x: &mut [f64], tol: f64, max_iters: usize) -> Result<usize>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = par::dot(&r, &r);
    let mut ap = ax;
    for it in 0..max_iters {
        if rr.sqrt() <= tol * bnorm {
            return Ok(it);
        }
        apply(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve { iterations: it, residual: rr.sqrt() / bnorm });
        }
        let step = rr / pap;
        par::update(x, |i, v| *v += step * p[i]);
        par::update(&mut r, |i, v| *v -= step * ap[i]);
        let rr_new = par::dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        par::update(&mut p, |i, v| *v = r[i] + beta * *v);
    }
    if rr.sqrt() <= tol * bnorm {
        return Ok(max_iters);
    }
    Err(Error::LinearSolve { iterations: max_iters, residual: rr.sqrt() / bnorm })
}

struct Stepper<'a> {
    grid: Grid,
    potential: &'a SpaceTimeField,
    config: SolverConfig,
    vbuf: Vec<f64>,
    rhs: Vec<f64>,
    iterations: usize,
}

impl<'a> Stepper<'a> {
    fn potential_factor(&mut self, u: &mut [f64], t: f64, tau: f64) {
        self.potential.sample_into(t, &mut self.vbuf);
        let v = &self.vbuf;
        par::update(u, |i, x| *x *= (v[i] * tau).exp());
    }

    /// Solve `(I − θτΔ) u_new = (I + (1−θ)τΔ) u`.
    fn diffuse(&mut self, u: &mut [f64], tau: f64, theta: f64) -> Result<()> {
        let grid = self.grid;
        if theta < 1.0 {
            shifted_laplacian_into(&grid, 1.0, (1.0 - theta) * tau, u, &mut self.rhs);
        } else {
            self.rhs.copy_from_slice(u);
            if grid.boundary() == Boundary::DirichletZero {
                par::update(&mut self.rhs, |i, r| {
                    if grid.is_boundary(i) {
                        *r = 0.0;
                    }
                });
            }
        }
        let c = theta * tau;
        let apply = |x: &[f64], out: &mut [f64]| stencil_into(&grid, 1.0, -c, 1.0, x, out);
        let iters = conjugate_gradient(apply, &self.rhs, u, self.config.linear_tol, self.config.max_linear_iters)?;
        self.iterations += iters;
        Ok(())
    }

    fn step(&mut self, u: &mut [f64], t: f64, startup: bool) -> Result<()> {
        let dt = self.config.dt;
        match self.config.scheme {
            Scheme::CrankNicolsonStrang => {
                self.potential_factor(u, t, 0.5 * dt);
                if startup {
                    self.diffuse(u, 0.5 * dt, 1.0)?;
                    self.diffuse(u, 0.5 * dt, 1.0)?;
                } else {
                    self.diffuse(u, dt, 0.5)?;
                }
                self.potential_factor(u, t + dt, 0.5 * dt);
            }
            Scheme::BackwardEuler => {
                self.potential_factor(u, t + 0.5 * dt, dt);
                self.diffuse(u, dt, 1.0)?;
            }
        }
        Ok(())
    }
}

/// Solve from `u0` at time 0 up to `horizon`.
pub fn solve_cauchy(u0: &ScalarField, v: &SpaceTimeField, config: &SolverConfig, horizon: f64) -> Result<CauchySolution> {
    solve_cauchy_from(u0, v, config, 0.0, horizon)
}

/// Solve from `u0` imposed at time `start` for a duration `horizon`; the
/// potential is sampled at absolute times.
pub fn solve_cauchy_from(
    u0: &ScalarField,
    v: &SpaceTimeField,
    config: &SolverConfig,
    start: f64,
    horizon: f64,
) -> Result<CauchySolution> {
    config.validate()?;
    let grid = *u0.grid();
    if v.grid() != &grid {
        return Err(Error::Mismatch("potential and initial data live on different grids".into()));
    }
    if !u0.all_finite() {
        return Err(Error::NonFinite("initial data"));
    }
    if !v.all_finite() {
        return Err(Error::NonFinite("potential"));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be nonnegative")));
    }
    let steps = (horizon / config.dt).round() as usize;
    let len = grid.len();
    let mut stepper = Stepper {
        grid,
        potential: v,
        config: *config,
        vbuf: vec![0.0; len],
        rhs: vec![0.0; len],
        iterations: 0,
    };
    let mut u = u0.values().to_vec();
    let mut slices = vec![u0.clone()];
    for k in 0..steps {
        let t = start + k as f64 * config.dt;
        stepper.step(&mut u, t, k < config.startup_steps)?;
        if (k + 1) % config.save_every == 0 {
            slices.push(ScalarField::new(grid, u.clone())?);
        }
    }
    let field = SpaceTimeField::new(start, config.save_dt(), slices)?;
    let diagnostics = field
        .slices()
        .iter()
        .enumerate()
        .map(|(k, s)| SliceNorms {
            t: field.time(k),
            l1: grid::lp_norm(s, 1.0).expect("p = 1 is valid"),
            l2: grid::lp_norm(s, 2.0).expect("p = 2 is valid"),
        })
        .collect();
    Ok(CauchySolution {
        field,
        potential: v.clone(),
        initial: u0.clone(),
        start,
        config: *config,
        diagnostics,
        linear_iterations: stepper.iterations,
    })
}

/// Largest mismatch between the stored solution and the right side of
/// `u(t) = e^{tΔ}u₀ + ∫₀ᵗ e^{(t−s)Δ}(Vu)(s) ds`, evaluated with the exact
/// Gaussian kernel at up to four stored times, relative to `sup|u(t)|`.
///
/// The time integral uses the trapezoid rule on the stored slices.
pub fn duhamel_residual(sol: &CauchySolution) -> f64 {
    let field = &sol.field;
    let n = field.len();
    if n < 2 {
        return 0.0;
    }
    let probes: Vec<usize> = {
        let mut p: Vec<usize> = (1..=4).map(|q| (q * (n - 1)).div_ceil(4)).collect();
        p.dedup();
        p
    };
    let source: Vec<ScalarField> = field
        .slices()
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let v = sol.potential.at_time(field.time(k));
            v.zip_map(u, |a, b| a * b).expect("shared grid")
        })
        .collect();
    let ds = field.dt();
    probes
        .iter()
        .map(|&k| {
            let t = k as f64 * ds;
            let mut rhs = kernels::gaussian_smooth(&sol.initial, t).into_values();
            for j in 0..=k {
                let w = if j == 0 || j == k { 0.5 * ds } else { ds };
                let term = kernels::gaussian_smooth(&source[j], t - j as f64 * ds);
                rhs.iter_mut().zip(term.values()).for_each(|(r, x)| *r += w * x);
            }
            let u = field.slices()[k].values();
            let scale = field.slices()[k].max_abs().max(f64::MIN_POSITIVE);
            let worst = par::max(u.len(), |i| (u[i] - rhs[i]).abs());
            worst / scale
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Both `a ≥ b` and `b ≥ a` within tolerance.
    Both,
    AGreater,
    BGreater,
    Incomparable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `min(a − b)` per stored slice.
    pub min_a_minus_b: Vec<f64>,
    /// `min(b − a)` per stored slice.
    pub min_b_minus_a: Vec<f64>,
    pub verdict: Ordering,
}

/// Relative slack used for every ordering decision.
pub const COMPARISON_TOLERANCE: f64 = 1e-8;

/// Pointwise ordering of two solutions on the same discretization.
pub fn compare_solutions(a: &CauchySolution, b: &CauchySolution) -> Result<ComparisonReport> {
    compare_fields(&a.field, &b.field)
}

pub fn compare_fields(a: &SpaceTimeField, b: &SpaceTimeField) -> Result<ComparisonReport> {
    if a.grid() != b.grid() {
        return Err(Error::Mismatch("solutions live on different grids".into()));
    }
    if a.len() != b.len() || (a.dt() - b.dt()).abs() > 1e-12 * a.dt() || (a.t0() - b.t0()).abs() > 1e-12 {
        return Err(Error::Mismatch("solutions have different time discretizations".into()));
    }
    let mut ge = true;
    let mut le = true;
    let mut min_ab = Vec::with_capacity(a.len());
    let mut min_ba = Vec::with_capacity(a.len());
    for (sa, sb) in a.slices().iter().zip(b.slices()) {
        let (x, y) = (sa.values(), sb.values());
        let scale = sa.max_abs().max(sb.max_abs());
        let ab = par::min(x.len(), |i| x[i] - y[i]);
        let ba = par::min(x.len(), |i| y[i] - x[i]);
        ge &= ab >= -COMPARISON_TOLERANCE * scale;
        le &= ba >= -COMPARISON_TOLERANCE * scale;
        min_ab.push(ab);
        min_ba.push(ba);
    }
    let verdict = match (ge, le) {
        (true, true) => Ordering::Both,
        (true, false) => Ordering::AGreater,
        (false, true) => Ordering::BGreater,
        (false, false) => Ordering::Incomparable,
    };
    Ok(ComparisonReport { min_a_minus_b: min_ab, min_b_minus_a: min_ba, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    fn gaussian(grid: Grid, width: f64) -> ScalarField {
        grid.sample(|p| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (width * width)).exp())
    }

    #[test]
    fn cg_solves_diagonal_system() {
        let b = vec![1.0, 4.0, 9.0];
        let mut x = vec![0.0; 3];
        let iters = conjugate_gradient(
            |x: &[f64], out: &mut [f64]| {
                for i in 0..3 {
                    out[i] = (i + 1) as f64 * x[i];
                }
            },
            &b,
            &mut x,
            1e-12,
            10,
        )
        .unwrap();
        assert!(iters <= 3);
        for i in 0..3 {
            assert!((x[i] - b[i] / (i + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonfinite_potential() {
        let g = Grid::new(1, 1.0, 16, Boundary::DirichletZero).unwrap();
        let v = SpaceTimeField::stationary(ScalarField::constant(g, f64::NAN), 0.01).unwrap();
        let u0 = gaussian(g, 0.3);
        assert!(matches!(
            solve_cauchy(&u0, &v, &SolverConfig::crank_nicolson(0.01), 0.1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn slice_zero_is_initial_data() {
        let g = Grid::new(2, 1.0, 16, Boundary::DirichletZero).unwrap();
        let v = SpaceTimeField::stationary(ScalarField::constant(g, 0.5), 0.01).unwrap();
        let u0 = gaussian(g, 0.3);
        let sol = solve_cauchy(&u0, &v, &SolverConfig::backward_euler(0.01).saving_every(2), 0.1).unwrap();
        assert_eq!(sol.field.slices()[0], u0);
        assert_eq!(sol.field.len(), 6);
        assert_eq!(sol.diagnostics.len(), 6);
    }

    #[test]
    fn identical_solutions_compare_both_ways() {
        let g = Grid::new(1, 1.0, 32, Boundary::DirichletZero).unwrap();
        let v = SpaceTimeField::stationary(ScalarField::constant(g, 1.0), 0.01).unwrap();
        let u0 = gaussian(g, 0.3);
        let cfg = SolverConfig::crank_nicolson(0.005);
        let a = solve_cauchy(&u0, &v, &cfg, 0.05).unwrap();
        let b = solve_cauchy(&u0, &v, &cfg, 0.05).unwrap();
        assert_eq!(compare_solutions(&a, &b).unwrap().verdict, Ordering::Both);
    }

    #[test]
    fn mismatched_discretizations_are_rejected() {
        let g = Grid::new(1, 1.0, 32, Boundary::DirichletZero).unwrap();
        let v = SpaceTimeField::stationary(ScalarField::zeros(g), 0.01).unwrap();
        let u0 = gaussian(g, 0.3);
        let a = solve_cauchy(&u0, &v, &SolverConfig::crank_nicolson(0.005), 0.05).unwrap();
        let b = solve_cauchy(&u0, &v, &SolverConfig::crank_nicolson(0.01), 0.05).unwrap();
        assert!(compare_solutions(&a, &b).is_err());
    }
}
