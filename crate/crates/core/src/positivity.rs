//! Positive solutions and log transforms, and the spectral test for
//! form-boundedness of `V` relative to `−Δ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, SpaceTimeField, Stencil};
use crate::par;
use crate::potentials::{self, DerivativeScheme, PotentialSpec, TruncationLadder};
use crate::solver::{self, CauchySolution, SolverConfig};

fn default_tol() -> f64 {
    1e-9
}
fn default_iters() -> usize {
    20_000
}
fn default_order() -> f64 {
    0.25
}
fn default_dt() -> f64 {
    0.01
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// Form bound constant: form bounded iff `λ_min ≥ −b` on every level and the trace converges.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    /// Smallest observed convergence order of `λ_min` under halving `h` that
    /// still counts as converging.
    #[serde(default = "default_order")]
    pub min_order: f64,
    /// Sampling of time-dependent potentials.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub horizon: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            b: 0.0,
            tol: default_tol(),
            max_iters: default_iters(),
            min_order: default_order(),
            dt: default_dt(),
            horizon: 0.0,
        }
    }
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiagonal_min(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
            d = alpha[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `out = −Δ_h x − v·x`.
fn schrodinger_apply(grid: &Grid, v: &[f64], x: &[f64], out: &mut [f64]) {
    solver::shifted_laplacian_into(grid, 0.0, -1.0, x, out);
    par::update(out, |i, o| *o -= v[i] * x[i]);
}

/// Unit vector, constant on interior nodes and zero on Dirichlet faces.
fn interior_constant(grid: &Grid) -> Vec<f64> {
    let mut q: Vec<f64> = (0..grid.len()).map(|i| if grid.is_boundary(i) { 0.0 } else { 1.0 }).collect();
    let norm = par::dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= norm);
    q
}

/// Smallest eigenvalue of `−Δ_h − V` with the box convention of the grid.
/// Returns the value and the Lanczos iteration count.
pub fn smallest_eigenvalue(grid: &Grid, v: &ScalarField, tol: f64, max_iters: usize) -> Result<(f64, usize)> {
    let n = grid.len();
    let vv = v.values();
    let mut q_prev = vec![0.0; n];
    let mut q = interior_constant(grid);
    let mut w = vec![0.0; n];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    let check_every = 10;
    for j in 0..max_iters.min(n) {
        schrodinger_apply(grid, vv, &q, &mut w);
        if j > 0 {
            let b = beta[j - 1];
            par::update(&mut w, |i, x| *x -= b * q_prev[i]);
        }
        let a = par::dot(&q, &w);
        par::update(&mut w, |i, x| *x -= a * q[i]);
        alpha.push(a);
        let b = par::dot(&w, &w).sqrt();
        let done = b <= 1e-14 * a.abs().max(1.0) || j + 1 == n;
        if (j + 1) % check_every == 0 || done {
            let theta = tridiagonal_min(&alpha, &beta);
            if done || (theta - last).abs() <= tol * theta.abs().max(1.0) {
                return Ok((theta, j + 1));
            }
            last = theta;
        }
        beta.push(b);
        std::mem::swap(&mut q_prev, &mut q);
        par::fill(&mut q, |i| w[i] / b);
    }
    Err(Error::EigenSolve { iterations: max_iters })
}

/// Principal eigenpair of `−Δ_h − V` by shifted inverse iteration started
/// from a positive vector. The eigenvector has unit discrete L² norm and
/// nonnegative sum.
pub fn principal_eigenpair(grid: &Grid, v: &ScalarField, tol: f64, max_iters: usize) -> Result<(f64, ScalarField, usize)> {
    let (theta, mut iterations) = smallest_eigenvalue(grid, v, tol.max(1e-12), max_iters)?;
    let n = grid.len();
    let vv = v.values();
    let shift = theta - 0.05 * theta.abs().max(1.0);
    let g = *grid;
    let apply = |x: &[f64], out: &mut [f64]| {
        schrodinger_apply(&g, vv, x, out);
        par::update(out, |i, o| *o -= shift * x[i]);
    };
    let mut u = interior_constant(grid);
    let mut next = u.clone();
    let mut au = vec![0.0; n];
    let mut lambda = theta;
    for _ in 0..200 {
        iterations += solver::conjugate_gradient(apply, &u, &mut next, 1e-12, 20 * n.max(100))?;
        let norm = par::dot(&next, &next).sqrt();
        par::fill(&mut u, |i| next[i] / norm);
        schrodinger_apply(grid, vv, &u, &mut au);
        lambda = par::dot(&u, &au);
        let res = par::sum(n, |i| (au[i] - lambda * u[i]).powi(2)).sqrt();
        if res <= 1e-8 * lambda.abs().max(1.0) {
            break;
        }
    }
    if par::sum(n, |i| u[i]) < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    let scale = 1.0 / grid.cell_volume().sqrt();
    u.iter_mut().for_each(|x| *x *= scale);
    Ok((lambda, ScalarField::new(*grid, u)?, iterations))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralLevel {
    pub points: usize,
    pub spacing: f64,
    /// Smallest eigenvalue over the time slices.
    pub lambda_min: f64,
    /// Per-slice eigenvalues (one entry for time-independent potentials).
    pub slice_lambdas: Vec<f64>,
    /// Time average of the slice eigenvalues, the space-time aggregate.
    pub aggregate: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Value on the finest grid.
    pub lambda_min: f64,
    pub iterations: usize,
    pub refinement_trace: Vec<SpectralLevel>,
    /// `log₂(d₁/d₂)` for the last two decrements of the trace.
    pub observed_order: f64,
    pub diverging: bool,
    pub b: f64,
    pub form_bounded: bool,
}

fn spectral_level(spec: &PotentialSpec, grid: &Grid, cfg: &SpectralConfig) -> Result<SpectralLevel> {
    let v = potentials::realize(spec, grid, cfg.dt, cfg.horizon)?;
    let mut slice_lambdas = Vec::with_capacity(v.len());
    let mut iterations = 0;
    for s in v.slices() {
        let (l, it) = smallest_eigenvalue(grid, s, cfg.tol, cfg.max_iters)?;
        slice_lambdas.push(l);
        iterations += it;
    }
    let m = slice_lambdas.len();
    let aggregate = if m == 1 {
        slice_lambdas[0]
    } else {
        let w: f64 = (m - 1) as f64;
        slice_lambdas
            .iter()
            .enumerate()
            .map(|(k, l)| if k == 0 || k == m - 1 { 0.5 * l } else { *l })
            .sum::<f64>()
            / w
    };
    Ok(SpectralLevel {
        points: grid.points(),
        spacing: grid.spacing(),
        lambda_min: slice_lambdas.iter().copied().fold(f64::INFINITY, f64::min),
        slice_lambdas,
        aggregate,
        iterations,
    })
}

/// Convergence analysis of a refinement trace of smallest eigenvalues.
///
/// With decrements `d₁, d₂` over the last two refinements, the trace counts
/// as diverging when it still descends (`d₂ > 0`) and the observed order
/// `log₂(d₁/d₂)` is below `min_order` (or undefined because `d₁ ≤ 0`).
pub fn trace_divergence(lambdas: &[f64], min_order: f64) -> (f64, bool) {
    let m = lambdas.len();
    if m < 3 {
        return (f64::NAN, false);
    }
    let d1 = lambdas[m - 3] - lambdas[m - 2];
    let d2 = lambdas[m - 2] - lambdas[m - 1];
    let scale = lambdas[m - 1].abs().max(1.0);
    if d2 <= 1e-9 * scale {
        return (f64::INFINITY, false);
    }
    if d1 <= 0.0 {
        return (f64::NAN, true);
    }
    let order = (d1 / d2).log2();
    (order, order < min_order)
}

/// Smallest eigenvalue of `−Δ − V` along a refinement sequence (coarse to fine).
pub fn form_bounded_test(spec: &PotentialSpec, grids: &[Grid], cfg: &SpectralConfig) -> Result<SpectralReport> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("no grids given".into()));
    }
    let refinement_trace = grids
        .iter()
        .map(|g| spectral_level(spec, g, cfg))
        .collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<f64> = refinement_trace.iter().map(|l| l.lambda_min).collect();
    let (observed_order, diverging) = trace_divergence(&lambdas, cfg.min_order);
    let worst = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SpectralReport {
        lambda_min: *lambdas.last().expect("nonempty"),
        iterations: refinement_trace.iter().map(|l| l.iterations).sum(),
        refinement_trace,
        observed_order,
        diverging,
        b: cfg.b,
        form_bounded: !diverging && worst >= -cfg.b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyRow {
    pub a: f64,
    pub lambdas: Vec<f64>,
    pub observed_order: f64,
    pub diverging: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyScan {
    pub points: Vec<usize>,
    pub rows: Vec<HardyRow>,
    /// Smallest scanned coupling from which on every larger coupling diverges.
    pub critical: Option<f64>,
}

/// Scan couplings of `a/|x|²` (masked to `|x| ≤ radius`) for the onset of
/// divergence of `λ_min` under refinement.
pub fn hardy_threshold_scan(couplings: &[f64], radius: f64, grids: &[Grid], cfg: &SpectralConfig) -> Result<HardyScan> {
    let rows = par::map(couplings.len(), |k| -> Result<HardyRow> {
        let a = couplings[k];
        let spec = PotentialSpec::inverse_square(a, radius);
        let report = form_bounded_test(&spec, grids, cfg)?;
        Ok(HardyRow {
            a,
            lambdas: report.refinement_trace.iter().map(|l| l.lambda_min).collect(),
            observed_order: report.observed_order,
            diverging: report.diverging,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut critical = None;
    for row in rows.iter().rev() {
        if row.diverging {
            critical = Some(row.a);
        } else {
            break;
        }
    }
    Ok(HardyScan { points: grids.iter().map(|g| g.points()).collect(), rows, critical })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateLog {
    #[serde(skip)]
    pub u: Option<ScalarField>,
    #[serde(skip)]
    pub f: Option<ScalarField>,
    pub lambda_min: f64,
    /// Principal eigenvalue of `−Δ − (V − b)` on the box, `λ_min + b`.
    pub shift: f64,
    pub b: f64,
    /// `max |V − (Δf − |∇f|² + b)|` on nodes at depth ≥ 3.
    pub raw_residual: f64,
    /// Same with the shift subtracted.
    pub corrected_residual: f64,
    pub spectral: SpectralReport,
}

/// Principal eigenfunction `u > 0` of `−Δ − (V − b)` and `f = −ln u`.
///
/// Refuses unless the refinement test on `test_grids` certifies
/// form-boundedness with constant `cfg.b`.
pub fn ground_state_log(
    spec: &PotentialSpec,
    grid: &Grid,
    test_grids: &[Grid],
    cfg: &SpectralConfig,
) -> Result<GroundStateLog> {
    let spectral = form_bounded_test(spec, test_grids, cfg)?;
    if !spectral.form_bounded {
        return Err(Error::HypothesisNotMet(format!(
            "potential is not form bounded with b = {} (lambda_min {:.4}, diverging: {})",
            cfg.b, spectral.lambda_min, spectral.diverging
        )));
    }
    let v = potentials::realize(spec, grid, cfg.dt, 0.0)?;
    if !v.is_stationary() {
        return Err(Error::InvalidArgument("ground state needs a time-independent potential".into()));
    }
    let v = &v.slices()[0];
    let (lambda, u, _) = principal_eigenpair(grid, v, cfg.tol, cfg.max_iters)?;
    let count = (0..grid.len()).filter(|&i| !grid.is_boundary(i) && !(u.values()[i] > 0.0)).count();
    if count > 0 {
        return Err(Error::NonPositive { count, context: "principal eigenfunction" });
    }
    let f = u.map(|x| -x.ln());
    let combo = potentials::spatial_combination(&f, 1.0, DerivativeScheme::LogConsistent)?;
    let shift = lambda + cfg.b;
    let (mut raw, mut corrected): (f64, f64) = (0.0, 0.0);
    for i in 0..grid.len() {
        if grid.depth(i) < 3 {
            continue;
        }
        let rhs = combo.values()[i] + cfg.b;
        raw = raw.max((v.values()[i] - rhs).abs());
        corrected = corrected.max((v.values()[i] - (rhs - shift)).abs());
    }
    Ok(GroundStateLog {
        u: Some(u),
        f: Some(f),
        lambda_min: lambda,
        shift,
        b: cfg.b,
        raw_residual: raw,
        corrected_residual: corrected,
        spectral,
    })
}

#[derive(Clone, Debug)]
pub struct ForwardReport {
    pub potential: SpaceTimeField,
    /// `max |Δu + Vu − ∂ₜu| / max |u|` per slice on nodes at depth ≥ 3.
    pub slice_residuals: Vec<f64>,
    pub residual: f64,
}

/// Set `u = e^{−f}` and `V = Δf − |∇f|² − ∂ₜf`, and measure how well `u`
/// solves `∂ₜu = Δu + Vu` with the matching discrete operators.
pub fn forward_positive_solution(f: &SpaceTimeField, scheme: DerivativeScheme) -> Result<ForwardReport> {
    if !f.all_finite() {
        return Err(Error::NonFinite("f"));
    }
    if f.slices().iter().any(|s| s.min() < -700.0) {
        return Err(Error::InvalidArgument("e^{-f} overflows: f is below -700".into()));
    }
    let grid = *f.grid();
    let potential = potentials::combine_derivatives(f, 1.0, scheme)?;
    let u = f.map(|x| (-x).exp());
    let n = u.len();
    let dt = u.dt();
    let mut slice_residuals = Vec::with_capacity(n);
    for k in 0..n {
        let uk = &u.slices()[k];
        let lap = match scheme {
            DerivativeScheme::Fourth => grid::laplacian_with(uk, Stencil::Fourth),
            _ => grid::laplacian(uk),
        };
        let ut: Vec<f64> = if n == 1 {
            vec![0.0; grid.len()]
        } else {
            let s = u.slices();
            let v = |j: usize| s[j].values();
            (0..grid.len())
                .map(|i| {
                    if n == 2 {
                        (v(1)[i] - v(0)[i]) / dt
                    } else if k == 0 {
                        (-3.0 * v(0)[i] + 4.0 * v(1)[i] - v(2)[i]) / (2.0 * dt)
                    } else if k == n - 1 {
                        (3.0 * v(n - 1)[i] - 4.0 * v(n - 2)[i] + v(n - 3)[i]) / (2.0 * dt)
                    } else {
                        (v(k + 1)[i] - v(k - 1)[i]) / (2.0 * dt)
                    }
                })
                .collect()
        };
        let vk = potential.slices()[k].values();
        let uv = uk.values();
        let scale = uk.max_abs().max(f64::MIN_POSITIVE);
        let worst = (0..grid.len())
            .filter(|&i| grid.depth(i) >= 3)
            .map(|i| (lap.values()[i] + vk[i] * uv[i] - ut[i]).abs())
            .fold(0.0, f64::max);
        slice_residuals.push(worst / scale);
    }
    let residual = slice_residuals.iter().copied().fold(0.0, f64::max);
    Ok(ForwardReport { potential, slice_residuals, residual })
}

/// Space-time region where a recovered potential is compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub r_min: f64,
    pub r_max: f64,
    /// Elapsed time from the start of the solution.
    pub t_min: f64,
}

#[derive(Clone, Debug)]
pub struct LogTransform {
    pub w: SpaceTimeField,
    /// `−ln w`; `+∞` where `w ≤ 0`.
    pub f: SpaceTimeField,
    pub residual_v: SpaceTimeField,
    pub window: Window,
    pub window_nodes: usize,
    /// `max |residual_V − V|` over the window.
    pub max_abs_error: f64,
    /// `max |residual_V − V| / |V|` over window nodes with `V ≠ 0`.
    pub max_relative_error: f64,
}

/// `f = −ln w` and the potential `Δf − |∇f|² − ∂ₜf` it encodes, compared
/// with the potential that produced `w`.
///
/// The spatial part uses the log-consistent form, which is the exact
/// inverse of the solver's Laplacian; time differences are central.
pub fn recover_f(w: &CauchySolution, window: Window) -> Result<LogTransform> {
    let field = &w.field;
    let grid = *field.grid();
    let f = field.map(|x| if x > 0.0 { -x.ln() } else { f64::INFINITY });
    let in_window = |k: usize, i: usize| {
        let r = grid.radius(i);
        field.time(k) - w.start >= window.t_min * (1.0 - 1e-9) && r >= window.r_min && r <= window.r_max
    };
    let mut count = 0;
    let mut nodes = 0;
    for (k, s) in field.slices().iter().enumerate() {
        for i in 0..grid.len() {
            if in_window(k, i) {
                nodes += 1;
                if !(s.values()[i] > 0.0) {
                    count += 1;
                }
            }
        }
    }
    if count > 0 {
        return Err(Error::NonPositive { count, context: "solution inside the comparison window" });
    }
    let residual_v = potentials::combine_derivatives(&f, 1.0, DerivativeScheme::LogConsistent)?;
    let (mut abs_err, mut rel_err): (f64, f64) = (0.0, 0.0);
    for k in 0..field.len() {
        let v_used = w.potential.at_time(field.time(k));
        let rv = residual_v.slices()[k].values();
        for i in 0..grid.len() {
            if !in_window(k, i) {
                continue;
            }
            let v = v_used.values()[i];
            let e = (rv[i] - v).abs();
            abs_err = abs_err.max(e);
            if v != 0.0 {
                rel_err = rel_err.max(e / v.abs());
            }
        }
    }
    Ok(LogTransform {
        w: field.clone(),
        f,
        residual_v,
        window,
        window_nodes: nodes,
        max_abs_error: abs_err,
        max_relative_error: rel_err,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Corollary1Report {
    pub b: f64,
    pub spectral: SpectralReport,
    pub levels: Vec<f64>,
    /// `max_t ‖u_j(t)‖₂ / (‖u₀‖₂ e^{bt})` per level.
    pub energy_ratios: Vec<f64>,
    /// `sup u_j` per level.
    pub level_sups: Vec<f64>,
    pub top_growth: f64,
    pub saturating: bool,
    pub recovered_abs_error: f64,
    pub recovered_relative_error: f64,
}

/// Energy bound and saturation along the truncation ladder for a
/// form-bounded potential, followed by a log round trip of the top level.
#[allow(clippy::too_many_arguments)]
pub fn corollary1_experiment(
    spec: &PotentialSpec,
    u0: &ScalarField,
    ladder: &TruncationLadder,
    test_grids: &[Grid],
    spectral_cfg: &SpectralConfig,
    solver_cfg: &SolverConfig,
    horizon: f64,
    window: Window,
    slack: f64,
) -> Result<Corollary1Report> {
    if u0.values().iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidArgument("initial data must be nonnegative".into()));
    }
    let spectral = form_bounded_test(spec, test_grids, spectral_cfg)?;
    if !spectral.form_bounded {
        return Err(Error::HypothesisNotMet(format!(
            "potential is not form bounded (lambda_min {:.4}, diverging: {})",
            spectral.lambda_min, spectral.diverging
        )));
    }
    let grid = *u0.grid();
    let v = potentials::realize(spec, &grid, solver_cfg.dt, horizon)?;
    let mut b: f64 = 0.0;
    for s in v.slices() {
        let (l, _) = smallest_eigenvalue(&grid, s, spectral_cfg.tol, spectral_cfg.max_iters)?;
        b = b.max(-l);
    }
    let l2_0 = grid::lp_norm(u0, 2.0)?;
    let levels = ladder.upper().to_vec();
    let solutions = par::map(levels.len(), |k| {
        let vj = potentials::truncate_above(&v, levels[k]);
        solver::solve_cauchy(u0, &vj, solver_cfg, horizon)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut energy_ratios = Vec::with_capacity(levels.len());
    for sol in &solutions {
        let mut worst: f64 = 0.0;
        for d in &sol.diagnostics {
            let ratio = d.l2 / (l2_0 * (b * d.t).exp());
            worst = worst.max(ratio);
            if ratio > 1.0 + slack {
                return Err(Error::EnergyBound { t: d.t, ratio });
            }
        }
        energy_ratios.push(worst);
    }
    let level_sups: Vec<f64> = solutions.iter().map(|s| s.field.max_abs()).collect();
    let m = levels.len();
    let top_growth = (level_sups[m - 1] / level_sups[m - 2]).powf(1.0 / (levels[m - 1] / levels[m - 2]).log2()) - 1.0;
    let recovered = recover_f(solutions.last().expect("ladder has levels"), window)?;
    Ok(Corollary1Report {
        b,
        spectral,
        levels,
        energy_ratios,
        level_sups,
        top_growth,
        saturating: top_growth <= 0.1,
        recovered_abs_error: recovered.max_abs_error,
        recovered_relative_error: recovered.max_relative_error,
    })
}
