//! Free heat kernels and fundamental solutions as limits of truncated potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Boundary, Grid, ScalarField, SpaceTimeField};
use crate::par;
use crate::potentials::{self, PotentialSpec, TruncationLadder};
use crate::solver::{self, CauchySolution, SolverConfig};

/// Normalization of a closed-form Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreeKernel {
    /// `(4πτ)^{−n/2} e^{−|x−y|²/(4τ)}`.
    Probability,
    /// Unnormalized `τ^{−n/2} e^{−b|x−y|²/τ}`.
    PaperGb { b: f64 },
}

/// Closed-form kernel value at `(x, t; y, s)`.
pub fn free_kernel_eval(x: &[f64], t: f64, y: &[f64], s: f64, kernel: FreeKernel) -> Result<f64> {
    if !(t > s) {
        return Err(Error::InvalidArgument(format!("kernel needs t > s, got t = {t}, s = {s}")));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), found: y.len() });
    }
    let tau = t - s;
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = x.len() as f64;
    Ok(match kernel {
        FreeKernel::Probability => (4.0 * std::f64::consts::PI * tau).powf(-0.5 * n) * (-r2 / (4.0 * tau)).exp(),
        FreeKernel::PaperGb { b } => tau.powf(-0.5 * n) * (-b * r2 / tau).exp(),
    })
}

/// Closed-form probability kernel sampled on the grid nodes.
pub fn free_kernel_field(grid: &Grid, y: &[f64], tau: f64) -> Result<ScalarField> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel needs positive elapsed time, got {tau}")));
    }
    let n = grid.dim();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, found: y.len() });
    }
    Ok(grid.sample(|p| free_kernel_eval(&p[..n], tau, y, 0.0, FreeKernel::Probability).expect("validated")))
}

/// Gaussian weights of the one-dimensional heat kernel at time `tau`,
/// integrated over the cells of width `h` centered at each offset.
fn cell_weights(h: f64, tau: f64, max_offset: Option<usize>) -> Vec<f64> {
    let scale = 1.0 / (2.0 * tau.sqrt());
    let mut reach = (10.0 * (2.0 * tau).sqrt() / h).ceil() as usize + 1;
    if let Some(m) = max_offset {
        reach = reach.min(m);
    }
    (0..=reach)
        .map(|m| {
            let m = m as f64;
            0.5 * (libm::erf((m + 0.5) * h * scale) - libm::erf((m - 0.5) * h * scale))
        })
        .collect()
}

/// Apply the free heat semigroup for time `tau` by exact-kernel convolution.
///
/// Periodic grids wrap; on Dirichlet grids values outside the box count as zero.
pub fn gaussian_smooth(field: &ScalarField, tau: f64) -> ScalarField {
    if tau <= 0.0 {
        return field.clone();
    }
    let grid = *field.grid();
    let n = grid.points();
    let periodic = grid.boundary() == Boundary::Periodic;
    let weights = cell_weights(grid.spacing(), tau, if periodic { None } else { Some(n) });
    let mut cur = field.values().to_vec();
    let mut next = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let src = &cur;
        par::fill(&mut next, |i| {
            let ia = grid.axis_index(i, axis) as isize;
            let stride = grid.stride(axis) as isize;
            let base = i as isize - ia * stride;
            let mut acc = weights[0] * src[i];
            for (m, w) in weights.iter().enumerate().skip(1) {
                for sgn in [-1isize, 1] {
                    let mut j = ia + sgn * m as isize;
                    if j < 0 || j >= n as isize {
                        if !periodic {
                            continue;
                        }
                        j = j.rem_euclid(n as isize);
                    }
                    acc += w * src[(base + j * stride) as usize];
                }
            }
            acc
        });
        std::mem::swap(&mut cur, &mut next);
    }
    ScalarField::new(grid, cur).expect("length preserved")
}

/// Convolution with the unnormalized `g_b` at elapsed time `tau`.
pub fn gb_smooth(field: &ScalarField, b: f64, tau: f64) -> ScalarField {
    let n = field.grid().dim() as f64;
    let factor = (std::f64::consts::PI / b).powf(0.5 * n);
    gaussian_smooth(field, tau / (4.0 * b)).scale(factor)
}

fn default_floor() -> f64 {
    1e3
}
fn default_cauchy_tol() -> f64 {
    0.02
}
fn default_growth() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub solver: SolverConfig,
    /// Elapsed time covered by each column.
    pub horizon: f64,
    /// Deep lower truncation `max{V, −floor}`.
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Relative L∞ gap between the top two levels below which the ladder counts as converged.
    #[serde(default = "default_cauchy_tol")]
    pub cauchy_tol: f64,
    /// Per-octave growth of the on-diagonal value at the top two levels that signals divergence.
    #[serde(default = "default_growth")]
    pub divergence_growth: f64,
}

impl KernelConfig {
    pub fn new(solver: SolverConfig, horizon: f64) -> Self {
        Self {
            solver,
            horizon,
            floor: default_floor(),
            cauchy_tol: default_cauchy_tol(),
            divergence_growth: default_growth(),
        }
    }

    /// Smallest elapsed time entering convergence and bound metrics.
    pub fn t_min(&self) -> f64 {
        4.0 * self.solver.dt
    }
}

#[derive(Clone, Debug)]
pub struct KernelEstimate {
    pub source: Vec<f64>,
    pub source_time: f64,
    pub ladder: TruncationLadder,
    /// One column per upper level, each solved from the discrete delta at the source.
    pub columns: Vec<SpaceTimeField>,
    /// Relative L∞ gaps between consecutive levels on `t − s ≥ t_min`.
    pub gaps: Vec<f64>,
    pub cauchy_gap: f64,
    pub converged: bool,
    /// `sup_{t ≥ t_min} G(y, t; y, s)` per level.
    pub diagonal_peaks: Vec<f64>,
    /// Per-octave growth of the diagonal peak between the top two levels.
    pub top_growth: f64,
    pub diverging: bool,
    pub t_min: f64,
    pub config: KernelConfig,
}

impl KernelEstimate {
    pub fn grid(&self) -> &Grid {
        self.columns[0].grid()
    }

    /// Column at the highest truncation level.
    pub fn top(&self) -> &SpaceTimeField {
        self.columns.last().expect("ladder has levels")
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    /// Indices of stored slices with `t − s ≥ t_min`.
    pub fn probe_slices(&self) -> impl Iterator<Item = usize> + '_ {
        let top = self.top();
        (0..top.len()).filter(move |&k| top.time(k) - self.source_time >= self.t_min * (1.0 - 1e-9))
    }

    /// Fails unless the ladder converged.
    pub fn require_converged(&self) -> Result<()> {
        if self.diverging {
            return Err(Error::Divergence(format!(
                "on-diagonal value grows {:.1}% per octave at the top of the ladder",
                100.0 * self.top_growth
            )));
        }
        if !self.converged {
            return Err(Error::NotConverged { gap: self.cauchy_gap });
        }
        Ok(())
    }
}

/// Realize `spec` over `[0, s + horizon]` and cut it to `[−floor, j]`.
pub fn truncated_potential(
    spec: &PotentialSpec,
    grid: &Grid,
    dt: f64,
    until: f64,
    level: f64,
    floor: f64,
) -> Result<SpaceTimeField> {
    let v = potentials::realize(spec, grid, dt, until)?;
    Ok(potentials::truncate_below(&potentials::truncate_above(&v, level), floor))
}

/// Estimate `G_V(·, ·; y, s)` along the upper truncation ladder.
pub fn estimate_kernel(
    spec: &PotentialSpec,
    y: &[f64],
    s: f64,
    ladder: &TruncationLadder,
    grid: &Grid,
    config: &KernelConfig,
) -> Result<KernelEstimate> {
    if !grid.contains(y) {
        return Err(Error::OutsideBox(y.to_vec()));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("source time {s} must be nonnegative")));
    }
    let delta = grid::discrete_delta(grid, y)?;
    let dt = config.solver.dt;
    let v = potentials::realize(spec, grid, dt, s + config.horizon)?;
    let levels = ladder.upper().to_vec();
    let solutions: Vec<Result<CauchySolution>> = par::map(levels.len(), |l| {
        let vj = potentials::truncate_below(&potentials::truncate_above(&v, levels[l]), config.floor);
        solver::solve_cauchy_from(&delta, &vj, &config.solver, s, config.horizon)
    });
    let columns = solutions.into_iter().map(|r| r.map(|sol| sol.field)).collect::<Result<Vec<_>>>()?;
    assemble(columns, y, s, ladder.clone(), config)
}

fn assemble(
    columns: Vec<SpaceTimeField>,
    y: &[f64],
    s: f64,
    ladder: TruncationLadder,
    config: &KernelConfig,
) -> Result<KernelEstimate> {
    let t_min = config.t_min();
    let probe: Vec<usize> = (0..columns[0].len())
        .filter(|&k| columns[0].time(k) - s >= t_min * (1.0 - 1e-9))
        .collect();
    let levels = ladder.upper();
    for l in 1..columns.len() {
        let report = solver::compare_fields(&columns[l], &columns[l - 1])?;
        if matches!(report.verdict, solver::Ordering::BGreater | solver::Ordering::Incomparable) {
            let worst = columns[l]
                .slices()
                .iter()
                .zip(columns[l - 1].slices())
                .zip(&report.min_a_minus_b)
                .map(|((a, b), m)| -m / a.max_abs().max(b.max_abs()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            return Err(Error::Monotonicity { lower: levels[l - 1], upper: levels[l], worst });
        }
    }
    let gaps: Vec<f64> = (1..columns.len())
        .map(|l| {
            let mut diff: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for &k in &probe {
                let a = columns[l].slices()[k].values();
                let b = columns[l - 1].slices()[k].values();
                diff = diff.max(par::max(a.len(), |i| (a[i] - b[i]).abs()));
                scale = scale.max(columns[l].slices()[k].max_abs());
            }
            if scale > 0.0 { diff / scale } else { 0.0 }
        })
        .collect();
    let diagonal_peaks: Vec<f64> = columns
        .iter()
        .map(|c| {
            probe
                .iter()
                .map(|&k| c.slices()[k].interpolate(y).unwrap_or(f64::NAN))
                .fold(0.0, f64::max)
        })
        .collect();
    let m = levels.len();
    let octaves = (levels[m - 1] / levels[m - 2]).log2();
    let ratio = diagonal_peaks[m - 1] / diagonal_peaks[m - 2];
    let top_growth = if ratio.is_finite() && ratio > 0.0 { ratio.powf(1.0 / octaves) - 1.0 } else { f64::INFINITY };
    let diverging = !(top_growth <= config.divergence_growth);
    let cauchy_gap = *gaps.last().expect("ladder has at least 3 levels");
    Ok(KernelEstimate {
        source: y.to_vec(),
        source_time: s,
        ladder,
        columns,
        gaps,
        cauchy_gap,
        converged: cauchy_gap < config.cauchy_tol && !diverging,
        diagonal_peaks,
        top_growth,
        diverging,
        t_min,
        config: *config,
    })
}

/// `x ↦ ∫ G_V(x, t; y, s) dy` at the top truncation level, computed as the
/// solution at time `t` started from `u ≡ 1` at time `s`.
pub fn mass_from_ones(
    spec: &PotentialSpec,
    s: f64,
    t: f64,
    grid: &Grid,
    top_level: f64,
    config: &KernelConfig,
) -> Result<ScalarField> {
    if !(t > s) {
        return Err(Error::InvalidArgument(format!("mass needs t > s, got t = {t}, s = {s}")));
    }
    let v = truncated_potential(spec, grid, config.solver.dt, t, top_level, config.floor)?;
    let ones = ScalarField::constant(*grid, 1.0);
    let sol = solver::solve_cauchy_from(&ones, &v, &config.solver, s, t - s)?;
    Ok(sol.field.last().clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacReport {
    pub p: f64,
    pub slack: f64,
    pub probes: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// `max G_V / (G_{pV}^{1/p} G₀^{(p−1)/p})` over the probes.
    pub worst_ratio: f64,
}

/// Sources and decimation for probe-based checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub sources: Vec<Vec<f64>>,
    #[serde(default)]
    pub source_time: f64,
    /// Use every `stride`-th node.
    #[serde(default = "one_usize")]
    pub stride: usize,
}

fn one_usize() -> usize {
    1
}

/// Nodes `x` with `|x − y| ≤ L/2` visited with the given stride.
pub(crate) fn probe_nodes(grid: &Grid, y: &[f64], stride: usize) -> Vec<usize> {
    let reach = 0.5 * grid.half_width();
    (0..grid.len())
        .step_by(stride.max(1))
        .filter(|&i| {
            let p = grid.point(i);
            let d2: f64 = y.iter().enumerate().map(|(a, c)| (p[a] - c).powi(2)).sum();
            d2.sqrt() <= reach
        })
        .collect()
}

/// Check `G_V ≤ (1 + slack)·G_{pV}^{1/p}·G₀^{(p−1)/p}` on probe points.
///
/// All three kernels are estimated with the same discretization.
pub fn feynman_kac_check(
    spec: &PotentialSpec,
    p: f64,
    probes: &ProbeSet,
    ladder: &TruncationLadder,
    grid: &Grid,
    config: &KernelConfig,
    slack: f64,
) -> Result<FeynmanKacReport> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("exponent p = {p} must exceed 1")));
    }
    let s = probes.source_time;
    let free = spec.scaled(0.0);
    let powered = spec.scaled(p);
    let mut count = 0usize;
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for y in &probes.sources {
        let gv = estimate_kernel(spec, y, s, ladder, grid, config)?;
        let gp = estimate_kernel(&powered, y, s, ladder, grid, config)?;
        let g0 = estimate_kernel(&free, y, s, ladder, grid, config)?;
        gv.require_converged()?;
        gp.require_converged()?;
        let nodes = probe_nodes(grid, y, probes.stride);
        for k in gv.probe_slices().collect::<Vec<_>>() {
            let a = gv.top().slices()[k].values();
            let b = gp.top().slices()[k].values();
            let c = g0.top().slices()[k].values();
            let floor = 1e-12 * gv.top().slices()[k].max_abs();
            for &i in &nodes {
                if a[i] <= floor {
                    continue;
                }
                let rhs = b[i].max(0.0).powf(1.0 / p) * c[i].max(0.0).powf((p - 1.0) / p);
                let ratio = a[i] / rhs;
                count += 1;
                worst = worst.max(ratio);
                if !(ratio <= 1.0 + slack) {
                    violations += 1;
                }
            }
        }
    }
    Ok(FeynmanKacReport {
        p,
        slack,
        probes: count,
        violations,
        violation_fraction: if count > 0 { violations as f64 / count as f64 } else { 0.0 },
        worst_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_on_diagonal_values() {
        let g = free_kernel_eval(&[0.3, 0.1], 1.5, &[0.3, 0.1], 0.5, FreeKernel::Probability).unwrap();
        assert_relative_eq!(g, 1.0 / (4.0 * std::f64::consts::PI), max_relative = 1e-14);
        let gb = free_kernel_eval(&[0.0; 3], 2.0, &[0.0; 3], 0.0, FreeKernel::PaperGb { b: 0.7 }).unwrap();
        assert_relative_eq!(gb, 2f64.powf(-1.5), max_relative = 1e-14);
        assert!(free_kernel_eval(&[0.0], 1.0, &[0.0], 1.0, FreeKernel::Probability).is_err());
    }

    #[test]
    fn smoothing_preserves_mass_and_composes() {
        let g = Grid::new(1, 4.0, 161, Boundary::DirichletZero).unwrap();
        let delta = grid::discrete_delta(&g, &[0.1]).unwrap();
        let a = gaussian_smooth(&delta, 0.2);
        assert_relative_eq!(grid::integrate(&a), 1.0, max_relative = 1e-8);
        let b = gaussian_smooth(&gaussian_smooth(&delta, 0.1), 0.1);
        for i in 0..g.len() {
            assert!((a.values()[i] - b.values()[i]).abs() < 1e-3 * a.max());
        }
    }

    #[test]
    fn periodic_smoothing_conserves_constant() {
        let g = Grid::new(2, 1.0, 16, Boundary::Periodic).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let s = gaussian_smooth(&one, 3.0);
        assert!(s.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gb_matches_closed_form_on_diagonal() {
        let g = Grid::new(1, 6.0, 601, Boundary::DirichletZero).unwrap();
        let delta = grid::discrete_delta(&g, &[0.0]).unwrap();
        let b = 0.5;
        let tau = 0.8;
        let s = gb_smooth(&delta, b, tau);
        let expected = tau.powf(-0.5);
        assert_relative_eq!(s.interpolate(&[0.0]).unwrap(), expected, max_relative = 1e-3);
    }
}
