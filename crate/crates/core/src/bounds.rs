//! Gaussian envelopes `c·g_b` for estimated kernels and related diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, SpaceTimeField};
use crate::kato;
use crate::kernels::{self, FreeKernel, KernelEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// Where a fit was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub source: Vec<f64>,
    pub source_time: f64,
    pub times: Vec<f64>,
    pub nodes_per_time: usize,
    pub stride: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub side: Side,
    pub b: f64,
    pub c: f64,
    /// Worst `ln(G / (c·g_b))` over the probes: the largest for upper fits, the smallest for lower fits.
    pub residual: f64,
    pub admissible: bool,
    pub probes: ProbeSummary,
}

impl BoundFit {
    /// `c·g_b(x, t; y, s)`.
    pub fn envelope(&self, x: &[f64], t: f64, y: &[f64], s: f64) -> Result<f64> {
        Ok(self.c * kernels::free_kernel_eval(x, t, y, s, FreeKernel::PaperGb { b: self.b })?)
    }
}

fn default_stride() -> usize {
    1
}
fn default_resolution() -> f64 {
    1e-2
}

fn default_kappa() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Candidate exponents; defaults to `2^{k/4}` from 1/16 to 4.
    #[serde(default = "default_b_grid")]
    pub b_grid: Vec<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Lower fits use the window `|x − y|² ≤ κ(t − s)`.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Upper fits skip probes below `resolution` times the slice peak. The
    /// estimate is good to about a percent of its peak, and below that the
    /// lattice tail overshoots the Gaussian by orders of magnitude.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { b_grid: default_b_grid(), stride: 1, kappa: default_kappa(), resolution: default_resolution() }
    }
}

pub fn default_b_grid() -> Vec<f64> {
    (-16..=8).map(|k| 2f64.powf(k as f64 / 4.0)).collect()
}

struct Sample {
    tau: f64,
    r2: f64,
    g: f64,
    peak: f64,
}

fn collect(est: &KernelEstimate, column: &SpaceTimeField, stride: usize) -> (Vec<Sample>, ProbeSummary) {
    let grid = est.grid();
    let nodes = kernels::probe_nodes(grid, &est.source, stride);
    let mut samples = Vec::new();
    let mut times = Vec::new();
    for k in est.probe_slices() {
        let t = column.time(k);
        times.push(t);
        let values = column.slices()[k].values();
        let peak = nodes.iter().map(|&i| values[i]).fold(0.0, f64::max);
        for &i in &nodes {
            let p = grid.point(i);
            let r2: f64 = est.source.iter().enumerate().map(|(a, c)| (p[a] - c).powi(2)).sum();
            samples.push(Sample { tau: t - est.source_time, r2, g: values[i], peak });
        }
    }
    let summary = ProbeSummary {
        source: est.source.clone(),
        source_time: est.source_time,
        count: samples.len(),
        nodes_per_time: nodes.len(),
        stride,
        times,
    };
    (samples, summary)
}

/// Gaussian mass `∫ g_b(x, t; y, s) dx = (π/b)^{n/2}`.
pub fn gb_mass(b: f64, n: usize) -> f64 {
    (std::f64::consts::PI / b).powf(0.5 * n as f64)
}

/// `∫_{|z|² ≤ κ} e^{−b|z|²} dz` in `n` dimensions.
pub fn windowed_mass(b: f64, kappa: f64, n: usize) -> f64 {
    let rmax = kappa.sqrt();
    let steps = 4000;
    let dr = rmax / steps as f64;
    let sphere = match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    };
    let f = |r: f64| r.powi(n as i32 - 1) * (-b * r * r).exp();
    // Simpson
    let mut acc = f(0.0) + f(rmax);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * dr);
    }
    sphere * acc * dr / 3.0
}

fn log_gb(s: &Sample, b: f64, n: usize) -> f64 {
    -0.5 * n as f64 * s.tau.ln() - b * s.r2 / s.tau
}

/// Smallest `c` with `G ≤ c·g_b` on every probe, for each `b`, keeping the
/// pair with the least envelope mass.
pub fn fit_gaussian_upper(est: &KernelEstimate, cfg: &FitConfig) -> Result<BoundFit> {
    est.require_converged()?;
    fit_upper_column(est, est.top(), cfg)
}

fn fit_upper_column(est: &KernelEstimate, column: &SpaceTimeField, cfg: &FitConfig) -> Result<BoundFit> {
    let n = est.dim();
    let (all, mut probes) = collect(est, column, cfg.stride);
    let samples: Vec<Sample> = all.into_iter().filter(|s| s.g > cfg.resolution * s.peak).collect();
    probes.count = samples.len();
    let mut best: Option<(f64, f64, f64)> = None;
    for &b in &cfg.b_grid {
        let log_c = samples
            .iter()
            .filter(|s| s.g > 0.0)
            .map(|s| s.g.ln() - log_gb(s, b, n))
            .fold(f64::NEG_INFINITY, f64::max);
        let c = log_c.exp();
        let cost = c * gb_mass(b, n);
        if c.is_finite() && c > 0.0 && best.is_none_or(|(_, _, m)| cost < m) {
            best = Some((b, c, cost));
        }
    }
    let Some((b, c, _)) = best else {
        return Ok(BoundFit { side: Side::Upper, b: f64::NAN, c: f64::INFINITY, residual: f64::INFINITY, admissible: false, probes });
    };
    let residual = samples
        .iter()
        .filter(|s| s.g > 0.0)
        .map(|s| s.g.ln() - c.ln() - log_gb(s, b, n))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundFit { side: Side::Upper, b, c, residual, admissible: true, probes })
}

/// Minimal upper constant at fixed `b` for every ladder level.
pub fn upper_constants_along_ladder(est: &KernelEstimate, b: f64, stride: usize) -> Vec<f64> {
    let n = est.dim();
    est.columns
        .iter()
        .map(|col| {
            let (samples, _) = collect(est, col, stride);
            samples
                .iter()
                .filter(|s| s.g > 0.0)
                .map(|s| s.g.ln() - log_gb(s, b, n))
                .fold(f64::NEG_INFINITY, f64::max)
                .exp()
        })
        .collect()
}

/// Largest `c` with `G ≥ c·g_b` on the window `|x − y|² ≤ κ(t − s)`, for
/// each `b`, keeping the pair with the largest windowed envelope mass.
pub fn fit_gaussian_lower(est: &KernelEstimate, cfg: &FitConfig) -> Result<BoundFit> {
    est.require_converged()?;
    let n = est.dim();
    let (all, mut probes) = collect(est, est.top(), cfg.stride);
    let samples: Vec<Sample> = all.into_iter().filter(|s| s.r2 <= cfg.kappa * s.tau).collect();
    probes.count = samples.len();
    let bad = samples.iter().filter(|s| !(s.g > 0.0)).count();
    if bad > 0 {
        return Err(Error::NonPositive { count: bad, context: "kernel column inside the lower-bound window" });
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("lower-bound window contains no probes".into()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &b in &cfg.b_grid {
        let log_c = samples.iter().map(|s| s.g.ln() - log_gb(s, b, n)).fold(f64::INFINITY, f64::min);
        let c = log_c.exp();
        let mass = c * windowed_mass(b, cfg.kappa, n);
        if c.is_finite() && c > 0.0 && best.is_none_or(|(_, _, m)| mass > m) {
            best = Some((b, c, mass));
        }
    }
    let Some((b, c, _)) = best else {
        return Ok(BoundFit { side: Side::Lower, b: f64::NAN, c: 0.0, residual: f64::NEG_INFINITY, admissible: false, probes });
    };
    let residual = samples
        .iter()
        .map(|s| s.g.ln() - c.ln() - log_gb(s, b, n))
        .fold(f64::INFINITY, f64::min);
    Ok(BoundFit { side: Side::Lower, b, c, residual, admissible: true, probes })
}

/// `(t, (t − s)^{n/2}·G(y, t; y, s))` for the top column on `t − s ≥ t_min`.
pub fn on_diagonal_profile(est: &KernelEstimate) -> Result<Vec<(f64, f64)>> {
    profile_of(est, est.top())
}

/// On-diagonal profile for every ladder level.
pub fn on_diagonal_profiles(est: &KernelEstimate) -> Result<Vec<Vec<(f64, f64)>>> {
    est.columns.iter().map(|c| profile_of(est, c)).collect()
}

fn profile_of(est: &KernelEstimate, column: &SpaceTimeField) -> Result<Vec<(f64, f64)>> {
    let half = 0.5 * est.dim() as f64;
    est.probe_slices()
        .map(|k| {
            let t = column.time(k);
            let g = column.slices()[k].interpolate(&est.source)?;
            Ok((t, (t - est.source_time).powf(half) * g))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormReport {
    pub alpha: f64,
    /// `max sup_φ |∫G φ| / ‖φ‖_{α/(α−1)} · (t − s)^{n(α−1)/(2α)}`.
    pub constant: f64,
    /// `(t − s, constant at that time)`.
    pub per_time: Vec<(f64, f64)>,
    pub lattice_spacing: f64,
    pub dictionary_size: usize,
}

/// `|∫ G φ| / ‖φ‖_q` for a lattice quadrature with cell volume `cell`.
pub fn dictionary_ratio(g: &[f64], phi: &[f64], cell: f64, q: f64) -> f64 {
    let integral: f64 = g.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() * cell;
    let norm = if q.is_infinite() {
        phi.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    } else {
        (phi.iter().map(|x| x.abs().powf(q)).sum::<f64>() * cell).powf(1.0 / q)
    };
    if norm == 0.0 { 0.0 } else { integral.abs() / norm }
}

/// Empirical `L^{α/(α−1)} → L^∞` norm of `φ ↦ ∫G(·, t; y, s)φ(y)dy` over a
/// dictionary of lattice-aligned indicator cubes, scaled by the free decay rate.
///
/// `ensemble` holds columns for every source of a regular lattice, all with the
/// same source time. Times with `t − s` below the squared lattice spacing are skipped.
pub fn operator_norm_diag(ensemble: &[KernelEstimate], alpha: f64, max_box: usize) -> Result<OperatorNormReport> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must exceed 1")));
    }
    let first = ensemble.first().ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let n = first.dim();
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); n];
    for e in ensemble {
        for a in 0..n {
            if !axes[a].iter().any(|c| (c - e.source[a]).abs() < 1e-12) {
                axes[a].push(e.source[a]);
            }
        }
    }
    axes.iter_mut().for_each(|a| a.sort_by(f64::total_cmp));
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    if counts.iter().product::<usize>() != ensemble.len() || counts.iter().any(|&c| c < 2) {
        return Err(Error::InvalidArgument("sources do not form a full lattice".into()));
    }
    let d = axes[0][1] - axes[0][0];
    for a in &axes {
        if a.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d) {
            return Err(Error::InvalidArgument("source lattice is not uniform".into()));
        }
    }
    let lattice_index = |y: &[f64]| -> usize {
        let mut idx = 0;
        for a in (0..n).rev() {
            let k = ((y[a] - axes[a][0]) / d).round() as usize;
            idx = idx * counts[a] + k;
        }
        idx
    };
    let mut ordered: Vec<&KernelEstimate> = vec![first; ensemble.len()];
    for e in ensemble {
        ordered[lattice_index(&e.source)] = e;
    }
    let s = first.source_time;
    let q = alpha / (alpha - 1.0);
    let decay = n as f64 * (alpha - 1.0) / (2.0 * alpha);
    let cell = d.powi(n as i32);
    let slices: Vec<usize> = first
        .probe_slices()
        .filter(|&k| first.top().time(k) - s >= d * d)
        .collect();
    if slices.is_empty() {
        return Err(Error::InvalidArgument(format!("source lattice too sparse: spacing {d} exceeds the resolved time scale")));
    }
    // dictionary of cubes: (side, corner multi-index)
    let mut boxes: Vec<Vec<usize>> = Vec::new();
    for side in 1..=max_box.max(1) {
        if counts.iter().any(|&c| side > c) {
            break;
        }
        let mut corner = vec![0usize; n];
        loop {
            let mut members = Vec::new();
            let mut off = vec![0usize; n];
            loop {
                let m: Vec<f64> = (0..n).map(|a| axes[a][corner[a] + off[a]]).collect();
                members.push(lattice_index(&m));
                let mut a = 0;
                while a < n {
                    off[a] += 1;
                    if off[a] < side {
                        break;
                    }
                    off[a] = 0;
                    a += 1;
                }
                if a == n {
                    break;
                }
            }
            boxes.push(members);
            let mut a = 0;
            while a < n {
                corner[a] += 1;
                if corner[a] + side <= counts[a] {
                    break;
                }
                corner[a] = 0;
                a += 1;
            }
            if a == n {
                break;
            }
        }
    }
    let mut per_time = Vec::with_capacity(slices.len());
    let mut constant: f64 = 0.0;
    for &k in &slices {
        let tau = first.top().time(k) - s;
        let mut best: f64 = 0.0;
        for e in ensemble {
            let x = &e.source;
            let g: Vec<f64> = ordered.iter().map(|col| col.top().slices()[k].interpolate(x)).collect::<Result<_>>()?;
            for members in &boxes {
                let mut phi = vec![0.0; g.len()];
                members.iter().for_each(|&j| phi[j] = 1.0);
                best = best.max(dictionary_ratio(&g, &phi, cell, q));
            }
        }
        let value = best * tau.powf(decay);
        constant = constant.max(value);
        per_time.push((tau, value));
    }
    Ok(OperatorNormReport { alpha, constant, per_time, lattice_spacing: d, dictionary_size: boxes.len() })
}

/// `s₀^{1/α} (4π)^{−n(α−1)/(2α)}`, the norm constant predicted from the mass sandwich.
pub fn gpq_constant(s0: f64, alpha: f64, n: usize) -> f64 {
    s0.powf(1.0 / alpha) * (4.0 * std::f64::consts::PI).powf(-(n as f64) * (alpha - 1.0) / (2.0 * alpha))
}

/// `sup F / inf F` for `F = e^{−αf}` over all stored samples of `f`.
pub fn sup_inf_ratio(f: &SpaceTimeField, alpha: f64) -> f64 {
    let (lo, hi) = f.slices().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.min()), hi.max(s.max())));
    (alpha * (hi - lo)).exp()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    /// `H(t) = ∫ e^{−π|y|²} ln u(y, t) dy`.
    pub h: Vec<f64>,
    /// `M(t) = ∫ e^{−π|y|²} m(y, t) dy`.
    pub m: Vec<f64>,
    #[serde(skip)]
    pub m_field: Option<SpaceTimeField>,
    /// Largest decrease rate `max(0, −ΔH/Δt)` along the trace.
    pub c_drift: f64,
    pub h_final: f64,
}

fn weighted_integral(grid: &Grid, values: &[f64], map: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        let r = grid.radius(i);
        if r > 4.0 || grid.depth(i) == 0 {
            continue;
        }
        acc += grid.quadrature_weight(i) * (-std::f64::consts::PI * r * r).exp() * map(*v);
    }
    acc * grid.cell_volume()
}

/// Weighted log-mass of the top column and the weighted mass of `m = −G₀⋆V`.
pub fn nash_entropy_trace(est: &KernelEstimate, v: &SpaceTimeField) -> Result<EntropyTrace> {
    est.require_converged()?;
    let grid = *est.grid();
    let col = est.top();
    let probe: Vec<usize> = est.probe_slices().collect();
    for &k in &probe {
        let values = col.slices()[k].values();
        let bad = (0..grid.len()).filter(|&i| grid.radius(i) <= 4.0 && grid.depth(i) > 0 && !(values[i] > 0.0)).count();
        if bad > 0 {
            return Err(Error::NonPositive { count: bad, context: "kernel column under the entropy weight" });
        }
    }
    let until = col.time(col.len() - 1);
    let conv = kato::heat_convolve(v, FreeKernel::Probability, until - v.t0())?;
    let m_field = conv.result.map(|x| -x);
    let mut times = Vec::with_capacity(probe.len());
    let mut h = Vec::with_capacity(probe.len());
    let mut m = Vec::with_capacity(probe.len());
    for &k in &probe {
        let t = col.time(k);
        times.push(t);
        h.push(weighted_integral(&grid, col.slices()[k].values(), f64::ln));
        let mk: ScalarField = m_field.at_time(t);
        m.push(weighted_integral(&grid, mk.values(), |x| x));
    }
    let c_drift = times
        .windows(2)
        .zip(h.windows(2))
        .map(|(t, hh)| -(hh[1] - hh[0]) / (t[1] - t[0]))
        .fold(0.0, f64::max);
    Ok(EntropyTrace { h_final: *h.last().unwrap_or(&f64::NAN), times, h, m, m_field: Some(m_field), c_drift })
}

/// Closed-form entropy of the free kernel from the origin at elapsed time `t`:
/// `−(n/2) ln(4πt) − n/(8πt)`.
pub fn free_entropy(t: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * (4.0 * std::f64::consts::PI * t).ln() - n / (8.0 * std::f64::consts::PI * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_grid_spans_sixteenth_to_four() {
        let g = default_b_grid();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1.0 / 16.0).abs() < 1e-15);
        assert!((g[24] - 4.0).abs() < 1e-15);
        assert!(g.iter().any(|b| (b - 0.25).abs() < 1e-15));
    }

    #[test]
    fn windowed_mass_tends_to_full_mass() {
        for n in 1..=3 {
            let full = gb_mass(0.5, n);
            assert!((windowed_mass(0.5, 400.0, n) - full).abs() < 1e-8 * full);
        }
    }

    #[test]
    fn degenerate_test_function_has_zero_ratio() {
        assert_eq!(dictionary_ratio(&[1.0, 2.0], &[0.0, 0.0], 0.1, 2.0), 0.0);
        let r = dictionary_ratio(&[1.0, 1.0], &[1.0, 1.0], 0.5, 2.0);
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gpq_constant_at_unit_ratio() {
        let c = gpq_constant(1.0, 2.0, 3);
        assert!((c - (4.0 * std::f64::consts::PI).powf(-0.75)).abs() < 1e-15);
    }
}
