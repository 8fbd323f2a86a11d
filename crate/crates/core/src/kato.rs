//! Heat-boundedness: `G₀⋆f(x, t) = ∫₀ᵗ∫ G₀(x, t; y, s) f(y, s) dy ds` by
//! exact-kernel quadrature, and classification by refinement studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Boundary, Grid, ScalarField, SpaceTimeField};
use crate::kernels::{self, FreeKernel};
use crate::par;
use crate::positivity::{self, SpectralConfig, SpectralReport};
use crate::potentials::{self, PotentialSpec};

/// Something that can be sampled on any grid of a refinement sequence.
pub trait Refinable: Sync {
    fn sample(&self, grid: &Grid) -> Result<SpaceTimeField>;
}

impl<F> Refinable for F
where
    F: Fn(&Grid) -> Result<SpaceTimeField> + Sync,
{
    fn sample(&self, grid: &Grid) -> Result<SpaceTimeField> {
        self(grid)
    }
}

/// A potential spec sampled with a fixed time step over a fixed horizon.
#[derive(Clone, Debug)]
pub struct RealizedPotential {
    pub spec: PotentialSpec,
    pub dt: f64,
    pub horizon: f64,
}

impl Refinable for RealizedPotential {
    fn sample(&self, grid: &Grid) -> Result<SpaceTimeField> {
        potentials::realize(&self.spec, grid, self.dt, self.horizon)
    }
}

#[derive(Clone, Debug)]
pub struct HeatConvolution {
    pub input: SpaceTimeField,
    pub kernel: FreeKernel,
    /// Values at `t0 + k·dt`; slice 0 is zero.
    pub result: SpaceTimeField,
    /// Sup norm of the result, one entry per grid when produced by a refinement study.
    pub refinement_trace: Vec<f64>,
}

fn smooth(field: &ScalarField, kernel: FreeKernel, tau: f64) -> ScalarField {
    match kernel {
        FreeKernel::Probability => kernels::gaussian_smooth(field, tau),
        FreeKernel::PaperGb { b } => kernels::gb_smooth(field, b, tau),
    }
}

fn touches_boundary(input: &SpaceTimeField) -> bool {
    let grid = input.grid();
    if grid.boundary() == Boundary::Periodic {
        return false;
    }
    input
        .slices()
        .iter()
        .any(|s| (0..grid.len()).any(|i| grid.is_boundary(i) && s.values()[i] != 0.0))
}

/// Space-time convolution with the chosen kernel on `[t0, t0 + horizon]`.
///
/// The elapsed-time integral is split geometrically (ratio 2) from
/// `τ_min = h²/64` upwards, each piece subdivided to at most `dt` and
/// integrated with two-point Gauss–Legendre; the piece `[0, τ_min]` is
/// approximated by `τ_min·f(t)`.
pub fn heat_convolve(input: &SpaceTimeField, kernel: FreeKernel, horizon: f64) -> Result<HeatConvolution> {
    if let FreeKernel::PaperGb { b } = kernel {
        if !(b > 0.0) {
            return Err(Error::InvalidArgument(format!("Gaussian parameter b = {b} must be positive")));
        }
    }
    if !input.all_finite() {
        return Err(Error::NonFinite("convolution input"));
    }
    if touches_boundary(input) {
        return Err(Error::SupportTouchesBoundary);
    }
    let grid = *input.grid();
    let dt = input.dt();
    let t0 = input.t0();
    let steps = (horizon / dt).round() as usize;
    let tau_min = grid.spacing().powi(2) / 64.0;
    let gauss = 0.5 / 3f64.sqrt();
    let mut slices = vec![ScalarField::zeros(grid)];
    for k in 1..=steps {
        let t = t0 + k as f64 * dt;
        let elapsed = k as f64 * dt;
        let mut acc = vec![0.0; grid.len()];
        let add = |acc: &mut Vec<f64>, weight: f64, field: &ScalarField| {
            let v = field.values();
            par::update(acc, |i, a| *a += weight * v[i]);
        };
        let head = tau_min.min(elapsed);
        add(&mut acc, head, &input.at_time(t));
        let mut lo = head;
        while lo < elapsed * (1.0 - 1e-12) {
            let hi = (2.0 * lo).min(elapsed);
            let pieces = ((hi - lo) / dt).ceil().max(1.0) as usize;
            let width = (hi - lo) / pieces as f64;
            for q in 0..pieces {
                let mid = lo + (q as f64 + 0.5) * width;
                for sgn in [-1.0, 1.0] {
                    let tau = mid + sgn * gauss * width;
                    let f = input.at_time(t - tau);
                    add(&mut acc, 0.5 * width, &smooth(&f, kernel, tau));
                }
            }
            lo = hi;
        }
        slices.push(ScalarField::new(grid, acc)?);
    }
    let result = SpaceTimeField::new(t0, dt, slices)?;
    let sup = result.max_abs();
    Ok(HeatConvolution { input: input.clone(), kernel, result, refinement_trace: vec![sup] })
}

/// `(∫∫ |u|^p)^{1/p}` over the box and the stored time range, trapezoid in time.
pub fn space_time_norm(field: &SpaceTimeField, p: f64) -> Result<f64> {
    if p.is_infinite() {
        return Ok(field.max_abs());
    }
    let n = field.len();
    if n == 1 {
        return grid::lp_norm(&field.slices()[0], p);
    }
    let mut total = 0.0;
    for (k, s) in field.slices().iter().enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 } * field.dt();
        total += w * grid::lp_norm(s, p)?.powf(p);
    }
    Ok(total.powf(1.0 / p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HeatBounded,
    AlmostHeatBounded,
    Neither,
    Inconclusive,
}

fn default_slope() -> f64 {
    0.1
}
fn default_lp_tol() -> f64 {
    0.05
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub horizon: f64,
    #[serde(default = "probability")]
    pub kernel: FreeKernel,
    /// Largest sup-growth slope still counted as bounded.
    #[serde(default = "default_slope")]
    pub epsilon_slope: f64,
    /// Largest relative change of the tracked space-time norms between the two finest grids.
    #[serde(default = "default_lp_tol")]
    pub lp_tolerance: f64,
}

fn probability() -> FreeKernel {
    FreeKernel::Probability
}

impl ClassifyConfig {
    pub fn new(horizon: f64) -> Self {
        Self { horizon, kernel: FreeKernel::Probability, epsilon_slope: default_slope(), lp_tolerance: default_lp_tol() }
    }
}

/// Exponents of the tracked space-time norms.
pub const TRACKED_P: [f64; 3] = [2.0, 4.0, 8.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Least-squares slope of `sup |G₀⋆f|` against `ln(1/h)`.
    pub growth_exponent: f64,
    pub points: Vec<usize>,
    pub spacings: Vec<f64>,
    pub sup_trace: Vec<f64>,
    /// Norms for `p = 2, 4, 8`, one row per grid.
    pub lp_trace: Vec<[f64; 3]>,
    /// Relative change of each tracked norm between the two finest grids.
    pub lp_change: [f64; 3],
    pub config: ClassifyConfig,
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Classify `input` by convolving it on each grid of a refinement sequence.
///
/// Grids should be ordered from coarse to fine; at least three are required.
pub fn classify(input: &dyn Refinable, grids: &[Grid], config: &ClassifyConfig) -> Result<Classification> {
    if grids.len() < 3 {
        return Err(Error::InvalidArgument("classification needs at least 3 refinement levels".into()));
    }
    let mut sup_trace = Vec::with_capacity(grids.len());
    let mut lp_trace = Vec::with_capacity(grids.len());
    for g in grids {
        let f = input.sample(g)?;
        let conv = heat_convolve(&f, config.kernel, config.horizon)?;
        sup_trace.push(conv.result.max_abs());
        let mut row = [0.0; 3];
        for (slot, p) in row.iter_mut().zip(TRACKED_P) {
            *slot = space_time_norm(&conv.result, p)?;
        }
        lp_trace.push(row);
    }
    Ok(verdict_from_traces(grids, sup_trace, lp_trace, config))
}

pub(crate) fn verdict_from_traces(
    grids: &[Grid],
    sup_trace: Vec<f64>,
    lp_trace: Vec<[f64; 3]>,
    config: &ClassifyConfig,
) -> Classification {
    let spacings: Vec<f64> = grids.iter().map(|g| g.spacing()).collect();
    let log_inv_h: Vec<f64> = spacings.iter().map(|h| -h.ln()).collect();
    let growth_exponent = slope(&log_inv_h, &sup_trace);
    let m = lp_trace.len();
    let mut lp_change = [0.0; 3];
    for (j, c) in lp_change.iter_mut().enumerate() {
        let (a, b) = (lp_trace[m - 2][j], lp_trace[m - 1][j]);
        let scale = a.abs().max(b.abs());
        *c = if scale > 0.0 { (b - a).abs() / scale } else { 0.0 };
    }
    let eps = config.epsilon_slope;
    let verdict = if growth_exponent <= eps {
        Verdict::HeatBounded
    } else if growth_exponent <= 2.0 * eps {
        Verdict::Inconclusive
    } else if lp_change.iter().all(|c| *c < config.lp_tolerance) {
        Verdict::AlmostHeatBounded
    } else {
        Verdict::Neither
    };
    Classification {
        verdict,
        growth_exponent,
        points: grids.iter().map(|g| g.points()).collect(),
        spacings,
        sup_trace,
        lp_trace,
        lp_change,
        config: *config,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSquareReport {
    pub b: f64,
    /// `sup g_b⋆|∇f|²` per grid.
    pub sups: Vec<f64>,
    pub sup: f64,
    /// Relative change of the sup between the two finest grids.
    pub change: f64,
    pub stable: bool,
}

/// `sup g_b⋆|∇f|²` along a refinement sequence.
pub fn gradient_square_heat_test(
    f: &dyn Refinable,
    b: f64,
    grids: &[Grid],
    horizon: f64,
    tolerance: f64,
) -> Result<GradientSquareReport> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("no grids given".into()));
    }
    let mut sups = Vec::with_capacity(grids.len());
    for g in grids {
        let field = f.sample(g)?;
        // stencils at boundary nodes reach outside the box; f itself need not vanish there
        let grad2: Vec<ScalarField> = field
            .slices()
            .iter()
            .map(|s| {
                let mut g2 = grid::gradient(s).norm_squared();
                for (i, x) in g2.values_mut().iter_mut().enumerate() {
                    if g.is_boundary(i) {
                        *x = 0.0;
                    }
                }
                g2
            })
            .collect();
        let input = SpaceTimeField::new(field.t0(), field.dt(), grad2)?;
        let conv = heat_convolve(&input, FreeKernel::PaperGb { b }, horizon)?;
        sups.push(conv.result.max_abs());
    }
    let m = sups.len();
    let change = if m >= 2 {
        let scale = sups[m - 1].abs().max(sups[m - 2].abs());
        if scale > 0.0 { (sups[m - 1] - sups[m - 2]).abs() / scale } else { 0.0 }
    } else {
        0.0
    };
    Ok(GradientSquareReport { b, sup: sups[m - 1], sups, change, stable: m >= 2 && change < tolerance })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormBoundedAhbReport {
    pub form_bounded: bool,
    pub spectral: SpectralReport,
    pub almost_heat_bounded: bool,
    pub classification: Classification,
}

/// Form-boundedness of a nonnegative potential next to its heat-boundedness class.
pub fn form_bounded_implies_ahb_experiment(
    spec: &PotentialSpec,
    spectral_grids: &[Grid],
    spectral: &SpectralConfig,
    classify_grids: &[Grid],
    classify_config: &ClassifyConfig,
    dt: f64,
) -> Result<FormBoundedAhbReport> {
    for g in classify_grids.iter().chain(spectral_grids) {
        let v = potentials::realize(spec, g, dt, classify_config.horizon)?;
        if v.slices().iter().any(|s| s.min() < 0.0) {
            return Err(Error::InvalidArgument("experiment needs a nonnegative potential".into()));
        }
    }
    let report = positivity::form_bounded_test(spec, spectral_grids, spectral)?;
    let input = RealizedPotential { spec: spec.clone(), dt, horizon: classify_config.horizon };
    let classification = classify(&input, classify_grids, classify_config)?;
    Ok(FormBoundedAhbReport {
        form_bounded: report.form_bounded,
        spectral: report,
        almost_heat_bounded: matches!(classification.verdict, Verdict::AlmostHeatBounded | Verdict::HeatBounded),
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3(n: usize) -> Grid {
        Grid::new(3, 2.0, n, Boundary::DirichletZero).unwrap()
    }

    #[test]
    fn zero_input_gives_zero() {
        let g = grid3(13);
        let f = SpaceTimeField::stationary(ScalarField::zeros(g), 0.05).unwrap();
        let c = heat_convolve(&f, FreeKernel::Probability, 0.2).unwrap();
        assert_eq!(c.result.len(), 5);
        assert_eq!(c.result.max_abs(), 0.0);
    }

    #[test]
    fn constant_input_integrates_time() {
        let g = grid3(21);
        let f = g.sample(|p| if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= 1.5 { 1.0 } else { 0.0 });
        let f = SpaceTimeField::stationary(f, 0.02).unwrap();
        let c = heat_convolve(&f, FreeKernel::Probability, 0.1).unwrap();
        let center = g.nearest_node(&[0.0, 0.0, 0.0]);
        for k in 1..c.result.len() {
            let t = c.result.time(k);
            let v = c.result.slices()[k].values()[center];
            assert!((v - t).abs() < 0.03 * t, "t = {t}, value {v}");
        }
    }

    #[test]
    fn support_on_boundary_is_rejected() {
        let g = grid3(10);
        let f = SpaceTimeField::stationary(ScalarField::constant(g, 1.0), 0.1).unwrap();
        assert!(matches!(heat_convolve(&f, FreeKernel::Probability, 0.2), Err(Error::SupportTouchesBoundary)));
    }

    #[test]
    fn slope_of_line() {
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn classification_needs_three_levels() {
        let f = |g: &Grid| SpaceTimeField::stationary(ScalarField::zeros(*g), 0.1);
        let grids = [grid3(9), grid3(11)];
        assert!(classify(&f, &grids, &ClassifyConfig::new(0.2)).is_err());
    }
}
