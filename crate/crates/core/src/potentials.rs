//! Potentials: closed-form singular families, derivative combinations
//! `V = Δf − α|∇f|² − ∂ₜf`, support masking and truncation ladders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, SpaceTimeField, Stencil};
use crate::par;

/// Space-time cylinder `|x| ≤ radius`, `t ≤ duration` outside of which every
/// realized potential vanishes.
/// Both fields default to unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    #[serde(default = "unbounded")]
    pub radius: f64,
    #[serde(default = "unbounded")]
    pub duration: f64,
}

impl Default for Support {
    fn default() -> Self {
        Self { radius: f64::MAX, duration: f64::MAX }
    }
}

fn unbounded() -> f64 {
    f64::MAX
}

/// How `Δf − α|∇f|²` is discretized.
///
/// `LogConsistent` writes the combination through `u = e^{-αf}` with the
/// seven-point Laplacian, `−(1/α)·Δ_h u / u`, so it inverts the solver's
/// spatial operator exactly; the central variants expand the derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    Second,
    #[default]
    Fourth,
    LogConsistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `a / |x|²`, clamped to `a / h²` at the origin node.
    InverseSquare { a: f64 },
    /// Derivative combination of `f = b ln r` with `α = 1`.
    LogDerived { b: f64 },
    /// Derivative combination of `f = sin(1 / max(| |x| − √t |, ε))`, `α = 1`.
    /// `epsilon` defaults to `4h`.
    Oscillating {
        #[serde(default)]
        epsilon: Option<f64>,
    },
    /// Derivative combination of the bounded, compactly supported
    /// `f = amplitude · bump(|x| / width) · cos(frequency · t)`.
    Bump {
        amplitude: f64,
        width: f64,
        alpha: f64,
        #[serde(default)]
        frequency: f64,
    },
    Constant { c: f64 },
    /// Derivative combination of a sampled `f`.
    #[serde(skip)]
    FromF { f: SpaceTimeField, alpha: f64 },
    #[serde(skip)]
    Explicit { v: SpaceTimeField },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
    #[serde(default)]
    pub support: Support,
    /// Multiplier applied after masking (`pV`, `αV`).
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub scheme: DerivativeScheme,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, support: Support) -> Self {
        Self { kind, support, scale: 1.0, scheme: DerivativeScheme::default() }
    }

    pub fn inverse_square(a: f64, radius: f64) -> Self {
        Self::new(PotentialKind::InverseSquare { a }, Support { radius, duration: f64::MAX })
    }

    pub fn constant(c: f64, radius: f64) -> Self {
        Self::new(PotentialKind::Constant { c }, Support { radius, duration: f64::MAX })
    }

    pub fn zero() -> Self {
        Self::constant(0.0, f64::MAX)
    }

    pub fn bump(amplitude: f64, width: f64, alpha: f64, radius: f64) -> Self {
        Self::new(
            PotentialKind::Bump { amplitude, width, alpha, frequency: 0.0 },
            Support { radius, duration: f64::MAX },
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.scale *= factor;
        s
    }

    pub fn with_scheme(mut self, scheme: DerivativeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// The function `f` behind a derivative-combination potential, with its `α`.
    pub fn potential_function(&self, grid: &Grid, dt: f64, horizon: f64) -> Result<Option<(SpaceTimeField, f64)>> {
        let h = grid.spacing();
        let slices = slice_count(dt, horizon)?;
        let sample_in_time = |f: &(dyn Fn([f64; 3], f64) -> f64 + Sync)| -> Result<SpaceTimeField> {
            let fields = (0..slices)
                .map(|k| {
                    let t = k as f64 * dt;
                    grid.sample(|p| f(p, t))
                })
                .collect();
            SpaceTimeField::new(0.0, dt, fields)
        };
        Ok(match &self.kind {
            PotentialKind::LogDerived { b } => {
                let b = *b;
                let f = grid.sample(|p| b * norm(p).max(h).ln());
                Some((SpaceTimeField::stationary(f, dt)?, 1.0))
            }
            PotentialKind::Oscillating { epsilon } => {
                let eps = epsilon.unwrap_or(4.0 * h);
                if !(eps > 0.0) {
                    return Err(Error::InvalidArgument(format!("regularization epsilon {eps} must be positive")));
                }
                let f = sample_in_time(&|p, t| (1.0 / (norm(p) - t.sqrt()).abs().max(eps)).sin())?;
                Some((f, 1.0))
            }
            PotentialKind::Bump { amplitude, width, alpha, frequency } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidArgument("bump width must be positive".into()));
                }
                let (a, w, om) = (*amplitude, *width, *frequency);
                let f = if om == 0.0 {
                    SpaceTimeField::stationary(grid.sample(|p| a * bump(norm(p) / w)), dt)?
                } else {
                    sample_in_time(&|p, t| a * bump(norm(p) / w) * (om * t).cos())?
                };
                Some((f, *alpha))
            }
            PotentialKind::FromF { f, alpha } => Some((f.clone(), *alpha)),
            _ => None,
        })
    }
}

/// Smooth compactly supported profile `exp(1 − 1/(1 − s²))` on `s < 1`, peak 1.
pub fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn slice_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be nonnegative")));
    }
    Ok((horizon / dt).round() as usize + 1)
}

/// Pointwise `Δf − α|∇f|² − ∂ₜf` for every slice of `f`.
///
/// The time derivative is central in the interior and one-sided at the ends;
/// a single-slice `f` is time-independent.
pub fn combine_derivatives(f: &SpaceTimeField, alpha: f64, scheme: DerivativeScheme) -> Result<SpaceTimeField> {
    let slices = f.slices();
    let dt = f.dt();
    let mut out = Vec::with_capacity(slices.len());
    for (k, fk) in slices.iter().enumerate() {
        let mut v = spatial_combination(fk, alpha, scheme)?;
        if slices.len() > 1 {
            let d = time_derivative(slices, k, dt);
            v.values_mut().iter_mut().zip(d).for_each(|(x, ft)| *x -= ft);
        }
        out.push(v);
    }
    SpaceTimeField::new(f.t0(), dt, out)
}

fn time_derivative(slices: &[ScalarField], k: usize, dt: f64) -> Vec<f64> {
    let n = slices.len();
    let v = |j: usize| slices[j].values();
    let len = v(0).len();
    let mut d = vec![0.0; len];
    if n == 2 {
        par::fill(&mut d, |i| (v(1)[i] - v(0)[i]) / dt);
    } else if k == 0 {
        par::fill(&mut d, |i| (-3.0 * v(0)[i] + 4.0 * v(1)[i] - v(2)[i]) / (2.0 * dt));
    } else if k == n - 1 {
        par::fill(&mut d, |i| (3.0 * v(n - 1)[i] - 4.0 * v(n - 2)[i] + v(n - 3)[i]) / (2.0 * dt));
    } else {
        par::fill(&mut d, |i| (v(k + 1)[i] - v(k - 1)[i]) / (2.0 * dt));
    }
    d
}

/// `Δf − α|∇f|²` on one time slice.
pub fn spatial_combination(f: &ScalarField, alpha: f64, scheme: DerivativeScheme) -> Result<ScalarField> {
    let grid = *f.grid();
    match scheme {
        DerivativeScheme::Second | DerivativeScheme::Fourth => {
            let stencil = if scheme == DerivativeScheme::Second { Stencil::Second } else { Stencil::Fourth };
            let lap = grid::laplacian_with(f, stencil);
            let grad2 = grid::gradient_with(f, stencil).norm_squared();
            lap.zip_map(&grad2, |l, g| l - alpha * g)
        }
        DerivativeScheme::LogConsistent => {
            if alpha == 0.0 {
                return Ok(grid::laplacian(f));
            }
            let g = f.values();
            let h2 = grid.spacing() * grid.spacing();
            let mut out = vec![0.0; grid.len()];
            par::fill(&mut out, |i| {
                let mut acc = 0.0;
                for a in 0..grid.dim() {
                    for off in [-1isize, 1] {
                        // neighbor ratio u_nb / u with u = e^{-αf}; zero on Dirichlet faces
                        let ratio = grid
                            .shifted(i, a, off)
                            .filter(|&j| !grid.is_boundary(j))
                            .map_or(0.0, |j| (alpha * (g[i] - g[j])).exp());
                        acc += ratio - 1.0;
                    }
                }
                -acc / (alpha * h2)
            });
            ScalarField::new(grid, out)
        }
    }
}

/// Sample `spec` on `grid` at times `0, dt, …, horizon`.
///
/// Time-independent potentials whose support outlasts the horizon come back
/// as a single stationary slice.
pub fn realize(spec: &PotentialSpec, grid: &Grid, dt: f64, horizon: f64) -> Result<SpaceTimeField> {
    let slices = slice_count(dt, horizon)?;
    let h = grid.spacing();
    let raw = match &spec.kind {
        PotentialKind::InverseSquare { a } => {
            let a = *a;
            SpaceTimeField::stationary(grid.sample(|p| a / (norm(p).powi(2)).max(h * h)), dt)?
        }
        PotentialKind::Constant { c } => SpaceTimeField::stationary(ScalarField::constant(*grid, *c), dt)?,
        PotentialKind::Explicit { v } => {
            if v.grid() != grid {
                return Err(Error::Mismatch("explicit potential lives on another grid".into()));
            }
            if !v.is_stationary() && v.len() < slices {
                return Err(Error::MissingTimeSlices { needed: slices, available: v.len() });
            }
            v.clone()
        }
        PotentialKind::FromF { f, alpha } => {
            if *alpha < 1.0 {
                return Err(Error::InvalidArgument(format!("alpha {alpha} must be at least 1")));
            }
            if f.grid() != grid {
                return Err(Error::Mismatch("f lives on another grid".into()));
            }
            let f = if f.is_stationary() {
                f.clone()
            } else {
                if f.len() < slices.max(2) {
                    return Err(Error::MissingTimeSlices { needed: slices.max(2), available: f.len() });
                }
                if (f.dt() - dt).abs() > 1e-12 * dt {
                    return Err(Error::Mismatch(format!("f has time step {}, expected {dt}", f.dt())));
                }
                SpaceTimeField::new(f.t0(), dt, f.slices()[..slices].to_vec())?
            };
            combine_derivatives(&f, *alpha, spec.scheme)?
        }
        _ => {
            let (f, alpha) = spec
                .potential_function(grid, dt, horizon)?
                .expect("derivative-combination kinds define f");
            combine_derivatives(&f, alpha, spec.scheme)?
        }
    };
    Ok(apply_support(raw, spec, grid, dt, slices))
}

fn apply_support(raw: SpaceTimeField, spec: &PotentialSpec, grid: &Grid, dt: f64, slices: usize) -> SpaceTimeField {
    let radius = spec.support.radius;
    let duration = spec.support.duration;
    let scale = spec.scale;
    let mask = |field: &ScalarField| -> ScalarField {
        let mut out = field.clone();
        par::update(out.values_mut(), |i, v| {
            *v = if grid.radius(i) <= radius * (1.0 + 1e-12) { scale * *v } else { 0.0 };
        });
        out
    };
    let horizon = (slices - 1) as f64 * dt;
    if raw.is_stationary() && duration >= horizon {
        return SpaceTimeField::stationary(mask(&raw.slices()[0]), dt).expect("valid by construction");
    }
    let fields = (0..slices)
        .map(|k| {
            let t = k as f64 * dt;
            if t > duration {
                ScalarField::zeros(*grid)
            } else {
                mask(&raw.at_time(t))
            }
        })
        .collect();
    SpaceTimeField::new(0.0, dt, fields).expect("valid by construction")
}

/// Pointwise `min{V, j}`.
pub fn truncate_above(v: &SpaceTimeField, j: f64) -> SpaceTimeField {
    v.map(|x| x.min(j))
}

/// Pointwise `max{V, −k}`.
pub fn truncate_below(v: &SpaceTimeField, k: f64) -> SpaceTimeField {
    v.map(|x| x.max(-k))
}

/// Upper and lower truncation levels, each strictly increasing with at least
/// three entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationLadder {
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl TruncationLadder {
    pub fn new(upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        for (name, levels) in [("upper", &upper), ("lower", &lower)] {
            if levels.len() < 3 {
                return Err(Error::InvalidArgument(format!("{name} ladder needs at least 3 levels")));
            }
            if levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(Error::InvalidArgument(format!("{name} ladder levels must be positive")));
            }
            if levels.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(format!("{name} ladder must be strictly increasing")));
            }
        }
        Ok(Self { upper, lower })
    }

    /// `start·2^k` for `k < count`, with the default deep floors 10, 100, 1000.
    pub fn octaves(start: f64, count: usize) -> Result<Self> {
        Self::new((0..count).map(|k| start * 2f64.powi(k as i32)).collect(), vec![10.0, 100.0, 1000.0])
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn top(&self) -> f64 {
        *self.upper.last().expect("validated nonempty")
    }
}

/// Largest coupling `a` for which `a/|x|²` arises as `Δf − |∇f|²` from
/// `f = b ln r`: `(n − 2)² / 4`.
pub fn max_subcritical_coupling(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("dimension {n} below 3 has no positive threshold")));
    }
    let m = n as f64 - 2.0;
    Ok(m * m / 4.0)
}

/// Coupling `b(n − 2 − b)` produced by `f = b ln r`.
pub fn log_coupling(b: f64, n: usize) -> f64 {
    b * (n as f64 - 2.0 - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use approx::assert_relative_eq;

    fn grid3(n: usize) -> Grid {
        Grid::new(3, 2.0, n, Boundary::DirichletZero).unwrap()
    }

    #[test]
    fn subcritical_coupling_values() {
        assert_eq!(max_subcritical_coupling(3).unwrap(), 0.25);
        assert_eq!(max_subcritical_coupling(4).unwrap(), 1.0);
        assert_eq!(max_subcritical_coupling(6).unwrap(), 4.0);
        assert!(max_subcritical_coupling(2).is_err());
        assert_relative_eq!(log_coupling(0.5, 3), 0.25);
    }

    #[test]
    fn constant_f_gives_zero_potential() {
        let g = grid3(12);
        let f = SpaceTimeField::stationary(ScalarField::constant(g, 1.7), 0.1).unwrap();
        for scheme in [DerivativeScheme::Second, DerivativeScheme::Fourth] {
            let spec = PotentialSpec::new(
                PotentialKind::FromF { f: f.clone(), alpha: 2.0 },
                Support { radius: 0.5, duration: 1.0 },
            )
            .with_scheme(scheme);
            let v = realize(&spec, &g, 0.1, 0.5).unwrap();
            assert!(v.max_abs() < 1e-12);
        }
    }

    #[test]
    fn constant_potential_respects_cylinder() {
        let g = grid3(11);
        let spec = PotentialSpec::new(PotentialKind::Constant { c: 3.0 }, Support { radius: 1.0, duration: 0.25 });
        let v = realize(&spec, &g, 0.1, 0.5).unwrap();
        assert_eq!(v.len(), 6);
        for (k, s) in v.slices().iter().enumerate() {
            for i in 0..g.len() {
                let expected = if g.radius(i) <= 1.0 && v.time(k) <= 0.25 { 3.0 } else { 0.0 };
                assert_eq!(s.values()[i], expected);
            }
        }
    }

    #[test]
    fn inverse_square_plateau_under_truncation() {
        let g = grid3(21);
        let v = realize(&PotentialSpec::inverse_square(1.0, 1.5), &g, 0.1, 0.1).unwrap();
        assert!(v.is_stationary());
        let t = truncate_above(&v, 10.0);
        for i in 0..g.len() {
            let r = g.radius(i);
            let orig = v.slices()[0].values()[i];
            let cut = t.slices()[0].values()[i];
            if r > 0.0 && r < 1.0 / 10f64.sqrt() {
                assert_eq!(cut, 10.0);
            } else {
                assert_eq!(cut, orig.min(10.0));
            }
        }
    }

    #[test]
    fn truncation_below_floors_negative_potential() {
        let g = grid3(13);
        let v = SpaceTimeField::stationary(
            g.sample(|p| {
                let r = norm(p);
                if r <= 1.0 { -5.0 / r.max(g.spacing()) } else { 0.0 }
            }),
            0.1,
        )
        .unwrap();
        let cut = truncate_below(&v, 2.0);
        for i in 0..g.len() {
            let expected = v.slices()[0].values()[i].max(-2.0);
            assert_eq!(cut.slices()[0].values()[i], expected);
        }
        assert_eq!(cut.slices()[0].min(), -2.0);
    }

    #[test]
    fn oscillating_rejects_nonpositive_epsilon() {
        let g = grid3(10);
        let spec = PotentialSpec::new(
            PotentialKind::Oscillating { epsilon: Some(0.0) },
            Support { radius: 1.0, duration: 1.0 },
        );
        assert!(realize(&spec, &g, 0.1, 0.3).is_err());
        let spec = PotentialSpec::new(PotentialKind::Oscillating { epsilon: None }, Support { radius: 1.0, duration: 1.0 });
        let v = realize(&spec, &g, 0.1, 0.3).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.all_finite());
    }

    #[test]
    fn from_f_needs_enough_slices() {
        let g = grid3(10);
        let slices = vec![ScalarField::zeros(g), ScalarField::zeros(g)];
        let f = SpaceTimeField::new(0.0, 0.1, slices).unwrap();
        let spec = PotentialSpec::new(PotentialKind::FromF { f, alpha: 1.0 }, Support { radius: 1.0, duration: 1.0 });
        assert!(matches!(realize(&spec, &g, 0.1, 0.5), Err(Error::MissingTimeSlices { .. })));
    }

    #[test]
    fn ladder_validation() {
        assert!(TruncationLadder::new(vec![1.0, 2.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(TruncationLadder::new(vec![1.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]).is_err());
        let l = TruncationLadder::octaves(1.0, 4).unwrap();
        assert_eq!(l.upper(), &[1.0, 2.0, 4.0, 8.0]);
        assert_eq!(l.top(), 8.0);
    }

    #[test]
    fn log_consistent_matches_discrete_generator() {
        // -Δ_h u / u for u = e^{-f} equals the log-consistent combination
        let g = Grid::new(2, 1.0, 15, Boundary::DirichletZero).unwrap();
        let f = g.sample(|p| 0.3 * p[0] * p[0] - 0.2 * p[1] + 0.1);
        let u = f.map(|x| (-x).exp());
        let mut lap = vec![0.0; g.len()];
        crate::solver::laplacian_into(&g, u.values(), &mut lap);
        let v = spatial_combination(&f, 1.0, DerivativeScheme::LogConsistent).unwrap();
        for i in (0..g.len()).filter(|&i| !g.is_boundary(i)) {
            assert_relative_eq!(v.values()[i], -lap[i] / u.values()[i], max_relative = 1e-10);
        }
    }
}
