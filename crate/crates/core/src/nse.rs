//! Vortex-stretching diagnostics for incompressible velocity fields.
//!
//! With `w = ∇×u` and `f = ½ ln(|w|² + 1)` the quantity `Q` is evaluated in
//! two algebraically equivalent forms:
//!
//! * A: `S/(|w|²+1) − u·∇f + 2|∇f|² − |∇w|²/(|w|²+1)`, `S = Σ wᵢ ∂ⱼuᵢ wⱼ`
//! * B: `[∇×(u×w)·w + 2|∇√(|w|²+1)|² − |∇w|²] / (|w|²+1)`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Boundary, Grid, ScalarField, SpaceTimeField, Stencil, VectorField};
use crate::kato::{self, Classification, ClassifyConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowFamily {
    TaylorGreen3d,
    Abc { a: f64, b: f64, c: f64 },
    /// Discrete curl of a random trigonometric vector potential with wave
    /// numbers `|kᵢ| ≤ modes`, scaled to unit rms vorticity.
    RandomSolenoidal {
        seed: u64,
        #[serde(default = "one")]
        modes: i32,
    },
}

fn one() -> i32 {
    1
}

#[derive(Clone, Debug)]
pub struct FlowField {
    pub u: VectorField,
    pub w: VectorField,
    /// `max |∇·u|` with the discrete divergence.
    pub div_residual: f64,
}

impl FlowField {
    /// Build from a sampled velocity; the vorticity is the discrete curl.
    pub fn from_velocity(u: VectorField) -> Result<Self> {
        let w = grid::curl(&u)?;
        let div_residual = grid::divergence(&u).max_abs();
        Ok(Self { u, w, div_residual })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

fn require_periodic_3d(grid: &Grid) -> Result<()> {
    grid::require_dim(grid, 3)?;
    if grid.boundary() != Boundary::Periodic {
        return Err(Error::InvalidGrid("synthetic flows need a periodic grid".into()));
    }
    Ok(())
}

/// Sample a flow family. Coordinates are rescaled by `π/L` so every family
/// is periodic on the box.
pub fn synthetic_flow(family: FlowFamily, grid: &Grid) -> Result<FlowField> {
    require_periodic_3d(grid)?;
    let k = std::f64::consts::PI / grid.half_width();
    let u = match family {
        FlowFamily::TaylorGreen3d => VectorField::from_fn(*grid, |p| {
            let (x, y, z) = (k * p[0], k * p[1], k * p[2]);
            [x.sin() * y.cos() * z.cos(), -x.cos() * y.sin() * z.cos(), 0.0]
        }),
        FlowFamily::Abc { a, b, c } => VectorField::from_fn(*grid, |p| {
            let (x, y, z) = (k * p[0], k * p[1], k * p[2]);
            [a * z.sin() + c * y.cos(), b * x.sin() + a * z.cos(), c * y.sin() + b * x.cos()]
        }),
        FlowFamily::RandomSolenoidal { seed, modes } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut terms = Vec::new();
            for kx in -modes..=modes {
                for ky in -modes..=modes {
                    for kz in 0..=modes {
                        // one representative of each ±k pair
                        if kz == 0 && (ky < 0 || (ky == 0 && kx <= 0)) {
                            continue;
                        }
                        let kv = [kx as f64, ky as f64, kz as f64];
                        let k2 = kv.iter().map(|x| x * x).sum::<f64>();
                        let mut coef = [[0.0; 3]; 2];
                        for row in coef.iter_mut() {
                            for c in row.iter_mut() {
                                *c = rng.gen_range(-1.0..1.0) / k2;
                            }
                        }
                        terms.push((kv, coef));
                    }
                }
            }
            let potential = VectorField::from_fn(*grid, |p| {
                let mut a = [0.0; 3];
                for (kv, coef) in &terms {
                    let phase = k * (kv[0] * p[0] + kv[1] * p[1] + kv[2] * p[2]);
                    let (s, c) = phase.sin_cos();
                    for i in 0..3 {
                        a[i] += coef[0][i] * c + coef[1][i] * s;
                    }
                }
                a
            });
            let u = grid::curl(&potential)?;
            let w2 = grid::curl(&u)?.norm_squared();
            let rms = (w2.values().iter().sum::<f64>() / grid.len() as f64).sqrt();
            if !(rms > 0.0) {
                return Err(Error::InvalidArgument(format!("random flow with modes = {modes} has no vorticity")));
            }
            let components = u.into_components().into_iter().map(|c| c.into_iter().map(|x| x / rms).collect()).collect();
            VectorField::new(*grid, components)?
        }
    };
    FlowField::from_velocity(u)
}

/// Rigid rotation `Ω × x`, for tests of the stretching quotient.
pub fn rigid_rotation(grid: &Grid, omega: [f64; 3]) -> Result<FlowField> {
    grid::require_dim(grid, 3)?;
    let u = VectorField::from_fn(*grid, |p| {
        [
            omega[1] * p[2] - omega[2] * p[1],
            omega[2] * p[0] - omega[0] * p[2],
            omega[0] * p[1] - omega[1] * p[0],
        ]
    });
    FlowField::from_velocity(u)
}

/// Velocity gradient `∂ⱼuᵢ` as `grad[i][j]`.
fn velocity_gradient(u: &VectorField) -> Vec<Vec<Vec<f64>>> {
    let grid = u.grid();
    (0..3)
        .map(|i| (0..3).map(|j| grid::derivative(u.component(i), grid, j, Stencil::Second)).collect())
        .collect()
}

/// `Σᵢⱼ wᵢ ∂ⱼuᵢ wⱼ` at every node.
fn strain_contraction(w: &VectorField, grad: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let n = w.grid().len();
    (0..n)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += w.component(i)[k] * grad[i][j][k] * w.component(j)[k];
                }
            }
            s
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct StretchingField {
    pub alpha: ScalarField,
    /// Nodes where `w = 0` and the quotient is set to zero.
    pub masked: Vec<bool>,
}

/// `α = w·∇u·w / |w|²` with the strain contraction `Σ wᵢ ∂ⱼuᵢ wⱼ`.
pub fn stretching_alpha(flow: &FlowField) -> Result<StretchingField> {
    let grad = velocity_gradient(&flow.u);
    let s = strain_contraction(&flow.w, &grad);
    let w2 = flow.w.norm_squared();
    let scale = w2.max();
    let tiny = 1e-24 * scale.max(f64::MIN_POSITIVE);
    let mut masked = vec![false; s.len()];
    let values = s
        .iter()
        .zip(w2.values())
        .zip(masked.iter_mut())
        .map(|((s, w2), m)| {
            if *w2 <= tiny {
                *m = true;
                0.0
            } else {
                s / w2
            }
        })
        .collect();
    Ok(StretchingField { alpha: ScalarField::new(*flow.grid(), values)?, masked })
}

/// The four form-A terms; `q_form_a = stretching − advection + gradient − dissipation`.
#[derive(Clone, Debug)]
pub struct QTerms {
    /// `α|w|²/(|w|²+1)`.
    pub stretching: ScalarField,
    /// `u·∇f`.
    pub advection: ScalarField,
    /// `2|∇f|²`.
    pub gradient: ScalarField,
    /// `|∇w|²/(|w|²+1)`.
    pub dissipation: ScalarField,
}

impl QTerms {
    pub fn assemble(&self) -> ScalarField {
        let v: Vec<f64> = (0..self.stretching.values().len())
            .map(|i| {
                self.stretching.values()[i] - self.advection.values()[i] + self.gradient.values()[i]
                    - self.dissipation.values()[i]
            })
            .collect();
        ScalarField::new(*self.stretching.grid(), v).expect("shared grid")
    }
}

#[derive(Clone, Debug)]
pub struct QField {
    pub q_form_a: ScalarField,
    pub q_form_b: ScalarField,
    pub terms: Option<QTerms>,
    /// `|w| ≥ 1`.
    pub mask: Vec<bool>,
    /// `max |A − B| / (1 + |A|)`.
    pub identity_gap: f64,
    /// `max |∇×(u×w)·w| / (|w|²+1)`, the first form-B term.
    pub transport_term_max: f64,
}

impl QField {
    /// A manufactured field used as both forms, with an explicit mask.
    pub fn manufactured(q: ScalarField, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != q.values().len() {
            return Err(Error::Mismatch("mask length differs from the field".into()));
        }
        Ok(Self { q_form_b: q.clone(), q_form_a: q, terms: None, mask, identity_gap: 0.0, transport_term_max: 0.0 })
    }

    /// Form A restricted to the mask, zero elsewhere.
    pub fn masked(&self) -> ScalarField {
        let v = self
            .q_form_a
            .values()
            .iter()
            .zip(&self.mask)
            .map(|(q, m)| if *m { *q } else { 0.0 })
            .collect();
        ScalarField::new(*self.q_form_a.grid(), v).expect("shared grid")
    }
}

fn form_a(flow: &FlowField) -> Result<QTerms> {
    let grid = *flow.grid();
    let w = &flow.w;
    let w2 = w.norm_squared();
    let f = w2.map(|x| 0.5 * (x + 1.0).ln());
    let grad_f = grid::gradient(&f);
    let stretch = stretching_alpha(flow)?;
    let grad_w: Vec<Vec<f64>> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| grid::derivative(w.component(i), &grid, j, Stencil::Second))
        .collect();
    let n = grid.len();
    let mut stretching = vec![0.0; n];
    let mut advection = vec![0.0; n];
    let mut gradient = vec![0.0; n];
    let mut dissipation = vec![0.0; n];
    for k in 0..n {
        let d = w2.values()[k] + 1.0;
        stretching[k] = stretch.alpha.values()[k] * w2.values()[k] / d;
        advection[k] = (0..3).map(|a| flow.u.component(a)[k] * grad_f.component(a)[k]).sum();
        gradient[k] = 2.0 * (0..3).map(|a| grad_f.component(a)[k].powi(2)).sum::<f64>();
        dissipation[k] = grad_w.iter().map(|g| g[k] * g[k]).sum::<f64>() / d;
    }
    Ok(QTerms {
        stretching: ScalarField::new(grid, stretching)?,
        advection: ScalarField::new(grid, advection)?,
        gradient: ScalarField::new(grid, gradient)?,
        dissipation: ScalarField::new(grid, dissipation)?,
    })
}

fn form_b(flow: &FlowField) -> Result<(ScalarField, f64)> {
    let grid = *flow.grid();
    let u = &flow.u;
    let w = &flow.w;
    let transport = grid::curl(&u.cross(w)?)?;
    let n = grid.len();
    let d: Vec<f64> = (0..n).map(|k| (0..3).map(|a| w.component(a)[k].powi(2)).sum::<f64>() + 1.0).collect();
    let root = ScalarField::new(grid, d.iter().map(|x| x.sqrt()).collect())?;
    let grad_root: Vec<Vec<f64>> = (0..3).map(|a| grid::derivative(root.values(), &grid, a, Stencil::Second)).collect();
    let mut grad_w2 = vec![0.0; n];
    for i in 0..3 {
        for j in 0..3 {
            let g = grid::derivative(w.component(i), &grid, j, Stencil::Second);
            grad_w2.iter_mut().zip(&g).for_each(|(acc, x)| *acc += x * x);
        }
    }
    let mut first_max: f64 = 0.0;
    let values = (0..n)
        .map(|k| {
            let first: f64 = (0..3).map(|a| transport.component(a)[k] * w.component(a)[k]).sum();
            first_max = first_max.max(first.abs() / d[k]);
            let second = 2.0 * (0..3).map(|a| grad_root[a][k].powi(2)).sum::<f64>();
            (first + second - grad_w2[k]) / d[k]
        })
        .collect();
    Ok((ScalarField::new(grid, values)?, first_max))
}

/// Both forms of `Q`, computed without shared intermediates.
pub fn compute_q(flow: &FlowField) -> Result<QField> {
    require_periodic_3d(flow.grid())?;
    let terms = form_a(flow)?;
    let a = terms.assemble();
    let (b, transport_term_max) = form_b(flow)?;
    let identity_gap = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs()))
        .fold(0.0, f64::max);
    let mask = flow.w.norm_squared().values().iter().map(|x| *x >= 1.0).collect();
    Ok(QField { q_form_a: a, q_form_b: b, terms: Some(terms), mask, identity_gap, transport_term_max })
}

/// A time series of `Q` on one grid.
#[derive(Clone, Debug)]
pub struct QSeries {
    pub dt: f64,
    pub fields: Vec<QField>,
}

impl QSeries {
    fn masked_field(&self) -> Result<SpaceTimeField> {
        SpaceTimeField::new(0.0, self.dt, self.fields.iter().map(|q| q.masked()).collect())
    }
}

/// Classify `Q` restricted to `{|w| ≥ 1}` along a refinement sequence.
pub fn q_heat_bounded_check<F>(series: F, grids: &[Grid], config: &ClassifyConfig) -> Result<Classification>
where
    F: Fn(&Grid) -> Result<QSeries> + Sync,
{
    let input = |g: &Grid| -> Result<SpaceTimeField> {
        let s = series(g)?;
        if s.fields.iter().all(|q| q.mask.iter().all(|m| !m)) {
            return Err(Error::EmptyMask(format!("|w| < 1 everywhere on the {}-point grid", g.points())));
        }
        s.masked_field()
    };
    kato::classify(&input, grids, config)
}

/// `amplitude · bump(|x − center|/width) / (t_end − t + δ)` on `[0, t_end]`
/// with `δ = dt = c·h²`, masked everywhere.
pub fn manufactured_spike(grid: &Grid, t_end: f64, amplitude: f64, width: f64, center: [f64; 3], c: f64) -> Result<QSeries> {
    let dt = c * grid.spacing().powi(2);
    let steps = (t_end / dt).ceil() as usize;
    let dt = t_end / steps as f64;
    let profile = grid.sample(|p| {
        let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
        amplitude * crate::potentials::bump(r / width)
    });
    let fields = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            QField::manufactured(profile.scale(1.0 / (t_end - t + dt)), vec![true; grid.len()])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QSeries { dt, fields })
}
