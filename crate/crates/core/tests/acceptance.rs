//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::time::Instant;

use heatlab::experiment::{self, ExperimentConfig};
use heatlab::grid::{Boundary, Grid, VectorField};
use heatlab::kato::{self, ClassifyConfig, RealizedPotential, Verdict};
use heatlab::kernels::{self, KernelConfig, ProbeSet};
use heatlab::nse::{self, FlowFamily, FlowField, QSeries};
use heatlab::positivity::{self, SpectralConfig, Window};
use heatlab::potentials::{self, DerivativeScheme, PotentialKind, PotentialSpec, Support, TruncationLadder};
use heatlab::solver::{self, Ordering, SolverConfig};
use heatlab::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn box3(half: f64, points: usize) -> Grid {
    Grid::new(3, half, points, Boundary::DirichletZero).unwrap()
}

fn periodic(points: usize) -> Grid {
    Grid::new(3, PI, points, Boundary::Periodic).unwrap()
}

/// Worst over stored slices with `t − s ≥ t_min` of `max|G − G₀| / max G₀`.
fn free_kernel_error(grid: Grid, dt: f64, horizon: f64) -> Result<f64> {
    let y = vec![0.0; grid.dim()];
    let cfg = KernelConfig::new(SolverConfig::crank_nicolson(dt), horizon);
    let est = kernels::estimate_kernel(&PotentialSpec::zero(), &y, 0.0, &TruncationLadder::octaves(1.0, 3)?, &grid, &cfg)?;
    let mut worst: f64 = 0.0;
    for k in est.probe_slices().collect::<Vec<_>>() {
        let tau = est.top().time(k);
        let exact = kernels::free_kernel_field(&grid, &y, tau)?;
        let num = est.top().slices()[k].values();
        let diff = num.iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / exact.max());
    }
    Ok(worst)
}

fn c1_free_kernel() -> Result<Outcome> {
    let e1 = free_kernel_error(Grid::new(1, 4.0, 128, Boundary::DirichletZero)?, 0.005, 1.0)?;
    let e3 = free_kernel_error(box3(4.0, 32), 0.02, 1.0)?;
    outcome(e1 < 0.05 && e3 < 0.10, format!("n=1 N=128 err {:.2}% (< 5%), n=3 N=32 err {:.2}% (< 10%)", 100.0 * e1, 100.0 * e3))
}

fn c2_constant_potential() -> Result<Outcome> {
    let g = Grid::new(2, 3.0, 49, Boundary::DirichletZero)?;
    let u0 = g.sample(|p| (-(p[0] * p[0] + p[1] * p[1])).exp());
    let c = 0.7;
    let cfg = SolverConfig::crank_nicolson(0.01);
    let v = potentials::realize(&PotentialSpec::constant(c, f64::MAX), &g, cfg.dt, 1.0)?;
    let v0 = potentials::realize(&PotentialSpec::zero(), &g, cfg.dt, 1.0)?;
    let with = solver::solve_cauchy(&u0, &v, &cfg, 1.0)?;
    let free = solver::solve_cauchy(&u0, &v0, &cfg, 1.0)?;
    let mut worst: f64 = 0.0;
    for (k, (a, b)) in with.field.slices().iter().zip(free.field.slices()).enumerate() {
        let factor = (c * with.field.time(k)).exp();
        let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - factor * y).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / a.max_abs());
    }
    outcome(worst < 1e-3, format!("max relative deviation from e^(ct) x free {worst:.2e} (< 1e-3)"))
}

/// Max relative error of the realized potential against `0.25/r²` on `r_lo ≤ r ≤ r_hi`.
fn log_derived_error(points: usize, r_lo: f64, r_hi: f64) -> Result<f64> {
    let g = box3(2.0, points);
    let spec = PotentialSpec::new(PotentialKind::LogDerived { b: 0.5 }, Support { radius: 1.5, duration: f64::MAX })
        .with_scheme(DerivativeScheme::Fourth);
    let v = potentials::realize(&spec, &g, 0.1, 0.1)?;
    let coupling = potentials::log_coupling(0.5, 3);
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        let r = g.radius(i);
        if r >= r_lo && r <= r_hi {
            let exact = coupling / (r * r);
            worst = worst.max((v.slices()[0].values()[i] - exact).abs() / exact);
        }
    }
    Ok(worst)
}

fn c3_log_identity() -> Result<Outcome> {
    let h = box3(2.0, 65).spacing();
    let coarse = log_derived_error(65, 4.0 * h, 0.75)?;
    let fine = log_derived_error(129, 4.0 * h, 0.75)?;
    outcome(
        coarse < 0.03 && fine <= 0.5 * coarse,
        format!("N=64 err {:.2}% (< 3%), N=128 err {:.3}% on the same shell (ratio {:.1})", 100.0 * coarse, 100.0 * fine, coarse / fine),
    )
}

fn c4_ladder_monotonicity() -> Result<Outcome> {
    let g = box3(3.0, 33);
    let cfg = KernelConfig::new(SolverConfig::backward_euler(0.02), 0.5);
    let ladder = TruncationLadder::octaves(0.5, 6)?;
    let support = Support { radius: 1.5, duration: f64::MAX };
    let families = [
        ("inverse_square", PotentialSpec::inverse_square(0.2, 1.5)),
        ("log_derived", PotentialSpec::new(PotentialKind::LogDerived { b: 0.3 }, support)),
        ("oscillating", PotentialSpec::new(PotentialKind::Oscillating { epsilon: None }, support)),
        ("bump", PotentialSpec::bump(0.5, 1.0, 2.0, 1.5)),
    ];
    let mut monotone = 0;
    let mut notes = Vec::new();
    for (name, spec) in families {
        let top = potentials::realize(&spec, &g, cfg.solver.dt, cfg.horizon)?.max_abs();
        match kernels::estimate_kernel(&spec, &[0.1875, 0.0, 0.0], 0.0, &ladder, &g, &cfg) {
            Ok(est) => {
                let ok = est.columns.windows(2).all(|w| {
                    solver::compare_fields(&w[1], &w[0]).is_ok_and(|r| matches!(r.verdict, Ordering::AGreater | Ordering::Both))
                });
                let cut = ladder.upper().iter().filter(|&&j| j < top).count();
                if ok && cut > 0 {
                    monotone += 1;
                }
                notes.push(format!("{name}:{}({cut} cut)", if ok { "ok" } else { "BAD" }));
            }
            Err(e) => notes.push(format!("{name}:{e}")),
        }
    }
    outcome(monotone >= 3, format!("{monotone}/4 families nondecreasing along 6 levels [{}]", notes.join(", ")))
}

fn c5_mass_sandwich() -> Result<Outcome> {
    let g = box3(3.0, 33);
    let alpha = 2.0;
    let spec = PotentialSpec::bump(0.5, 1.0, alpha, 2.0);
    let cfg = KernelConfig::new(SolverConfig::backward_euler(0.02), 0.5);
    let (f, _) = spec.potential_function(&g, cfg.solver.dt, 0.5)?.expect("derivative combination");
    let big_f = f.map(|x| (-alpha * x).exp());
    let (lo, hi) = (big_f.slices().iter().map(|s| s.min()).fold(f64::INFINITY, f64::min), big_f.max_abs());
    let mass = kernels::mass_from_ones(&spec.scaled(alpha), 0.0, 0.5, &g, 64.0, &cfg)?;
    let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..g.len() {
        if g.radius(i) <= 1.5 {
            mn = mn.min(mass.values()[i]);
            mx = mx.max(mass.values()[i]);
        }
    }
    let (low, high) = (lo / hi, hi / lo);
    outcome(
        mn >= low - 0.05 && mx <= high + 0.05,
        format!("mass in [{mn:.3}, {mx:.3}], sandwich [{low:.3}, {high:.3}] +- 0.05"),
    )
}

fn c6_feynman_kac() -> Result<Outcome> {
    let g = box3(3.0, 33);
    let cfg = KernelConfig::new(SolverConfig::backward_euler(0.02), 0.5);
    let probes = ProbeSet { sources: vec![vec![0.0; 3], vec![0.5, 0.25, 0.0]], source_time: 0.0, stride: 1 };
    let r = kernels::feynman_kac_check(
        &PotentialSpec::bump(0.5, 1.0, 2.0, 2.0),
        1.5,
        &probes,
        &TruncationLadder::octaves(4.0, 5)?,
        &g,
        &cfg,
        0.05,
    )?;
    outcome(
        r.violation_fraction <= 0.01,
        format!("{} violations in {} probes ({:.3}%), worst ratio {:.4}", r.violations, r.probes, 100.0 * r.violation_fraction, r.worst_ratio),
    )
}

fn c7_hardy() -> Result<Outcome> {
    let grids: Vec<Grid> = [33, 65, 129].iter().map(|&n| box3(2.0, n)).collect();
    let scan = positivity::hardy_threshold_scan(&[0.1, 0.2, 0.25, 0.3, 0.4, 1.0], 1.5, &grids, &SpectralConfig::default())?;
    let pass = scan.critical.is_some_and(|a| (0.15..=0.40).contains(&a));
    let orders: Vec<String> = scan.rows.iter().map(|r| format!("{}:{:.2}", r.a, r.observed_order)).collect();
    outcome(pass, format!("critical coupling {:?} in [0.15, 0.40]; orders {}", scan.critical, orders.join(" ")))
}

fn c8_supercritical() -> Result<Outcome> {
    let g = box3(2.0, 41);
    let mut cfg = KernelConfig::new(SolverConfig::backward_euler(0.01), 0.5);
    cfg.cauchy_tol = 1.0;
    let ladder = TruncationLadder::octaves(4.0, 5)?;
    let y = [0.2, 0.0, 0.0];
    let strong = kernels::estimate_kernel(&PotentialSpec::inverse_square(1.0, 1.5), &y, 0.0, &ladder, &g, &cfg)?;
    let weak = kernels::estimate_kernel(&PotentialSpec::inverse_square(0.2, 1.5), &y, 0.0, &ladder, &g, &cfg)?;
    outcome(
        strong.top_growth > 0.1 && weak.top_growth <= 0.1,
        format!(
            "a=1.0 grows {:.1}%/octave (> 10%), a=0.2 grows {:.2}%/octave",
            100.0 * strong.top_growth,
            100.0 * weak.top_growth
        ),
    )
}

fn c9_inverse_square_class() -> Result<Outcome> {
    let grids: Vec<Grid> = [33, 41, 49].iter().map(|&n| box3(2.0, n)).collect();
    let input = RealizedPotential { spec: PotentialSpec::inverse_square(1.0, 1.0), dt: 0.05, horizon: 0.5 };
    let mut cfg = ClassifyConfig::new(0.5);
    cfg.epsilon_slope = 0.1;
    cfg.lp_tolerance = 0.05;
    let c = kato::classify(&input, &grids, &cfg)?;
    let changes: Vec<String> = c.lp_change.iter().map(|x| format!("{:.2}%", 100.0 * x)).collect();
    outcome(
        c.verdict == Verdict::AlmostHeatBounded && c.growth_exponent > 0.5,
        format!("{:?}, sup slope {:.3} (> 0.5), L2/L4/L8 change [{}] (< 5%)", c.verdict, c.growth_exponent, changes.join(", ")),
    )
}

fn c10_round_trip() -> Result<Outcome> {
    let g = box3(2.0, 33);
    let cfg = SolverConfig::crank_nicolson(0.005);
    let u0 = g.sample(|p| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 2.0).exp());
    let v = potentials::realize(&PotentialSpec::inverse_square(0.2, 1.5), &g, cfg.dt, 0.3)?;
    let sol = solver::solve_cauchy(&u0, &v, &cfg, 0.3)?;
    let rt = positivity::recover_f(&sol, Window { r_min: 0.25, r_max: 1.0, t_min: 0.05 })?;
    outcome(
        rt.max_relative_error < 0.05,
        format!("relative error {:.2}% (< 5%) over {} window nodes", 100.0 * rt.max_relative_error, rt.window_nodes),
    )
}

fn c11_q_identity() -> Result<Outcome> {
    let family = FlowFamily::RandomSolenoidal { seed: 1, modes: 1 };
    let coarse = nse::compute_q(&nse::synthetic_flow(family, &periodic(64))?)?.identity_gap;
    let fine = nse::compute_q(&nse::synthetic_flow(family, &periodic(128))?)?.identity_gap;
    let abc = nse::compute_q(&nse::synthetic_flow(FlowFamily::Abc { a: 1.0, b: 1.0, c: 1.0 }, &periodic(32))?)?;
    let ratio = coarse / fine;
    outcome(
        coarse < 1e-2 && ratio >= 3.5 && abc.transport_term_max < 1e-10,
        format!(
            "gap {coarse:.2e} at N=64 (< 1e-2), {fine:.2e} at N=128 (ratio {ratio:.2}, >= 3.5), Beltrami transport term {:.1e}",
            abc.transport_term_max
        ),
    )
}

fn c12_manufactured() -> Result<Outcome> {
    let grids: Vec<Grid> = [16, 24, 32].iter().map(|&n| periodic(n)).collect();
    let t_end = 0.5;
    let cfg = ClassifyConfig::new(t_end);
    let decaying = |g: &Grid| -> Result<QSeries> {
        let base = nse::synthetic_flow(FlowFamily::TaylorGreen3d, g)?;
        let dt = 0.05;
        let fields = (0..=10)
            .map(|k| {
                let a = 2.0 * (-3.0 * k as f64 * dt).exp();
                let comps = base.u.components().iter().map(|c| c.iter().map(|x| a * x).collect()).collect();
                nse::compute_q(&FlowField::from_velocity(VectorField::new(*g, comps)?)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QSeries { dt, fields })
    };
    let smooth = nse::q_heat_bounded_check(decaying, &grids, &cfg)?;
    let spike = nse::q_heat_bounded_check(|g: &Grid| nse::manufactured_spike(g, t_end, 1.0, 1.0, [0.0; 3], 0.5), &grids, &cfg)?;
    outcome(
        smooth.verdict == Verdict::HeatBounded && spike.verdict != Verdict::HeatBounded,
        format!(
            "decaying Taylor-Green {:?} (slope {:.3}), spike {:?} (slope {:.3})",
            smooth.verdict, smooth.growth_exponent, spike.verdict, spike.growth_exponent
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
experiment = "nse"
[grid]
dim = 3
half_width = 3.141592653589793
points = 24
[nse]
flow = { kind = "random_solenoidal", seed = 7 }
refinements = [16, 24]
[output]
prefix = "det"
formats = ["json", "csv"]
"#;

fn c13_determinism() -> Result<Outcome> {
    let cfg = ExperimentConfig::from_toml(DETERMINISM_CONFIG)?;
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let first = experiment::run(&cfg, a.path())?;
    experiment::run(&cfg, b.path())?;
    let mut identical = !first.files.is_empty();
    for f in &first.files {
        let name = f.file_name().expect("artifact has a name");
        identical &= std::fs::read(a.path().join(name))? == std::fs::read(b.path().join(name))?;
    }
    outcome(identical, format!("{} artifacts byte-identical across reruns", first.files.len()))
}

type Criterion = fn() -> Result<Outcome>;

fn main() {
    let criteria: [(&str, Criterion); 13] = [
        ("free-kernel oracle", c1_free_kernel),
        ("constant-potential oracle", c2_constant_potential),
        ("log-derived identity", c3_log_identity),
        ("ladder monotonicity", c4_ladder_monotonicity),
        ("mass sandwich", c5_mass_sandwich),
        ("Feynman-Kac inequality", c6_feynman_kac),
        ("Hardy threshold", c7_hardy),
        ("supercritical divergence", c8_supercritical),
        ("inverse-square classification", c9_inverse_square_class),
        ("positivity round trip", c10_round_trip),
        ("Q identity", c11_q_identity),
        ("manufactured Q series", c12_manufactured),
        ("determinism", c13_determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id:>2} {}: {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
