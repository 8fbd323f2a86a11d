use std::f64::consts::PI;

use heatlab::grid::{Boundary, Grid};
use heatlab::io;
use heatlab::kato::{ClassifyConfig, Verdict};
use heatlab::nse::{self, FlowFamily, QSeries};

fn periodic(points: usize) -> Grid {
    Grid::new(3, PI, points, Boundary::Periodic).unwrap()
}

const ABC: FlowFamily = FlowFamily::Abc { a: 1.0, b: 1.0, c: 1.0 };

#[test]
fn abc_flow_is_solenoidal_and_beltrami() {
    let err = |n: usize| {
        let f = nse::synthetic_flow(ABC, &periodic(n)).unwrap();
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for (w, u) in f.w.component(a).iter().zip(f.u.component(a)) {
                worst = worst.max((w - u).abs());
            }
        }
        (worst, f.div_residual)
    };
    let (e16, d16) = err(16);
    let (e32, _) = err(32);
    assert!(d16 < 1e-12);
    assert!(e32 < e16 / 3.5);
}

#[test]
fn random_flow_is_discretely_solenoidal() {
    let f = nse::synthetic_flow(FlowFamily::RandomSolenoidal { seed: 5, modes: 2 }, &periodic(24)).unwrap();
    assert!(f.div_residual < 1e-10);
    let g = nse::synthetic_flow(FlowFamily::RandomSolenoidal { seed: 6, modes: 2 }, &periodic(24)).unwrap();
    assert_ne!(f.u.component(0), g.u.component(0));
}

#[test]
fn abc_stretching_matches_closed_form() {
    // ∂ⱼuᵢ for u = (sin z + cos y, sin x + cos z, sin y + cos x)
    let g = periodic(64);
    let f = nse::synthetic_flow(ABC, &g).unwrap();
    let s = nse::stretching_alpha(&f).unwrap();
    for idx in [17usize, 4000, 100_000, 200_001] {
        let [x, y, z] = g.point(idx);
        let u = [z.sin() + y.cos(), x.sin() + z.cos(), y.sin() + x.cos()];
        let grad = [[0.0, -y.sin(), z.cos()], [x.cos(), 0.0, -z.sin()], [-x.sin(), y.cos(), 0.0]];
        let mut num = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                num += u[i] * grad[i][j] * u[j];
            }
        }
        let exact = num / (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        assert!((s.alpha.values()[idx] - exact).abs() < 5e-3, "node {idx}");
    }
}

#[test]
fn beltrami_q_forms_agree() {
    let err = |n: usize| {
        let q = nse::compute_q(&nse::synthetic_flow(ABC, &periodic(n)).unwrap()).unwrap();
        assert!(q.transport_term_max < 1e-10);
        q.identity_gap
    };
    let (a, b) = (err(24), err(48));
    assert!(b < a / 3.0, "{a} -> {b}");
}

#[test]
fn frozen_abc_series_is_heat_bounded() {
    let grids: Vec<Grid> = [12, 16, 20].iter().map(|&n| periodic(n)).collect();
    let series = |g: &Grid| {
        let q = nse::compute_q(&nse::synthetic_flow(ABC, g)?)?;
        Ok(QSeries { dt: 0.05, fields: vec![q; 5] })
    };
    let c = nse::q_heat_bounded_check(series, &grids, &ClassifyConfig::new(0.2)).unwrap();
    assert_eq!(c.verdict, Verdict::HeatBounded, "slope {}", c.growth_exponent);
}

#[test]
fn weak_flow_has_empty_mask() {
    let grids: Vec<Grid> = [8, 10, 12].iter().map(|&n| periodic(n)).collect();
    let series = |g: &Grid| {
        let f = nse::synthetic_flow(FlowFamily::TaylorGreen3d, g)?;
        let weak = f.u.map_components(|_, _, x| 0.1 * x);
        let q = nse::compute_q(&nse::FlowField::from_velocity(weak)?)?;
        Ok(QSeries { dt: 0.1, fields: vec![q; 3] })
    };
    assert!(matches!(
        nse::q_heat_bounded_check(series, &grids, &ClassifyConfig::new(0.2)),
        Err(heatlab::Error::EmptyMask(_))
    ));
}

#[test]
fn flow_file_rows_may_be_shuffled() {
    let g = periodic(8);
    let flow = nse::synthetic_flow(ABC, &g).unwrap();
    let mut buf = Vec::new();
    io::write_flow_csv(&mut buf, &flow).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2..].reverse();
    let back = io::read_flow_csv(lines.join("\n").as_bytes()).unwrap();
    assert_eq!(back.u.component(2), flow.u.component(2));
    lines.pop();
    assert!(io::read_flow_csv(lines.join("\n").as_bytes()).is_err());
}
