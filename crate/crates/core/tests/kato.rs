use heatlab::grid::{Boundary, Grid, ScalarField, SpaceTimeField};
use heatlab::kato::{self, ClassifyConfig, RealizedPotential, Verdict};
use heatlab::kernels::FreeKernel;
use heatlab::positivity::SpectralConfig;
use heatlab::potentials::{PotentialKind, PotentialSpec, Support};

fn grid3(points: usize) -> Grid {
    Grid::new(3, 2.0, points, Boundary::DirichletZero).unwrap()
}

#[test]
fn unit_cylinder_input_integrates_time() {
    let g = grid3(33);
    let input = RealizedPotential { spec: PotentialSpec::constant(1.0, 1.5), dt: 0.01, horizon: 0.1 };
    let f = kato::Refinable::sample(&input, &g).unwrap();
    let conv = kato::heat_convolve(&f, FreeKernel::Probability, 0.1).unwrap();
    let centre = g.nearest_node(&[0.0; 3]);
    for (k, s) in conv.result.slices().iter().enumerate().skip(1) {
        let t = conv.result.time(k);
        assert!((s.values()[centre] - t).abs() < 0.03 * t, "t {t}: {}", s.values()[centre]);
    }
}

#[test]
fn bounded_input_is_heat_bounded() {
    let grids: Vec<Grid> = [17, 25, 33].iter().map(|&n| grid3(n)).collect();
    let input = RealizedPotential { spec: PotentialSpec::constant(2.0, 1.0), dt: 0.05, horizon: 0.3 };
    let c = kato::classify(&input, &grids, &ClassifyConfig::new(0.3)).unwrap();
    assert_eq!(c.verdict, Verdict::HeatBounded, "slope {}", c.growth_exponent);
}

#[test]
fn inverse_square_sup_grows_with_resolution() {
    let grids: Vec<Grid> = [17, 25, 33].iter().map(|&n| grid3(n)).collect();
    let input = RealizedPotential { spec: PotentialSpec::inverse_square(1.0, 1.0), dt: 0.05, horizon: 0.3 };
    let c = kato::classify(&input, &grids, &ClassifyConfig::new(0.3)).unwrap();
    assert!(c.growth_exponent > 0.5, "slope {}", c.growth_exponent);
    assert!(c.sup_trace.windows(2).all(|w| w[1] > w[0]));
    assert_ne!(c.verdict, Verdict::HeatBounded);
}

#[test]
fn constant_f_has_zero_gradient_term() {
    let grids: Vec<Grid> = [9, 13].iter().map(|&n| grid3(n)).collect();
    let f = |g: &Grid| SpaceTimeField::stationary(ScalarField::constant(*g, 4.0), 0.05);
    let r = kato::gradient_square_heat_test(&f, 0.25, &grids, 0.2, 0.05).unwrap();
    assert_eq!(r.sup, 0.0);
    assert!(r.stable);
}

#[test]
fn smooth_bump_gradient_term_is_stable() {
    let grids: Vec<Grid> = [25, 33, 49].iter().map(|&n| grid3(n)).collect();
    let spec = PotentialSpec::bump(0.5, 1.0, 2.0, 1.5);
    let f = |g: &Grid| Ok(spec.potential_function(g, 0.05, 0.2)?.expect("bump has f").0);
    let r = kato::gradient_square_heat_test(&f, 0.25, &grids, 0.2, 0.05).unwrap();
    assert!(r.stable, "sups {:?}", r.sups);
}

#[test]
fn form_bounded_and_almost_heat_bounded() {
    let spectral: Vec<Grid> = [17, 25, 33].iter().map(|&n| grid3(n)).collect();
    let classify: Vec<Grid> = [17, 21, 25].iter().map(|&n| grid3(n)).collect();
    let cfg = ClassifyConfig::new(0.2);
    let cyl = PotentialSpec::new(PotentialKind::Constant { c: 1.0 }, Support { radius: 1.0, duration: f64::MAX });
    let r = kato::form_bounded_implies_ahb_experiment(&cyl, &spectral, &SpectralConfig::default(), &classify, &cfg, 0.05).unwrap();
    assert!(r.form_bounded && r.almost_heat_bounded);
    let neg = PotentialSpec::constant(-1.0, 1.0);
    assert!(kato::form_bounded_implies_ahb_experiment(&neg, &spectral, &SpectralConfig::default(), &classify, &cfg, 0.05).is_err());
}
