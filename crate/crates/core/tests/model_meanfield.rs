use mckeanflow_core::certificates::structural_constants;
use mckeanflow_core::grid::{DensityGrid1D, Grid1D};
use mckeanflow_core::meanfield::SelfConsistency1D;
use mckeanflow_core::model::{Model, ModelConfig, PotentialSpec, Well};
use proptest::prelude::*;

fn dw(theta: f64, sigma2: f64) -> Model {
    Model::new(&ModelConfig::double_well(theta, sigma2)).unwrap()
}

fn quadratic(theta: f64, sigma2: f64) -> Model {
    Model::new(&ModelConfig::new(PotentialSpec::Quadratic, theta, sigma2)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn drift_is_odd_for_the_centered_double_well(x in -5.0f64..5.0, theta in 0.0f64..3.0) {
        let m = dw(theta, 0.3);
        prop_assert_eq!(m.drift(x, 0.0), -m.drift(-x, 0.0));
    }

    #[test]
    fn energy_derivative_without_interaction_is_v(x in -5.0f64..5.0, mean in -2.0f64..2.0, var in 0.0f64..3.0) {
        let m = dw(0.0, 0.5);
        prop_assert_eq!(m.energy_derivative(x, mean, mean * mean + var).unwrap(), m.v(x));
    }

    #[test]
    fn one_sided_lipschitz(x in -4.0f64..4.0, y in -4.0f64..4.0, mean in -1.0f64..1.0, theta in 0.05f64..2.0) {
        let m = dw(theta, 0.3);
        let k1 = structural_constants(&m).unwrap().kappa1;
        // ∇E_μ = -drift
        let lhs = 2.0 * (m.drift(y, mean) - m.drift(x, mean)) * (x - y);
        prop_assert!(lhs >= -k1 * (x - y) * (x - y) - 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn quadratic_potential_matches_gaussian_closed_form(theta in 0.05f64..3.0, s2 in 0.05f64..2.0, m in -2.0f64..2.0) {
        let sc = SelfConsistency1D::new(&quadratic(theta, s2)).unwrap();
        let k = 1.0 + 2.0 * theta;
        let mo = sc.moments(m);
        prop_assert!((mo.mean - 2.0 * theta * m / k).abs() < 1e-10);
        prop_assert!((mo.var / (s2 / k) - 1.0).abs() < 1e-9);
        let g = theta * m * m / k - 0.5 * s2 * (2.0 * std::f64::consts::PI * s2 / k).ln();
        prop_assert!((sc.g(m) - g).abs() < 1e-9 * (1.0 + g.abs()));
        prop_assert!((sc.f_prime(m) - 2.0 * theta / k).abs() < 1e-9);
    }

    #[test]
    fn f_is_increasing(m in -3.0f64..3.0, theta in 0.1f64..2.0, s2 in 0.1f64..1.5) {
        let sc = SelfConsistency1D::new(&dw(theta, s2)).unwrap();
        prop_assert!(sc.f_prime(m) > 0.0);
    }

    #[test]
    fn g_derivative_is_2_theta_times_m_minus_f(m in -2.0f64..2.0, s2 in 0.2f64..1.2) {
        let theta = 1.0;
        let sc = SelfConsistency1D::new(&dw(theta, s2)).unwrap();
        let h = 1e-4;
        let dg = (sc.g(m + h) - sc.g(m - h)) / (2.0 * h);
        prop_assert!((dg - 2.0 * theta * (m - sc.f(m))).abs() < 1e-7);
    }
}

#[test]
fn fixed_points_are_critical_points_of_g() {
    for s2 in [1.0, 0.6, 0.3, 0.1] {
        let sc = SelfConsistency1D::new(&dw(1.0, s2)).unwrap();
        for p in sc.fixed_points().unwrap().points {
            let h = 1e-4;
            let dg = (sc.g(p.m + h) - sc.g(p.m - h)) / (2.0 * h);
            assert!(dg.abs() < 1e-8, "sigma2={s2} m={} g'={dg}", p.m);
        }
    }
}

#[test]
fn symmetric_branches_lie_below_the_origin() {
    let sc = SelfConsistency1D::new(&dw(1.0, 0.3)).unwrap();
    let fps = sc.fixed_points().unwrap();
    assert_eq!(fps.len(), 3);
    let mp = fps.positive_stable().unwrap().m;
    assert!(sc.g(mp) < sc.g(0.0));
    assert!((sc.g(mp) - sc.g(-mp)).abs() < 1e-10);
}

#[test]
fn supercritical_map_contracts_toward_zero() {
    let sc = SelfConsistency1D::new(&dw(1.0, 1.0)).unwrap();
    let worst = (1..=300)
        .map(|k| -3.0 + 6.0 * k as f64 / 301.0)
        .filter(|m: &f64| m.abs() > 1e-6)
        .map(|m| sc.f(m).abs() / m.abs())
        .fold(0.0, f64::max);
    assert!(worst < 1.0, "sup |f(m)|/|m| = {worst}");
}

#[test]
fn localization_tends_to_the_quadratic_limit() {
    let sc = SelfConsistency1D::new(&dw(1.0, 0.3)).unwrap();
    let limit = 2.0 / (2.0 + 2.0);
    let mut prev = f64::INFINITY;
    for s2 in [0.2, 0.1, 0.05, 0.02] {
        let j = sc.localization_jacobian(1.0, s2).unwrap();
        if s2 <= 0.1 {
            assert!(j < 1.0);
        }
        assert!((j - limit).abs() < prev, "sigma2={s2} f'={j}");
        prev = (j - limit).abs();
    }
    assert!(prev < 0.02);
}

#[test]
fn off_center_wells_each_hold_a_local_fixed_point() {
    let wells = vec![Well { shift: 1.5, scale: 1.0 }, Well { shift: 1.0, scale: 0.2 }];
    let model = Model::new(&ModelConfig::new(PotentialSpec::MultiWell { wells }, 0.5, 0.3)).unwrap();
    let minima = model.local_minima(-6.0, 6.0);
    assert!(minima.len() >= 2, "minima {minima:?}");
    let sc = SelfConsistency1D::new(&model).unwrap();
    for &a in [minima[0], minima[minima.len() - 1]].iter() {
        let j = sc.localization_jacobian(a, 0.05).unwrap();
        assert!(j > 0.0 && j < 1.0, "a={a} f'={j}");
    }
}

#[test]
fn interaction_energy_examples() {
    let axis = Grid1D::new(-8.0, 8.0, 1024).unwrap();
    let g = DensityGrid1D::gaussian(axis, 0.0, 1.0).unwrap();
    let e = quadratic(0.0, 1.0).mean_field_energy(&g).unwrap();
    assert!((e - 0.5).abs() < 1e-4, "{e}");

    let narrow = DensityGrid1D::gaussian(axis, 0.0, 0.05).unwrap();
    assert!(dw(1.0, 0.3).mean_field_energy(&narrow).unwrap().abs() < 5e-3);

    // the interaction part of the energy is θ·var for symmetric ρ
    let sym = DensityGrid1D::mixture(axis, &[(0.5, -1.2, 0.4), (0.5, 1.2, 0.4)]).unwrap();
    let m = dw(1.5, 0.3);
    let pot: f64 = sym.values().iter().enumerate().map(|(i, p)| m.v(axis.center(i)) * p).sum::<f64>() * axis.dx();
    let (xs, dx) = (axis.centers(), axis.dx());
    let mut pair = 0.0;
    for (i, &pi) in sym.values().iter().enumerate() {
        for (j, &pj) in sym.values().iter().enumerate() {
            pair += (xs[i] - xs[j]).powi(2) * pi * pj;
        }
    }
    let half_double_integral = 0.5 * 1.5 * pair * dx * dx;
    assert!((m.mean_field_energy(&sym).unwrap() - pot - half_double_integral).abs() < 1e-9);
    assert!((half_double_integral - 1.5 * sym.variance()).abs() < 1e-9);
}
