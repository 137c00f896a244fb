use mckeanflow_core::analysis::{detect_sign_change, fit_exponential, fit_power};
use mckeanflow_core::certificates::{
    eta_bar_formula, lsi_eta, nonlinear_lsi_eta_bar, q_t, stability_radius, structural_constants,
};
use mckeanflow_core::meanfield::SelfConsistency1D;
use mckeanflow_core::model::{Model, ModelConfig};
use proptest::prelude::*;

fn dw(theta: f64, sigma2: f64) -> Model {
    Model::new(&ModelConfig::double_well(theta, sigma2)).unwrap()
}

fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn eta_decreases_with_interaction_strength() {
    let etas: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|&th| lsi_eta(&dw(th, 0.5)).unwrap().eta).collect();
    assert!(etas.windows(2).all(|w| w[1] < w[0]), "{etas:?}");
}

#[test]
fn eta_bar_grows_as_epsilon_shrinks() {
    let model = dw(1.0, 0.3);
    let eta = lsi_eta(&model).unwrap().eta;
    let mp = SelfConsistency1D::new(&model).unwrap().fixed_points().unwrap().positive_stable().unwrap().m;
    let bars: Vec<f64> =
        [0.5, 0.3, 0.2, 0.1, 0.05].iter().map(|&f| nonlinear_lsi_eta_bar(&model, eta, f * mp).unwrap().0).collect();
    assert!(bars.windows(2).all(|w| w[1] >= w[0]), "{bars:?}");
    assert!(bars.iter().all(|b| b.is_finite() && *b > 0.0));
}

#[test]
fn q_t_grows_for_large_t_and_is_of_order_one_over_t_near_zero() {
    for theta in [0.25, 1.0] {
        let model = dw(theta, 0.3);
        let k = structural_constants(&model).unwrap();
        let eta = lsi_eta(&model).unwrap().eta;
        let q = |t: f64| q_t(&k, eta, 0.3, t).unwrap();
        let late: Vec<f64> = grid(1.0, 5.0, 41).into_iter().map(q).collect();
        assert!(late.windows(2).all(|w| w[1] >= w[0]), "theta={theta}");
        let scaled: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8].iter().map(|&t| t * q(t)).collect();
        let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
        assert!(hi / lo < 1.1, "t q_t = {scaled:?}");
    }
    assert!(q_t(&structural_constants(&dw(1.0, 0.3)).unwrap(), 1.0, 0.3, 0.0).is_err());
}

proptest! {
    #[test]
    fn eta_bar_is_monotone_in_eta(a in 0.01f64..5.0, b in 0.01f64..5.0, s2 in 0.05f64..1.0, alpha in 0.0f64..0.95) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(eta_bar_formula(lo, s2, 1.0, alpha) <= eta_bar_formula(hi, s2, 1.0, alpha));
    }

    #[test]
    fn stability_radius_stays_inside_delta(delta in 0.01f64..2.0, eta_bar in 0.1f64..100.0, q1 in 0.1f64..1e3, theta in 0.1f64..2.0) {
        let k = structural_constants(&dw(theta, 0.3)).unwrap();
        let (dp, c) = stability_radius(delta, eta_bar, q1, &k);
        prop_assert!(dp > 0.0 && dp < delta);
        prop_assert!(c.is_finite() && c >= 1.0);
    }

    #[test]
    fn rates_are_invariant_under_rescaling(rate in 0.1f64..3.0, c in 1e-6f64..1e6) {
        let t = grid(2.0, 10.0, 81);
        let y: Vec<f64> = t.iter().map(|s| (-rate * s).exp() * (1.0 + 0.01 * (3.0 * s).sin())).collect();
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let (a, b) = (fit_exponential(&t, &y, (2.0, 10.0)).unwrap(), fit_exponential(&t, &cy, (2.0, 10.0)).unwrap());
        prop_assert!((a.rate - b.rate).abs() <= 1e-12 * (1.0 + a.rate.abs()));
        prop_assert!((b.prefactor / a.prefactor / c - 1.0).abs() < 1e-9);
        let (p, q) = (fit_power(&t, &y, (2.0, 10.0)).unwrap(), fit_power(&t, &cy, (2.0, 10.0)).unwrap());
        prop_assert!((p.rate - q.rate).abs() <= 1e-12 * (1.0 + p.rate.abs()));
    }

    #[test]
    fn clean_rates_do_not_depend_on_the_window(rate in 0.1f64..3.0, pre in 0.1f64..10.0) {
        let t = grid(0.0, 20.0, 401);
        let y: Vec<f64> = t.iter().map(|s| pre * (-rate * s).exp()).collect();
        let rates: Vec<f64> = [(2.0, 20.0), (4.0, 16.0), (6.0, 12.0)]
            .iter()
            .map(|&w| fit_exponential(&t, &y, w).unwrap().rate)
            .collect();
        for r in &rates {
            prop_assert!((r - rates[0]).abs() < 1e-6);
        }
    }
}

#[test]
fn noisy_exponential_is_recovered() {
    let t = grid(0.0, 10.0, 201);
    // deterministic pseudo-noise of amplitude 1e-8
    let y: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(k, s)| 3.0 * (-2.0 * s).exp() + 1e-8 * ((k as f64 * 12.9898).sin() * 43758.5453).fract())
        .collect();
    let fit = fit_exponential(&t, &y, (0.0, 5.0)).unwrap();
    assert!((fit.rate - 2.0).abs() <= 1e-3, "{fit:?}");
    assert!(fit.r_squared > 0.9999);
}

#[test]
fn sign_change_of_a_cosine_like_series() {
    let dt = 0.01;
    let t: Vec<f64> = (0..300).map(|k| k as f64 * dt).collect();
    let y: Vec<f64> = t.iter().map(|s| (std::f64::consts::FRAC_PI_2 * s).cos()).collect();
    let tc = detect_sign_change(&t, &y).unwrap();
    assert!((tc - 1.0).abs() <= dt, "{tc}");
    let positive: Vec<f64> = t.iter().map(|s| 1.0 + s).collect();
    assert_eq!(detect_sign_change(&t, &positive), None);
}
