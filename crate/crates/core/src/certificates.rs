//! Explicit constants of the local convergence certificate for the
//! quadratic-interaction model, and their empirical validation on grid
//! trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    fisher_information_log, gibbs_density, log_gibbs, relative_entropy_log, w2_1d, DensityGrid1D,
    Grid1D,
};
use crate::meanfield::{Contraction, DiscreteFamily, SelfConsistency1D};
use crate::model::{Model, Polynomial};
use crate::pde::{FluxScheme, GranularSolver, Stepping};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    /// Lipschitz constant of `μ ↦ ∇E_μ` in W2.
    pub l: f64,
    /// Curvature defect of the interaction energy.
    pub lambda: f64,
    /// One-sided Lipschitz constant of the drift.
    pub kappa1: f64,
}

/// `L = 2θ`, `λ = θ`, `κ₁ = 2·max(0, -(inf V'' + 2θ))`.
pub fn structural_constants(model: &Model) -> Result<StructuralConstants> {
    let theta = model.theta();
    if theta < 0.0 {
        return Err(Error::InvalidModel(format!(
            "certificates need an attractive interaction (theta >= 0), got {theta}"
        )));
    }
    let inf = model.global_inf_d2v();
    Ok(StructuralConstants { l: 2.0 * theta, lambda: theta, kappa1: 2.0 * (-(inf + 2.0 * theta)).max(0.0) })
}

const HULL_POINTS: usize = 20001;

/// Oscillation of `U₁ = W - conv(W)` for `W = V - c x²/2`, where `conv` is the
/// lower convex envelope. Infinite when W is not bounded below.
pub fn holley_stroock_osc(model: &Model, c: f64) -> f64 {
    let mut coeffs = model.potential().coeffs().to_vec();
    coeffs.resize(coeffs.len().max(3), 0.0);
    coeffs[2] -= 0.5 * c;
    let w = Polynomial::new(coeffs);
    let deg = w.degree();
    if deg % 2 == 1 || w.coeffs()[deg] < 0.0 {
        return f64::INFINITY;
    }
    if deg < 2 {
        return if deg == 0 { 0.0 } else { f64::INFINITY };
    }
    let dw = w.derivative();
    let r = 1.0 + 1.5 * dw.root_bound().max(dw.derivative().root_bound());
    let xs: Vec<f64> = (0..HULL_POINTS).map(|k| -r + 2.0 * r * k as f64 / (HULL_POINTS - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| w.eval(x)).collect();
    // lower hull by monotone chain
    let mut hull: Vec<usize> = Vec::new();
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut osc: f64 = 0.0;
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let slope = (ys[b] - ys[a]) / (xs[b] - xs[a]);
        for k in a + 1..b {
            osc = osc.max(ys[k] - (ys[a] + slope * (xs[k] - xs[a])));
        }
    }
    osc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsiConstant {
    pub eta: f64,
    /// Curvature kept in the convex part of the decomposition.
    pub c: f64,
    pub osc: f64,
}

fn eta_for(model: &Model, c: f64) -> (f64, f64) {
    let osc = holley_stroock_osc(model, c);
    let s2 = model.sigma2();
    (s2 / (2.0 * (c + 2.0 * model.theta())) * (osc / s2).exp(), osc)
}

/// Uniform LSI constant of the local equilibria by Bakry–Émery plus
/// Holley–Stroock, minimized over the decomposition curvature `c`.
pub fn lsi_eta(model: &Model) -> Result<LsiConstant> {
    model.require_1d()?;
    let theta = structural_constants(model)?.lambda;
    let inf = model.global_inf_d2v();
    let deg = model.potential().degree();
    let c_max = if deg == 2 {
        model.d2v(0.0)
    } else {
        inf.max(0.0) + 2.0 * (1.0 + inf.abs())
    };
    let lo = -2.0 * theta;
    if !(c_max > lo) {
        return Err(Error::NoDecomposition);
    }
    let span = c_max - lo;
    let mut candidates: Vec<f64> = (0..=400).map(|k| lo + span * 10f64.powf(-4.0 + 4.0 * k as f64 / 400.0)).collect();
    candidates.extend((1..200).map(|k| lo + span * k as f64 / 200.0));
    if inf > lo && inf <= c_max {
        candidates.push(inf);
    }
    let mut best: Option<LsiConstant> = None;
    for c in candidates {
        let (eta, osc) = eta_for(model, c);
        if eta.is_finite() && best.map_or(true, |b| eta < b.eta) {
            best = Some(LsiConstant { eta, c, osc });
        }
    }
    best.ok_or(Error::NoDecomposition)
}

/// `η̄ = η(σ² + 4ηθ/(1-α)²)/σ⁴`.
pub fn eta_bar_formula(eta: f64, sigma2: f64, theta: f64, alpha: f64) -> f64 {
    eta * (sigma2 + 4.0 * eta * theta / ((1.0 - alpha) * (1.0 - alpha))) / (sigma2 * sigma2)
}

/// Non-linear LSI constant on `{|m| ≥ ε}` together with the contraction data.
pub fn nonlinear_lsi_eta_bar(model: &Model, eta: f64, epsilon: f64) -> Result<(f64, Contraction)> {
    let sc = SelfConsistency1D::new(model)?;
    let contraction = sc.contraction_alpha(epsilon)?;
    if !(contraction.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "no contraction on m >= {epsilon}: alpha={}",
            contraction.alpha
        )));
    }
    Ok((eta_bar_formula(eta, model.sigma2(), model.theta(), contraction.alpha), contraction))
}

/// `q_t = (1 + ηL + 4ηλ/σ² + L²η²/2)(κ₁/(1 - e^{-κ₁t}) + 2tL²e^{(2κ₁+4L)t})`.
pub fn q_t(k: &StructuralConstants, eta: f64, sigma2: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("q_t needs t > 0, got {t}")));
    }
    let (l, lambda, k1) = (k.l, k.lambda, k.kappa1);
    let pre = 1.0 + eta * l + 4.0 * eta * lambda / sigma2 + 0.5 * l * l * eta * eta;
    let short = if k1 * t < 1e-12 { 1.0 / t + 0.5 * k1 } else { k1 / -(-k1 * t).exp_m1() };
    Ok(pre * (short + 2.0 * t * l * l * ((2.0 * k1 + 4.0 * l) * t).exp()))
}

/// `δ' = δ/(2(2√(η̄q₁) + e^{κ₁/2+L}))` and `C = e^{1/η̄}·max(4η̄q₁, e^{κ₁+2L})`.
pub fn stability_radius(delta: f64, eta_bar: f64, q1: f64, k: &StructuralConstants) -> (f64, f64) {
    let dp = delta / (2.0 * (2.0 * (eta_bar * q1).sqrt() + (0.5 * k.kappa1 + k.l).exp()));
    let c = (1.0 / eta_bar).exp() * (4.0 * eta_bar * q1).max((k.kappa1 + 2.0 * k.l).exp());
    (dp, c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Valid,
    Invalid,
    Unvalidated,
}

/// Outcome of one empirical check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub passed: bool,
    /// Largest observed `lhs / rhs` (must stay below `1 + slack`).
    pub worst_ratio: f64,
    pub slack: f64,
    pub offending: Option<String>,
}

impl CheckResult {
    fn new(name: &str, slack: f64) -> CheckResult {
        CheckResult { name: name.into(), samples: 0, passed: true, worst_ratio: 0.0, slack, offending: None }
    }

    /// Records `lhs ≤ rhs·(1 + slack) + abs`.
    fn record(&mut self, lhs: f64, rhs: f64, abs: f64, what: impl FnOnce() -> String) {
        self.samples += 1;
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs <= abs { 0.0 } else { f64::INFINITY };
        if ratio.is_nan() || ratio > self.worst_ratio {
            self.worst_ratio = ratio;
        }
        let ok = lhs <= rhs * (1.0 + self.slack) + abs;
        if !ok && self.passed {
            self.passed = false;
            self.offending = Some(format!("{}: lhs={lhs:e} rhs={rhs:e}", what()));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub seed: u64,
    /// Cells of the validation grid on the default domain.
    pub n: usize,
    pub talagrand_pairs: usize,
    pub nlsi_runs: usize,
    pub nlsi_t_final: f64,
    pub q1_runs: usize,
    /// W2 radius of the ball the q₁ initial data are drawn from.
    pub q1_radius: f64,
    pub envelope_runs: usize,
    pub envelope_t_final: f64,
    pub record_every: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seed: 20240601,
            n: 512,
            talagrand_pairs: 50,
            nlsi_runs: 5,
            nlsi_t_final: 10.0,
            q1_runs: 20,
            q1_radius: 0.3,
            envelope_runs: 5,
            envelope_t_final: 10.0,
            record_every: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub theta: f64,
    pub sigma2: f64,
    pub l: f64,
    pub lambda: f64,
    pub kappa1: f64,
    pub eta: f64,
    pub lsi_c: f64,
    pub lsi_osc: f64,
    pub epsilon: f64,
    pub m_plus: f64,
    pub alpha_eps: f64,
    pub eta_bar: f64,
    pub q1: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub c_rate: f64,
    pub verdict: Verdict,
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
}

/// Random Gaussian mixture with 1 to 3 components centred near `center`.
pub fn random_mixture(rng: &mut impl Rng, axis: &Grid1D, center: f64, spread: f64, std: (f64, f64)) -> Result<DensityGrid1D> {
    let k = rng.random_range(1..=3);
    let parts: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            let w = rng.random_range(0.2..1.0);
            let m = center + spread * rng.random_range(-1.0..1.0);
            let s = rng.random_range(std.0..std.1);
            (w, m, s)
        })
        .collect();
    DensityGrid1D::mixture(*axis, &parts)
}

impl CertificateReport {
    /// Evaluates every constant. `epsilon` defaults to `0.2·m₊`.
    pub fn compute(model: &Model, epsilon: Option<f64>) -> Result<CertificateReport> {
        model.require_1d()?;
        let k = structural_constants(model)?;
        let lsi = lsi_eta(model)?;
        let sc = SelfConsistency1D::new(model)?;
        let m_plus = sc
            .fixed_points()?
            .positive_stable()
            .ok_or(Error::NotSubcritical { sigma2: model.sigma2() })?
            .m;
        let epsilon = epsilon.unwrap_or(0.2 * m_plus);
        let (eta_bar, contraction) = nonlinear_lsi_eta_bar(model, lsi.eta, epsilon)?;
        let q1 = q_t(&k, lsi.eta, model.sigma2(), 1.0)?;
        let delta = m_plus - epsilon;
        let (delta_prime, c_rate) = stability_radius(delta, eta_bar, q1, &k);
        let report = CertificateReport {
            theta: model.theta(),
            sigma2: model.sigma2(),
            l: k.l,
            lambda: k.lambda,
            kappa1: k.kappa1,
            eta: lsi.eta,
            lsi_c: lsi.c,
            lsi_osc: lsi.osc,
            epsilon,
            m_plus,
            alpha_eps: contraction.alpha,
            eta_bar,
            q1,
            delta,
            delta_prime,
            c_rate,
            verdict: Verdict::Unvalidated,
            checks: Vec::new(),
            notes: vec![format!(
                "alpha_eps is a grid supremum of |f(m) - m+|/|m - m+| on [eps, {:.3}] plus a tail bound, not an analytic bound on f''",
                contraction.m_far
            )],
        };
        let finite = [k.l, k.lambda, k.kappa1, lsi.eta, eta_bar, q1, delta, delta_prime, c_rate];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("certificate constant".into()));
        }
        Ok(report)
    }

    /// Runs every empirical check and sets the verdict.
    pub fn validate(&mut self, model: &Model, cfg: &ValidationConfig) -> Result<()> {
        let axis = Grid1D::default_for(model.sigma2(), cfg.n)?;
        let family = DiscreteFamily::new(model, &axis);
        let m_star = family.fixed_point(0.5 * self.m_plus, 1.5 * self.m_plus)?;
        let rho_star = family.gibbs(m_star)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s2 = model.sigma2();
        let sigma = s2.sqrt();
        let min_std = 2.0 * axis.dx();

        let mut tal = CheckResult::new("talagrand", 0.05);
        for i in 0..cfg.talagrand_pairs {
            let nu = random_mixture(&mut rng, &axis, 0.0, 1.5, (min_std.max(0.15), 1.0))?;
            let rho = random_mixture(&mut rng, &axis, 0.0, 1.5, (min_std.max(0.15), 1.0))?;
            let m = rho.mean();
            let gamma = gibbs_density(model, &axis, m)?;
            let w2 = w2_1d(&nu, &gamma)?;
            let h = relative_entropy_log(&nu, &log_gibbs(model, &axis, m))?;
            tal.record(w2 * w2, 4.0 * self.eta * h, 0.0, || format!("pair {i}, m(rho)={m:.4}"));
        }

        let solver_for = |rho0: DensityGrid1D| -> Result<GranularSolver> {
            let mut s = GranularSolver::new(model, rho0, 1.0, FluxScheme::ChangCooper, Stepping::Explicit)?;
            s.set_dt(0.5 * s.max_stable_dt())?;
            Ok(s)
        };

        let mut nlsi = CheckResult::new("nonlinear_lsi", 0.05);
        let s4 = s2 * s2;
        for run in 0..cfg.nlsi_runs {
            let rho0 = random_mixture(&mut rng, &axis, m_star, 0.3, (min_std.max(0.2), 0.6))?;
            let mut solver = solver_for(rho0)?;
            solver.run_observed(cfg.nlsi_t_final, cfg.record_every, |t, rho| {
                if rho.mean() >= self.epsilon {
                    let gap = family.free_energy_gap(rho, m_star)?;
                    let fisher = fisher_information_log(rho, &log_gibbs(model, &axis, rho.mean()))?;
                    nlsi.record(gap, self.eta_bar * s4 * fisher, 1e-12, || format!("run {run}, t={t:.3}"));
                }
                Ok(())
            })?;
        }

        let mut q1c = CheckResult::new("q1_regularization", 0.10);
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < cfg.q1_runs {
            attempts += 1;
            if attempts > 100 * cfg.q1_runs.max(1) {
                return Err(Error::InvalidArgument("cannot draw q1 initial data inside the ball".into()));
            }
            let rho0 = random_mixture(&mut rng, &axis, m_star, 0.25, (min_std.max(0.5 * sigma), 1.5 * sigma))?;
            let w0 = w2_1d(&rho0, &rho_star)?;
            if w0 > cfg.q1_radius {
                continue;
            }
            let mut solver = solver_for(rho0)?;
            solver.run_observed(1.0, 1.0, |_, _| Ok(()))?;
            let gap = family.free_energy_gap(solver.state(), m_star)?;
            q1c.record(gap, self.q1 * w0 * w0, 0.0, || format!("run {drawn}, W2(rho0, rho*)={w0:e}"));
            drawn += 1;
        }

        let mut env = CheckResult::new("w2_envelope", 0.05);
        let mut faster = true;
        for run in 0..cfg.envelope_runs {
            let sign = if run % 2 == 0 { 1.0 } else { -1.0 };
            let shift = sign * self.delta_prime * (run + 1) as f64 / (cfg.envelope_runs + 1) as f64;
            let rho0 = DensityGrid1D::from_fn(axis, |x| {
                (-model.tilted_potential(x - shift, m_star) / s2).exp()
            })?;
            let w0 = w2_1d(&rho0, &rho_star)?;
            if w0 > self.delta_prime {
                return Err(Error::InvalidArgument(format!("envelope start W2={w0:e} outside delta'")));
            }
            let mut solver = solver_for(rho0)?;
            let mut last = (0.0, w0 * w0);
            solver.run_observed(cfg.envelope_t_final, cfg.record_every, |t, rho| {
                let w = w2_1d(rho, &rho_star)?;
                let bound = self.c_rate * (-t / self.eta_bar).exp() * w0 * w0;
                env.record(w * w, bound, 0.0, || format!("run {run}, t={t:.3}"));
                last = (t, w * w);
                Ok(())
            })?;
            let (t, w2sq) = last;
            if t > 0.0 && w2sq > 0.0 && -(w2sq / (w0 * w0)).ln() / t < 1.0 / self.eta_bar {
                faster = false;
            }
        }
        if !faster {
            self.notes.push("observed W2 decay slower than the certified rate 1/eta_bar in some run".into());
        }

        self.checks = vec![tal, nlsi, q1c, env];
        let ok = self.checks.iter().all(|c| c.passed);
        self.verdict = if ok { Verdict::Valid } else { Verdict::Invalid };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, PotentialSpec};

    fn dw(theta: f64, s2: f64) -> Model {
        Model::new(&ModelConfig::double_well(theta, s2)).unwrap()
    }

    #[test]
    fn structural_constants_of_the_double_well() {
        let k = structural_constants(&dw(1.0, 0.5)).unwrap();
        assert_eq!((k.l, k.lambda), (2.0, 1.0));
        assert_eq!(k.kappa1, 0.0);
        let k = structural_constants(&dw(0.25, 0.5)).unwrap();
        assert!((k.kappa1 - 1.0).abs() < 1e-5);
        assert!(structural_constants(&dw(-1.0, 0.5)).is_err());
    }

    #[test]
    fn double_well_oscillation_oracle() {
        // V - c x²/2 = x⁴/4 - (1+c)x²/2 has hull gap (1+c)²/4 at 0
        let m = dw(1.0, 0.5);
        for &c in &[-0.5, 0.0, 0.7, 2.0] {
            let osc = holley_stroock_osc(&m, c);
            let exact = (1.0 + c) * (1.0 + c) / 4.0;
            assert!((osc - exact).abs() < 1e-6, "{c}: {osc} vs {exact}");
        }
        assert_eq!(holley_stroock_osc(&m, -1.5), 0.0);
    }

    #[test]
    fn gaussian_eta_is_bakry_emery() {
        let m = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, 0.0, 0.8)).unwrap();
        let e = lsi_eta(&m).unwrap();
        assert!((e.eta - 0.4).abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn q_t_limit_and_short_time_order() {
        let k = StructuralConstants { l: 2.0, lambda: 1.0, kappa1: 0.0 };
        let pre = 1.0 + 0.1 * 2.0 + 4.0 * 0.1 / 0.3 + 0.5 * 4.0 * 0.01;
        let q = q_t(&k, 0.1, 0.3, 0.5).unwrap();
        let expected = pre * (2.0 + 2.0 * 0.5 * 4.0 * (8.0f64 * 0.5).exp());
        assert!((q - expected).abs() < 1e-10 * expected);
        let kt = StructuralConstants { kappa1: 1e-9, ..k };
        assert!((q_t(&kt, 0.1, 0.3, 0.5).unwrap() - q).abs() < 1e-6 * q);
        assert!(q_t(&k, 0.1, 0.3, 0.0).is_err());
    }

    #[test]
    fn stability_radius_is_inside_delta() {
        let k = StructuralConstants { l: 2.0, lambda: 1.0, kappa1: 0.0 };
        let (dp, c) = stability_radius(0.7, 17.0, 7e4, &k);
        assert!(dp > 0.0 && dp < 0.7 && c > 1.0);
    }
}
