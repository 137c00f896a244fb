//! Confining potential, quadratic interaction and temperature.
//!
//! With `W(x, y) = θ (x - y)²` the convolution `ρ ⋆ W` only depends on the mean
//! and second moment of `ρ`, so every mean-field quantity below takes moments
//! rather than whole densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DensityGrid1D;

/// One quartic well `scale·((x - shift)⁴/4 - (x - shift)²/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Well {
    pub shift: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `x⁴/4 - x²/2`
    DoubleWell,
    /// `x²/2`
    Quadratic,
    /// Coefficients in ascending order; even degree, positive leading term.
    Polynomial { coefficients: Vec<f64> },
    /// Sum of shifted and scaled quartic wells.
    MultiWell { wells: Vec<Well> },
}

impl PotentialSpec {
    /// Ascending polynomial coefficients of V.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        let c = match self {
            PotentialSpec::DoubleWell => vec![0.0, 0.0, -0.5, 0.0, 0.25],
            PotentialSpec::Quadratic => vec![0.0, 0.0, 0.5],
            PotentialSpec::Polynomial { coefficients } => {
                let c = coefficients.clone();
                if c.len() < 3 {
                    return Err(Error::InvalidModel("polynomial degree must be at least 2".into()));
                }
                if c.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidModel("non-finite polynomial coefficient".into()));
                }
                if (c.len() - 1) % 2 != 0 {
                    return Err(Error::InvalidModel(format!(
                        "polynomial degree {} is odd",
                        c.len() - 1
                    )));
                }
                if c[c.len() - 1] <= 0.0 {
                    return Err(Error::InvalidModel("leading coefficient must be positive".into()));
                }
                c
            }
            PotentialSpec::MultiWell { wells } => {
                if wells.is_empty() {
                    return Err(Error::InvalidModel("multi_well needs at least one well".into()));
                }
                let mut c = vec![0.0; 5];
                for w in wells {
                    if !(w.scale > 0.0) || !w.shift.is_finite() || !w.scale.is_finite() {
                        return Err(Error::InvalidModel(format!(
                            "well needs finite shift and positive scale, got {:?}",
                            w
                        )));
                    }
                    let s = w.shift;
                    // (x-s)^4/4
                    let quart = [s.powi(4), -4.0 * s.powi(3), 6.0 * s * s, -4.0 * s, 1.0];
                    // (x-s)^2/2
                    let quad = [s * s, -2.0 * s, 1.0];
                    for k in 0..5 {
                        c[k] += w.scale * quart[k] / 4.0;
                    }
                    for k in 0..3 {
                        c[k] -= w.scale * quad[k] / 2.0;
                    }
                }
                c
            }
        };
        Ok(c)
    }
}

/// Quadratic interaction `W(x, y) = θ (x - y)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub theta: f64,
}

impl InteractionSpec {
    pub fn w(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.theta * d * d
    }

    /// Feature map of the parametric representation.
    pub fn phi(&self, x: f64) -> f64 {
        x
    }

    /// `R(ψ) = -θ ψ²`, so that `ρ ⋆ W = θ(x² + M₂) + ⟨∇R(m), φ(x)⟩`.
    pub fn r(&self, psi: f64) -> f64 {
        -self.theta * psi * psi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub potential: PotentialSpec,
    pub theta: f64,
    pub sigma2: f64,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
}

fn default_dimension() -> usize {
    1
}

impl ModelConfig {
    pub fn new(potential: PotentialSpec, theta: f64, sigma2: f64) -> Self {
        ModelConfig { potential, theta, sigma2, dimension: 1 }
    }

    pub fn double_well(theta: f64, sigma2: f64) -> Self {
        Self::new(PotentialSpec::DoubleWell, theta, sigma2)
    }

    pub fn interaction(&self) -> InteractionSpec {
        InteractionSpec { theta: self.theta }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidModel(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidModel("theta must be finite".into()));
        }
        if self.dimension < 1 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        self.potential.coefficients()?;
        Ok(())
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        ModelConfig { sigma2, ..self.clone() }
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        ModelConfig { theta, ..self.clone() }
    }
}

/// Dense polynomial with ascending coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect(),
        )
    }

    /// Upper bound of |p| on [-r, r].
    pub fn abs_bound(&self, r: f64) -> f64 {
        let r = r.abs();
        self.coeffs.iter().enumerate().map(|(k, c)| c.abs() * r.powi(k as i32)).sum()
    }

    /// Cauchy bound: every real root lies in [-R, R].
    pub fn root_bound(&self) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let lead = self.coeffs[n];
        1.0 + self.coeffs[..n].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max)
    }
}

/// Compiled model: V and its derivatives as polynomials.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    v: Polynomial,
    dv: Polynomial,
    d2v: Polynomial,
    d3v: Polynomial,
}

impl Model {
    pub fn new(config: &ModelConfig) -> Result<Model> {
        config.validate()?;
        let v = Polynomial::new(config.potential.coefficients()?);
        let dv = v.derivative();
        let d2v = dv.derivative();
        let d3v = d2v.derivative();
        Ok(Model { config: config.clone(), v, dv, d2v, d3v })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn theta(&self) -> f64 {
        self.config.theta
    }

    pub fn sigma2(&self) -> f64 {
        self.config.sigma2
    }

    pub fn potential(&self) -> &Polynomial {
        &self.v
    }

    /// Same potential and interaction at another temperature.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Model> {
        Model::new(&self.config.with_sigma2(sigma2))
    }

    pub fn require_1d(&self) -> Result<()> {
        if self.config.dimension != 1 {
            return Err(Error::InvalidModel(format!(
                "grid solvers need dimension 1, got {}",
                self.config.dimension
            )));
        }
        Ok(())
    }

    /// True when V(-x) = V(x).
    pub fn is_even(&self) -> bool {
        self.v.coeffs().iter().skip(1).step_by(2).all(|&c| c == 0.0)
    }

    pub fn v(&self, x: f64) -> f64 {
        self.v.eval(x)
    }

    pub fn dv(&self, x: f64) -> f64 {
        self.dv.eval(x)
    }

    pub fn d2v(&self, x: f64) -> f64 {
        self.d2v.eval(x)
    }

    /// Mean-field drift `-V'(x) - 2θ(x - mean)`.
    pub fn drift(&self, x: f64, mean: f64) -> f64 {
        -self.dv(x) - 2.0 * self.config.theta * (x - mean)
    }

    /// `E_ρ(x) = V(x) + θ(x² - 2x·mean + second_moment)`.
    pub fn energy_derivative(&self, x: f64, mean: f64, second_moment: f64) -> Result<f64> {
        let mean_sq = mean * mean;
        if second_moment < mean_sq - 1e-12 * mean_sq.max(1.0) {
            return Err(Error::InvalidMoments { second_moment, mean_sq });
        }
        Ok(self.v(x) + self.config.theta * (x * x - 2.0 * x * mean + second_moment))
    }

    /// `V(x) + θ(x - m)²`: the energy derivative up to an additive constant.
    pub fn tilted_potential(&self, x: f64, m: f64) -> f64 {
        let d = x - m;
        self.v(x) + self.config.theta * d * d
    }

    /// `∫Vρ + ½∫∫W ρ⊗ρ = ∫Vρ + θ·var(ρ)`.
    pub fn mean_field_energy(&self, rho: &DensityGrid1D) -> Result<f64> {
        rho.require_normalized()?;
        let dx = rho.axis().dx();
        let pot: f64 = rho
            .values()
            .iter()
            .enumerate()
            .map(|(i, &p)| self.v(rho.axis().center(i)) * p)
            .sum::<f64>()
            * dx;
        Ok(pot + self.config.theta * rho.variance())
    }

    /// Rigorous lower bound of V'' on [lo, hi]: grid minimum minus a modulus
    /// term from a bound on |V'''|, refined until stable to 1e-6.
    pub fn inf_d2v(&self, lo: f64, hi: f64) -> f64 {
        let r = lo.abs().max(hi.abs());
        let m3 = self.d3v.abs_bound(r);
        let mut n = 64usize;
        let mut prev = f64::NEG_INFINITY;
        loop {
            let h = (hi - lo) / n as f64;
            let grid_min = (0..=n)
                .map(|k| self.d2v(lo + h * k as f64))
                .fold(f64::INFINITY, f64::min);
            let lower = grid_min - 0.5 * h * m3;
            if ((lower - prev).abs() < 1e-6 && grid_min - lower < 1e-6) || n >= 1 << 24 {
                return lower;
            }
            prev = lower;
            n *= 2;
        }
    }

    /// Global lower bound of V'' (V'' is minimized inside the root bound of V''').
    pub fn global_inf_d2v(&self) -> f64 {
        if self.d3v.degree() == 0 && self.d3v.coeffs()[0] == 0.0 {
            return self.d2v(0.0);
        }
        let r = self.d3v.root_bound();
        self.inf_d2v(-r, r)
    }

    /// Local minimizers of V in [lo, hi] (sign changes of V' from - to +).
    pub fn local_minima(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = 4096;
        let h = (hi - lo) / n as f64;
        let mut out = Vec::new();
        let mut prev = self.dv(lo);
        for k in 1..=n {
            let x = lo + h * k as f64;
            let cur = self.dv(x);
            if prev < 0.0 && cur >= 0.0 {
                let (mut a, mut b) = (x - h, x);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.dv(mid) < 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                    if b - a < 1e-14 {
                        break;
                    }
                }
                out.push(0.5 * (a + b));
            }
            prev = cur;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dw(theta: f64) -> Model {
        Model::new(&ModelConfig::double_well(theta, 0.3)).unwrap()
    }

    #[test]
    fn drift_examples() {
        let m = dw(1.0);
        assert_eq!(m.drift(0.0, 0.0), 0.0);
        assert!((m.drift(1.0, 0.0) + 2.0).abs() < 1e-15);
        let q = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, 0.0, 1.0)).unwrap();
        assert!((q.drift(2.0, 5.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn energy_derivative_examples() {
        assert!((dw(0.0).energy_derivative(1.0, 0.3, 2.0).unwrap() + 0.25).abs() < 1e-15);
        assert!((dw(1.0).energy_derivative(0.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            dw(1.0).energy_derivative(0.0, 1.0, 0.5),
            Err(Error::InvalidMoments { .. })
        ));
    }

    #[test]
    fn energy_derivative_matches_drift() {
        let m = dw(1.0);
        let (mean, m2) = (0.4, 1.3);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..=600 {
            let x = -3.0 + 0.01 * k as f64;
            let fd = (m.energy_derivative(x + h, mean, m2).unwrap()
                - m.energy_derivative(x - h, mean, m2).unwrap())
                / (2.0 * h);
            worst = worst.max((fd + m.drift(x, mean)).abs());
        }
        assert!(worst <= 1e-6, "worst {worst}");
    }

    #[test]
    fn potential_validation() {
        let bad = [
            PotentialSpec::Polynomial { coefficients: vec![0.0, 1.0] },
            PotentialSpec::Polynomial { coefficients: vec![0.0, 0.0, 0.0, 1.0] },
            PotentialSpec::Polynomial { coefficients: vec![0.0, 0.0, -1.0] },
            PotentialSpec::MultiWell { wells: vec![] },
            PotentialSpec::MultiWell { wells: vec![Well { shift: 0.0, scale: -1.0 }] },
        ];
        for p in bad {
            assert!(Model::new(&ModelConfig::new(p, 1.0, 1.0)).is_err());
        }
        assert!(Model::new(&ModelConfig::double_well(1.0, 0.0)).is_err());
        assert!(Model::new(&ModelConfig::double_well(1.0, -1.0)).is_err());
    }

    #[test]
    fn single_centered_well_is_double_well() {
        let spec = PotentialSpec::MultiWell { wells: vec![Well { shift: 0.0, scale: 1.0 }] };
        assert_eq!(spec.coefficients().unwrap(), PotentialSpec::DoubleWell.coefficients().unwrap());
        let shifted = Model::new(&ModelConfig::new(
            PotentialSpec::MultiWell { wells: vec![Well { shift: 1.5, scale: 2.0 }] },
            1.0,
            1.0,
        ))
        .unwrap();
        for &x in &[-1.0, 0.3, 2.7] {
            let y: f64 = x - 1.5;
            let expected = 2.0 * (y.powi(4) / 4.0 - y * y / 2.0);
            assert!((shifted.v(x) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn inf_d2v_double_well() {
        let m = dw(1.0);
        let lo = m.inf_d2v(-2.0, 2.0);
        assert!(lo <= -1.0 && lo > -1.0 - 1e-5, "{lo}");
        let g = m.global_inf_d2v();
        assert!(g <= -1.0 && g > -1.0 - 1e-5, "{g}");
        let shifted = m.inf_d2v(1.0, 2.0);
        assert!(shifted <= 2.0 && shifted > 2.0 - 1e-5, "{shifted}");
    }

    #[test]
    fn local_minima_double_well() {
        let mins = dw(1.0).local_minima(-3.0, 3.0);
        assert_eq!(mins.len(), 2);
        assert!((mins[0] + 1.0).abs() < 1e-10 && (mins[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn config_json_roundtrip() {
        let json = r#"{"potential":{"kind":"double_well"},"theta":1.0,"sigma2":0.3,"dimension":1}"#;
        let c: ModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c, ModelConfig::double_well(1.0, 0.3));
        let bad = r#"{"potential":{"kind":"double_well"},"theta":1.0,"sigma2":0.3,"extra":1}"#;
        assert!(serde_json::from_str::<ModelConfig>(bad).is_err());
    }
}
