//! Self-consistency layer of the quadratic-interaction model.
//!
//! The local equilibria form the one-parameter family
//! `ρ_m ∝ exp(-(V(x) + θ(x - m)²)/σ²)`, `f(m)` is the mean of `ρ_m` and
//! `g(m) = -σ² ln ∫ exp(-(V + θ(x - m)²)/σ²)` satisfies `g' = 2θ(m - f)`.
//! Stationary solutions are the fixed points of `f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gibbs_density, log_gibbs, relative_entropy_log, DensityGrid1D, Grid1D};
use crate::model::Model;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integral of `f` over `[a, b]` with a single Gauss–Legendre rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Initial truncation radius; expanded until the tail bound holds.
    pub radius: f64,
    pub nodes_per_unit: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { radius: 4.0, nodes_per_unit: 400 }
    }
}

const PANEL_NODES: usize = 20;
const TAIL_LOG_RATIO: f64 = 32.236191301916641; // ln(1e14)

/// Central moments of `ρ_m` and its log normalizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub log_z: f64,
    pub mean: f64,
    pub var: f64,
    pub mu3: f64,
    pub mu4: f64,
}

#[derive(Clone, Debug)]
pub struct SelfConsistency1D {
    model: Model,
    quadrature: QuadratureSpec,
    rule: (Vec<f64>, Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    /// `-1 < f' < 1`: attracting for the iteration `m ↦ f(m)`.
    Stable,
    Unstable,
    /// Tangential root, `|f' - 1| < 1e-4`.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub m: f64,
    pub fprime: f64,
    pub kind: FixedPointKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub points: Vec<FixedPoint>,
}

impl FixedPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.m).collect()
    }

    /// Largest positive non-degenerate stable fixed point.
    pub fn positive_stable(&self) -> Option<FixedPoint> {
        self.points
            .iter()
            .rev()
            .find(|p| p.m > 1e-8 && p.kind == FixedPointKind::Stable)
            .copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerateBeta {
    pub beta: f64,
    /// Relative RMS residual of the odd polynomial fit of `m - f(m)`.
    pub fit_residual: f64,
    /// Cubic coefficient in `f(m) = m - s m³ + o(m³)`.
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    pub alpha: f64,
    pub m_plus: f64,
    pub fprime_m_plus: f64,
    pub m_far: f64,
}

pub const SCAN_POINTS: usize = 2048;
pub const DEGENERACY_TOL: f64 = 1e-4;

fn bisect(h: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut ha = h(a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let hm = h(mid);
        if hm == 0.0 {
            return mid;
        }
        if (hm > 0.0) == (ha > 0.0) {
            a = mid;
            ha = hm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

impl SelfConsistency1D {
    pub fn new(model: &Model) -> Result<SelfConsistency1D> {
        SelfConsistency1D::with_quadrature(model, QuadratureSpec::default())
    }

    pub fn with_quadrature(model: &Model, quadrature: QuadratureSpec) -> Result<SelfConsistency1D> {
        if !(quadrature.radius > 0.0) || quadrature.nodes_per_unit < PANEL_NODES {
            return Err(Error::InvalidArgument(format!("bad quadrature {quadrature:?}")));
        }
        Ok(SelfConsistency1D {
            model: model.clone(),
            quadrature,
            rule: gauss_legendre(PANEL_NODES),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        self.quadrature
    }

    /// Same potential and quadrature at another temperature.
    pub fn at_sigma2(&self, sigma2: f64) -> Result<SelfConsistency1D> {
        SelfConsistency1D::with_quadrature(&self.model.with_sigma2(sigma2)?, self.quadrature)
    }

    fn energy(&self, x: f64, m: f64) -> f64 {
        self.model.tilted_potential(x, m)
    }

    /// Integration window `[lo, hi] ⊇ [-R, R]` whose ends carry Gibbs weight
    /// below 1e-14 of the peak. Each end is expanded independently, so far
    /// from the origin the window follows the mode instead of growing both ways.
    pub fn window_for(&self, m: f64) -> (f64, f64) {
        let s2 = self.model.sigma2();
        let r0 = self.quadrature.radius;
        let (mut lo, mut hi) = (-r0, r0);
        // make sure the window holds the global minimizer of the tilted energy
        while self.energy(hi, m) < self.energy(hi - 1e-3, m) && hi < 1e7 {
            hi = 1.25 * hi + 1.0;
        }
        while self.energy(lo, m) < self.energy(lo + 1e-3, m) && lo > -1e7 {
            lo = 1.25 * lo - 1.0;
        }
        loop {
            let k = 4000;
            let emin = (0..=k)
                .map(|j| self.energy(lo + (hi - lo) * j as f64 / k as f64, m))
                .fold(f64::INFINITY, f64::min);
            let mut grown = false;
            if (self.energy(hi, m) - emin) / s2 <= TAIL_LOG_RATIO && hi < 1e7 {
                hi += 0.25 * (hi - lo).max(1.0);
                grown = true;
            }
            if (self.energy(lo, m) - emin) / s2 <= TAIL_LOG_RATIO && lo > -1e7 {
                lo -= 0.25 * (hi - lo).max(1.0);
                grown = true;
            }
            if !grown {
                return (lo, hi);
            }
        }
    }

    /// Quadrature nodes `(x, weight)` on a window.
    fn nodes(&self, (lo, hi): (f64, f64)) -> impl Iterator<Item = (f64, f64)> + '_ {
        let width = PANEL_NODES as f64 / self.quadrature.nodes_per_unit as f64;
        let panels = ((hi - lo) / width).ceil() as usize;
        let h = (hi - lo) / panels as f64;
        (0..panels).flat_map(move |p| {
            let c = lo + h * (p as f64 + 0.5);
            self.rule.0.iter().zip(&self.rule.1).map(move |(t, w)| (c + 0.5 * h * t, 0.5 * h * w))
        })
    }

    pub fn moments(&self, m: f64) -> Moments {
        let s2 = self.model.sigma2();
        let pts: Vec<(f64, f64)> =
            self.nodes(self.window_for(m)).map(|(x, w)| (x, -self.energy(x, m) / s2 + w.ln())).collect();
        let amax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = pts.iter().map(|p| (p.1 - amax).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean = pts.iter().zip(&w).map(|(p, w)| p.0 * w).sum::<f64>() / z;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for (p, w) in pts.iter().zip(&w) {
            let d = p.0 - mean;
            let d2 = d * d;
            m2 += d2 * w;
            m3 += d2 * d * w;
            m4 += d2 * d2 * w;
        }
        Moments { log_z: z.ln() + amax, mean, var: m2 / z, mu3: m3 / z, mu4: m4 / z }
    }

    /// Fraction of the mass of `ρ_m` outside `[lo, hi]`.
    pub fn tail_mass(&self, m: f64, lo: f64, hi: f64) -> f64 {
        let s2 = self.model.sigma2();
        let (a, b) = self.window_for(m);
        let pts: Vec<(f64, f64)> =
            self.nodes((a.min(lo - 1.0), b.max(hi + 1.0))).map(|(x, w)| (x, -self.energy(x, m) / s2 + w.ln())).collect();
        let amax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let (mut inside, mut outside) = (0.0, 0.0);
        for (x, a) in pts {
            let w = (a - amax).exp();
            if x < lo || x > hi {
                outside += w;
            } else {
                inside += w;
            }
        }
        outside / (inside + outside)
    }

    /// `ρ_m` discretized on a grid.
    pub fn rho_m(&self, m: f64, axis: &Grid1D) -> Result<DensityGrid1D> {
        gibbs_density(&self.model, axis, m)
    }

    pub fn f(&self, m: f64) -> f64 {
        self.moments(m).mean
    }

    /// `f'(m) = (2θ/σ²)·var(ρ_m)`.
    pub fn f_prime(&self, m: f64) -> f64 {
        let theta = self.model.theta();
        if theta == 0.0 {
            return 0.0;
        }
        2.0 * theta / self.model.sigma2() * self.moments(m).var
    }

    pub fn g(&self, m: f64) -> f64 {
        -self.model.sigma2() * self.moments(m).log_z
    }

    fn classify(fprime: f64) -> FixedPointKind {
        if (fprime - 1.0).abs() < DEGENERACY_TOL {
            FixedPointKind::Degenerate
        } else if fprime > -1.0 && fprime < 1.0 {
            FixedPointKind::Stable
        } else {
            FixedPointKind::Unstable
        }
    }

    /// All roots of `f(m) - m` in `interval`, which is first widened until
    /// `f - id` has the sign of `-m` at both ends.
    pub fn find_fixed_points(&self, interval: (f64, f64), tol: f64) -> Result<FixedPointSet> {
        let (mut a, mut b) = interval;
        if !(a < b) || !(tol > 0.0) {
            return Err(Error::InvalidBracket(format!("need a < b and tol > 0, got {interval:?}")));
        }
        let h = |m: f64| self.f(m) - m;
        for _ in 0..64 {
            if h(b) < 0.0 && b > 0.0 {
                break;
            }
            b = if b > 0.0 { 2.0 * b } else { 1.0 };
        }
        for _ in 0..64 {
            if h(a) > 0.0 && a < 0.0 {
                break;
            }
            a = if a < 0.0 { 2.0 * a } else { -1.0 };
        }
        let step = (b - a) / SCAN_POINTS as f64;
        let ms: Vec<f64> = (0..=SCAN_POINTS).map(|k| a + step * k as f64).collect();
        let hs: Vec<f64> = ms.iter().map(|&m| h(m)).collect();
        let mut roots: Vec<f64> = Vec::new();
        for k in 0..SCAN_POINTS {
            let root = if hs[k] == 0.0 {
                Some(ms[k])
            } else if (hs[k] > 0.0) != (hs[k + 1] > 0.0) && hs[k + 1] != 0.0 {
                Some(bisect(h, ms[k], ms[k + 1], tol))
            } else {
                None
            };
            if let Some(r) = root {
                if roots.last().map_or(true, |&p| (r - p).abs() > 10.0 * tol) {
                    roots.push(r);
                }
            }
        }
        let points = roots
            .into_iter()
            .map(|m| {
                let fprime = self.f_prime(m);
                FixedPoint { m, fprime, kind: Self::classify(fprime) }
            })
            .collect();
        Ok(FixedPointSet { points })
    }

    pub fn fixed_points(&self) -> Result<FixedPointSet> {
        self.find_fixed_points((-4.0, 4.0), 1e-12)
    }

    /// Contraction factor `α_ε = sup_{m ≥ ε} |f(m) - m₊| / |m - m₊|`.
    pub fn contraction_alpha(&self, epsilon: f64) -> Result<Contraction> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let fp = self
            .fixed_points()?
            .positive_stable()
            .ok_or(Error::NotSubcritical { sigma2: self.model.sigma2() })?;
        let m_plus = fp.m;
        if epsilon >= m_plus {
            return Err(Error::InvalidArgument(format!(
                "epsilon={epsilon} must be below m+={m_plus}"
            )));
        }
        let mut m_far = m_plus.max(1.0);
        while self.f_prime(m_far) >= 1e-3 && m_far < 1e6 {
            m_far *= 1.2;
        }
        let ratio = |m: f64| {
            if (m - m_plus).abs() < 1e-7 * (1.0 + m_plus) {
                fp.fprime.abs()
            } else {
                ((self.f(m) - m_plus) / (m - m_plus)).abs()
            }
        };
        // dense near the wells, geometric towards m_far
        let near = (4.0 * m_plus).max(3.0).min(m_far);
        let k = 4000;
        let mut alpha = fp.fprime.abs();
        for j in 0..=k {
            let m = epsilon + (near - epsilon) * j as f64 / k as f64;
            alpha = alpha.max(ratio(m));
        }
        let kg = 400;
        for j in 1..=kg {
            let m = near * (m_far / near).powf(j as f64 / kg as f64);
            alpha = alpha.max(ratio(m));
        }
        // past m_far, f' < 1e-3 so the ratio is a weighted mean of α(m_far) and 1e-3
        alpha = alpha.max(ratio(m_far).max(1e-3));
        Ok(Contraction { alpha, m_plus, fprime_m_plus: fp.fprime, m_far })
    }

    /// Critical-case constants: smallest β with `|m| ≤ β(d + d^{1/3})`,
    /// `d = |m - f(m)|`, on [-3, 3], and the cubic coefficient of `m - f(m)`.
    pub fn degenerate_beta(&self) -> Result<DegenerateBeta> {
        let deviation = (self.f_prime(0.0) - 1.0).abs();
        if deviation > DEGENERACY_TOL {
            return Err(Error::NotCritical { deviation });
        }
        let k = 6000;
        let mut beta: f64 = 0.0;
        for j in 0..=k {
            let m = -3.0 + 6.0 * j as f64 / k as f64;
            if m.abs() < 1e-9 {
                continue;
            }
            let d = (m - self.f(m)).abs();
            beta = beta.max(m.abs() / (d + d.cbrt()));
        }
        // least squares of m - f(m) on {m, m³, m⁵} over small m
        let samples: Vec<(f64, f64)> = (0..64)
            .map(|j| {
                let m = 0.02 + 0.28 * j as f64 / 63.0;
                (m, m - self.f(m))
            })
            .collect();
        let basis = |m: f64| [m, m.powi(3), m.powi(5)];
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [0.0; 3];
        for &(m, y) in &samples {
            let b = basis(m);
            for r in 0..3 {
                atb[r] += b[r] * y;
                for c in 0..3 {
                    ata[r][c] += b[r] * b[c];
                }
            }
        }
        let coef = solve3(ata, atb).ok_or_else(|| Error::Fit("singular cubic fit".into()))?;
        let (mut res, mut tot) = (0.0, 0.0);
        for &(m, y) in &samples {
            let b = basis(m);
            let p = coef[0] * b[0] + coef[1] * b[1] + coef[2] * b[2];
            res += (y - p) * (y - p);
            tot += y * y;
        }
        Ok(DegenerateBeta { beta, fit_residual: (res / tot).sqrt(), s: coef[1] })
    }

    /// `f'(ψ*)` at the fixed point of the temperature-`σ²` map near the
    /// minimizer `a` of V, located by bisection within 0.5 of `a`.
    pub fn localization_jacobian(&self, a: f64, sigma2: f64) -> Result<f64> {
        let sc = self.at_sigma2(sigma2)?;
        let radius = 0.5;
        let h = |m: f64| sc.f(m) - m;
        let (lo, hi) = (a - radius, a + radius);
        if !((h(lo) > 0.0) && (h(hi) < 0.0)) {
            return Err(Error::NoLocalFixedPoint { a, radius });
        }
        let psi = bisect(h, lo, hi, 1e-13);
        Ok(sc.f_prime(psi))
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Critical temperature: bisection on `σ² ↦ f'_σ(0) - 1` inside `bracket`.
pub fn critical_sigma2(model: &Model, bracket: (f64, f64), tol: f64) -> Result<f64> {
    let (lo, hi) = bracket;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::InvalidBracket(format!("need 0 < lo < hi, got {bracket:?}")));
    }
    let base = SelfConsistency1D::new(model)?;
    let h = |s2: f64| base.at_sigma2(s2).map(|sc| sc.f_prime(0.0) - 1.0);
    let (hl, hh) = (h(lo)?, h(hi)?);
    if !(hl > 0.0 && hh < 0.0) {
        return Err(Error::InvalidBracket(format!(
            "need f'(0) > 1 at sigma2={lo} and < 1 at sigma2={hi}, got {} and {}",
            hl + 1.0,
            hh + 1.0
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if h(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// The same family restricted to a grid: `f_h(m)` is the mean of the
/// discrete Gibbs density, and `F = σ²H(ρ|Γ(ρ)) + g_h(m(ρ))` holds exactly.
#[derive(Clone, Debug)]
pub struct DiscreteFamily {
    model: Model,
    axis: Grid1D,
    rule: (Vec<f64>, Vec<f64>),
}

impl DiscreteFamily {
    pub fn new(model: &Model, axis: &Grid1D) -> DiscreteFamily {
        DiscreteFamily { model: model.clone(), axis: *axis, rule: gauss_legendre(20) }
    }

    pub fn axis(&self) -> &Grid1D {
        &self.axis
    }

    pub fn log_gibbs(&self, m: f64) -> Vec<f64> {
        log_gibbs(&self.model, &self.axis, m)
    }

    pub fn gibbs(&self, m: f64) -> Result<DensityGrid1D> {
        gibbs_density(&self.model, &self.axis, m)
    }

    pub fn f(&self, m: f64) -> Result<f64> {
        Ok(self.gibbs(m)?.mean())
    }

    pub fn f_prime(&self, m: f64) -> Result<f64> {
        Ok(2.0 * self.model.theta() / self.model.sigma2() * self.gibbs(m)?.variance())
    }

    /// `-σ² ln Σ exp(-(V + θ(x - m)²)/σ²) dx`.
    pub fn g(&self, m: f64) -> f64 {
        let s2 = self.model.sigma2();
        let a: Vec<f64> =
            self.axis.centers().iter().map(|&x| -self.model.tilted_potential(x, m) / s2).collect();
        let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = a.iter().map(|v| (v - amax).exp()).sum::<f64>() * self.axis.dx();
        -s2 * (z.ln() + amax)
    }

    /// Root of `f_h(m) - m` in `[a, b]`, bisected to round-off.
    pub fn fixed_point(&self, a: f64, b: f64) -> Result<f64> {
        let h = |m: f64| self.f(m).map(|f| f - m).unwrap_or(f64::NAN);
        let (ha, hb) = (h(a), h(b));
        if !(ha.is_finite() && hb.is_finite()) || (ha > 0.0) == (hb > 0.0) {
            return Err(Error::InvalidBracket(format!("no sign change of f_h - id on [{a}, {b}]")));
        }
        Ok(bisect(h, a, b, 0.0))
    }

    /// `F(ρ) - F(Γ(m*))` for a fixed point `m*`, computed without cancellation
    /// as `σ²H(ρ|Γ(ρ)) + ∫_{m*}^{m(ρ)} 2θ(s - f_h(s)) ds`.
    pub fn free_energy_gap(&self, rho: &DensityGrid1D, m_star: f64) -> Result<f64> {
        if rho.axis() != &self.axis {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", rho.axis(), self.axis)));
        }
        let m = rho.mean();
        let h = relative_entropy_log(rho, &log_gibbs(&self.model, &self.axis, m))?;
        let theta = self.model.theta();
        let integral = integrate(
            |s| 2.0 * theta * (s - self.f(s).unwrap_or(f64::NAN)),
            m_star,
            m,
            &self.rule,
        );
        if !integral.is_finite() {
            return Err(Error::Underflow);
        }
        Ok(self.model.sigma2() * h + integral)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, PotentialSpec};

    fn sc(theta: f64, s2: f64) -> SelfConsistency1D {
        SelfConsistency1D::new(&Model::new(&ModelConfig::double_well(theta, s2)).unwrap()).unwrap()
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let rule = gauss_legendre(20);
        assert!((rule.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i = integrate(|x| x.powi(38), -1.0, 1.0, &rule);
        assert!((i - 2.0 / 39.0).abs() < 1e-14);
        let i = integrate(|x| x.exp(), 0.0, 1.0, &rule);
        assert!((i - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn quadratic_family_is_gaussian() {
        let (theta, s2) = (0.7, 0.4);
        let model = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, theta, s2)).unwrap();
        let sc = SelfConsistency1D::new(&model).unwrap();
        let m = 0.9;
        let mo = sc.moments(m);
        assert!((mo.mean - 2.0 * theta * m / (1.0 + 2.0 * theta)).abs() < 1e-12);
        assert!((mo.var - s2 / (1.0 + 2.0 * theta)).abs() < 1e-12);
        let ax = Grid1D::new(-6.0, 6.0, 1024).unwrap();
        let rho = sc.rho_m(m, &ax).unwrap();
        assert!((rho.mean() - mo.mean).abs() < 1e-3 && (rho.variance() - mo.var).abs() < 1e-3);
    }

    #[test]
    fn double_well_symmetry() {
        let sc = sc(1.0, 0.3);
        assert!(sc.f(0.0).abs() < 1e-14);
        for k in 0..=40 {
            let m = -2.0 + 0.1 * k as f64;
            assert!((sc.f(m) + sc.f(-m)).abs() < 1e-12);
            assert!((sc.g(m) - sc.g(-m)).abs() < 1e-12);
        }
        let ax = Grid1D::new(-6.0, 6.0, 512).unwrap();
        assert!(sc.rho_m(0.0, &ax).unwrap().asymmetry() < 1e-12);
    }

    #[test]
    fn fixed_point_counts() {
        let one = sc(1.0, 1.0).fixed_points().unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.points[0].m.abs() < 1e-10);
        let three = sc(1.0, 0.3).fixed_points().unwrap();
        assert_eq!(three.len(), 3);
        let v = three.values();
        assert!((v[0] + v[2]).abs() < 1e-10 && v[1].abs() < 1e-10 && v[2] > 0.0);
        let s = sc(1.0, 0.3);
        for p in &three.points {
            assert!((s.f(p.m) - p.m).abs() < 1e-10);
        }
        assert_eq!(three.points[1].kind, FixedPointKind::Unstable);
        assert_eq!(three.points[2].kind, FixedPointKind::Stable);
        assert!(three.points[1].fprime > 1.0 && three.points[2].fprime < 1.0);
    }

    #[test]
    fn repulsive_origin_is_unstable() {
        let set = sc(-1.0, 0.5).fixed_points().unwrap();
        let zero = set.points.iter().find(|p| p.m.abs() < 1e-8).unwrap();
        assert!(zero.fprime < -1.0);
        assert_eq!(zero.kind, FixedPointKind::Unstable);
    }

    #[test]
    fn critical_temperature_brackets_pitchfork() {
        let model = Model::new(&ModelConfig::double_well(1.0, 0.5)).unwrap();
        let sc2 = critical_sigma2(&model, (0.3, 1.0), 1e-8).unwrap();
        assert!(sc2 > 0.3 && sc2 < 1.0);
        let base = SelfConsistency1D::new(&model).unwrap();
        assert!((base.at_sigma2(sc2).unwrap().f_prime(0.0) - 1.0).abs() < 1e-6);
        assert_eq!(base.at_sigma2(0.99 * sc2).unwrap().fixed_points().unwrap().len(), 3);
        assert_eq!(base.at_sigma2(1.01 * sc2).unwrap().fixed_points().unwrap().len(), 1);
        assert!(critical_sigma2(&model, (0.9, 1.0), 1e-8).is_err());
    }

    #[test]
    fn contraction_below_one() {
        let s = sc(1.0, 0.3);
        let c = s.contraction_alpha(0.05).unwrap();
        assert!(c.alpha < 1.0 && c.alpha >= c.fprime_m_plus);
        let c2 = s.contraction_alpha(0.3).unwrap();
        assert!(c2.alpha <= c.alpha);
        assert!(matches!(sc(1.0, 1.0).contraction_alpha(0.05), Err(Error::NotSubcritical { .. })));
    }

    #[test]
    fn discrete_gap_matches_direct_difference() {
        let model = Model::new(&ModelConfig::double_well(1.0, 0.3)).unwrap();
        let ax = Grid1D::new(-6.0, 6.0, 512).unwrap();
        let fam = DiscreteFamily::new(&model, &ax);
        let ms = fam.fixed_point(0.3, 2.0).unwrap();
        let star = fam.gibbs(ms).unwrap();
        let rho = DensityGrid1D::mixture(ax, &[(0.7, 0.9, 0.3), (0.3, -0.5, 0.4)]).unwrap();
        let direct = crate::grid::free_energy(&model, &rho).unwrap()
            - crate::grid::free_energy(&model, &star).unwrap();
        let gap = fam.free_energy_gap(&rho, ms).unwrap();
        assert!((gap - direct).abs() < 1e-10, "{gap} vs {direct}");
        assert!(fam.free_energy_gap(&star, ms).unwrap().abs() < 1e-15);
    }
}
