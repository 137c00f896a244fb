//! Densities on truncated grids and measure-level diagnostics.
//!
//! Cell values are cell averages and moments use cell centers, so every
//! diagnostic is a plain midpoint sum over cells.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;

/// Uniform cell-centered axis on `[lo, hi]` with `n` cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Grid1D> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        if n < 16 {
            return Err(Error::InvalidArgument(format!("grid needs n >= 16 cells, got {n}")));
        }
        Ok(Grid1D { lo, hi, n })
    }

    pub fn validate(&self) -> Result<()> {
        Grid1D::new(self.lo, self.hi, self.n).map(|_| ())
    }

    /// Default truncation `[-6, 6]·max(1, σ)`.
    pub fn default_for(sigma2: f64, n: usize) -> Result<Grid1D> {
        let r = 6.0 * sigma2.sqrt().max(1.0);
        Grid1D::new(-r, r, n)
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + self.dx() * (i as f64 + 0.5)
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.lo + self.dx() * k as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }
}

/// Cell-averaged probability density on a 1D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid1D {
    axis: Grid1D,
    values: Vec<f64>,
}

const MASS_TOL: f64 = 1e-10;

fn check_cells(values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidCell { index, value });
        }
    }
    Ok(())
}

impl DensityGrid1D {
    /// Wraps raw cell values without normalizing.
    pub fn new(axis: Grid1D, values: Vec<f64>) -> Result<DensityGrid1D> {
        axis.validate()?;
        if values.len() != axis.n {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                axis.n
            )));
        }
        check_cells(&values)?;
        Ok(DensityGrid1D { axis, values })
    }

    /// Samples `f` at cell centers and normalizes.
    pub fn from_fn(axis: Grid1D, f: impl Fn(f64) -> f64) -> Result<DensityGrid1D> {
        let values = (0..axis.n).map(|i| f(axis.center(i))).collect();
        DensityGrid1D::new(axis, values)?.normalized()
    }

    pub fn gaussian(axis: Grid1D, mean: f64, std: f64) -> Result<DensityGrid1D> {
        DensityGrid1D::mixture(axis, &[(1.0, mean, std)])
    }

    /// Mixture of Gaussians given as `(weight, mean, std)` triples.
    pub fn mixture(axis: Grid1D, components: &[(f64, f64, f64)]) -> Result<DensityGrid1D> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        for &(w, _, s) in components {
            if !(w >= 0.0) || !(s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mixture component needs weight >= 0 and std > 0, got ({w}, {s})"
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        DensityGrid1D::from_fn(axis, |x| {
            components
                .iter()
                .map(|&(w, m, s)| {
                    let z = (x - m) / s;
                    w / total * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum()
        })
    }

    pub fn axis(&self) -> &Grid1D {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.axis.dx()
    }

    pub fn normalized(&self) -> Result<DensityGrid1D> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NotNormalized { mass });
        }
        Ok(DensityGrid1D { axis: self.axis, values: self.values.iter().map(|v| v / mass).collect() })
    }

    pub fn require_normalized(&self) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { mass });
        }
        Ok(())
    }

    pub fn require_same_grid(&self, other: &DensityGrid1D) -> Result<()> {
        if self.axis != other.axis {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.axis, other.axis)));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        let dx = self.axis.dx();
        self.values.iter().enumerate().map(|(i, &p)| self.axis.center(i) * p).sum::<f64>() * dx
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let dx = self.axis.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let d = self.axis.center(i) - m;
                d * d * p
            })
            .sum::<f64>()
            * dx
    }

    pub fn second_moment(&self) -> f64 {
        let m = self.mean();
        self.variance() + m * m
    }

    /// Largest `|ρ(x) - ρ(-x)|` for grids symmetric about 0.
    pub fn asymmetry(&self) -> f64 {
        let n = self.axis.n;
        (0..n / 2)
            .map(|i| (self.values[i] - self.values[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{:.16e},{:.16e}", self.axis.center(i), v);
        }
        s
    }

    /// Parses `x,value` rows with uniformly spaced centers.
    pub fn from_csv(text: &str) -> Result<DensityGrid1D> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.and_then(|t| t.trim().parse::<f64>().ok()).ok_or_else(|| {
                    Error::InvalidArgument(format!("bad density csv row {}: {line:?}", lineno + 1))
                })
            };
            xs.push(parse(parts.next())?);
            vs.push(parse(parts.next())?);
        }
        if xs.len() < 16 {
            return Err(Error::InvalidArgument("density csv needs at least 16 rows".into()));
        }
        let n = xs.len();
        let dx = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        for k in 1..n {
            if ((xs[k] - xs[k - 1]) - dx).abs() > 1e-9 * dx.abs().max(1.0) {
                return Err(Error::InvalidArgument("density csv centers are not uniform".into()));
            }
        }
        let axis = Grid1D::new(xs[0] - 0.5 * dx, xs[n - 1] + 0.5 * dx, n)?;
        DensityGrid1D::new(axis, vs)?.normalized()
    }
}

/// Compensated running sum.
#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Piecewise-linear CDF of a cell-averaged density.
#[derive(Clone, Debug)]
pub struct Cdf {
    axis: Grid1D,
    cum: Vec<f64>,
}

impl Cdf {
    pub fn new(rho: &DensityGrid1D) -> Cdf {
        let dx = rho.axis.dx();
        let mut acc = Neumaier::default();
        let mut cum = Vec::with_capacity(rho.axis.n + 1);
        cum.push(0.0);
        for &p in &rho.values {
            acc.add(p * dx);
            cum.push(acc.value());
        }
        Cdf { axis: rho.axis, cum }
    }

    pub fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// Inverse CDF at level `u ∈ [0, 1]` (relative to total mass).
    pub fn quantile(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total();
        // first cell j with cum[j+1] > target
        let mut lo = 0usize;
        let mut hi = self.axis.n - 1;
        if target <= 0.0 {
            while lo < self.axis.n - 1 && self.cum[lo + 1] <= 0.0 {
                lo += 1;
            }
            return self.axis.edge(lo);
        }
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cum[mid + 1] > target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let j = lo;
        let cell = self.cum[j + 1] - self.cum[j];
        let frac = if cell > 0.0 { ((target - self.cum[j]) / cell).clamp(0.0, 1.0) } else { 1.0 };
        self.axis.edge(j) + self.axis.dx() * frac
    }
}

/// Quantile values at `m` equally spaced midpoint levels `(k + ½)/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable {
    levels: Vec<f64>,
    values: Vec<f64>,
}

pub const W2_LEVELS: usize = 4096;

impl QuantileTable {
    pub fn from_density(rho: &DensityGrid1D, m: usize) -> Result<QuantileTable> {
        if m < 64 {
            return Err(Error::InvalidArgument(format!("quantile table needs m >= 64, got {m}")));
        }
        let cdf = Cdf::new(rho);
        let levels: Vec<f64> = (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect();
        let values = levels.iter().map(|&u| cdf.quantile(u)).collect();
        Ok(QuantileTable { levels, values })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Root mean squared quantile gap.
    pub fn distance(&self, other: &QuantileTable) -> Result<f64> {
        if self.levels.len() != other.levels.len() {
            return Err(Error::GridMismatch("quantile tables with different level counts".into()));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((s / self.levels.len() as f64).sqrt())
    }
}

/// `∫ρ ln ρ` with `0 ln 0 = 0`.
pub fn entropy(rho: &DensityGrid1D) -> Result<f64> {
    rho.require_normalized()?;
    Ok(entropy_sum(&rho.values) * rho.axis.dx())
}

fn entropy_sum(values: &[f64]) -> f64 {
    values.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum()
}

/// Discrete Gibbs density `∝ exp(-(V(x) + θ(x - m)²)/σ²)` at cell centers.
pub fn gibbs_density(model: &Model, axis: &Grid1D, m: f64) -> Result<DensityGrid1D> {
    let s2 = model.sigma2();
    let expo: Vec<f64> = (0..axis.n).map(|i| -model.tilted_potential(axis.center(i), m) / s2).collect();
    let amax = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !amax.is_finite() || amax < 1e-300f64.ln() {
        return Err(Error::Underflow);
    }
    let values = expo.iter().map(|a| (a - amax).exp()).collect();
    DensityGrid1D::new(*axis, values)?.normalized()
}

/// Normalized log-density of [`gibbs_density`], free of underflow.
pub fn log_gibbs(model: &Model, axis: &Grid1D, m: f64) -> Vec<f64> {
    let s2 = model.sigma2();
    let expo: Vec<f64> = (0..axis.n).map(|i| -model.tilted_potential(axis.center(i), m) / s2).collect();
    let amax = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = expo.iter().map(|a| (a - amax).exp()).sum::<f64>() * axis.dx();
    let shift = amax + z.ln();
    expo.into_iter().map(|a| a - shift).collect()
}

/// Local equilibrium Γ(ρ); depends on ρ only through its mean.
pub fn local_equilibrium(model: &Model, rho: &DensityGrid1D) -> Result<DensityGrid1D> {
    rho.require_normalized()?;
    gibbs_density(model, rho.axis(), rho.mean())
}

/// `∫ν ln(ν/μ)`, evaluated termwise as `Σ μ[(1+u)ln(1+u) - u]`, `u = ν/μ - 1`.
///
/// Returns `f64::INFINITY` when ν charges a cell where μ vanishes.
pub fn relative_entropy(nu: &DensityGrid1D, mu: &DensityGrid1D) -> Result<f64> {
    nu.require_same_grid(mu)?;
    Ok(relative_entropy_sum(&nu.values, &mu.values) * nu.axis.dx())
}

fn relative_entropy_sum(nu: &[f64], mu: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for (&a, &b) in nu.iter().zip(mu) {
        if a == 0.0 {
            acc.add(b);
        } else if b == 0.0 {
            return f64::INFINITY;
        } else {
            let u = a / b - 1.0;
            let term = if u.abs() < 0.5 {
                b * ((1.0 + u) * u.ln_1p() - u)
            } else {
                a * (a / b).ln() - a + b
            };
            acc.add(term.max(0.0));
        }
    }
    acc.value()
}

/// Relative entropy against a reference given by its log-density; cells where
/// the reference underflows still contribute finitely.
pub fn relative_entropy_log(nu: &DensityGrid1D, log_mu: &[f64]) -> Result<f64> {
    if log_mu.len() != nu.axis.n {
        return Err(Error::GridMismatch(format!("{} log values for {} cells", log_mu.len(), nu.axis.n)));
    }
    Ok(relative_entropy_log_sum(&nu.values, log_mu) * nu.axis.dx())
}

fn relative_entropy_log_sum(nu: &[f64], log_mu: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for (&a, &lb) in nu.iter().zip(log_mu) {
        let b = lb.exp();
        if a == 0.0 {
            acc.add(b);
            continue;
        }
        let term = if b > 0.0 && b.is_normal() && (a / b - 1.0).abs() < 0.5 {
            let u = a / b - 1.0;
            b * ((1.0 + u) * u.ln_1p() - u)
        } else {
            a * (a.ln() - lb) - a + b
        };
        acc.add(term.max(0.0));
    }
    acc.value()
}

/// Fisher information against a reference log-density; only cells of `nu`
/// below 1e-300 are left out.
pub fn fisher_information_log(nu: &DensityGrid1D, log_mu: &[f64]) -> Result<f64> {
    check_cells(&nu.values)?;
    if log_mu.len() != nu.axis.n {
        return Err(Error::GridMismatch(format!("{} log values for {} cells", log_mu.len(), nu.axis.n)));
    }
    let n = nu.axis.n;
    let h = nu.axis.dx();
    let ok = |k: usize| nu.values[k] >= FISHER_FLOOR;
    let ell = |k: usize| nu.values[k].ln() - log_mu[k];
    let mut sum = 0.0;
    for k in 0..n {
        if !ok(k) {
            continue;
        }
        let g = if k == 0 {
            if !ok(1) {
                continue;
            }
            (ell(1) - ell(0)) / h
        } else if k == n - 1 {
            if !ok(n - 2) {
                continue;
            }
            (ell(n - 1) - ell(n - 2)) / h
        } else {
            if !ok(k - 1) || !ok(k + 1) {
                continue;
            }
            (ell(k + 1) - ell(k - 1)) / (2.0 * h)
        };
        sum += g * g * nu.values[k];
    }
    Ok(sum * h)
}

const FISHER_FLOOR: f64 = 1e-300;

/// `∫|∂ₓ ln(ν/μ)|² dν` by central differences of the log-ratio, one-sided at
/// the boundary cells. Cells below 1e-300 are floored before the log and
/// are left out of the sum together with the cells whose stencil uses them.
pub fn fisher_information(nu: &DensityGrid1D, mu: &DensityGrid1D) -> Result<f64> {
    nu.require_same_grid(mu)?;
    check_cells(&nu.values)?;
    check_cells(&mu.values)?;
    log_ratio_fisher(&nu.values, &mu.values, nu.axis.dx(), 1, nu.axis.n)
        .map(|s| s * nu.axis.dx())
}

/// Fisher sum along one axis of a strided array: cells `base + k*stride`.
fn log_ratio_fisher(nu: &[f64], mu: &[f64], h: f64, stride: usize, n: usize) -> Result<f64> {
    let ok = |k: usize| nu[k * stride] >= FISHER_FLOOR && mu[k * stride] >= FISHER_FLOOR;
    let ell = |k: usize| {
        (nu[k * stride].max(FISHER_FLOOR)).ln() - (mu[k * stride].max(FISHER_FLOOR)).ln()
    };
    let mut sum = 0.0;
    for k in 0..n {
        if !ok(k) {
            continue;
        }
        let g = if k == 0 {
            if !ok(1) {
                continue;
            }
            (ell(1) - ell(0)) / h
        } else if k == n - 1 {
            if !ok(n - 2) {
                continue;
            }
            (ell(n - 1) - ell(n - 2)) / h
        } else {
            if !ok(k - 1) || !ok(k + 1) {
                continue;
            }
            (ell(k + 1) - ell(k - 1)) / (2.0 * h)
        };
        sum += g * g * nu[k * stride];
    }
    Ok(sum)
}

/// `σ²∫ρ ln ρ + ∫Vρ + θ·var(ρ)`.
pub fn free_energy(model: &Model, rho: &DensityGrid1D) -> Result<f64> {
    Ok(model.sigma2() * entropy(rho)? + model.mean_field_energy(rho)?)
}

/// 1D Wasserstein-2 distance through 4096-level quantile tables.
pub fn w2_1d(nu: &DensityGrid1D, mu: &DensityGrid1D) -> Result<f64> {
    nu.require_normalized()?;
    mu.require_normalized()?;
    let a = QuantileTable::from_density(nu, W2_LEVELS)?;
    let b = QuantileTable::from_density(mu, W2_LEVELS)?;
    a.distance(&b)
}

/// `½Σ|ν - μ|·dx`.
pub fn tv_distance(nu: &DensityGrid1D, mu: &DensityGrid1D) -> Result<f64> {
    nu.require_same_grid(mu)?;
    let s: f64 = nu.values.iter().zip(&mu.values).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * s * nu.axis.dx())
}

/// Probability density on an (x, v) phase grid, stored row-major in x.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid2D {
    x: Grid1D,
    v: Grid1D,
    values: Vec<f64>,
}

impl PhaseGrid2D {
    pub fn new(x: Grid1D, v: Grid1D, values: Vec<f64>) -> Result<PhaseGrid2D> {
        x.validate()?;
        v.validate()?;
        if values.len() != x.n * v.n {
            return Err(Error::GridMismatch(format!(
                "{} values for {}x{} cells",
                values.len(),
                x.n,
                v.n
            )));
        }
        check_cells(&values)?;
        Ok(PhaseGrid2D { x, v, values })
    }

    /// Tensor product `ρₓ ⊗ ρᵥ`.
    pub fn product(rx: &DensityGrid1D, rv: &DensityGrid1D) -> Result<PhaseGrid2D> {
        let mut values = Vec::with_capacity(rx.axis.n * rv.axis.n);
        for &a in &rx.values {
            for &b in &rv.values {
                values.push(a * b);
            }
        }
        PhaseGrid2D::new(rx.axis, rv.axis, values)?.normalized()
    }

    pub fn x_axis(&self) -> &Grid1D {
        &self.x
    }

    pub fn v_axis(&self) -> &Grid1D {
        &self.v
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn da(&self) -> f64 {
        self.x.dx() * self.v.dx()
    }

    pub fn at(&self, ix: usize, iv: usize) -> f64 {
        self.values[ix * self.v.n + iv]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.da()
    }

    pub fn normalized(&self) -> Result<PhaseGrid2D> {
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NotNormalized { mass });
        }
        Ok(PhaseGrid2D {
            x: self.x,
            v: self.v,
            values: self.values.iter().map(|p| p / mass).collect(),
        })
    }

    pub fn require_normalized(&self) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { mass });
        }
        Ok(())
    }

    pub fn x_marginal(&self) -> DensityGrid1D {
        let dv = self.v.dx();
        let values = self.values.chunks(self.v.n).map(|row| row.iter().sum::<f64>() * dv).collect();
        DensityGrid1D { axis: self.x, values }
    }

    pub fn v_marginal(&self) -> DensityGrid1D {
        let dx = self.x.dx();
        let mut values = vec![0.0; self.v.n];
        for row in self.values.chunks(self.v.n) {
            for (acc, &p) in values.iter_mut().zip(row) {
                *acc += p;
            }
        }
        for p in &mut values {
            *p *= dx;
        }
        DensityGrid1D { axis: self.v, values }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,v,value\n");
        for ix in 0..self.x.n {
            for iv in 0..self.v.n {
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e}",
                    self.x.center(ix),
                    self.v.center(iv),
                    self.at(ix, iv)
                );
            }
        }
        s
    }
}

/// Discretized `N(0, σ²)` on a velocity axis.
pub fn maxwellian(axis: &Grid1D, sigma2: f64) -> Result<DensityGrid1D> {
    DensityGrid1D::from_fn(*axis, |v| (-v * v / (2.0 * sigma2)).exp())
}

/// `σ²𝓗(ρ) + 𝓔(ρˣ) + ∫ v²/2 ρ`.
pub fn kinetic_free_energy(model: &Model, rho: &PhaseGrid2D) -> Result<f64> {
    rho.require_normalized()?;
    let da = rho.da();
    let h = entropy_sum(&rho.values) * da;
    let mut kin = 0.0;
    for ix in 0..rho.x.n {
        for iv in 0..rho.v.n {
            let v = rho.v.center(iv);
            kin += 0.5 * v * v * rho.at(ix, iv);
        }
    }
    Ok(model.sigma2() * h + model.mean_field_energy(&rho.x_marginal())? + kin * da)
}

/// `Γ_k(ρ) = Γ(ρˣ) ⊗ N(0, σ²)`.
pub fn local_equilibrium_kinetic(model: &Model, rho: &PhaseGrid2D) -> Result<PhaseGrid2D> {
    rho.require_normalized()?;
    let gx = local_equilibrium(model, &rho.x_marginal())?;
    let gv = maxwellian(&rho.v, model.sigma2())?;
    PhaseGrid2D::product(&gx, &gv)
}

/// Relative entropy on the phase grid (same termwise form as the 1D version).
pub fn relative_entropy_2d(nu: &PhaseGrid2D, mu: &PhaseGrid2D) -> Result<f64> {
    if nu.x != mu.x || nu.v != mu.v {
        return Err(Error::GridMismatch("phase grids differ".into()));
    }
    Ok(relative_entropy_sum(&nu.values, &mu.values) * nu.da())
}

/// Velocity and position Fisher informations `(∫|∂ᵥ ln ν/μ|² dν, ∫|∂ₓ ln ν/μ|² dν)`.
pub fn fisher_information_2d(nu: &PhaseGrid2D, mu: &PhaseGrid2D) -> Result<(f64, f64)> {
    if nu.x != mu.x || nu.v != mu.v {
        return Err(Error::GridMismatch("phase grids differ".into()));
    }
    check_cells(&nu.values)?;
    check_cells(&mu.values)?;
    let (nx, nv) = (nu.x.n, nu.v.n);
    let mut iv_sum = 0.0;
    for ix in 0..nx {
        let r = ix * nv..(ix + 1) * nv;
        iv_sum += log_ratio_fisher(&nu.values[r.clone()], &mu.values[r], nu.v.dx(), 1, nv)?;
    }
    let mut ix_sum = 0.0;
    for iv in 0..nv {
        ix_sum += log_ratio_fisher(&nu.values[iv..], &mu.values[iv..], nu.x.dx(), nv, nx)?;
    }
    Ok((iv_sum * nu.da(), ix_sum * nu.da()))
}

/// `∫|(∂ₓ + ∂ᵥ) ln(ν/μ)|² dν`, central differences on interior cells only.
///
/// Returns the value and the mass fraction of the cells that entered the sum.
pub fn mixed_fisher_2d(nu: &PhaseGrid2D, mu: &PhaseGrid2D) -> Result<(f64, f64)> {
    if nu.x != mu.x || nu.v != mu.v {
        return Err(Error::GridMismatch("phase grids differ".into()));
    }
    let (nx, nv) = (nu.x.n, nu.v.n);
    let (hx, hv) = (nu.x.dx(), nu.v.dx());
    let ok = |k: usize| nu.values[k] >= FISHER_FLOOR && mu.values[k] >= FISHER_FLOOR;
    let ell = |k: usize| nu.values[k].max(FISHER_FLOOR).ln() - mu.values[k].max(FISHER_FLOOR).ln();
    let mut sum = 0.0;
    let mut covered = 0.0;
    for ix in 1..nx - 1 {
        for iv in 1..nv - 1 {
            let k = ix * nv + iv;
            let stencil = [k, k - nv, k + nv, k - 1, k + 1];
            if !stencil.iter().all(|&s| ok(s)) {
                continue;
            }
            let gx = (ell(k + nv) - ell(k - nv)) / (2.0 * hx);
            let gv = (ell(k + 1) - ell(k - 1)) / (2.0 * hv);
            sum += (gx + gv) * (gx + gv) * nu.values[k];
            covered += nu.values[k];
        }
    }
    Ok((sum * nu.da(), covered * nu.da()))
}

/// Phase-grid relative entropy against a reference log-density.
pub fn relative_entropy_2d_log(nu: &PhaseGrid2D, log_mu: &[f64]) -> Result<f64> {
    if log_mu.len() != nu.values.len() {
        return Err(Error::GridMismatch(format!("{} log values for {} cells", log_mu.len(), nu.values.len())));
    }
    Ok(relative_entropy_log_sum(&nu.values, log_mu) * nu.da())
}

/// Velocity Fisher information `∫|∂ᵥ ln(ν/μ)|² dν` and the mixed form
/// `∫|(∂ₓ + ∂ᵥ) ln(ν/μ)|² dν` against a reference log-density, with the mass
/// fraction of the interior cells that entered the mixed sum.
pub fn kinetic_fisher_log(nu: &PhaseGrid2D, log_mu: &[f64]) -> Result<(f64, f64, f64)> {
    check_cells(&nu.values)?;
    if log_mu.len() != nu.values.len() {
        return Err(Error::GridMismatch(format!("{} log values for {} cells", log_mu.len(), nu.values.len())));
    }
    let (nx, nv) = (nu.x.n, nu.v.n);
    let (hx, hv) = (nu.x.dx(), nu.v.dx());
    let ok = |k: usize| nu.values[k] >= FISHER_FLOOR;
    let ell = |k: usize| nu.values[k].ln() - log_mu[k];
    let mut fv = 0.0;
    for ix in 0..nx {
        let base = ix * nv;
        for iv in 0..nv {
            let k = base + iv;
            if !ok(k) {
                continue;
            }
            let (a, b, h) = if iv == 0 {
                (k, k + 1, hv)
            } else if iv == nv - 1 {
                (k - 1, k, hv)
            } else {
                (k - 1, k + 1, 2.0 * hv)
            };
            if !ok(a) || !ok(b) {
                continue;
            }
            let g = (ell(b) - ell(a)) / h;
            fv += g * g * nu.values[k];
        }
    }
    let mut mixed = 0.0;
    let mut covered = 0.0;
    for ix in 1..nx - 1 {
        for iv in 1..nv - 1 {
            let k = ix * nv + iv;
            if ![k, k - nv, k + nv, k - 1, k + 1].iter().all(|&s| ok(s)) {
                continue;
            }
            let g = (ell(k + nv) - ell(k - nv)) / (2.0 * hx) + (ell(k + 1) - ell(k - 1)) / (2.0 * hv);
            mixed += g * g * nu.values[k];
            covered += nu.values[k];
        }
    }
    let da = nu.da();
    Ok((fv * da, mixed * da, covered * da))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, PotentialSpec};

    fn axis(lo: f64, hi: f64, n: usize) -> Grid1D {
        Grid1D::new(lo, hi, n).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let u = DensityGrid1D::from_fn(axis(0.0, 1.0, 64), |_| 1.0).unwrap();
        assert!(entropy(&u).unwrap().abs() < 1e-14);
        let g = DensityGrid1D::gaussian(axis(-8.0, 8.0, 2048), 0.0, 1.0).unwrap();
        let exact = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((entropy(&g).unwrap() - exact).abs() < 1e-3);
        let s2: f64 = 0.3;
        let g = DensityGrid1D::gaussian(axis(-8.0, 8.0, 2048), 0.0, s2.sqrt()).unwrap();
        let exact = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s2).ln();
        assert!((entropy(&g).unwrap() - exact).abs() < 1e-3);
    }

    #[test]
    fn local_equilibrium_examples() {
        let s2 = 0.5;
        let model = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, 0.0, s2)).unwrap();
        let ax = axis(-8.0, 8.0, 1024);
        let rho = DensityGrid1D::gaussian(ax, 1.3, 0.4).unwrap();
        let gam = local_equilibrium(&model, &rho).unwrap();
        let target = DensityGrid1D::gaussian(ax, 0.0, s2.sqrt()).unwrap();
        assert!(w2_1d(&gam, &target).unwrap() <= ax.dx());

        let dw = Model::new(&ModelConfig::double_well(1.0, 0.3)).unwrap();
        let a = DensityGrid1D::mixture(ax, &[(0.5, 0.0, 0.3), (0.5, 1.0, 0.2)]).unwrap();
        let m = a.mean();
        let b = DensityGrid1D::gaussian(ax, m, 0.7).unwrap();
        let ga = local_equilibrium(&dw, &a).unwrap();
        let gb = local_equilibrium(&dw, &b.clone()).unwrap();
        // same mean up to round-off gives the same output up to round-off
        assert!((a.mean() - b.mean()).abs() < 1e-12);
        assert!(tv_distance(&ga, &gb).unwrap() < 1e-10);
    }

    #[test]
    fn gibbs_underflow_is_reported() {
        let model = Model::new(&ModelConfig::new(PotentialSpec::Polynomial { coefficients: vec![800.0, 0.0, 1.0] }, 0.0, 1.0)).unwrap();
        assert_eq!(gibbs_density(&model, &axis(-1.0, 1.0, 32), 0.0), Err(Error::Underflow));
    }

    #[test]
    fn relative_entropy_examples() {
        let ax = axis(-8.0, 8.0, 2048);
        let s2: f64 = 0.5;
        let a = DensityGrid1D::gaussian(ax, 0.4, s2.sqrt()).unwrap();
        let b = DensityGrid1D::gaussian(ax, 0.0, s2.sqrt()).unwrap();
        assert_eq!(relative_entropy(&a, &a).unwrap(), 0.0);
        assert!((relative_entropy(&a, &b).unwrap() - 0.16 / (2.0 * s2)).abs() < 1e-3);
        let mut v = vec![0.0; 32];
        v[..16].iter_mut().for_each(|p| *p = 1.0);
        let half = DensityGrid1D::new(axis(0.0, 1.0, 32), v).unwrap().normalized().unwrap();
        let full = DensityGrid1D::from_fn(axis(0.0, 1.0, 32), |_| 1.0).unwrap();
        assert_eq!(relative_entropy(&full, &half).unwrap(), f64::INFINITY);
        assert!((relative_entropy(&half, &full).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(relative_entropy(&half, &DensityGrid1D::gaussian(axis(0.0, 2.0, 32), 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn fisher_examples() {
        let ax = axis(-8.0, 8.0, 2048);
        let s2: f64 = 0.5;
        let a = DensityGrid1D::gaussian(ax, 0.4, s2.sqrt()).unwrap();
        let b = DensityGrid1D::gaussian(ax, 0.0, s2.sqrt()).unwrap();
        assert_eq!(fisher_information(&a, &a).unwrap(), 0.0);
        let i = fisher_information(&a, &b).unwrap();
        assert!((i - 0.16 / (s2 * s2)).abs() < 1e-2, "{i}");
        let mut bad = a.clone();
        bad.values_mut()[10] = -1.0;
        assert!(fisher_information(&bad, &b).is_err());
    }

    #[test]
    fn w2_examples() {
        let ax = axis(-8.0, 8.0, 2048);
        let a = DensityGrid1D::gaussian(ax, -0.5, 0.7).unwrap();
        let b = DensityGrid1D::gaussian(ax, 0.8, 0.7).unwrap();
        assert_eq!(w2_1d(&a, &a).unwrap(), 0.0);
        assert!((w2_1d(&a, &b).unwrap() - 1.3).abs() < 1e-3);
        let bumps = DensityGrid1D::mixture(ax, &[(0.5, -1.0, 0.02), (0.5, 1.0, 0.02)]).unwrap();
        let single = DensityGrid1D::gaussian(ax, 0.0, 0.02).unwrap();
        assert!((w2_1d(&bumps, &single).unwrap() - 1.0).abs() < 2e-2);
    }

    #[test]
    fn tv_examples() {
        let ax = axis(-8.0, 8.0, 4096);
        let a = DensityGrid1D::gaussian(ax, 0.0, 1.0).unwrap();
        let b = DensityGrid1D::gaussian(ax, 1.0, 1.0).unwrap();
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        // 2Φ(1/2) - 1
        assert!((tv_distance(&a, &b).unwrap() - 0.382924922548026).abs() < 1e-3);
        let l = DensityGrid1D::gaussian(ax, -5.0, 0.1).unwrap();
        let r = DensityGrid1D::gaussian(ax, 5.0, 0.1).unwrap();
        assert!((tv_distance(&l, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_energy_quadratic_minimizer() {
        let s2: f64 = 0.4;
        let model = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, 0.0, s2)).unwrap();
        let ax = axis(-8.0, 8.0, 1024);
        let f0 = free_energy(&model, &DensityGrid1D::gaussian(ax, 0.0, s2.sqrt()).unwrap()).unwrap();
        let f1 = free_energy(&model, &DensityGrid1D::gaussian(ax, 0.3, s2.sqrt()).unwrap()).unwrap();
        assert!(f0 < f1);
        // closed form: σ²(-½ln(2πeσ²)) + σ²/2 + shift²/2 difference
        assert!((f1 - f0 - 0.045).abs() < 1e-6);
    }

    #[test]
    fn mean_field_energy_examples() {
        let ax = axis(-8.0, 8.0, 2048);
        let q = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, 0.0, 1.0)).unwrap();
        let g = DensityGrid1D::gaussian(ax, 0.0, 1.0).unwrap();
        assert!((q.mean_field_energy(&g).unwrap() - 0.5).abs() < 1e-6);
        let dw = Model::new(&ModelConfig::double_well(1.0, 0.3)).unwrap();
        let narrow = DensityGrid1D::gaussian(ax, 0.0, 0.02).unwrap();
        assert!(dw.mean_field_energy(&narrow).unwrap().abs() < 1e-3);
        let sym = DensityGrid1D::mixture(ax, &[(0.5, -1.0, 0.3), (0.5, 1.0, 0.3)]).unwrap();
        let pot: f64 = sym.values().iter().enumerate().map(|(i, p)| dw.v(ax.center(i)) * p).sum::<f64>() * ax.dx();
        assert!((dw.mean_field_energy(&sym).unwrap() - pot - sym.variance()).abs() < 1e-12);
        let unnorm = DensityGrid1D::new(ax, vec![1.0; 2048]).unwrap();
        assert!(matches!(dw.mean_field_energy(&unnorm), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn csv_roundtrip() {
        let ax = axis(-2.0, 3.0, 40);
        let g = DensityGrid1D::gaussian(ax, 0.2, 0.5).unwrap();
        let back = DensityGrid1D::from_csv(&g.to_csv()).unwrap();
        assert!((back.axis().lo - ax.lo).abs() < 1e-12 && (back.axis().hi - ax.hi).abs() < 1e-12);
        assert!(tv_distance(&back, &DensityGrid1D::new(*back.axis(), g.values().to_vec()).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn kinetic_free_energy_product() {
        let s2: f64 = 0.3;
        let model = Model::new(&ModelConfig::double_well(1.0, s2)).unwrap();
        let x = axis(-3.0, 3.0, 128);
        let v = axis(-4.0, 4.0, 128);
        let rx = gibbs_density(&model, &x, 0.8).unwrap();
        let mv = maxwellian(&v, s2).unwrap();
        let rho = PhaseGrid2D::product(&rx, &mv).unwrap();
        let fk = kinetic_free_energy(&model, &rho).unwrap();
        let vent = -0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * s2).ln();
        let expected = free_energy(&model, &rx).unwrap() + s2 * vent + s2 / 2.0;
        assert!((fk - expected).abs() < 1e-3, "{fk} vs {expected}");
        let xm = rho.x_marginal();
        assert!(tv_distance(&xm, &rx).unwrap() < 1e-13);
        let gk = local_equilibrium_kinetic(&model, &rho).unwrap();
        assert!(tv_distance(&gk.x_marginal(), &local_equilibrium(&model, &xm).unwrap()).unwrap() < 1e-13);
        assert!(tv_distance(&gk.v_marginal(), &mv).unwrap() < 1e-13);
    }
}
