//! Rate extraction from sampled trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Exponential,
    Power,
}

/// Least-squares fit in log space. `rate` is `λ` of `Ce^{-λt}` or `p` of `Ct^{-p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kind: FitKind,
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub samples: usize,
}

pub const MIN_SAMPLES: usize = 10;

fn windowed(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if t.len() != y.len() {
        return Err(Error::Fit(format!("{} times for {} values", t.len(), y.len())));
    }
    let (lo, hi) = window;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&a, &b) in t.iter().zip(y) {
        if a >= lo && a <= hi {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Fit(format!("nonpositive value {b} at t={a}")));
            }
            ts.push(a);
            ys.push(b.ln());
        }
    }
    if ts.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] holds {} samples, need {MIN_SAMPLES}",
            ts.len()
        )));
    }
    Ok((ts, ys))
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, R²)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let res: f64 = x.iter().zip(y).map(|(&a, &b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - res / syy).clamp(0.0, 1.0) } else { 1.0 };
    (intercept, slope, r2)
}

/// Fits `y ≈ C e^{-λt}` on the samples with `t` in `window`.
pub fn fit_exponential(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let (ts, ly) = windowed(t, y, window)?;
    let (a, b, r2) = line_fit(&ts, &ly);
    Ok(RateFit {
        kind: FitKind::Exponential,
        rate: -b,
        prefactor: a.exp(),
        r_squared: r2,
        t_lo: ts[0],
        t_hi: ts[ts.len() - 1],
        samples: ts.len(),
    })
}

/// Fits `y ≈ C t^{-p}` on the samples with `t` in `window`.
pub fn fit_power(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if window.0 <= 0.0 {
        return Err(Error::Fit("power fits need t > 0".into()));
    }
    let (ts, ly) = windowed(t, y, window)?;
    let lt: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
    let (a, b, r2) = line_fit(&lt, &ly);
    Ok(RateFit {
        kind: FitKind::Power,
        rate: -b,
        prefactor: a.exp(),
        r_squared: r2,
        t_lo: ts[0],
        t_hi: ts[ts.len() - 1],
        samples: ts.len(),
    })
}

/// First time the series changes sign, linearly interpolated between the two
/// samples that straddle zero. Exact zeros do not count as a sign.
pub fn detect_sign_change(t: &[f64], y: &[f64]) -> Option<f64> {
    let mut last: Option<(f64, f64)> = None;
    for (&a, &b) in t.iter().zip(y) {
        if b == 0.0 || !b.is_finite() {
            continue;
        }
        if let Some((ta, ya)) = last {
            if (ya > 0.0) != (b > 0.0) {
                return Some(ta + (a - ta) * ya / (ya - b));
            }
        }
        last = Some((a, b));
    }
    None
}

/// `t^p·y` over a window: its extremes and the ratios used by envelope checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub max: f64,
    pub min: f64,
    pub first: f64,
    pub last: f64,
}

impl Envelope {
    pub fn max_over_min(&self) -> f64 {
        self.max / self.min
    }

    pub fn last_over_first(&self) -> f64 {
        self.last / self.first
    }
}

pub fn envelope(t: &[f64], y: &[f64], power: f64, window: (f64, f64)) -> Result<Envelope> {
    let vals: Vec<f64> = t
        .iter()
        .zip(y)
        .filter(|(&a, _)| a >= window.0 && a <= window.1)
        .map(|(&a, &b)| a.powf(power) * b)
        .collect();
    if vals.is_empty() {
        return Err(Error::Fit(format!("no samples in [{}, {}]", window.0, window.1)));
    }
    Ok(Envelope {
        max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
        first: vals[0],
        last: vals[vals.len() - 1],
    })
}

/// RK4 solution of `dm/dt = -s m³` from `m(t₀) = m0` sampled at `times`
/// (ascending, starting at or after `t₀`), with steps no larger than `h`.
pub fn cubic_decay_ode(m0: f64, s: f64, t0: f64, times: &[f64], h: f64) -> Vec<f64> {
    let rhs = |m: f64| -s * m * m * m;
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut m) = (t0, m0);
    for &target in times {
        while t < target {
            let dt = h.min(target - t);
            let k1 = rhs(m);
            let k2 = rhs(m + 0.5 * dt * k1);
            let k3 = rhs(m + 0.5 * dt * k2);
            let k4 = rhs(m + dt * k3);
            m += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
        }
        out.push(m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_recovers_rate() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|&s| 3.0 * (-2.0 * s).exp()).collect();
        let f = fit_exponential(&t, &y, (0.0, 10.0)).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-10);
        assert!(f.r_squared > 0.9999);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let f = fit_exponential(&t, &vec![0.7; 20], (0.0, 30.0)).unwrap();
        assert!(f.rate.abs() < 1e-9 && f.r_squared == 1.0);
    }

    #[test]
    fn window_and_sign_checks() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let mut y = vec![1.0; 20];
        assert!(fit_exponential(&t, &y, (0.0, 5.0)).is_err());
        y[3] = -1.0;
        assert!(fit_exponential(&t, &y, (0.0, 30.0)).is_err());
        assert_eq!(detect_sign_change(&t, &y), Some(2.5));
        assert_eq!(detect_sign_change(&t, &[1.0; 20]), None);
    }

    #[test]
    fn power_recovers_exponent() {
        let t: Vec<f64> = (1..200).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|s| 1.0 / s.sqrt()).collect();
        let f = fit_power(&t, &y, (0.1, 100.0)).unwrap();
        assert!((f.rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cubic_ode_matches_closed_form() {
        // m(t) = m0 / sqrt(1 + 2 s m0² t)
        let times = [1.0, 10.0, 100.0];
        let m = cubic_decay_ode(0.8, 0.3, 0.0, &times, 0.01);
        for (&t, &v) in times.iter().zip(&m) {
            let exact = 0.8 / (1.0 + 2.0 * 0.3 * 0.64 * t).sqrt();
            assert!((v - exact).abs() < 1e-10);
        }
    }
}
