//! Time integrators for the granular media equation and the kinetic
//! Vlasov–Fokker–Planck equation on truncated grids with no-flux boundaries.

mod granular;
mod init;
mod kinetic;
mod log;

pub use granular::{FluxScheme, GranularSolver, Stepping};
pub use init::{InitialCondition, MixtureComponent};
pub use kinetic::{SubSteps, TransportScheme, VfpSolver};
pub use log::{LogRecord, TrajectoryLog};

/// `B(z) = z/(eᶻ - 1)`, evaluated without overflow for large `|z|`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - 0.5 * z + z * z / 12.0
    } else if z > 0.0 {
        let e = (-z).exp();
        z * e / (1.0 - e)
    } else {
        z / z.exp_m1()
    }
}

/// Tridiagonal system with sub-, main and super-diagonals.
#[derive(Clone, Debug)]
pub(crate) struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    /// Thomas elimination factors: modified super-diagonal and pivots.
    pub fn factor(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.diag.len();
        let mut cp = vec![0.0; n];
        let mut piv = vec![0.0; n];
        piv[0] = self.diag[0];
        for i in 0..n {
            if i > 0 {
                piv[i] = self.diag[i] - self.sub[i] * cp[i - 1];
            }
            cp[i] = if i + 1 < n { self.sup[i] / piv[i] } else { 0.0 };
        }
        (cp, piv)
    }

    /// Solves in place using factors from [`Tridiagonal::factor`].
    pub fn solve_factored(&self, cp: &[f64], piv: &[f64], rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= piv[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) / piv[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= cp[i] * rhs[i + 1];
        }
    }

    pub fn solve(&self, rhs: &mut [f64]) {
        let (cp, piv) = self.factor();
        self.solve_factored(&cp, &piv, rhs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_is_smooth_and_finite() {
        assert_eq!(bernoulli(0.0), 1.0);
        for &z in &[1e-7, 1e-5, 1e-3, 0.5, 3.0, 50.0, 800.0] {
            let exact = |z: f64| z / z.exp_m1();
            for &s in &[z, -z] {
                let b = bernoulli(s);
                assert!(b.is_finite() && b >= 0.0);
                if s.abs() < 700.0 {
                    assert!((b - exact(s)).abs() <= 1e-12 * exact(s).max(1.0), "{s}");
                }
            }
            // B(-z) = z + B(z)
            assert!((bernoulli(-z) - z - bernoulli(z)).abs() < 1e-10 * (1.0 + z));
        }
    }

    #[test]
    fn thomas_matches_dense_solution() {
        let t = Tridiagonal {
            sub: vec![0.0, -1.0, -0.5, -0.2],
            diag: vec![3.0, 2.5, 2.0, 1.5],
            sup: vec![-1.0, -0.3, -0.7, 0.0],
        };
        let x = [1.0, -2.0, 0.5, 4.0];
        let mut b: Vec<f64> = (0..4)
            .map(|i| {
                t.diag[i] * x[i]
                    + if i > 0 { t.sub[i] * x[i - 1] } else { 0.0 }
                    + if i < 3 { t.sup[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        t.solve(&mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }
}
