use serde::{Deserialize, Serialize};

use super::log::{LogRecord, TrajectoryLog};
use super::{bernoulli, Tridiagonal};
use crate::error::{Error, Result};
use crate::grid::{
    fisher_information_log, free_energy, log_gibbs, relative_entropy_log, tv_distance, w2_1d,
    DensityGrid1D,
};
use crate::meanfield::SelfConsistency1D;
use crate::model::Model;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    /// Exponentially fitted flux, exact on discrete Gibbs states.
    #[default]
    ChangCooper,
    /// Central diffusion plus first-order upwind drift.
    UpwindFv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// Forward Euler, subject to the CFL restriction.
    #[default]
    Explicit,
    /// Backward Euler with the drift frozen at the pre-step mean.
    Implicit,
}

/// Finite-volume solver for `∂ₜρ = ∂ₓ(σ²∂ₓρ + (V' + 2θ(x - m(ρ)))ρ)`.
#[derive(Clone, Debug)]
pub struct GranularSolver {
    model: Model,
    state: DensityGrid1D,
    dt: f64,
    time: f64,
    steps: u64,
    scheme: FluxScheme,
    stepping: Stepping,
    dv_face: Vec<f64>,
    centers: Vec<f64>,
}

/// Left/right flux coefficients per interior face: `J = p ρ_{i+1} - q ρ_i`.
struct FaceCoefficients {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl GranularSolver {
    pub fn new(
        model: &Model,
        state: DensityGrid1D,
        dt: f64,
        scheme: FluxScheme,
        stepping: Stepping,
    ) -> Result<GranularSolver> {
        model.require_1d()?;
        state.require_normalized()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let axis = *state.axis();
        let sc = SelfConsistency1D::new(model)?;
        let mass = sc.tail_mass(state.mean(), axis.lo, axis.hi);
        if mass >= 1e-12 {
            return Err(Error::TailMass { mass, lo: axis.lo, hi: axis.hi });
        }
        let centers = axis.centers();
        let dv_face = centers.windows(2).map(|w| model.v(w[1]) - model.v(w[0])).collect();
        Ok(GranularSolver {
            model: model.clone(),
            state,
            dt,
            time: 0.0,
            steps: 0,
            scheme,
            stepping,
            dv_face,
            centers,
        })
    }

    pub fn state(&self) -> &DensityGrid1D {
        &self.state
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(())
    }

    /// Largest explicit step `dx²/(2σ² + dx·max|drift|)` at the current mean.
    pub fn max_stable_dt(&self) -> f64 {
        let m = self.state.mean();
        let dx = self.state.axis().dx();
        let drift = self.centers.iter().map(|&x| self.model.drift(x, m).abs()).fold(0.0, f64::max);
        dx * dx / (2.0 * self.model.sigma2() + dx * drift)
    }

    fn coefficients(&self, m: f64) -> FaceCoefficients {
        let s2 = self.model.sigma2();
        let theta = self.model.theta();
        let dx = self.state.axis().dx();
        let n = self.centers.len();
        let mut p = Vec::with_capacity(n - 1);
        let mut q = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let de = self.dv_face[i] + theta * dx * (self.centers[i] + self.centers[i + 1] - 2.0 * m);
            match self.scheme {
                FluxScheme::ChangCooper => {
                    // B(-w) = w + B(w); evaluate the smaller side directly
                    let w = de / s2;
                    let (bp, bq) = if w >= 0.0 {
                        let b = bernoulli(w);
                        (w + b, b)
                    } else {
                        let b = bernoulli(-w);
                        (b, b - w)
                    };
                    p.push(s2 / dx * bp);
                    q.push(s2 / dx * bq);
                }
                FluxScheme::UpwindFv => {
                    let e = de / dx;
                    p.push(s2 / dx + e.max(0.0));
                    q.push(s2 / dx + (-e).max(0.0));
                }
            }
        }
        FaceCoefficients { p, q }
    }

    /// Fluxes on the n+1 faces (boundary faces are zero) with the drift of
    /// the current mean.
    pub fn face_fluxes(&self) -> Vec<f64> {
        let c = self.coefficients(self.state.mean());
        let r = self.state.values();
        let mut j = vec![0.0; r.len() + 1];
        for i in 0..r.len() - 1 {
            j[i + 1] = c.p[i] * r[i + 1] - c.q[i] * r[i];
        }
        j
    }

    pub fn step(&mut self) -> Result<()> {
        let m = self.state.mean();
        let dx = self.state.axis().dx();
        let lam = self.dt / dx;
        let c = self.coefficients(m);
        let n = self.centers.len();
        match self.stepping {
            Stepping::Explicit => {
                let max_dt = self.max_stable_dt();
                if self.dt > max_dt {
                    return Err(Error::Cfl { dt: self.dt, max_dt });
                }
                let r = self.state.values_mut();
                let mut left = 0.0;
                for i in 0..n {
                    // r[i + 1] is still the old value when face i+1/2 is formed
                    let right = if i + 1 < n { c.p[i] * r[i + 1] - c.q[i] * r[i] } else { 0.0 };
                    r[i] += lam * (right - left);
                    left = right;
                }
            }
            Stepping::Implicit => {
                let mut t = Tridiagonal { sub: vec![0.0; n], diag: vec![1.0; n], sup: vec![0.0; n] };
                for i in 0..n - 1 {
                    // face i+1/2 couples cells i and i+1
                    t.diag[i] += lam * c.q[i];
                    t.sup[i] -= lam * c.p[i];
                    t.diag[i + 1] += lam * c.p[i];
                    t.sub[i + 1] -= lam * c.q[i];
                }
                t.solve(self.state.values_mut());
            }
        }
        if let Some((i, &v)) =
            self.state.values().iter().enumerate().find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NonFinite(format!("cell {i} = {v} at t={}", self.time)));
        }
        self.steps += 1;
        self.time = self.steps as f64 * self.dt;
        Ok(())
    }

    /// Steps to `t_final`, calling `observe` at t=0 and every `record_every`.
    pub fn run_observed(
        &mut self,
        t_final: f64,
        record_every: f64,
        mut observe: impl FnMut(f64, &DensityGrid1D) -> Result<()>,
    ) -> Result<()> {
        if !(t_final > 0.0) || !(record_every > 0.0) {
            return Err(Error::InvalidArgument("t_final and record_every must be positive".into()));
        }
        let total = ((t_final - self.time) / self.dt).round().max(1.0) as u64;
        let stride = (record_every / self.dt).round().max(1.0) as u64;
        observe(self.time, &self.state)?;
        for k in 1..=total {
            self.step()?;
            if k % stride == 0 || k == total {
                observe(self.time, &self.state)?;
            }
        }
        Ok(())
    }

    /// Diagnostics of a state relative to its local equilibrium and a reference.
    pub fn diagnostics(
        model: &Model,
        t: f64,
        rho: &DensityGrid1D,
        reference: Option<&DensityGrid1D>,
    ) -> Result<LogRecord> {
        let lg = log_gibbs(model, rho.axis(), rho.mean());
        let (w2, tv) = match reference {
            Some(r) => (w2_1d(rho, r)?, tv_distance(rho, r)?),
            None => (f64::NAN, f64::NAN),
        };
        Ok(LogRecord {
            t,
            mean: rho.mean(),
            var: rho.variance(),
            free_energy: free_energy(model, rho)?,
            h_loc: relative_entropy_log(rho, &lg)?,
            fisher: fisher_information_log(rho, &lg)?,
            w2_ref: w2,
            tv_ref: tv,
            v_var: None,
            modified: None,
        })
    }

    pub fn run(
        &mut self,
        t_final: f64,
        record_every: f64,
        reference: Option<&DensityGrid1D>,
    ) -> Result<TrajectoryLog> {
        let mut log = TrajectoryLog::default();
        let model = self.model.clone();
        self.run_observed(t_final, record_every, |t, rho| {
            log.push(GranularSolver::diagnostics(&model, t, rho, reference)?);
            Ok(())
        })?;
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gibbs_density, Grid1D};
    use crate::model::{ModelConfig, PotentialSpec};

    fn dw(s2: f64) -> Model {
        Model::new(&ModelConfig::double_well(1.0, s2)).unwrap()
    }

    #[test]
    fn gibbs_state_has_zero_flux() {
        let model = dw(0.3);
        let ax = Grid1D::new(-6.0, 6.0, 512).unwrap();
        let rho = gibbs_density(&model, &ax, 0.4).unwrap();
        let s = GranularSolver::new(&model, rho.clone(), 1e-5, FluxScheme::ChangCooper, Stepping::Explicit).unwrap();
        let c = s.coefficients(0.4);
        let r = rho.values();
        let worst = (0..r.len() - 1)
            .map(|i| (c.p[i] * r[i + 1] - c.q[i] * r[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn cfl_violation_names_admissible_dt() {
        let model = dw(0.3);
        let ax = Grid1D::new(-6.0, 6.0, 256).unwrap();
        let rho = DensityGrid1D::gaussian(ax, 0.5, 0.3).unwrap();
        let mut s = GranularSolver::new(&model, rho, 1.0, FluxScheme::ChangCooper, Stepping::Explicit).unwrap();
        match s.step() {
            Err(Error::Cfl { dt, max_dt }) => assert!(dt == 1.0 && max_dt < 1e-2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tail_mass_is_checked() {
        let model = dw(0.3);
        let ax = Grid1D::new(-1.0, 1.0, 64).unwrap();
        let rho = DensityGrid1D::gaussian(ax, 0.0, 0.3).unwrap();
        assert!(matches!(
            GranularSolver::new(&model, rho, 1e-4, FluxScheme::ChangCooper, Stepping::Explicit),
            Err(Error::TailMass { .. })
        ));
    }

    #[test]
    fn ou_mean_decays_exponentially() {
        let model = Model::new(&ModelConfig::new(PotentialSpec::Quadratic, 0.0, 0.5)).unwrap();
        let ax = Grid1D::new(-7.0, 7.0, 1024).unwrap();
        let rho = DensityGrid1D::gaussian(ax, 1.0, 0.5f64.sqrt()).unwrap();
        for scheme in [FluxScheme::ChangCooper, FluxScheme::UpwindFv] {
            for stepping in [Stepping::Explicit, Stepping::Implicit] {
                let mut s = GranularSolver::new(&model, rho.clone(), 1e-4, scheme, stepping).unwrap();
                s.set_dt(0.5 * s.max_stable_dt()).unwrap();
                s.run_observed(1.0, 1.0, |_, _| Ok(())).unwrap();
                let m = s.state().mean();
                let exact = (-s.time()).exp();
                assert!((m - exact).abs() / exact < 1e-2, "{scheme:?} {stepping:?} {m}");
                assert!((s.state().mass() - 1.0).abs() < 1e-12);
            }
        }
    }
}
