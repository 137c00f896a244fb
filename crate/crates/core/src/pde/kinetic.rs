use serde::{Deserialize, Serialize};

use super::log::{LogRecord, TrajectoryLog};
use super::{bernoulli, Tridiagonal};
use crate::error::{Error, Result};
use crate::grid::{
    kinetic_fisher_log, kinetic_free_energy, log_gibbs, relative_entropy_2d_log, tv_distance,
    w2_1d, DensityGrid1D, Grid1D, PhaseGrid2D,
};
use crate::meanfield::SelfConsistency1D;
use crate::model::Model;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportScheme {
    /// First-order donor cell.
    Upwind,
    /// Second-order MUSCL with the van Leer limiter.
    #[default]
    VanLeer,
}

/// Which Strang sub-steps are active. All are on outside of tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubSteps {
    pub x_transport: bool,
    pub v_drift: bool,
    pub v_ou: bool,
}

impl Default for SubSteps {
    fn default() -> Self {
        SubSteps { x_transport: true, v_drift: true, v_ou: true }
    }
}

/// Strang-split solver for
/// `∂ₜρ + v∂ₓρ + a(x)∂ᵥρ = ∂ᵥ(σ²∂ᵥρ + vρ)`, `a = -V' - 2θ(x - m(ρˣ))`.
#[derive(Clone, Debug)]
pub struct VfpSolver {
    model: Model,
    state: PhaseGrid2D,
    dt: f64,
    time: f64,
    steps: u64,
    transport: TransportScheme,
    substeps: SubSteps,
    xs: Vec<f64>,
    vs: Vec<f64>,
    dv_x: Vec<f64>,
    ou: Tridiagonal,
    ou_factors: (Vec<f64>, Vec<f64>),
    ou_p: Vec<f64>,
    ou_q: Vec<f64>,
    /// Weight of the mixed Fisher term in the modified functional.
    mixed_weight: f64,
}

fn van_leer(dl: f64, dr: f64) -> f64 {
    if dl * dr > 0.0 {
        2.0 * dl * dr / (dl + dr)
    } else {
        0.0
    }
}

/// Conservative advection of one line by signed Courant number `c`, with
/// zero flux through both ends. `flux` is scratch of length `u.len() + 1`.
fn advect_line(u: &mut [f64], c: f64, scheme: TransportScheme, flux: &mut [f64]) {
    let n = u.len();
    if c == 0.0 {
        return;
    }
    let slope = |i: usize| -> f64 {
        if scheme == TransportScheme::Upwind || i == 0 || i + 1 == n {
            0.0
        } else {
            van_leer(u[i] - u[i - 1], u[i + 1] - u[i])
        }
    };
    let nu = c.abs();
    flux[0] = 0.0;
    flux[n] = 0.0;
    for i in 0..n - 1 {
        flux[i + 1] = if c > 0.0 {
            c * (u[i] + 0.5 * (1.0 - nu) * slope(i))
        } else {
            c * (u[i + 1] - 0.5 * (1.0 - nu) * slope(i + 1))
        };
    }
    for i in 0..n {
        u[i] -= flux[i + 1] - flux[i];
    }
}

impl VfpSolver {
    pub fn new(
        model: &Model,
        state: PhaseGrid2D,
        dt: f64,
        transport: TransportScheme,
        substeps: SubSteps,
    ) -> Result<VfpSolver> {
        model.require_1d()?;
        state.require_normalized()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let xa = *state.x_axis();
        let va = *state.v_axis();
        let sc = SelfConsistency1D::new(model)?;
        let mass = sc.tail_mass(state.x_marginal().mean(), xa.lo, xa.hi);
        if mass >= 1e-12 {
            return Err(Error::TailMass { mass, lo: xa.lo, hi: xa.hi });
        }
        let xs = xa.centers();
        let vs = va.centers();
        let vmax = vs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if dt * vmax > xa.dx() {
            return Err(Error::Cfl { dt, max_dt: xa.dx() / vmax });
        }
        let s2 = model.sigma2();
        let hv = va.dx();
        let nv = va.n;
        let lam = dt / hv;
        let mut ou = Tridiagonal { sub: vec![0.0; nv], diag: vec![1.0; nv], sup: vec![0.0; nv] };
        let mut ou_p = Vec::with_capacity(nv - 1);
        let mut ou_q = Vec::with_capacity(nv - 1);
        for i in 0..nv - 1 {
            let w = 0.5 * hv * (vs[i] + vs[i + 1]) / s2;
            let p = s2 / hv * bernoulli(-w);
            let q = s2 / hv * bernoulli(w);
            ou.diag[i] += lam * q;
            ou.sup[i] -= lam * p;
            ou.diag[i + 1] += lam * p;
            ou.sub[i + 1] -= lam * q;
            ou_p.push(p);
            ou_q.push(q);
        }
        let ou_factors = ou.factor();
        let theta = model.theta();
        let big_m = xs.iter().map(|&x| (model.d2v(x) + 2.0 * theta).abs()).fold(0.0, f64::max);
        let big_l = 2.0 * theta.abs();
        let mixed_weight = 0.5 / (1.0 + 2.0 * big_m * big_m + 2.0 * big_l * big_l / (s2 * s2));
        let dv_x = xs.iter().map(|&x| model.dv(x)).collect();
        Ok(VfpSolver {
            model: model.clone(),
            state,
            dt,
            time: 0.0,
            steps: 0,
            transport,
            substeps,
            xs,
            vs,
            dv_x,
            ou,
            ou_factors,
            ou_p,
            ou_q,
            mixed_weight,
        })
    }

    pub fn state(&self) -> &PhaseGrid2D {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Weight `a` of the mixed Fisher term in the modified functional.
    pub fn mixed_weight(&self) -> f64 {
        self.mixed_weight
    }

    fn force(&self, ix: usize, m: f64) -> f64 {
        -self.dv_x[ix] - 2.0 * self.model.theta() * (self.xs[ix] - m)
    }

    /// Largest dt allowed by both transport CFL conditions at the current mean.
    pub fn max_stable_dt(&self) -> f64 {
        let m = self.state.x_marginal().mean();
        let vmax = self.vs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let amax = (0..self.xs.len()).map(|i| self.force(i, m).abs()).fold(0.0, f64::max);
        let dx = self.state.x_axis().dx();
        let dv = self.state.v_axis().dx();
        (dx / vmax).min(if amax > 0.0 { dv / amax } else { f64::INFINITY })
    }

    fn x_transport(&mut self, h: f64) {
        let nx = self.xs.len();
        let nv = self.vs.len();
        let dx = self.state.x_axis().dx();
        let mut line = vec![0.0; nx];
        let mut flux = vec![0.0; nx + 1];
        let values = self.state.values_mut();
        for iv in 0..nv {
            for ix in 0..nx {
                line[ix] = values[ix * nv + iv];
            }
            advect_line(&mut line, self.vs[iv] * h / dx, self.transport, &mut flux);
            for ix in 0..nx {
                values[ix * nv + iv] = line[ix];
            }
        }
    }

    fn v_drift(&mut self, h: f64) -> Result<()> {
        let m = self.state.x_marginal().mean();
        let nv = self.vs.len();
        let dv = self.state.v_axis().dx();
        let forces: Vec<f64> = (0..self.xs.len()).map(|i| self.force(i, m)).collect();
        let amax = forces.iter().fold(0.0f64, |a, f| a.max(f.abs()));
        if self.dt * amax > dv {
            return Err(Error::Cfl { dt: self.dt, max_dt: dv / amax });
        }
        let mut flux = vec![0.0; nv + 1];
        let scheme = self.transport;
        for (row, a) in self.state.values_mut().chunks_mut(nv).zip(forces) {
            advect_line(row, a * h / dv, scheme, &mut flux);
        }
        Ok(())
    }

    fn v_ou(&mut self) {
        let nv = self.vs.len();
        let (cp, piv) = &self.ou_factors;
        for row in self.state.values_mut().chunks_mut(nv) {
            self.ou.solve_factored(cp, piv, row);
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let h = 0.5 * self.dt;
        let s = self.substeps;
        if s.x_transport {
            self.x_transport(h);
        }
        if s.v_drift {
            self.v_drift(h)?;
        }
        if s.v_ou {
            self.v_ou();
        }
        if s.v_drift {
            self.v_drift(h)?;
        }
        if s.x_transport {
            self.x_transport(h);
        }
        if let Some((k, &v)) = self.state.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cell {k} = {v} at t={}", self.time)));
        }
        self.steps += 1;
        self.time = self.steps as f64 * self.dt;
        Ok(())
    }

    /// Largest absolute velocity flux of the friction-diffusion sub-step on `rho`.
    pub fn ou_flux_residual(&self, rho: &PhaseGrid2D) -> f64 {
        let nv = self.vs.len();
        rho.values()
            .chunks(nv)
            .flat_map(|row| (0..nv - 1).map(move |i| (self.ou_p[i] * row[i + 1] - self.ou_q[i] * row[i]).abs()))
            .fold(0.0, f64::max)
    }

    /// Log-density of `Γ_k = Γ(ρˣ) ⊗ N(0, σ²)` on the solver grid.
    pub fn log_local_equilibrium(model: &Model, x: &Grid1D, v: &Grid1D, m: f64) -> Vec<f64> {
        let lx = log_gibbs(model, x, m);
        let s2 = model.sigma2();
        let ev: Vec<f64> = v.centers().iter().map(|&u| -u * u / (2.0 * s2)).collect();
        let z = ev.iter().map(|e| e.exp()).sum::<f64>() * v.dx();
        let lz = z.ln();
        let mut out = Vec::with_capacity(x.n * v.n);
        for a in &lx {
            for e in &ev {
                out.push(a + e - lz);
            }
        }
        out
    }

    pub fn diagnostics(
        &self,
        t: f64,
        rho: &PhaseGrid2D,
        reference: Option<&DensityGrid1D>,
    ) -> Result<LogRecord> {
        let rx = rho.x_marginal();
        let rv = rho.v_marginal();
        let m = rx.mean();
        let lg = VfpSolver::log_local_equilibrium(&self.model, rho.x_axis(), rho.v_axis(), m);
        let f_k = kinetic_free_energy(&self.model, rho)?;
        let (fv, mixed, covered) = kinetic_fisher_log(rho, &lg)?;
        let (w2, tv) = match reference {
            Some(r) => (w2_1d(&rx, r)?, tv_distance(&rx, r)?),
            None => (f64::NAN, f64::NAN),
        };
        let s2 = self.model.sigma2();
        let l_mod = f_k + self.mixed_weight * s2 * s2 * mixed;
        Ok(LogRecord {
            t,
            mean: m,
            var: rx.variance(),
            free_energy: f_k,
            h_loc: relative_entropy_2d_log(rho, &lg)?,
            fisher: fv,
            w2_ref: w2,
            tv_ref: tv,
            v_var: Some(rv.variance()),
            modified: Some((l_mod, covered >= 1.0 - 1e-6)),
        })
    }

    /// Steps to `t_final`, calling `observe` at t=0 and every `record_every`.
    pub fn run_observed(
        &mut self,
        t_final: f64,
        record_every: f64,
        mut observe: impl FnMut(&VfpSolver) -> Result<()>,
    ) -> Result<()> {
        if !(t_final > 0.0) || !(record_every > 0.0) {
            return Err(Error::InvalidArgument("t_final and record_every must be positive".into()));
        }
        let total = ((t_final - self.time) / self.dt).round().max(1.0) as u64;
        let stride = (record_every / self.dt).round().max(1.0) as u64;
        observe(self)?;
        for k in 1..=total {
            self.step()?;
            if k % stride == 0 || k == total {
                observe(self)?;
            }
        }
        Ok(())
    }

    pub fn run(
        &mut self,
        t_final: f64,
        record_every: f64,
        reference: Option<&DensityGrid1D>,
    ) -> Result<TrajectoryLog> {
        let mut log = TrajectoryLog::default();
        self.run_observed(t_final, record_every, |s| {
            log.push(s.diagnostics(s.time, &s.state, reference)?);
            Ok(())
        })?;
        Ok(log)
    }
}
