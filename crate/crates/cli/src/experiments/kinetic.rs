use mckeanflow_core::analysis::fit_exponential;
use mckeanflow_core::grid::{maxwellian, DensityGrid1D, Grid1D, PhaseGrid2D};
use mckeanflow_core::meanfield::{DiscreteFamily, SelfConsistency1D};
use mckeanflow_core::model::Model;
use mckeanflow_core::pde::{SubSteps, TrajectoryLog, VfpSolver};
use serde_json::json;

use super::{Context, Outcome};
use crate::config::{ExperimentConfig, VfpRun};
use crate::error::CliError;

pub struct KineticRelaxation {
    pub log: TrajectoryLog,
    /// x-marginal of the long preliminary run, the discrete equilibrium.
    pub reference: DensityGrid1D,
    pub final_state: PhaseGrid2D,
    pub dt: f64,
    pub m_star: f64,
}

pub fn v_axis(p: &VfpRun, sigma2: f64) -> Result<Grid1D, CliError> {
    match p.v_grid {
        Some(g) => Ok(g),
        None => {
            let r = 7.8 * sigma2.sqrt();
            Ok(Grid1D::new(-r, r, 64)?)
        }
    }
}

/// Runs the equilibrium product to `reference_t_final`, then the perturbed
/// product `N(m* + shift, var ρ*ˣ) ⊗ M` to `t_final`.
pub fn kinetic_relaxation(model: &Model, p: &VfpRun) -> Result<KineticRelaxation, CliError> {
    let s2 = model.sigma2();
    let x = p.x_grid;
    let v = v_axis(p, s2)?;
    let m_plus = SelfConsistency1D::new(model)?.fixed_points()?.positive_stable().map(|f| f.m);
    let fam = DiscreteFamily::new(model, &x);
    let m_star = match m_plus {
        Some(m) => fam.fixed_point(0.5 * m, 1.5 * m)?,
        None => 0.0,
    };
    let rx = fam.gibbs(m_star)?;
    let mw = maxwellian(&v, s2)?;
    let eq = PhaseGrid2D::product(&rx, &mw)?;
    let dt = match p.dt {
        Some(dt) => dt,
        None => {
            let amax = x.centers().iter().map(|&xi| model.drift(xi, m_star).abs()).fold(0.0, f64::max) + 2.0;
            let vmax = v.lo.abs().max(v.hi.abs());
            p.cfl_fraction * (x.dx() / vmax).min(v.dx() / amax)
        }
    };
    let dt = super::flows::aligned_dt(dt, p.record_every);
    let mut pre = VfpSolver::new(model, eq, dt, p.transport, SubSteps::default())?;
    pre.run_observed(p.reference_t_final, p.reference_t_final, |_| Ok(()))?;
    let reference = pre.state().x_marginal();
    let pert = DensityGrid1D::gaussian(x, m_star + p.shift, rx.variance().sqrt())?;
    let rho0 = PhaseGrid2D::product(&pert, &mw)?;
    let mut solver = VfpSolver::new(model, rho0, dt, p.transport, SubSteps::default())?;
    let log = solver.run(p.t_final, p.record_every, Some(&reference))?;
    Ok(KineticRelaxation { log, reference, final_state: solver.state().clone(), dt, m_star })
}

pub fn vfp_run(ctx: &mut Context, cfg: &ExperimentConfig<VfpRun>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let run = kinetic_relaxation(model, p)?;
    ctx.progress(format!("dt={:e}", run.dt));
    let t = run.log.times();
    let w2 = run.log.column(|r| r.w2_ref);
    let fk = run.log.column(|r| r.free_energy);
    let worst = fk.windows(2).map(|w| (w[1] - w[0]) / (1.0 + w[0].abs())).fold(f64::NEG_INFINITY, f64::max);
    let v_var = run.log.records.last().and_then(|r| r.v_var).unwrap_or(f64::NAN);
    let modified_ok = run.log.records.iter().all(|r| r.modified.map_or(false, |m| m.1));
    ctx.out.write_str("trajectory.csv", &run.log.to_csv())?;
    ctx.out.write_str("final_state.csv", &run.final_state.to_csv())?;
    ctx.out.write_str("reference_x.csv", &run.reference.to_csv())?;
    let fit = fit_exponential(&t, &w2, p.window);
    ctx.out.write_json(
        "report.json",
        &json!({
            "dt": run.dt,
            "m_star": run.m_star,
            "fit_w2_x": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
            "free_energy_worst_increase": worst,
            "final_v_var_over_sigma2": v_var / model.sigma2(),
            "modified_functional_covered": modified_ok,
        }),
    )?;
    Ok(Outcome::Success)
}
