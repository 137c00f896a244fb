use mckeanflow_core::analysis::{cubic_decay_ode, detect_sign_change, envelope, fit_exponential, fit_power, RateFit};
use mckeanflow_core::certificates::CertificateReport;
use mckeanflow_core::grid::{w2_1d, DensityGrid1D, Grid1D};
use mckeanflow_core::meanfield::{critical_sigma2, DiscreteFamily, SelfConsistency1D};
use mckeanflow_core::model::Model;
use mckeanflow_core::pde::{FluxScheme, GranularSolver, InitialCondition, MixtureComponent, Stepping, TrajectoryLog};
use serde_json::json;

use super::{fmt_row, reference, Context, Outcome};
use crate::config::{Counterexample, Critical, ExperimentConfig, PdeRun, RatesReport};
use crate::error::CliError;

/// Shrinks `dt` so that `record_every` is a whole number of steps.
pub fn aligned_dt(dt: f64, record_every: f64) -> f64 {
    record_every / (record_every / dt).ceil()
}

/// Fits that fail (too few samples, nonpositive values) are reported as null.
fn fit_or_null(fit: Result<RateFit, mckeanflow_core::Error>) -> serde_json::Value {
    match fit {
        Ok(f) => serde_json::to_value(f).unwrap_or(serde_json::Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Largest relative increase of F between consecutive records.
fn worst_increase(log: &TrajectoryLog) -> f64 {
    log.records
        .windows(2)
        .map(|w| (w[1].free_energy - w[0].free_energy) / (1.0 + w[0].free_energy.abs()))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn pde_run(ctx: &mut Context, cfg: &ExperimentConfig<PdeRun>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let axis = match p.grid {
        Some(g) => g,
        None => Grid1D::default_for(model.sigma2(), 512)?,
    };
    let (rho0, warnings) = p.initial.build(model, &axis)?;
    for w in &warnings {
        ctx.progress(format!("warning: {w}"));
    }
    let refd = reference(model, &axis, &p.reference)?;
    let mut solver = GranularSolver::new(model, rho0, 1.0, p.scheme, p.stepping)?;
    let dt0 = match (p.dt, p.stepping) {
        (Some(dt), _) => dt,
        (None, Stepping::Explicit) => p.cfl_fraction * solver.max_stable_dt(),
        (None, Stepping::Implicit) => 0.01,
    };
    let dt = aligned_dt(dt0, p.record_every);
    solver.set_dt(dt)?;
    ctx.progress(format!("dt={dt:e}, {} steps", (p.t_final / dt).round()));
    let log = solver.run(p.t_final, p.record_every, refd.as_ref().map(|r| &r.0))?;
    ctx.out.write_str("trajectory.csv", &log.to_csv())?;
    ctx.out.write_str("final_state.csv", &solver.state().to_csv())?;
    let last = log.records.last().copied();
    ctx.out.write_json(
        "report.json",
        &json!({
            "dt": dt,
            "grid": axis,
            "warnings": warnings,
            "reference_mean": refd.as_ref().map(|r| r.1),
            "final": last,
            "free_energy_worst_increase": worst_increase(&log),
            "mass_error": (solver.state().mass() - 1.0).abs(),
        }),
    )?;
    Ok(Outcome::Success)
}

pub fn critical(ctx: &mut Context, cfg: &ExperimentConfig<Critical>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let s2c = critical_sigma2(model, p.bracket, p.tol)?;
    ctx.progress(format!("sigma_c^2 = {s2c:.12}"));
    let mc = model.with_sigma2(s2c)?;
    let beta = SelfConsistency1D::new(&mc)?.degenerate_beta()?;
    let fam = DiscreteFamily::new(&mc, &p.grid);
    let rho0 = fam.gibbs(p.m0)?;
    let rho_star = fam.gibbs(0.0)?;
    let mut solver = GranularSolver::new(&mc, rho0.clone(), p.dt, FluxScheme::ChangCooper, Stepping::Implicit)?;
    solver.set_dt(aligned_dt(p.dt, p.record_every))?;
    let log = solver.run(p.t_final, p.record_every, Some(&rho_star))?;
    let t = log.times();
    let abs_m = log.column(|r| r.mean.abs());
    let ode = cubic_decay_ode(rho0.mean(), beta.s, 0.0, &t, 1e-3);
    let dist = log.column(|r| r.w2_ref + r.tv_ref);
    let mut csv = String::from("t,m_pde,m_ode\n");
    for ((a, r), b) in t.iter().zip(&log.records).zip(&ode) {
        csv.push_str(&fmt_row(&[*a, r.mean, *b]));
        csv.push('\n');
    }
    ctx.out.write_str("trajectory.csv", &log.to_csv())?;
    ctx.out.write_str("ode.csv", &csv)?;
    let env = envelope(&t, &dist, 1.0 / 3.0, p.window).ok();
    ctx.out.write_json(
        "critical.json",
        &json!({
            "sigma_c2": s2c,
            "degenerate": beta,
            "m0": rho0.mean(),
            "fit_pde": fit_or_null(fit_power(&t, &abs_m, p.window)),
            "fit_ode": fit_or_null(fit_power(&t, &ode, p.window)),
            "envelope_t13": env,
            "envelope_max_over_min": env.map(|e| e.max_over_min()),
        }),
    )?;
    Ok(Outcome::Success)
}

/// Half-width of the counterexample domain: the far bump sits at `2/ε - 1`.
pub fn counterexample_half_width(epsilon: f64, s0: f64) -> f64 {
    2.0 / epsilon - 1.0 + 3.0 + 8.0 * s0
}

pub fn counterexample(ctx: &mut Context, cfg: &ExperimentConfig<Counterexample>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let half = counterexample_half_width(p.epsilon, p.s0);
    let axis = Grid1D::new(-half, half, p.n)?;
    let init = InitialCondition::Mixture {
        components: vec![
            MixtureComponent { weight: 1.0 - p.epsilon, mean: -1.0, std: p.s0 },
            MixtureComponent { weight: p.epsilon, mean: 2.0 / p.epsilon - 1.0, std: p.s0 },
        ],
    };
    let (rho0, warnings) = init.build(model, &axis)?;
    let m0 = rho0.mean();
    let mut solver = GranularSolver::new(model, rho0, p.dt, FluxScheme::ChangCooper, Stepping::Implicit)?;
    solver.set_dt(aligned_dt(p.dt, p.record_every))?;
    let log = solver.run(p.t_final, p.record_every, None)?;
    let t = log.times();
    let t_cross = detect_sign_change(&t, &log.column(|r| r.mean));
    ctx.progress(format!("m0={m0:.6} t_cross={t_cross:?}"));
    ctx.out.write_str("trajectory.csv", &log.to_csv())?;
    ctx.out.write_json(
        "counterexample.json",
        &json!({
            "epsilon": p.epsilon,
            "grid": axis,
            "warnings": warnings,
            "m0": m0,
            "t_cross": t_cross,
            "final_mean": log.records.last().map(|r| r.mean),
        }),
    )?;
    Ok(Outcome::Success)
}

/// Relaxation from a shifted Gaussian next to `ρ_{m₊}`: the logged run and
/// the discrete fixed point used as reference.
pub struct Relaxation {
    pub log: TrajectoryLog,
    pub gap: Vec<f64>,
    pub m_star: f64,
    pub w2_initial: f64,
    pub dt: f64,
}

pub fn subcritical_relaxation(model: &Model, p: &RatesReport, m_plus: f64) -> Result<Relaxation, CliError> {
    let fam = DiscreteFamily::new(model, &p.grid);
    let m_star = fam.fixed_point(0.5 * m_plus, 1.5 * m_plus)?;
    let rho_star = fam.gibbs(m_star)?;
    let rho0 = DensityGrid1D::gaussian(p.grid, m_star + p.shift, rho_star.variance().sqrt())?;
    let w2_initial = w2_1d(&rho0, &rho_star)?;
    let mut solver = GranularSolver::new(model, rho0, 1.0, FluxScheme::ChangCooper, Stepping::Explicit)?;
    let dt = aligned_dt(0.5 * solver.max_stable_dt(), p.record_every);
    solver.set_dt(dt)?;
    let mut log = TrajectoryLog::default();
    let mut gap = Vec::new();
    solver.run_observed(p.t_final, p.record_every, |t, rho| {
        log.push(GranularSolver::diagnostics(model, t, rho, Some(&rho_star))?);
        gap.push(fam.free_energy_gap(rho, m_star)?);
        Ok(())
    })?;
    Ok(Relaxation { log, gap, m_star, w2_initial, dt })
}

pub fn rates_report(ctx: &mut Context, cfg: &ExperimentConfig<RatesReport>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let cert = CertificateReport::compute(model, p.epsilon)?;
    let run = subcritical_relaxation(model, p, cert.m_plus)?;
    let t = run.log.times();
    let w2 = run.log.column(|r| r.w2_ref);
    let tv = run.log.column(|r| r.tv_ref);
    let mut csv = String::from("t,W2_ref,TV_ref,F_gap\n");
    for k in 0..t.len() {
        csv.push_str(&fmt_row(&[t[k], w2[k], tv[k], run.gap[k]]));
        csv.push('\n');
    }
    ctx.out.write_str("trajectory.csv", &run.log.to_csv())?;
    ctx.out.write_str("rates.csv", &csv)?;
    let gap_fit = fit_exponential(&t, &run.gap, p.window);
    let ratio = gap_fit.as_ref().ok().map(|f| f.rate * cert.eta_bar);
    ctx.out.write_json(
        "rates.json",
        &json!({
            "m_star": run.m_star,
            "w2_initial": run.w2_initial,
            "dt": run.dt,
            "eta_bar": cert.eta_bar,
            "certified_rate": 1.0 / cert.eta_bar,
            "fit_w2": fit_or_null(fit_exponential(&t, &w2, p.window)),
            "fit_tv": fit_or_null(fit_exponential(&t, &tv, p.window)),
            "fit_free_energy_gap": fit_or_null(gap_fit),
            "gap_rate_over_certified": ratio,
        }),
    )?;
    Ok(Outcome::Success)
}
