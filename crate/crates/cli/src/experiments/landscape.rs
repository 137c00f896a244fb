use mckeanflow_core::meanfield::SelfConsistency1D;
use mckeanflow_core::model::Model;
use rayon::prelude::*;
use serde_json::json;

use super::{fmt_row, Context, Outcome};
use crate::config::{ExperimentConfig, FixedPoints, Localization, PhaseDiagram};
use crate::error::CliError;

pub fn phase_diagram(ctx: &mut Context, cfg: &ExperimentConfig<PhaseDiagram>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let base = SelfConsistency1D::new(model)?;
    let ms: Vec<f64> =
        (0..p.points).map(|k| p.m_lo + (p.m_hi - p.m_lo) * k as f64 / (p.points - 1) as f64).collect();
    let tables: Vec<Result<(String, serde_json::Value), CliError>> = ctx.pool.install(|| {
        p.sigma2_values
            .par_iter()
            .map(|&s2| {
                let sc = base.at_sigma2(s2)?;
                let mut csv = String::from("m,f,fprime,g\n");
                for &m in &ms {
                    csv.push_str(&fmt_row(&[m, sc.f(m), sc.f_prime(m), sc.g(m)]));
                    csv.push('\n');
                }
                let fps = sc.fixed_points()?;
                let summary = json!({ "sigma2": s2, "fixed_point_count": fps.len(), "fixed_points": fps.points });
                Ok((csv, summary))
            })
            .collect()
    });
    let mut summaries = Vec::new();
    for (s2, table) in p.sigma2_values.iter().zip(tables) {
        let (csv, summary) = table?;
        ctx.out.write_str(&format!("phase_sigma2_{s2}.csv"), &csv)?;
        ctx.progress(format!("sigma2={s2}: {} fixed points", summary["fixed_point_count"]));
        summaries.push(summary);
    }
    ctx.out.write_json("phase_diagram.json", &json!({ "theta": model.theta(), "curves": summaries }))?;
    Ok(Outcome::Success)
}

pub fn fixed_points(ctx: &mut Context, cfg: &ExperimentConfig<FixedPoints>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let sc = SelfConsistency1D::new(model)?;
    let set = match p.interval {
        Some(iv) => sc.find_fixed_points(iv, p.tol)?,
        None => sc.find_fixed_points((-4.0, 4.0), p.tol)?,
    };
    let mut csv = String::from("m,fprime,kind\n");
    for fp in &set.points {
        let kind = serde_json::to_value(fp.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        csv.push_str(&format!("{},{kind}\n", fmt_row(&[fp.m, fp.fprime])));
    }
    ctx.out.write_str("fixed_points.csv", &csv)?;
    let contraction = match set.positive_stable() {
        Some(fp) => Some(sc.contraction_alpha(p.epsilon.unwrap_or(0.2 * fp.m))?),
        None => None,
    };
    ctx.out.write_json(
        "fixed_points.json",
        &json!({ "sigma2": model.sigma2(), "theta": model.theta(), "fixed_points": set.points, "contraction": contraction }),
    )?;
    Ok(Outcome::Success)
}

pub fn localization(ctx: &mut Context, cfg: &ExperimentConfig<Localization>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let sc = SelfConsistency1D::new(model)?;
    let two_theta = 2.0 * model.theta();
    let limit = two_theta / (two_theta + model.d2v(p.a));
    let mut csv = String::from("sigma2,fprime\n");
    let mut values = Vec::new();
    for &s2 in &p.sigma2_values {
        let v = sc.localization_jacobian(p.a, s2)?;
        csv.push_str(&fmt_row(&[s2, v]));
        csv.push('\n');
        values.push(json!({ "sigma2": s2, "fprime": v }));
    }
    ctx.out.write_str("localization.csv", &csv)?;
    ctx.out.write_json("localization.json", &json!({ "a": p.a, "limit": limit, "values": values }))?;
    Ok(Outcome::Success)
}
