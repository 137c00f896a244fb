use mckeanflow_core::grid::{free_energy, Grid1D};
use mckeanflow_core::model::Model;
use mckeanflow_core::particles::{diagnostics_csv, EnsembleDiagnostics, ParticleEnsemble, ParticleMode};
use rayon::prelude::*;
use serde_json::json;

use super::{reference, Context, Outcome};
use crate::config::{ExperimentConfig, ParticlesRun};
use crate::error::CliError;

struct SeedRun {
    records: Vec<EnsembleDiagnostics>,
    samples: Option<String>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn particles_run(ctx: &mut Context, cfg: &ExperimentConfig<ParticlesRun>, model: &Model) -> Result<Outcome, CliError> {
    let p = &cfg.numerics;
    let axis = match p.grid {
        Some(g) => g,
        None => Grid1D::default_for(model.sigma2(), 1024)?,
    };
    let (rho0, warnings) = p.initial.build(model, &axis)?;
    let refd = reference(model, &axis, &p.reference)?;
    let rref = refd.as_ref().map(|r| &r.0);
    ctx.progress(format!("{} seeds x {} particles on {} threads", p.seeds.len(), p.n, ctx.threads));
    // seeds are independent; collect keeps their order
    let runs: Vec<Result<SeedRun, CliError>> = ctx.pool.install(|| {
        p.seeds
            .par_iter()
            .map(|&seed| {
                let mut e = ParticleEnsemble::sample_1d(p.mode, &rho0, p.n, model.sigma2(), seed)?;
                let records = e.run(model, p.dt, p.t_final, p.record_every, rref)?;
                let samples = p.dump_samples.then(|| {
                    let mut s = String::from(match p.mode {
                        ParticleMode::Overdamped => "t,particle_index,x\n",
                        ParticleMode::Kinetic => "t,particle_index,x,v\n",
                    });
                    e.sample_csv_rows(&mut s);
                    s
                });
                Ok(SeedRun { records, samples })
            })
            .collect()
    });
    let mut finals = Vec::new();
    for (&seed, run) in p.seeds.iter().zip(runs) {
        let run = run?;
        ctx.out.write_str(&format!("particles_seed{seed}.csv"), &diagnostics_csv(&run.records))?;
        if let Some(s) = &run.samples {
            ctx.out.write_str(&format!("samples_seed{seed}.csv"), s)?;
        }
        if let Some(last) = run.records.last() {
            finals.push(json!({ "seed": seed, "final": last }));
        }
    }
    let proxies: Vec<f64> = finals
        .iter()
        .filter_map(|f| f["final"]["fe_proxy"].as_f64())
        .collect();
    let f_ref = match rref {
        Some(r) => Some(free_energy(model, r)?),
        None => None,
    };
    ctx.out.write_json(
        "summary.json",
        &json!({
            "n": p.n,
            "warnings": warnings,
            "seeds": finals,
            "median_final_proxy": median(proxies),
            "reference_free_energy": f_ref,
            "reference_mean": refd.as_ref().map(|r| r.1),
        }),
    )?;
    Ok(Outcome::Success)
}
