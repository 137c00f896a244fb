use std::path::PathBuf;
use std::time::Instant;

use mckeanflow_core::grid::{DensityGrid1D, Grid1D};
use mckeanflow_core::meanfield::DiscreteFamily;
use mckeanflow_core::model::Model;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, ReferenceSpec, Validate};
use crate::error::CliError;
use crate::output::{config_hash, versions, Manifest, OutputDir};

mod certificate;
pub mod flows;
pub mod kinetic;
mod landscape;
mod particles;

pub struct Context {
    pub out: OutputDir,
    pub pool: rayon::ThreadPool,
    pub threads: usize,
    pub verbose: bool,
}

impl Context {
    pub fn progress(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[mckeanflow] {}", msg.as_ref());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CertificateInvalid,
}

pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub verbose: bool,
}

type Runner<N> = fn(&mut Context, &ExperimentConfig<N>, &Model) -> Result<Outcome, CliError>;

fn execute<N>(text: &str, experiment: Experiment, opts: &RunOptions, run: Runner<N>) -> Result<Outcome, CliError>
where
    N: Serialize + DeserializeOwned + Default + Validate,
{
    let start = Instant::now();
    let (cfg, model) = ExperimentConfig::<N>::parse(text, experiment)?;
    let root = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set \"output\"".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut ctx = Context { out: OutputDir::new(root), pool, threads: opts.threads, verbose: opts.verbose };
    ctx.progress(format!("{} -> {}", experiment.name(), ctx.out.path().display()));
    let outcome = run(&mut ctx, &cfg, &model)?;
    let manifest = Manifest {
        experiment: experiment.name(),
        config_sha256: config_hash(&cfg),
        versions: versions(),
        threads: ctx.threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: ctx.out.files().to_vec(),
    };
    ctx.out.write_json("manifest.json", &manifest)?;
    Ok(outcome)
}

pub fn run(experiment: Experiment, text: &str, opts: &RunOptions) -> Result<Outcome, CliError> {
    match experiment {
        Experiment::PhaseDiagram => execute(text, experiment, opts, landscape::phase_diagram),
        Experiment::FixedPoints => execute(text, experiment, opts, landscape::fixed_points),
        Experiment::Localization => execute(text, experiment, opts, landscape::localization),
        Experiment::Critical => execute(text, experiment, opts, flows::critical),
        Experiment::PdeRun => execute(text, experiment, opts, flows::pde_run),
        Experiment::Counterexample => execute(text, experiment, opts, flows::counterexample),
        Experiment::RatesReport => execute(text, experiment, opts, flows::rates_report),
        Experiment::VfpRun => execute(text, experiment, opts, kinetic::vfp_run),
        Experiment::ParticlesRun => execute(text, experiment, opts, particles::particles_run),
        Experiment::Certificate => execute(text, experiment, opts, certificate::certificate),
        Experiment::List => Err(CliError::Config("list takes no config".into())),
    }
}

pub fn catalog() -> String {
    let mut s = String::new();
    for e in Experiment::ALL {
        s.push_str(&format!("{:<15} {}\n", e.name(), e.description()));
        s.push_str(&format!("{:<15} keys: experiment, model, numerics {{{}}}, output\n", "", e.numerics_keys()));
    }
    s
}

/// Resolves a reference density on `axis`; returns it with its mean.
fn reference(model: &Model, axis: &Grid1D, which: &ReferenceSpec) -> Result<Option<(DensityGrid1D, f64)>, CliError> {
    match which {
        ReferenceSpec::None => Ok(None),
        ReferenceSpec::FixedPoint { bracket } => {
            let fam = DiscreteFamily::new(model, axis);
            let m = fam.fixed_point(bracket.0, bracket.1)?;
            Ok(Some((fam.gibbs(m)?, m)))
        }
    }
}

fn fmt_row(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
    cells.join(",")
}
