use std::path::PathBuf;

use clap::ValueEnum;
use mckeanflow_core::certificates::ValidationConfig;
use mckeanflow_core::grid::Grid1D;
use mckeanflow_core::model::{Model, ModelConfig};
use mckeanflow_core::particles::ParticleMode;
use mckeanflow_core::pde::{FluxScheme, InitialCondition, Stepping, TransportScheme};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    PhaseDiagram,
    Critical,
    FixedPoints,
    PdeRun,
    VfpRun,
    ParticlesRun,
    Certificate,
    Counterexample,
    Localization,
    RatesReport,
    List,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::PhaseDiagram,
        Experiment::Critical,
        Experiment::FixedPoints,
        Experiment::PdeRun,
        Experiment::VfpRun,
        Experiment::ParticlesRun,
        Experiment::Certificate,
        Experiment::Counterexample,
        Experiment::Localization,
        Experiment::RatesReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::PhaseDiagram => "phase-diagram",
            Experiment::Critical => "critical",
            Experiment::FixedPoints => "fixed-points",
            Experiment::PdeRun => "pde-run",
            Experiment::VfpRun => "vfp-run",
            Experiment::ParticlesRun => "particles-run",
            Experiment::Certificate => "certificate",
            Experiment::Counterexample => "counterexample",
            Experiment::Localization => "localization",
            Experiment::RatesReport => "rates-report",
            Experiment::List => "list",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::PhaseDiagram => "self-consistency map f, f' and potential g per sigma2 (CSV m,f,fprime,g)",
            Experiment::Critical => "critical temperature, cubic coefficient and the slow decay of the mean at sigma_c^2",
            Experiment::FixedPoints => "fixed points of f with their type and the contraction factor",
            Experiment::PdeRun => "granular media equation from an initial density, with free-energy log",
            Experiment::VfpRun => "kinetic Vlasov-Fokker-Planck relaxation by Strang splitting",
            Experiment::ParticlesRun => "interacting particle system over several seeds",
            Experiment::Certificate => "explicit local convergence constants and their numerical validation",
            Experiment::Counterexample => "bimodal start with positive mean whose mean turns negative",
            Experiment::Localization => "low-temperature Jacobian of f at a well",
            Experiment::RatesReport => "fitted W2, TV and free-energy rates against the certified rate",
            Experiment::List => "print this catalog",
        }
    }

    /// Numerics keys of the experiment; all have defaults.
    pub fn numerics_keys(self) -> &'static str {
        match self {
            Experiment::PhaseDiagram => "sigma2_values, m_lo, m_hi, points",
            Experiment::Critical => "bracket, tol, grid, dt, t_final, record_every, m0, window",
            Experiment::FixedPoints => "interval, tol, epsilon",
            Experiment::PdeRun => "grid, dt, cfl_fraction, scheme, stepping, t_final, record_every, initial, reference",
            Experiment::VfpRun => "x_grid, v_grid, dt, cfl_fraction, transport, t_final, record_every, shift, reference_t_final, window",
            Experiment::ParticlesRun => "mode, n, seeds, dt, t_final, record_every, grid, initial, reference, dump_samples",
            Experiment::Certificate => "epsilon, validate, validation",
            Experiment::Counterexample => "epsilon, s0, n, dt, t_final, record_every",
            Experiment::Localization => "a, sigma2_values",
            Experiment::RatesReport => "grid, shift, t_final, record_every, window, epsilon",
            Experiment::List => "",
        }
    }
}

/// Top-level config file. `numerics` is parsed per experiment.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    model: ModelConfig,
    #[serde(default)]
    numerics: serde_json::Value,
    output: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig<N> {
    pub experiment: String,
    pub model: ModelConfig,
    pub numerics: N,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

impl<N: Serialize + DeserializeOwned + Default + Validate> ExperimentConfig<N> {
    /// Parses and validates a config; nothing is computed or written.
    pub fn parse(text: &str, experiment: Experiment) -> Result<(Self, Model), CliError> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if let Some(name) = &raw.experiment {
            if name != experiment.name() {
                return Err(CliError::Config(format!(
                    "config is for experiment '{name}', not '{}'",
                    experiment.name()
                )));
            }
        }
        let numerics: N = if raw.numerics.is_null() {
            N::default()
        } else {
            serde_json::from_value(raw.numerics).map_err(|e| CliError::Config(format!("numerics: {e}")))?
        };
        let model = Model::new(&raw.model)?;
        numerics.validate(&model)?;
        let cfg = ExperimentConfig {
            experiment: experiment.name().to_string(),
            model: raw.model,
            numerics,
            output: raw.output,
        };
        Ok((cfg, model))
    }
}

pub trait Validate {
    fn validate(&self, model: &Model) -> Result<(), CliError>;
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn check_grid(name: &str, g: &Grid1D) -> Result<(), CliError> {
    g.validate().map_err(|e| CliError::Config(format!("{name}: {e}")))
}

fn window_ok(w: (f64, f64)) -> Result<(), CliError> {
    if w.0 < w.1 && w.0 >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("window needs 0 <= lo < hi, got {w:?}")))
    }
}

/// Reference density for distances in a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    #[default]
    None,
    /// Discrete fixed point of the grid family inside `bracket`.
    FixedPoint { bracket: (f64, f64) },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiagram {
    pub sigma2_values: Vec<f64>,
    pub m_lo: f64,
    pub m_hi: f64,
    pub points: usize,
}

impl Default for PhaseDiagram {
    fn default() -> Self {
        PhaseDiagram { sigma2_values: vec![1.0, 0.6, 0.3], m_lo: -2.0, m_hi: 2.0, points: 401 }
    }
}

impl Validate for PhaseDiagram {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if self.sigma2_values.is_empty() {
            return Err(CliError::Config("sigma2_values is empty".into()));
        }
        for &s in &self.sigma2_values {
            positive("sigma2", s)?;
        }
        if !(self.m_lo < self.m_hi) || self.points < 2 {
            return Err(CliError::Config("need m_lo < m_hi and points >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Critical {
    pub bracket: (f64, f64),
    pub tol: f64,
    pub grid: Grid1D,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: f64,
    /// The run starts from the local equilibrium `ρ_{m0}`.
    pub m0: f64,
    pub window: (f64, f64),
}

impl Default for Critical {
    fn default() -> Self {
        Critical {
            bracket: (0.3, 1.0),
            tol: 1e-10,
            grid: Grid1D { lo: -5.0, hi: 5.0, n: 512 },
            dt: 0.01,
            t_final: 200.0,
            record_every: 0.5,
            m0: 1.0,
            window: (10.0, 200.0),
        }
    }
}

impl Validate for Critical {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if !(0.0 < self.bracket.0 && self.bracket.0 < self.bracket.1) {
            return Err(CliError::Config(format!("bad bracket {:?}", self.bracket)));
        }
        positive("tol", self.tol)?;
        check_grid("grid", &self.grid)?;
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("record_every", self.record_every)?;
        window_ok(self.window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPoints {
    pub interval: Option<(f64, f64)>,
    pub tol: f64,
    pub epsilon: Option<f64>,
}

impl Default for FixedPoints {
    fn default() -> Self {
        FixedPoints { interval: None, tol: 1e-12, epsilon: None }
    }
}

impl Validate for FixedPoints {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if let Some((a, b)) = self.interval {
            if !(a < b) {
                return Err(CliError::Config(format!("bad interval [{a}, {b}]")));
            }
        }
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        positive("tol", self.tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeRun {
    /// Defaults to the standard axis for `sigma2` with 512 cells.
    pub grid: Option<Grid1D>,
    /// Defaults to `cfl_fraction` of the explicit limit.
    pub dt: Option<f64>,
    pub cfl_fraction: f64,
    pub scheme: FluxScheme,
    pub stepping: Stepping,
    pub t_final: f64,
    pub record_every: f64,
    pub initial: InitialCondition,
    pub reference: ReferenceSpec,
}

impl Default for PdeRun {
    fn default() -> Self {
        PdeRun {
            grid: None,
            dt: None,
            cfl_fraction: 0.5,
            scheme: FluxScheme::ChangCooper,
            stepping: Stepping::Explicit,
            t_final: 10.0,
            record_every: 0.1,
            initial: InitialCondition::Gaussian { mean: 0.5, std: 0.5 },
            reference: ReferenceSpec::None,
        }
    }
}

impl Validate for PdeRun {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if let Some(g) = &self.grid {
            check_grid("grid", g)?;
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(CliError::Config("cfl_fraction must lie in (0, 1]".into()));
        }
        positive("t_final", self.t_final)?;
        positive("record_every", self.record_every)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VfpRun {
    pub x_grid: Grid1D,
    /// Defaults to `[-7.8σ, 7.8σ]` with 64 cells.
    pub v_grid: Option<Grid1D>,
    pub dt: Option<f64>,
    pub cfl_fraction: f64,
    pub transport: TransportScheme,
    pub t_final: f64,
    pub record_every: f64,
    /// The run starts from `ρ*ₓ` shifted by this amount and a Maxwellian in v.
    pub shift: f64,
    /// Length of the preliminary run that fixes the discrete equilibrium.
    pub reference_t_final: f64,
    pub window: (f64, f64),
}

impl Default for VfpRun {
    fn default() -> Self {
        VfpRun {
            x_grid: Grid1D { lo: -3.0, hi: 3.0, n: 64 },
            v_grid: None,
            dt: None,
            cfl_fraction: 0.9,
            transport: TransportScheme::VanLeer,
            t_final: 20.0,
            record_every: 0.1,
            shift: 0.15,
            reference_t_final: 150.0,
            window: (2.0, 20.0),
        }
    }
}

impl Validate for VfpRun {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        check_grid("x_grid", &self.x_grid)?;
        if let Some(g) = &self.v_grid {
            check_grid("v_grid", g)?;
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(CliError::Config("cfl_fraction must lie in (0, 1]".into()));
        }
        positive("t_final", self.t_final)?;
        positive("record_every", self.record_every)?;
        positive("reference_t_final", self.reference_t_final)?;
        window_ok(self.window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticlesRun {
    pub mode: ParticleMode,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: f64,
    /// Grid for sampling the initial law and building the reference.
    pub grid: Option<Grid1D>,
    pub initial: InitialCondition,
    pub reference: ReferenceSpec,
    pub dump_samples: bool,
}

impl Default for ParticlesRun {
    fn default() -> Self {
        ParticlesRun {
            mode: ParticleMode::Overdamped,
            n: 1024,
            seeds: (0..8).collect(),
            dt: 1e-3,
            t_final: 5.0,
            record_every: 0.1,
            grid: None,
            initial: InitialCondition::Gaussian { mean: 0.5, std: 0.5 },
            reference: ReferenceSpec::None,
            dump_samples: false,
        }
    }
}

impl Validate for ParticlesRun {
    fn validate(&self, model: &Model) -> Result<(), CliError> {
        model.require_1d()?;
        if self.n < 2 {
            return Err(CliError::Config("n must be at least 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds is empty".into()));
        }
        if let Some(g) = &self.grid {
            check_grid("grid", g)?;
        }
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("record_every", self.record_every)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Certificate {
    pub epsilon: Option<f64>,
    pub validate: bool,
    pub validation: ValidationConfig,
}

impl Default for Certificate {
    fn default() -> Self {
        Certificate { epsilon: None, validate: true, validation: ValidationConfig::default() }
    }
}

impl Validate for Certificate {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        let v = &self.validation;
        if v.n < 16 {
            return Err(CliError::Config("validation.n must be at least 16".into()));
        }
        positive("validation.nlsi_t_final", v.nlsi_t_final)?;
        positive("validation.envelope_t_final", v.envelope_t_final)?;
        positive("validation.q1_radius", v.q1_radius)?;
        positive("validation.record_every", v.record_every)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counterexample {
    pub epsilon: f64,
    pub s0: f64,
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: f64,
}

impl Default for Counterexample {
    fn default() -> Self {
        Counterexample { epsilon: 0.05, s0: 0.05, n: 8192, dt: 1e-4, t_final: 5.0, record_every: 0.01 }
    }
}

impl Validate for Counterexample {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        positive("s0", self.s0)?;
        if self.n < 16 {
            return Err(CliError::Config("n must be at least 16".into()));
        }
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("record_every", self.record_every)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Localization {
    pub a: f64,
    pub sigma2_values: Vec<f64>,
}

impl Default for Localization {
    fn default() -> Self {
        Localization { a: 1.0, sigma2_values: vec![0.2, 0.1, 0.05] }
    }
}

impl Validate for Localization {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        if self.sigma2_values.is_empty() {
            return Err(CliError::Config("sigma2_values is empty".into()));
        }
        for &s in &self.sigma2_values {
            positive("sigma2", s)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesReport {
    pub grid: Grid1D,
    /// Initial Gaussian sits this far (in mean) from the positive equilibrium.
    pub shift: f64,
    pub t_final: f64,
    pub record_every: f64,
    pub window: (f64, f64),
    pub epsilon: Option<f64>,
}

impl Default for RatesReport {
    fn default() -> Self {
        RatesReport {
            grid: Grid1D { lo: -4.0, hi: 4.0, n: 1024 },
            shift: 0.1, t_final: 20.0, record_every: 0.05, window: (2.0, 20.0), epsilon: None }
    }
}

impl Validate for RatesReport {
    fn validate(&self, _: &Model) -> Result<(), CliError> {
        check_grid("grid", &self.grid)?;
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        positive("shift", self.shift.abs())?;
        positive("t_final", self.t_final)?;
        positive("record_every", self.record_every)?;
        window_ok(self.window)
    }
}
