use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{gibbs_density, DensityGrid1D, Grid1D};
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Initial densities for the grid solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Gaussian { mean: f64, std: f64 },
    Mixture { components: Vec<MixtureComponent> },
    /// A member `ρ_m` of the local-equilibrium family.
    Gibbs { m: f64 },
    /// `x,value` CSV file with the same cell centers as the solver grid.
    Csv { path: String },
}

impl InitialCondition {
    /// Builds the density, widening Gaussian components narrower than two
    /// cells. Returns the density and a warning per widened component.
    pub fn build(&self, model: &Model, axis: &Grid1D) -> Result<(DensityGrid1D, Vec<String>)> {
        let mut warnings = Vec::new();
        let min_std = 2.0 * axis.dx();
        let mut widen = |std: f64| {
            if std < min_std {
                warnings.push(format!("component std {std} widened to {min_std} (2 cells)"));
                min_std
            } else {
                std
            }
        };
        let rho = match self {
            InitialCondition::Gaussian { mean, std } => {
                DensityGrid1D::gaussian(*axis, *mean, widen(*std))?
            }
            InitialCondition::Mixture { components } => {
                let parts: Vec<(f64, f64, f64)> =
                    components.iter().map(|c| (c.weight, c.mean, widen(c.std))).collect();
                DensityGrid1D::mixture(*axis, &parts)?
            }
            InitialCondition::Gibbs { m } => gibbs_density(model, axis, *m)?,
            InitialCondition::Csv { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    crate::Error::InvalidArgument(format!("cannot read {path}: {e}"))
                })?;
                let rho = DensityGrid1D::from_csv(&text)?;
                let a = rho.axis();
                let tol = 1e-9 * axis.dx();
                if a.n != axis.n || (a.lo - axis.lo).abs() > tol || (a.hi - axis.hi).abs() > tol {
                    return Err(crate::Error::GridMismatch(format!(
                        "csv grid {a:?} does not match solver grid {axis:?}"
                    )));
                }
                DensityGrid1D::new(*axis, rho.into_values())?.normalized()?
            }
        };
        Ok((rho, warnings))
    }
}
