use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid moment pair: second_moment={second_moment} < mean^2={mean_sq}")]
    InvalidMoments { second_moment: f64, mean_sq: f64 },
    #[error("not normalized (expected mass≈1): mass={mass}")]
    NotNormalized { mass: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("negative or non-finite cell {index}: value={value}")]
    InvalidCell { index: usize, value: f64 },
    #[error("temperature too low for grid precision")]
    Underflow,
    #[error("tail mass {mass:e} outside [{lo}, {hi}] exceeds 1e-12")]
    TailMass { mass: f64, lo: f64, hi: f64 },
    #[error("CFL violation: dt={dt} exceeds admissible dt={max_dt}")]
    Cfl { dt: f64, max_dt: f64 },
    #[error("non-finite state: {0}")]
    NonFinite(String),
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
    #[error("sigma2={sigma2} is not sub-critical (no positive fixed point); see the global super-critical variant")]
    NotSubcritical { sigma2: f64 },
    #[error("not at the critical temperature: |f'(0) - 1| = {deviation:e} > 1e-4")]
    NotCritical { deviation: f64 },
    #[error("localization regime not reached: no fixed point within {radius} of a={a}")]
    NoLocalFixedPoint { a: f64, radius: f64 },
    #[error("no Holley-Stroock decomposition with finite oscillation")]
    NoDecomposition,
    #[error("fit failed: {0}")]
    Fit(String),
}

impl Error {
    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Underflow
                | Error::Cfl { .. }
                | Error::NonFinite(_)
                | Error::TailMass { .. }
                | Error::NoLocalFixedPoint { .. }
                | Error::NoDecomposition
                | Error::Fit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
