//! Weighted nonlinear least squares and the four model families fitted to
//! emitter data: jitter-convolved g², saturation, polarization and
//! multi-Lorentzian spectra.

pub mod engine;
pub mod g2;
pub mod polarization;
pub mod saturation;
pub mod spectrum;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{nlls_minimize, Bounds, Model, SolverOptions};
pub use g2::{fit_g2, G2Model};
pub use polarization::{fit_polarization, PolarizationFitModel};
pub use saturation::{fit_saturation, SaturationFitModel};
pub use spectrum::{fit_spectrum, LorentzianPeak, Spectrum, SpectrumModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("no data points")]
    EmptyData,
    #[error("x, y and sigma lengths differ ({0}, {1}, {2})")]
    LengthMismatch(usize, usize, usize),
    #[error("non-finite or non-positive-sigma data at row {0}")]
    BadData(usize),
    #[error("initial parameter {name} = {value} is outside its bounds")]
    InitOutOfBounds { name: String, value: f64 },
    #[error("normal matrix is singular at the solution; parameters are not identifiable")]
    SingularJacobian,
    #[error("histogram too coarse: {0} bins within |tau| < 5·tau1 (need >= 8)")]
    HistogramTooCoarse(usize),
    #[error("histogram must be normalized before fitting (stage {0})")]
    WrongStage(&'static str),
    #[error("need at least 3 distinct powers, got {0}")]
    DegeneratePowers(usize),
    #[error("angles cover {0:.1} degrees of the 180 degree period (need >= 120)")]
    InsufficientCoverage(f64),
    #[error("{params} parameters for {samples} samples; too many peaks")]
    PeaksExceedData { params: usize, samples: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A quantity computed from fitted parameters, with propagated uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Present only for converged fits.
    pub stderr: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Sum of squared weighted residuals.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default)]
    pub derived: Vec<Derived>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn param_stderr(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.stderr.as_ref().map(|s| s[i])
    }

    pub fn derived(&self, name: &str) -> Option<&Derived> {
        self.derived.iter().find(|d| d.name == name)
    }

    pub(crate) fn push_derived(&mut self, name: &str, value: f64, gradient: Option<&[f64]>) {
        let stderr = match (gradient, &self.covariance) {
            (Some(g), Some(cov)) => {
                let mut var = 0.0;
                for (i, gi) in g.iter().enumerate() {
                    for (j, gj) in g.iter().enumerate() {
                        var += gi * cov[i][j] * gj;
                    }
                }
                Some(var.max(0.0).sqrt())
            }
            _ => None,
        };
        self.derived.push(Derived { name: name.to_string(), value, stderr });
    }
}
