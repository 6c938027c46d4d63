//! Process reconstruction from tomography counts.
//!
//! Two estimators are provided: direct linear inversion over the anchor
//! inputs {H, V, D, L}, and a Poisson maximum-likelihood fit over all 36
//! settings with χ = T†T, which is positive by construction. Process
//! fidelity, efficiency and Monte-Carlo error bars sit on top of either.

mod counts;
mod fidelity;
mod likelihood;
mod linear;
mod mle;
mod monte_carlo;
pub mod nelder_mead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ProcessMatrix};
use crate::matrix::{ComplexMatrix, MatrixError, C64};
use crate::polarization::PolarizationError;

pub use counts::{normalized_probs, CountTable, NormalizedProbs};
pub use fidelity::{efficiency_of, process_fidelity};
pub use likelihood::nll;
pub use linear::{linear_inversion, ANCHORS};
pub use mle::{mle_reconstruct, MleOptions};
pub(crate) use monte_carlo::monte_carlo_around;
pub use monte_carlo::{monte_carlo_errors, FidelityEstimate, MIN_TRIALS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("linear inversion system is singular")]
    SingularSystem,
    #[error("process matrix has zero trace")]
    ZeroTrace,
    #[error("at least {min} Monte-Carlo trials are required, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("{dropped} of {trials} Monte-Carlo reconstructions failed to converge")]
    TooManyFailures { dropped: usize, trials: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearInversion,
    Mle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub chi: ProcessMatrix,
    pub method: Method,
    /// Poisson negative log-likelihood at the estimate; MLE only.
    pub nll: Option<f64>,
    /// Objective evaluations for MLE; 1 for linear inversion.
    pub iterations: usize,
    pub converged: bool,
    pub min_eigenvalue: f64,
    /// Analyzer pairs with no detected light that fell back to (½, ½).
    pub degenerate_pairs: usize,
}

/// JSON form of a [`ReconstructionResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub method: Method,
    pub chi_real: [[f64; 4]; 4],
    pub chi_imag: [[f64; 4]; 4],
    pub nll: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub min_eigenvalue: f64,
}

impl ReconstructionResult {
    pub fn to_record(&self) -> ReconstructionRecord {
        let m = self.chi.matrix();
        ReconstructionRecord {
            method: self.method,
            chi_real: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].re)),
            chi_imag: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].im)),
            nll: self.nll,
            iterations: self.iterations,
            converged: self.converged,
            min_eigenvalue: self.min_eigenvalue,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("record serializes")
    }
}

impl ReconstructionRecord {
    pub fn chi(&self) -> Result<ProcessMatrix, TomographyError> {
        let mut m = ComplexMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = C64::new(self.chi_real[i][j], self.chi_imag[i][j]);
            }
        }
        Ok(ProcessMatrix::new(m)?)
    }
}
