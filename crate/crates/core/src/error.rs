use thiserror::Error;

use crate::model::AdmissibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Innovation variance `Psi = |gamma|^2 Sigma + nu + mu` is not positive:
    /// the output channel carries no usable noise floor.
    #[error("singular innovation variance Psi = {psi:e}")]
    SingularInnovation { psi: f64 },

    #[error(
        "model violates the Heisenberg admissibility constraint \
         (min eigenvalue {:e}, noise covariance min eigenvalue {:e}, mu slack {:e})",
        .0.min_eigenvalue,
        .0.noise_min_eigenvalue,
        .0.mu_slack
    )]
    Inadmissible(AdmissibilityReport),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid under-resolved: kernel variance {kernel_variance:e} < 4 cell areas ({cell_area:e})")]
    GridUnderresolved { kernel_variance: f64, cell_area: f64 },

    #[error("zero evidence r(eta) = {evidence:e}")]
    ZeroEvidence { evidence: f64 },

    #[error("Fock truncation dominated: tail mass {tail_mass:e} exceeds 1e-6")]
    TruncationDominated { tail_mass: f64 },
}

impl Error {
    /// Stable machine-readable tag used in CLI error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularInnovation { .. } => "SingularInnovation",
            Error::Inadmissible(_) => "Inadmissible",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::GridUnderresolved { .. } => "GridUnderresolved",
            Error::ZeroEvidence { .. } => "ZeroEvidence",
            Error::TruncationDominated { .. } => "TruncationDominated",
        }
    }

    /// `true` for failures that stem from bad inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Inadmissible(_) | Error::InvalidParameter(_))
    }
}
