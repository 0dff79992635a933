use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("phenotype and genotype vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("degenerate fit: residual sum of squares is zero")]
    DegenerateFit,
    #[error("no informative subgroup")]
    NoInformativeSubgroup,
    #[error("standardized-effect quantities unavailable for subgroup {0}; supply sigma_hat or sufficient statistics")]
    MissingStandardized(usize),
    #[error("sufficient statistics unavailable for subgroup {0}")]
    MissingSuffStats(usize),
    #[error("complete separation in logistic regression")]
    Separation,
    #[error("only one outcome class present")]
    SingleClass,
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),
    #[error("quadrature did not reach tolerance: estimated relative error {0:.3e}")]
    QuadratureTolerance(f64),
    #[error("{0} subgroups exceeds the limit of {1}")]
    TooManySubgroups(usize, usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
