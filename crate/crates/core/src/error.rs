use thiserror::Error;

/// Every failure the library can report.
///
/// Variants fall in two groups. Degeneracies (a trial landed on or next to a
/// singular set) are expected at a small rate in random experiments and are
/// recorded rather than treated as bugs; see [`Error::is_degenerate`].
/// Everything else is either invalid input or a broken numerical invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("matrix is not symplectic (defect {defect:.3e} > {tol:.1e})")]
    NotSymplectic { defect: f64, tol: f64 },

    #[error("matrix is not in sp(2n) (defect {defect:.3e})")]
    NotHamiltonian { defect: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("det(M - I) = {value:.3e} is within the degeneracy tolerance")]
    DegenerateEndpoint { value: f64 },

    #[error("Cayley image asymmetric by {0:.3e}")]
    Asymmetric(f64),

    #[error("consecutive circle values {index}->{next} differ by {gap:.3} rad; refine the path", next = index + 1)]
    RefinementNeeded { index: usize, gap: f64 },

    #[error("path endpoint lies in Sp0 (det(M - I) = {value:.3e})")]
    Admissibility { value: f64 },

    #[error("endpoint extension failed: {0}")]
    Extension(String),

    #[error("sum of Cayley images is singular (smallest |eigenvalue| {0:.3e})")]
    SignatureDegenerate(f64),

    #[error("step {step} has det(A) = {det:.3e}; no generating function")]
    NoGeneratingFunction { step: usize, det: f64 },

    #[error("Hessian is numerically singular (eigenvalues in (-{band:.1e}, {band:.1e}): {count})")]
    DegenerateHessian { band: f64, count: usize },

    #[error("off-diagonal pair {index} has negative product {product:.3e}")]
    Symmetrization { index: usize, product: f64 },

    #[error("Mobius map is singular (det {0:.3e})")]
    DegenerateMobius(f64),

    #[error("lifted angle {0} is an odd multiple of pi; crossing count undefined")]
    DegenerateCount(f64),

    #[error("Fokker-Planck domain too small: boundary mass {0:.3e}")]
    DomainTooSmall(f64),

    #[error("time step {dt:.3e} exceeds stability limit {limit:.3e}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("density violates a sanity check: {0}")]
    BoundViolation(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("numerical consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    /// True for failures caused by a trial sitting on (or too close to) a
    /// singular set. Experiments count these instead of aborting.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateEndpoint { .. }
                | Error::Admissibility { .. }
                | Error::Extension(_)
                | Error::SignatureDegenerate(_)
                | Error::NoGeneratingFunction { .. }
                | Error::DegenerateHessian { .. }
                | Error::Symmetrization { .. }
                | Error::DegenerateMobius(_)
                | Error::DegenerateCount(_)
                | Error::RefinementNeeded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
