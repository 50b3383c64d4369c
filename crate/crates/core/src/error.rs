use thiserror::Error;

/// Errors shared by all modules. Numeric payloads are carried as `f64`
/// regardless of the working scalar type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix {what} is not symmetric positive definite")]
    NotSpd { what: &'static str },

    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: String },

    #[error("matrix A is not Hurwitz (max eigenvalue real part {max_re:.6e})")]
    NonHurwitz { max_re: f64 },

    #[error("Lyapunov solve degenerated: {what}")]
    SingularSystem { what: String },

    #[error("stability condition already infeasible at h_lo = {h_lo:.6e}")]
    NoFeasiblePoint { h_lo: f64 },

    #[error("delay bracket not found: {what}")]
    BracketNotFound { what: String },

    #[error("stability certificate infeasible (lambda_min = {lambda_min:.6e})")]
    InfeasibleCertificate { lambda_min: f64 },

    #[error("derivative order {j} exceeds kernel degree {lambda}")]
    OrderExceedsDegree { j: usize, lambda: usize },

    #[error("kernel degree {lambda} exceeds the supported maximum of 8")]
    DegreeTooLarge { lambda: usize },

    #[error("evaluation point psi = {psi:.6e} outside the window [-{sigma_win:.6e}, 0]")]
    OutOfWindow { psi: f64, sigma_win: f64 },

    #[error("composite Simpson needs an even subinterval count, got m = {m}")]
    OddSubintervals { m: usize },

    #[error("kernel order mismatch: expected j = {expected}, got j = {got}")]
    KernelOrderMismatch { expected: usize, got: usize },

    #[error("history buffer cold: need {needed} samples, have {have}")]
    BufferCold { needed: usize, have: usize },

    #[error("nominal inertia ill-conditioned (cond = {cond:.3e})")]
    IllConditionedMhat { cond: f64 },

    #[error("inertia matrix ill-conditioned (cond = {cond:.3e})")]
    IllConditionedInertia { cond: f64 },

    #[error("ASMC requires the nominal model N_hat but none was provided")]
    NominalModelRequired,

    #[error("non-physical plant parameter: {what}")]
    NonPhysicalParams { what: String },

    #[error("trace span is empty")]
    EmptyTrace,

    #[error("invalid parameter: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
