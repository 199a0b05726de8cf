use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    // integrator
    #[error("step size underflow at s = {s} (h = {h:e}); stiffness or a singular locus")]
    StepUnderflow { s: f64, h: f64 },
    #[error("maximum number of steps ({max_steps}) exceeded at s = {s}")]
    MaxStepsExceeded { max_steps: usize, s: f64 },
    #[error("non-finite state encountered at s = {s}")]
    NonFiniteState { s: f64 },
    #[error("event not found before s = {s_max}")]
    EventNotFound { s_max: f64 },
    #[error("s = {s} outside trajectory span [{start}, {end}]")]
    OutOfSpan { s: f64, start: f64, end: f64 },
    #[error("component {component} never attains {target} on the trajectory")]
    NotAttained { component: usize, target: f64 },

    // geometry
    #[error("point is not stationary (|field| = {norm:e})")]
    NotStationary { norm: f64 },
    #[error("no eigenvalue with positive real part")]
    NoUnstableDirection,
    #[error("{count} eigenvalues with positive real part, expected exactly one")]
    MultipleUnstable { count: usize },
    #[error("unstable eigenvector is tangent to the singular locus")]
    NonTransversal,
    #[error("point does not lie on the equation (F = {residual:e})")]
    NotOnEquation { residual: f64 },

    // solvers
    #[error("iteration diverged: {0}")]
    Diverged(String),
    #[error("no convergence within {iterations} iterations (residual {residual:e})")]
    MaxIter { iterations: usize, residual: f64 },
    #[error("residual undefined at {at}: {reason}")]
    ResidualUndefined { at: f64, reason: String },
    #[error("residual has no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("singular Jacobian in Newton iteration")]
    SingularJacobian,
    #[error("could not bracket the shooting parameter: {0}")]
    BracketNotFound(String),

    // models
    #[error("outside the transformation domain: {0}")]
    DomainError(String),
    #[error("x = {x} outside the solution range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
}
