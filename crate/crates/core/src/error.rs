use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("jet shape mismatch: (order {0}, nvars {1}) vs (order {2}, nvars {3})")]
    JetShape(usize, usize, usize, usize),

    #[error("jet argument out of range: {0}")]
    JetRange(String),

    #[error("domain error: {0}")]
    JetDomain(String),

    #[error("syntax error at offset {offset}: {expected}")]
    Syntax { offset: usize, expected: String },

    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("unbound name `{0}`")]
    Unbound(String),

    #[error("invalid system: {0}")]
    Validation(String),

    #[error("hyperbolicity violated: eigenvalue {re} + {im}i has |Re| <= {tol}")]
    Hyperbolicity { re: f64, im: f64, tol: f64 },

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("theta-rate floor violated at theta={theta}, r={r}: rate {rate}")]
    ThetaRate { theta: f64, r: f64, rate: f64 },

    #[error("step size underflow at t={t} (h={h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite state at t={t}")]
    NonFinite { t: f64 },

    #[error("step limit exceeded at t={t}")]
    StepLimit { t: f64 },

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("periodicity defect {defect:e} exceeds tolerance {tol:e}")]
    Periodicity { defect: f64, tol: f64 },

    #[error("point (theta={theta}, r={r}) is outside the solved domain (outer radius {outer})")]
    OutsideDomain { theta: f64, r: f64, outer: f64 },

    #[error("point (theta={theta}, r={r}) lies on a patch seam")]
    Seam { theta: f64, r: f64 },

    #[error("patch {patch}, coefficient order {order}: {source}")]
    Patch {
        patch: usize,
        order: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("radial curve {index}: {source}")]
    Curve {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("patch {patch} disagrees with its inner neighbour by {jump:e} on the seam (limit {limit:e}); use thinner annuli")]
    SeamJump { patch: usize, jump: f64, limit: f64 },

    #[error("seed residual {defect:e} inside the first radial curve exceeds {limit:e}; start the schedule at a smaller radius")]
    SeedDefect { defect: f64, limit: f64 },

    #[error("not stabilizable: {0}")]
    Stabilizability(String),

    #[error("Riccati Newton iteration stalled (residual {0:e})")]
    RiccatiStall(f64),

    #[error("relative-degree degeneracy: input coefficient {0:e} vanishes")]
    InputDegeneracy(f64),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("corrupted document: {0}")]
    Corrupted(String),

    #[error("simulation failed at t={t}: {source}")]
    Simulation {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by leaving the region where the solution or
    /// the polar reduction is valid.
    pub fn is_domain(&self) -> bool {
        match self {
            Error::OutsideDomain { .. } | Error::ThetaRate { .. } | Error::Seam { .. } => true,
            Error::Patch { source, .. }
            | Error::Curve { source, .. }
            | Error::Simulation { source, .. } => source.is_domain(),
            _ => false,
        }
    }
}
