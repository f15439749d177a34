use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("energy cutoff {requested} exceeds supported maximum {max}")]
    CutoffExceeded { requested: usize, max: usize },

    #[error("state is not normalized (norm² = {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wave function vanishes at ({x}, {y})")]
    AtNode { x: f64, y: f64 },

    #[error("polar velocity undefined at the origin")]
    OriginSingular,

    #[error("step size underflow at t = {t} near {position:?}")]
    StepUnderflow { t: f64, position: Vec<f64> },

    #[error("vorticity indeterminate: a root of the top-shell polynomial lies on the unit circle (|z| = {modulus})")]
    Indeterminate { modulus: f64 },

    #[error("top energy shell is empty; reduce the cutoff first")]
    EmptyTopShell,

    #[error("no state with {category} vorticity exists for cutoff m = {m}")]
    ImpossibleCategory { m: usize, category: &'static str },

    #[error("node tracking lost at T = {t}: {reason}")]
    TrackingLost { t: f64, reason: String },

    #[error("drift field build failed: {masked} of {total} cells masked")]
    BuildFailed { masked: usize, total: usize },

    #[error("density has support where the reference measure vanishes (cell {index})")]
    SupportMismatch { index: usize },

    #[error("Courant number {courant} exceeds limit {limit} after velocity capping")]
    CflViolated { courant: f64, limit: f64 },

    #[error("point ({q}, {dev_e}) lies on a separatrix of the orbit constant")]
    OnSeparatrix { q: f64, dev_e: f64 },

    #[error("entropy conservation and permutation checks disagree")]
    TheoremViolated,

    #[error("too many failed trajectories: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed state file: {0}")]
    StateFile(String),
}
