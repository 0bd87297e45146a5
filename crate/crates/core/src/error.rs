use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a stochastic matrix: {0}")]
    NonStochastic(String),
    #[error("chain is not ergodic (reducible or periodic)")]
    NotErgodic,
    #[error("chain is at or above the Kesten-Stigum threshold (d*lambda^2 = {0})")]
    AboveThreshold(f64),
    #[error("second eigenvalue is zero; no degree-1 statistic")]
    DegenerateSpectrum,
    #[error("second eigenvalue is not real")]
    ComplexEigenvector,
    #[error("size limit exceeded: {what} needs {needed}, cap is {cap}")]
    SizeLimit { what: String, needed: f64, cap: usize },
    #[error("vertex {0} has no ancestor {1} levels up")]
    NoSuchAncestor(usize, i64),
    #[error("vertex {0} has height below {1}")]
    TooShallow(usize, usize),
    #[error("support of size {0} exceeds 2^(K+1) = {1}")]
    TooLarge(usize, usize),
    #[error("support is not below vertex {0}")]
    NotBelow(usize),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("no such vertex: {0}")]
    InvalidVertex(usize),
    #[error("state {0} out of range")]
    InvalidState(usize),
    #[error("labeling does not cover vertex {0}")]
    IncompleteLabeling(usize),
    #[error("observation missing leaf {0}")]
    IncompleteObservation(usize),
    #[error("observation has zero likelihood")]
    ZeroLikelihood,
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("domains overlap at vertex {0}")]
    OverlappingDomains(usize),
    #[error("vertices {0} and {1} are comparable; not an antichain")]
    NotAntichain(usize, usize),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("degree {0} exceeds allowed {1}")]
    DegreeTooHigh(usize, usize),
    #[error("function has zero variance")]
    ZeroVariance,
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Default cap on dense state counts and vertex counts.
pub const DEFAULT_SIZE_CAP: usize = 1 << 20;

/// State cap, overridable through `BOTLAB_SIZE_CAP`.
pub fn size_cap() -> usize {
    std::env::var("BOTLAB_SIZE_CAP")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&c| c > 0)
        .unwrap_or(DEFAULT_SIZE_CAP)
}

/// Errors unless `q^n` fits under the cap; returns the state count.
pub fn check_states(q: usize, n: usize, what: &str) -> Result<usize> {
    let cap = size_cap();
    let needed = (q as f64).powi(n as i32);
    if needed > cap as f64 {
        return Err(Error::SizeLimit { what: what.to_string(), needed, cap });
    }
    Ok(q.pow(n as u32))
}
