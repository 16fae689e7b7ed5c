use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("term overflows the working precision at k = {k}")]
    TermRange { k: u32 },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("unknown preset `{0}`; valid presets are ce1, ce2, ce3, ce4")]
    UnknownPreset(String),
    #[error("criterion {criterion} is not defined for the {model} model")]
    UnsupportedCriterion { criterion: String, model: String },
    #[error("set index k = {k} exceeds k_max = {k_max}")]
    SetIndex { k: u32, k_max: u32 },
    #[error("sign window does not cover index {index} and the point owns no rng")]
    OutOfWindow { index: i64 },
    #[error("horizon N_{k} is too large to realize as an integer count")]
    HorizonOverflow { k: u32 },
    #[error("N must be in 1..=64, got {0}")]
    RademacherRange(u32),
    #[error("nonfinite replicate at sample {sample} (seed {seed})")]
    NonfiniteReplicate { sample: u64, seed: u64 },
    #[error("zero-variance sample; cannot studentize")]
    ZeroVariance,
    #[error("instance too large for brute-force enumeration: {0}")]
    OracleCapacity(String),
    #[error("preset Theorem row mismatch for {criterion}: expected {expected}, got {got}")]
    TheoremMismatch {
        criterion: String,
        expected: String,
        got: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
