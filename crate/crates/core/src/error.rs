use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operator is not Hermitian (max |A - A^H| = {0:.3e})")]
    NotHermitian(f64),
    #[error("operator is not unitary (||U^H U - 1||_F = {0:.3e})")]
    NotUnitary(f64),
    #[error("non-finite entry in operator")]
    NonFinite,
    #[error("time {t} s outside [0, {t_p}] s")]
    TimeOutOfRange { t: f64, t_p: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("degenerate effective field (omega1 = delta omega = 0) at t = {0} s")]
    SingularEffectiveField(f64),
    #[error("phase `{0}` undefined: both components are zero but the magnitude is used")]
    UndefinedPhase(&'static str),
    #[error("rotation triple not normalized (|v|^2 = {0})")]
    Unnormalized(f64),
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("waveform table: {0}")]
    Table(String),
    #[error("pulse pair mismatch: {0}")]
    PulsePair(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
