use thiserror::Error;

/// Errors raised by the model, mechanisms and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),
    #[error("invalid value for {field}: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("malformed attack: {0}")]
    MalformedAttack(String),
    #[error("infeasible attack: service `{0}` is below its threshold")]
    InfeasibleAttack(String),
    #[error("unstable attack: attacker `{0}` is redundant")]
    UnstableAttack(String),
    #[error("stake shares sum to {actual}, expected {expected}")]
    ShareSumMismatch { expected: String, actual: String },
    #[error("a split needs at least two parts")]
    TooFewParts,
    #[error("split is not a participating (type II) split: {0}")]
    NotTypeTwoSplit(String),
    #[error("withholding breaks feasibility: {0}")]
    FeasibilityBroken(String),
    #[error("instance too large: {0} combinations exceed the enumeration guard")]
    InstanceTooLarge(u128),
    #[error("unknown group {0}")]
    UnknownGroup(String),
    #[error("committed stake {value} out of range [0, {bound}]")]
    StakeOutOfRange { value: String, bound: String },
    #[error("service `{0}` is not binding: attackers do not exceed its threshold")]
    NonBindingInput(String),
    #[error("minimal slashing program is infeasible")]
    InfeasibleProgram,
    #[error("alternative aggregation charges service `{0}` less than its threshold")]
    AltRuleInfeasible(String),
    #[error("regime boundary undefined: both services have the same threshold stake")]
    DegenerateBoundary,
    #[error("threshold alpha = {0} is degenerate (must lie strictly inside (0, 1))")]
    AlphaDegenerate(f64),
    #[error("model is not Erdős–Rényi: {0} service blocks")]
    NotErdosRenyi(usize),
    #[error("sybil count must be at least 1")]
    InvalidSybilCount,
    #[error("coalition stake on service {0} is zero")]
    ZeroCoalitionStake(usize),
    #[error("service block {0} is empty")]
    EmptyBlock(usize),
    #[error("no profitable withholding exists in this environment")]
    NoDeviationFound,
    #[error("best-response iteration did not converge in {0} rounds")]
    NoConvergence(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable kebab-case name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownService(_) => "unknown-service",
            Error::UnknownOperator(_) => "unknown-operator",
            Error::DuplicateId(_) => "duplicate-id",
            Error::InvalidValue { .. } => "invalid-value",
            Error::MalformedAttack(_) => "malformed-attack",
            Error::InfeasibleAttack(_) => "infeasible-attack",
            Error::UnstableAttack(_) => "unstable-attack",
            Error::ShareSumMismatch { .. } => "share-sum-mismatch",
            Error::TooFewParts => "too-few-parts",
            Error::NotTypeTwoSplit(_) => "not-type-two-split",
            Error::FeasibilityBroken(_) => "feasibility-broken",
            Error::InstanceTooLarge(_) => "instance-too-large",
            Error::UnknownGroup(_) => "unknown-group",
            Error::StakeOutOfRange { .. } => "stake-out-of-range",
            Error::NonBindingInput(_) => "non-binding-input",
            Error::InfeasibleProgram => "infeasible-program",
            Error::AltRuleInfeasible(_) => "alt-rule-infeasible",
            Error::DegenerateBoundary => "degenerate-boundary",
            Error::AlphaDegenerate(_) => "alpha-degenerate",
            Error::NotErdosRenyi(_) => "not-erdos-renyi",
            Error::InvalidSybilCount => "invalid-sybil-count",
            Error::ZeroCoalitionStake(_) => "zero-coalition-stake",
            Error::EmptyBlock(_) => "empty-block",
            Error::NoDeviationFound => "no-deviation-found",
            Error::NoConvergence(_) => "no-convergence",
            Error::InvalidModel(_) => "invalid-model",
            Error::Parse(_) => "parse-error",
        }
    }
}
