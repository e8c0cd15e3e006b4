use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no intentions for agent {agent}")]
    NoIntentions { agent: usize },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("scenario count must be at least 1")]
    NoScenarios,
    #[error("tree capacity for depth {depth} and branching {branching} exceeds the index range")]
    CapacityOverflow { depth: usize, branching: usize },
    #[error("child {action} of node {node} is beyond the tree depth")]
    DepthOverflow { node: usize, action: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("incomplete forest: scenario {scenario} is missing returns")]
    IncompleteForest { scenario: usize },
    #[error("empty expansion log")]
    EmptyLog,
    #[error("importance weights sum to zero")]
    ZeroWeights,
    #[error("proposal assigns zero mass to intention {intention} of agent {agent}")]
    AbsoluteContinuity { agent: usize, intention: usize },
    #[error("empty action sequence")]
    EmptyActionSequence,
    #[error("scene too dense: placed {placed} of {requested} agents")]
    SceneTooDense { placed: usize, requested: usize },
    #[error("unsupported scene format version {0}")]
    SceneVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
