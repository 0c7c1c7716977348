use thiserror::Error;

use crate::bits::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bit length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("seed {seed} does not fit in a {width}-bit register")]
    SeedOutOfRange { seed: u32, width: u32 },

    #[error("majority voting needs an odd positive vote count, got {0}")]
    EvenVotes(usize),

    #[error("requested {requested} CRPs per verifier but only {available} challenges were generated")]
    TooManyCrps { requested: usize, available: usize },

    #[error("verifier {verifier} holds no CRPs for prover {prover}")]
    NoCrps { verifier: NodeId, prover: NodeId },

    #[error("verifier {verifier} used every CRP it holds for prover {prover}; re-enrollment required")]
    CrpsExhausted { verifier: NodeId, prover: NodeId },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("link {0} is listed more than once")]
    DuplicateLink(NodeId),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("not enough traffic: need {required} records, have {available}")]
    InsufficientTraffic { required: usize, available: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
