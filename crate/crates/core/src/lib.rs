//! Distributed PUF-based authentication with verifier- and challenge-specific
//! challenge scrambling, a simulated deployment, and a harness that mounts
//! machine-learning modeling attacks against the scrambled and unscrambled
//! protocol.

pub mod adversary;
pub mod bits;
pub mod error;
pub mod experiments;
pub mod lfsr;
pub mod ml_attack;
pub mod protocol;
pub mod puf;
pub mod records;
pub mod scrambler;

pub use bits::{Bits, Challenge, NodeId, Response, ResponseBit};
pub use error::{Error, Result};
pub use lfsr::Lfsr;
pub use protocol::{CrpRecord, Simulation};
pub use puf::PufInstance;
pub use scrambler::{Scrambler, ScramblerConfig, ScramblingPattern};
