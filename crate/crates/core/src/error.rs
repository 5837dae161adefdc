//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::model::ClientId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid client profile {id}: {reason}")]
    InvalidProfile { id: ClientId, reason: String },

    #[error("invalid system config: {0}")]
    InvalidConfig(String),

    #[error("CPU frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),

    #[error("price must be positive, got {0}")]
    NonPositivePrice(f64),

    #[error("latency {latency} s outside valid domain: {reason}")]
    LatencyDomain { latency: f64, reason: String },

    #[error("client {id} infeasible: fastest round {t_min} s exceeds deadline {t0} s")]
    InfeasibleClient { id: ClientId, t_min: f64, t0: f64 },

    #[error("coalition infeasible: {0}")]
    InfeasibleCoalition(String),

    #[error("empty coalition")]
    EmptyCoalition,

    #[error("no feasible candidates: {0}")]
    NoCandidates(String),

    #[error("no uniform price keeps at least one participant")]
    NoUniformPrice,

    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

pub type Result<T> = std::result::Result<T, Error>;
