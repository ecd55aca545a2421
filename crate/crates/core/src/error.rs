use thiserror::Error;

use crate::cluster::{NodeId, PodId};
use crate::kernel::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event at t={time} precedes the clock (t={clock})")]
    Causality { time: SimTime, clock: SimTime },

    #[error("unknown pod {0}")]
    UnknownPod(PodId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown node template `{0}`")]
    UnknownTemplate(String),

    #[error("binding {pod} -> {node} rejected: {reason}")]
    BindRejected {
        pod: PodId,
        node: NodeId,
        reason: String,
    },

    #[error("illegal {entity} transition {from} -> {to}")]
    IllegalTransition {
        entity: String,
        from: String,
        to: String,
    },

    #[error("pod {0} is not bound to any node")]
    NotBound(PodId),

    #[error("pinned pod {0} cannot be migrated")]
    PinnedEviction(PodId),

    #[error("pod {0} is not evicted")]
    NotEvicted(PodId),

    #[error("node {node} has no billing boundary at t={t}")]
    OffBoundary { node: NodeId, t: SimTime },

    #[error("node {0} is terminated")]
    NodeTerminated(NodeId),

    #[error("node {0} is not ready")]
    NodeNotReady(NodeId),

    #[error("billing window ends at t={end}, before launch at t={launch}")]
    BillingWindow { launch: SimTime, end: SimTime },

    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("trace line {line}, field `{field}`: {message}")]
    Trace {
        line: u64,
        field: String,
        message: String,
    },

    #[error("negative resource quantity: cpu={cpu}, mem={mem}")]
    NegativeResource { cpu: i64, mem: i64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
