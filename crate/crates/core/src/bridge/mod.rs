//! Line-delimited JSON protocol for out-of-process generators and metrics.
//!
//! Every request is one JSON object on one line carrying `"v": 1`, a numeric
//! `id` and an `op`. The back-end answers each request with exactly one line
//! carrying the same `id`. See `PROTOCOL.md` at the repository root.

pub mod client;
pub mod conformance;
pub mod echo;

use serde::{Deserialize, Serialize};

use crate::sample::{Modality, PixelMask, Sample};

pub use client::{BridgeClient, BridgeEndpoint, RawSession, Transport};
pub use conformance::{run_conformance, CheckResult, ConformanceOptions};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Regenerate,
    RegenerateMasked,
    GenerateInitial,
    Distance,
    /// Liveness probe; `delay_ms` asks the back-end to wait before replying.
    Ping,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Regenerate => "regenerate",
            Op::RegenerateMasked => "regenerate_masked",
            Op::GenerateInitial => "generate_initial",
            Op::Distance => "distance",
            Op::Ping => "ping",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub v: u32,
    pub id: u64,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PixelMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

impl BridgeRequest {
    /// A request with only the envelope filled in; the client assigns `id`.
    pub fn new(op: Op) -> Self {
        BridgeRequest {
            v: PROTOCOL_VERSION,
            id: 0,
            op,
            sample: None,
            mask: None,
            prompt: None,
            modality: None,
            metric: None,
            reference: None,
            seed: None,
            delay_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    /// `null` only when the request line could not be parsed far enough to
    /// recover its id.
    pub id: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Sample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeResponse {
    pub fn ok(id: u64) -> Self {
        BridgeResponse {
            id: Some(id),
            ok: true,
            sample: None,
            distance: None,
            error: None,
        }
    }

    pub fn error(id: Option<u64>, message: impl Into<String>) -> Self {
        BridgeResponse {
            id,
            ok: false,
            sample: None,
            distance: None,
            error: Some(message.into()),
        }
    }
}
