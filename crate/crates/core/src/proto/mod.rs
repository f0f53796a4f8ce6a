// Copyright 2026 The oxjob Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Wire protocol: newline-delimited JSON messages over TCP.
//!
//! Every message is one JSON object `{"type", "request_id", "body"}` on a
//! single line. Requests are answered by exactly one message carrying the
//! same `request_id`, except `subscribe`, which is answered by a stream of
//! `status_event` messages ending at a terminal state. Servers interleave
//! `heartbeat` messages on subscribed connections.

use std::fmt;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_util::codec::{Framed, LinesCodec, LinesCodecError};

use crate::analysis::JobFragment;
use crate::broker::{Contract, ContractOffer, RejectReason, Timestamp};
use crate::catalog::ServerAdvertisement;
use crate::merge::MergeValue;
use crate::model::{DataSetDescriptor, DataSetQuery};

pub mod client;

pub use crate::auth::Credentials;

/// Longest accepted line, in bytes.
pub const MAX_LINE: usize = 16 * 1024 * 1024;
pub const DEFAULT_HEARTBEAT: Duration = Duration::from_secs(5);
/// A push connection is dead after this many silent heartbeat intervals.
pub const MISSED_HEARTBEATS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Auth,
    Discover,
    Register,
    OfferRequest,
    Offer,
    ContractRequest,
    Contract,
    Submit,
    Status,
    Subscribe,
    StatusEvent,
    Fetch,
    Result,
    Error,
    Heartbeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub request_id: String,
    pub body: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("line exceeds {MAX_LINE} bytes")]
    LineTooLong,
}

impl From<LinesCodecError> for ProtoError {
    fn from(e: LinesCodecError) -> Self {
        match e {
            LinesCodecError::MaxLineLengthExceeded => ProtoError::LineTooLong,
            LinesCodecError::Io(e) => ProtoError::Io(e),
        }
    }
}

impl Message {
    pub fn new<B: Serialize>(kind: MessageType, request_id: impl Into<String>, body: &B) -> Self {
        Self {
            kind,
            request_id: request_id.into(),
            body: serde_json::to_value(body).expect("message bodies always encode"),
        }
    }

    pub fn error(request_id: impl Into<String>, body: ErrorBody) -> Self {
        Self::new(MessageType::Error, request_id, &body)
    }

    /// One line of JSON, without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("messages always encode")
    }

    pub fn decode(line: &str) -> Result<Message, ProtoError> {
        serde_json::from_str(line).map_err(|e| ProtoError::Malformed(e.to_string()))
    }

    pub fn body_as<T: DeserializeOwned>(&self) -> Result<T, ProtoError> {
        serde_json::from_value(self.body.clone())
            .map_err(|e| ProtoError::Malformed(format!("{:?} body: {e}", self.kind)))
    }
}

pub type LineSink = futures::stream::SplitSink<Framed<TcpStream, LinesCodec>, String>;
pub type LineStream = futures::stream::SplitStream<Framed<TcpStream, LinesCodec>>;

/// A framed protocol connection.
pub struct Connection {
    framed: Framed<TcpStream, LinesCodec>,
}

impl Connection {
    pub fn new(stream: TcpStream) -> Self {
        let _ = stream.set_nodelay(true);
        Self {
            framed: Framed::new(stream, LinesCodec::new_with_max_length(MAX_LINE)),
        }
    }

    pub async fn send(&mut self, msg: &Message) -> Result<(), ProtoError> {
        self.framed.send(msg.encode()).await?;
        Ok(())
    }

    /// Next message, or `None` once the peer has closed the connection.
    pub async fn recv(&mut self) -> Result<Option<Message>, ProtoError> {
        match self.framed.next().await {
            Some(line) => Message::decode(&line?).map(Some),
            None => Ok(None),
        }
    }

    pub fn split(self) -> (LineSink, LineStream) {
        self.framed.split()
    }
}

// ---- message bodies -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthAccepted {
    pub username: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscoverRequest {
    #[serde(default)]
    pub query: DataSetQuery,
    /// Also return the full advertisements (registry only).
    #[serde(default)]
    pub include_servers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverResponse {
    pub datasets: Vec<DataSetDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub servers: Option<Vec<ServerAdvertisement>>,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub advertisement: ServerAdvertisement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub generation: u64,
    pub ttl_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferRequest {
    pub dataset_names: Vec<String>,
    /// Data sets the requesting agent has already placed on this server
    /// during the current negotiation.
    #[serde(default)]
    pub tentative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferResponse {
    pub offer: ContractOffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRequest {
    pub dataset_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractResponse {
    pub contract: Contract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub contract: Contract,
    pub fragment: JobFragment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentRef {
    pub fragment_id: String,
}

/// Body of `status` responses and `status_event` pushes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusBody {
    pub fragment_id: String,
    pub status: FragmentStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBody {
    pub fragment_id: String,
    pub value: MergeValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    AuthFailed,
    NotAuthenticated,
    ContractRejected,
    SchemeUnsupported,
    UnknownFragment,
    NotCompleted,
    DatasetNotHosted,
    InvalidAdvertisement,
    BadRequest,
    ShuttingDown,
    Internal,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            reason: None,
        }
    }

    pub fn rejected(reason: RejectReason) -> Self {
        Self {
            code: ErrorCode::ContractRejected,
            message: format!("contract rejected: {reason}"),
            reason: Some(reason),
        }
    }
}

// ---- fragment status ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FragmentState {
    Queued,
    Running,
    Completed,
    Failed,
}

impl FragmentState {
    pub fn is_terminal(self) -> bool {
        matches!(self, FragmentState::Completed | FragmentState::Failed)
    }

    /// Queued and Running fragments count as server load.
    pub fn is_active(self) -> bool {
        !self.is_terminal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusMessage {
    pub severity: Severity,
    pub text: String,
    pub timestamp: Timestamp,
}

/// Why a fragment failed. Analysis failures are deterministic and are not
/// worth retrying elsewhere; infrastructure failures are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Analysis,
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentStatus {
    pub state: FragmentState,
    pub events_processed: u64,
    #[serde(default)]
    pub messages: Vec<StatusMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
}

impl FragmentStatus {
    pub fn queued() -> Self {
        Self {
            state: FragmentState::Queued,
            events_processed: 0,
            messages: Vec::new(),
            failure: None,
        }
    }
}
