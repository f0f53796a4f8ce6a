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

//! Client side of the protocol, used by agents and by servers talking to
//! the registry.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio::time::timeout;

use super::*;
use crate::analysis::JobFragment;
use crate::broker::{Contract, ContractOffer, RejectReason};
use crate::catalog::{Catalog, CatalogError, ServerAdvertisement};
use crate::merge::MergeValue;

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("cannot connect to {endpoint}: {message}")]
    Connect { endpoint: String, message: String },
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("authentication failed")]
    AuthFailed,
    #[error("contract rejected: {0}")]
    ContractRejected(RejectReason),
    #[error("server does not offer that scheme")]
    SchemeUnsupported,
    #[error("unknown fragment {0}")]
    UnknownFragment(String),
    #[error("fragment {0} has not completed")]
    NotCompleted(String),
    #[error("{code}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl ClientError {
    /// Failures of the server or network rather than of the request.
    pub fn is_infrastructure(&self) -> bool {
        match self {
            ClientError::Connect { .. }
            | ClientError::ConnectionLost(_)
            | ClientError::Timeout(_) => true,
            ClientError::Remote { code, .. } => {
                matches!(code, ErrorCode::ShuttingDown | ErrorCode::Internal)
            }
            _ => false,
        }
    }

    fn from_body(body: ErrorBody, fragment_id: Option<&str>) -> Self {
        let fragment = || fragment_id.unwrap_or_default().to_string();
        match body.code {
            ErrorCode::AuthFailed => ClientError::AuthFailed,
            ErrorCode::ContractRejected => match body.reason {
                Some(r) => ClientError::ContractRejected(r),
                None => ClientError::Protocol("rejection without reason".into()),
            },
            ErrorCode::SchemeUnsupported => ClientError::SchemeUnsupported,
            ErrorCode::UnknownFragment => ClientError::UnknownFragment(fragment()),
            ErrorCode::NotCompleted => ClientError::NotCompleted(fragment()),
            code => ClientError::Remote {
                code,
                message: body.message,
            },
        }
    }
}

impl From<ProtoError> for ClientError {
    fn from(e: ProtoError) -> Self {
        match e {
            ProtoError::Io(e) => ClientError::ConnectionLost(e.to_string()),
            other => ClientError::Protocol(other.to_string()),
        }
    }
}

/// One authenticated (or not yet authenticated) connection to a server or
/// registry.
pub struct ServerClient {
    conn: Connection,
    endpoint: String,
    next_id: u64,
    request_timeout: Duration,
}

impl ServerClient {
    pub async fn connect(endpoint: &str) -> Result<Self, ClientError> {
        Self::connect_with_timeout(endpoint, DEFAULT_REQUEST_TIMEOUT).await
    }

    pub async fn connect_with_timeout(
        endpoint: &str,
        request_timeout: Duration,
    ) -> Result<Self, ClientError> {
        let connect_err = |message: String| ClientError::Connect {
            endpoint: endpoint.to_string(),
            message,
        };
        let stream = timeout(request_timeout, TcpStream::connect(endpoint))
            .await
            .map_err(|_| connect_err("timed out".into()))?
            .map_err(|e| connect_err(e.to_string()))?;
        Ok(Self {
            conn: Connection::new(stream),
            endpoint: endpoint.to_string(),
            next_id: 1,
            request_timeout,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn fresh_id(&mut self) -> String {
        let id = self.next_id;
        self.next_id += 1;
        id.to_string()
    }

    async fn call<B: Serialize>(
        &mut self,
        kind: MessageType,
        body: &B,
        expect: MessageType,
        fragment_id: Option<&str>,
    ) -> Result<Message, ClientError> {
        let request_id = self.fresh_id();
        self.conn
            .send(&Message::new(kind, request_id.clone(), body))
            .await?;
        loop {
            let reply = timeout(self.request_timeout, self.conn.recv())
                .await
                .map_err(|_| ClientError::Timeout(self.request_timeout))??;
            let Some(reply) = reply else {
                return Err(ClientError::ConnectionLost(format!(
                    "{} closed the connection",
                    self.endpoint
                )));
            };
            if reply.kind == MessageType::Heartbeat || reply.request_id != request_id {
                continue;
            }
            if reply.kind == MessageType::Error {
                let body: ErrorBody = reply.body_as()?;
                return Err(ClientError::from_body(body, fragment_id));
            }
            if reply.kind != expect {
                return Err(ClientError::Protocol(format!(
                    "expected {expect:?}, got {:?}",
                    reply.kind
                )));
            }
            return Ok(reply);
        }
    }

    pub async fn auth(&mut self, creds: &Credentials) -> Result<String, ClientError> {
        let reply = self
            .call(MessageType::Auth, creds, MessageType::Auth, None)
            .await?;
        Ok(reply.body_as::<AuthAccepted>()?.username)
    }

    pub async fn discover(
        &mut self,
        request: &DiscoverRequest,
    ) -> Result<DiscoverResponse, ClientError> {
        let reply = self
            .call(MessageType::Discover, request, MessageType::Discover, None)
            .await?;
        Ok(reply.body_as()?)
    }

    pub async fn register(
        &mut self,
        advertisement: &ServerAdvertisement,
    ) -> Result<RegisterResponse, ClientError> {
        let body = RegisterRequest {
            advertisement: advertisement.clone(),
        };
        let reply = self
            .call(MessageType::Register, &body, MessageType::Register, None)
            .await?;
        Ok(reply.body_as()?)
    }

    pub async fn request_offer(
        &mut self,
        dataset_names: &[String],
        tentative: usize,
    ) -> Result<ContractOffer, ClientError> {
        let body = OfferRequest {
            dataset_names: dataset_names.to_vec(),
            tentative,
        };
        let reply = self
            .call(MessageType::OfferRequest, &body, MessageType::Offer, None)
            .await?;
        Ok(reply.body_as::<OfferResponse>()?.offer)
    }

    pub async fn request_contract(
        &mut self,
        dataset_names: &[String],
    ) -> Result<Contract, ClientError> {
        let body = ContractRequest {
            dataset_names: dataset_names.to_vec(),
        };
        let reply = self
            .call(
                MessageType::ContractRequest,
                &body,
                MessageType::Contract,
                None,
            )
            .await?;
        Ok(reply.body_as::<ContractResponse>()?.contract)
    }

    pub async fn submit(
        &mut self,
        contract: &Contract,
        fragment: &JobFragment,
    ) -> Result<StatusBody, ClientError> {
        let body = SubmitRequest {
            contract: contract.clone(),
            fragment: fragment.clone(),
        };
        let reply = self
            .call(
                MessageType::Submit,
                &body,
                MessageType::Status,
                Some(&fragment.fragment_id),
            )
            .await?;
        Ok(reply.body_as()?)
    }

    /// Poll scheme: one status snapshot.
    pub async fn status(&mut self, fragment_id: &str) -> Result<FragmentStatus, ClientError> {
        let body = FragmentRef {
            fragment_id: fragment_id.to_string(),
        };
        let reply = self
            .call(
                MessageType::Status,
                &body,
                MessageType::Status,
                Some(fragment_id),
            )
            .await?;
        Ok(reply.body_as::<StatusBody>()?.status)
    }

    pub async fn fetch(&mut self, fragment_id: &str) -> Result<MergeValue, ClientError> {
        let body = FragmentRef {
            fragment_id: fragment_id.to_string(),
        };
        let reply = self
            .call(
                MessageType::Fetch,
                &body,
                MessageType::Result,
                Some(fragment_id),
            )
            .await?;
        let value = reply.body_as::<ResultBody>()?.value;
        value
            .validate()
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        Ok(value)
    }

    /// Push scheme: turn this connection into a status stream. The stream
    /// fails if nothing, not even a heartbeat, arrives for
    /// `MISSED_HEARTBEATS` intervals.
    pub async fn subscribe(
        mut self,
        fragment_id: &str,
        heartbeat: Duration,
    ) -> Result<StatusSubscription, ClientError> {
        let request_id = self.fresh_id();
        let body = FragmentRef {
            fragment_id: fragment_id.to_string(),
        };
        self.conn
            .send(&Message::new(MessageType::Subscribe, request_id.clone(), &body))
            .await?;
        Ok(StatusSubscription {
            client: self,
            request_id,
            fragment_id: fragment_id.to_string(),
            silence_limit: heartbeat * MISSED_HEARTBEATS,
            finished: false,
        })
    }
}

pub struct StatusSubscription {
    client: ServerClient,
    request_id: String,
    fragment_id: String,
    silence_limit: Duration,
    finished: bool,
}

impl StatusSubscription {
    /// Next pushed status; `Ok(None)` after the terminal update.
    pub async fn next(&mut self) -> Result<Option<FragmentStatus>, ClientError> {
        if self.finished {
            return Ok(None);
        }
        loop {
            let msg = timeout(self.silence_limit, self.client.conn.recv())
                .await
                .map_err(|_| {
                    ClientError::ConnectionLost(format!(
                        "no heartbeat from {} for {:?}",
                        self.client.endpoint, self.silence_limit
                    ))
                })??;
            let Some(msg) = msg else {
                return Err(ClientError::ConnectionLost(format!(
                    "{} closed the status stream",
                    self.client.endpoint
                )));
            };
            match msg.kind {
                MessageType::Heartbeat => continue,
                _ if msg.request_id != self.request_id => continue,
                MessageType::Error => {
                    self.finished = true;
                    let body: ErrorBody = msg.body_as()?;
                    return Err(ClientError::from_body(body, Some(&self.fragment_id)));
                }
                MessageType::StatusEvent => {
                    let status = msg.body_as::<StatusBody>()?.status;
                    self.finished = status.state.is_terminal();
                    return Ok(Some(status));
                }
                other => {
                    return Err(ClientError::Protocol(format!(
                        "unexpected {other:?} on status stream"
                    )))
                }
            }
        }
    }

    /// Drain the stream and return the terminal status, calling `observe`
    /// on every update.
    pub async fn wait_terminal(
        &mut self,
        mut observe: impl FnMut(&FragmentStatus),
    ) -> Result<FragmentStatus, ClientError> {
        let mut last = None;
        while let Some(status) = self.next().await? {
            observe(&status);
            last = Some(status);
        }
        last.ok_or_else(|| ClientError::Protocol("stream ended without a status".into()))
    }

    /// Give the connection back once the stream has finished.
    pub fn into_client(self) -> ServerClient {
        self.client
    }
}

async fn authed(endpoint: &str, creds: &Credentials) -> Result<ServerClient, ClientError> {
    let mut client = ServerClient::connect(endpoint).await?;
    client.auth(creds).await?;
    Ok(client)
}

/// Submit one fragment and return its id.
pub async fn client_submit(
    endpoint: &str,
    contract: &Contract,
    fragment: &JobFragment,
    creds: &Credentials,
) -> Result<String, ClientError> {
    let mut client = authed(endpoint, creds).await?;
    Ok(client.submit(contract, fragment).await?.fragment_id)
}

pub async fn client_poll(
    endpoint: &str,
    creds: &Credentials,
    fragment_id: &str,
) -> Result<FragmentStatus, ClientError> {
    authed(endpoint, creds).await?.status(fragment_id).await
}

pub async fn client_subscribe(
    endpoint: &str,
    creds: &Credentials,
    fragment_id: &str,
    heartbeat: Duration,
) -> Result<StatusSubscription, ClientError> {
    authed(endpoint, creds)
        .await?
        .subscribe(fragment_id, heartbeat)
        .await
}

/// Build a catalog from a registry's live advertisements.
pub async fn fetch_catalog(registry: &str) -> Result<Catalog, ClientError> {
    let mut client = ServerClient::connect(registry).await?;
    let resp = client
        .discover(&DiscoverRequest {
            query: Default::default(),
            include_servers: true,
        })
        .await?;
    let mut catalog = Catalog::new();
    for ad in resp.servers.unwrap_or_default() {
        catalog
            .register(ad)
            .map_err(|e: CatalogError| ClientError::Protocol(e.to_string()))?;
    }
    Ok(catalog)
}

/// Canonical bytes of a completed fragment's result.
pub async fn client_fetch_result(
    endpoint: &str,
    creds: &Credentials,
    fragment_id: &str,
) -> Result<Vec<u8>, ClientError> {
    let value = authed(endpoint, creds).await?.fetch(fragment_id).await?;
    Ok(value.serialize())
}
