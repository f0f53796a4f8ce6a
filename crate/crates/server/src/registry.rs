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

//! Discovery registry service. Servers register their advertisements,
//! agents discover data sets. Entries expire unless refreshed.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use oxjob_core::catalog::{Catalog, Registry};
use oxjob_core::proto::*;
use tokio::net::{TcpListener, TcpStream};
use tokio_util::sync::CancellationToken;
use tokio_util::task::TaskTracker;
use tracing::{debug, warn};

#[derive(Clone)]
pub struct RegistryHandle {
    registry: Arc<Registry>,
    addr: SocketAddr,
    stop: CancellationToken,
    tracker: TaskTracker,
}

impl RegistryHandle {
    pub async fn start(listen: &str, ttl: Duration) -> anyhow::Result<RegistryHandle> {
        let listener = TcpListener::bind(listen)
            .await
            .with_context(|| format!("cannot bind {listen}"))?;
        let addr = listener.local_addr()?;
        let handle = RegistryHandle {
            registry: Arc::new(Registry::new(ttl)),
            addr,
            stop: CancellationToken::new(),
            tracker: TaskTracker::new(),
        };
        let h = handle.clone();
        handle.tracker.spawn(async move {
            loop {
                tokio::select! {
                    _ = h.stop.cancelled() => break,
                    accepted = listener.accept() => match accepted {
                        Ok((stream, _)) => {
                            h.tracker.spawn(serve(h.registry.clone(), stream, h.stop.clone()));
                        }
                        Err(e) => warn!("accept failed: {e}"),
                    }
                }
            }
        });
        Ok(handle)
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn snapshot(&self) -> Catalog {
        self.registry.snapshot()
    }

    pub async fn stop(&self) {
        self.stop.cancel();
        self.tracker.close();
        self.tracker.wait().await;
    }
}

async fn serve(registry: Arc<Registry>, stream: TcpStream, stop: CancellationToken) {
    let mut conn = Connection::new(stream);
    loop {
        let msg = tokio::select! {
            _ = stop.cancelled() => return,
            m = conn.recv() => m,
        };
        let msg = match msg {
            Ok(Some(m)) => m,
            Ok(None) => return,
            Err(e) => {
                let _ = conn
                    .send(&Message::error("", ErrorBody::new(ErrorCode::BadRequest, e.to_string())))
                    .await;
                return;
            }
        };
        let id = msg.request_id.clone();
        let reply = match msg.kind {
            MessageType::Heartbeat => continue,
            MessageType::Register => match msg.body_as::<RegisterRequest>() {
                Ok(req) => {
                    let server_id = req.advertisement.server_id.clone();
                    match registry.register(req.advertisement) {
                        Ok(generation) => {
                            debug!(%server_id, generation, "registered");
                            Message::new(
                                MessageType::Register,
                                id,
                                &RegisterResponse {
                                    generation,
                                    ttl_s: registry.ttl().as_secs(),
                                },
                            )
                        }
                        Err(e) => Message::error(
                            id,
                            ErrorBody::new(ErrorCode::InvalidAdvertisement, e.to_string()),
                        ),
                    }
                }
                Err(e) => Message::error(id, ErrorBody::new(ErrorCode::BadRequest, e.to_string())),
            },
            MessageType::Discover => match msg.body_as::<DiscoverRequest>() {
                Ok(req) => {
                    let catalog = registry.snapshot();
                    let servers = req
                        .include_servers
                        .then(|| catalog.advertisements().cloned().collect());
                    Message::new(
                        MessageType::Discover,
                        id,
                        &DiscoverResponse {
                            datasets: catalog.discover(&req.query),
                            servers,
                            generation: catalog.generation(),
                        },
                    )
                }
                Err(e) => Message::error(id, ErrorBody::new(ErrorCode::BadRequest, e.to_string())),
            },
            other => Message::error(
                id,
                ErrorBody::new(
                    ErrorCode::BadRequest,
                    format!("{other:?} is not a registry request"),
                ),
            ),
        };
        if conn.send(&reply).await.is_err() {
            return;
        }
    }
}
