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

//! Offer and contract negotiation over the wire.

use std::collections::HashMap;

use async_trait::async_trait;
use oxjob_core::auth::Credentials;
use oxjob_core::broker::{BrokerError, Contract, ContractOffer, OfferChannel};
use oxjob_core::catalog::Location;
use oxjob_core::proto::client::{ClientError, ServerClient};

/// Keeps one authenticated connection per server for the length of a
/// negotiation.
pub struct NetworkChannel {
    credentials: Credentials,
    clients: HashMap<String, ServerClient>,
    auth_failed: bool,
}

impl NetworkChannel {
    pub fn new(credentials: Credentials) -> Self {
        Self {
            credentials,
            clients: HashMap::new(),
            auth_failed: false,
        }
    }

    /// True once any server refused the credentials.
    pub fn auth_failed(&self) -> bool {
        self.auth_failed
    }

    async fn client(&mut self, server: &Location) -> Result<&mut ServerClient, ClientError> {
        if !self.clients.contains_key(&server.server_id) {
            let mut client = ServerClient::connect(&server.endpoint).await?;
            if let Err(e) = client.auth(&self.credentials).await {
                if matches!(e, ClientError::AuthFailed) {
                    self.auth_failed = true;
                }
                return Err(e);
            }
            self.clients.insert(server.server_id.clone(), client);
        }
        Ok(self.clients.get_mut(&server.server_id).expect("just inserted"))
    }

    fn failed(&mut self, server: &Location, e: ClientError) -> BrokerError {
        self.clients.remove(&server.server_id);
        match e {
            ClientError::Remote { code: oxjob_core::proto::ErrorCode::DatasetNotHosted, message } => {
                BrokerError::DatasetNotHosted(message)
            }
            e => BrokerError::Unreachable {
                server_id: server.server_id.clone(),
                message: e.to_string(),
            },
        }
    }
}

#[async_trait]
impl OfferChannel for NetworkChannel {
    async fn request_offer(
        &mut self,
        server: &Location,
        datasets: &[String],
        tentative: usize,
    ) -> Result<ContractOffer, BrokerError> {
        let reply = match self.client(server).await {
            Ok(c) => c.request_offer(datasets, tentative).await,
            Err(e) => Err(e),
        };
        reply.map_err(|e| self.failed(server, e))
    }

    async fn request_contract(
        &mut self,
        server: &Location,
        datasets: &[String],
    ) -> Result<Contract, BrokerError> {
        let reply = match self.client(server).await {
            Ok(c) => c.request_contract(datasets).await,
            Err(e) => Err(e),
        };
        reply.map_err(|e| self.failed(server, e))
    }
}
