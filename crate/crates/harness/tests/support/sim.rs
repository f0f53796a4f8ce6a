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

//! Simulated servers behind the production negotiation interface. Offers
//! are priced by the same function a real server uses.

use std::collections::{BTreeMap, BTreeSet};

use async_trait::async_trait;
use oxjob_core::broker::{
    compute_offer, sign_contract, BrokerError, Contract, ContractOffer, OfferChannel, OfferTerms,
    SharedSecret,
};
use oxjob_core::catalog::{Catalog, Location, Scheme, ServerAdvertisement};
use oxjob_core::model::DataSetDescriptor;
use rand::Rng;

use super::oracle::OracleServer;

#[derive(Debug, Clone)]
pub struct Instance {
    pub servers: Vec<OracleServer>,
    pub datasets: Vec<(String, u64)>,
    /// Stale estimates for some servers.
    pub seeds: BTreeMap<String, f64>,
}

impl Instance {
    pub fn random(rng: &mut impl Rng) -> Instance {
        let n_servers = rng.gen_range(1..=4);
        let n_datasets = rng.gen_range(1..=6);
        let datasets: Vec<(String, u64)> = (0..n_datasets)
            .map(|i| {
                // Few distinct sizes so that name tie-breaks matter.
                (format!("ds{i}"), [100, 500, 500, 1000][rng.gen_range(0..4)])
            })
            .collect();
        let servers = (0..n_servers)
            .map(|i| {
                let hosts: Vec<String> = datasets
                    .iter()
                    .filter(|_| rng.gen_bool(0.7))
                    .map(|d| d.0.clone())
                    .collect();
                OracleServer {
                    id: format!("srv{i}"),
                    capacity: [1.0, 2.0, 3.0, 4.0, 6.0, 2.5][rng.gen_range(0..6)],
                    base_load: rng.gen_range(0..3),
                    reachable: rng.gen_bool(0.9),
                    hosts,
                }
            })
            .collect::<Vec<_>>();
        let mut seeds = BTreeMap::new();
        for s in &servers {
            if rng.gen_bool(0.4) {
                seeds.insert(s.id.clone(), [0.5, 1.0, 3.0, 8.0][rng.gen_range(0..4)]);
            }
        }
        Instance {
            servers,
            datasets,
            seeds,
        }
    }

    pub fn descriptors(&self) -> Vec<DataSetDescriptor> {
        self.datasets
            .iter()
            .map(|(n, c)| DataSetDescriptor::new(n.clone(), *c))
            .collect()
    }

    pub fn catalog(&self) -> Catalog {
        let mut catalog = Catalog::new();
        for s in &self.servers {
            if s.hosts.is_empty() {
                continue;
            }
            let datasets = self
                .descriptors()
                .into_iter()
                .filter(|d| s.hosts.contains(&d.name))
                .collect();
            catalog
                .register(ServerAdvertisement {
                    server_id: s.id.clone(),
                    endpoint: format!("sim://{}", s.id),
                    capacity_seed: s.capacity,
                    schemes: vec![Scheme::Poll],
                    datasets,
                })
                .unwrap();
        }
        catalog
    }
}

pub struct SimChannel {
    servers: BTreeMap<String, OracleServer>,
    secret: SharedSecret,
    pub asked: Vec<(String, String)>,
    next_id: u64,
}

impl SimChannel {
    pub fn new(instance: &Instance, secret: SharedSecret) -> Self {
        Self {
            servers: instance
                .servers
                .iter()
                .map(|s| (s.id.clone(), s.clone()))
                .collect(),
            secret,
            asked: Vec::new(),
            next_id: 0,
        }
    }

    fn price(&mut self, server: &Location, datasets: &[String], extra: usize) -> Result<ContractOffer, BrokerError> {
        let s = &self.servers[&server.server_id];
        if !s.reachable {
            return Err(BrokerError::Unreachable {
                server_id: s.id.clone(),
                message: "simulated outage".into(),
            });
        }
        let terms = OfferTerms {
            server_id: s.id.clone(),
            endpoint: server.endpoint.clone(),
            capacity_seed: s.capacity,
            worker_pool_size: 2,
            mean_job_time_s: 1.0,
            contract_ttl_s: 300,
        };
        let hosted: BTreeSet<String> = s.hosts.iter().cloned().collect();
        self.next_id += 1;
        compute_offer(
            &terms,
            &hosted,
            s.base_load + extra,
            datasets,
            1_000,
            format!("sim-{}", self.next_id),
        )
    }
}

#[async_trait]
impl OfferChannel for SimChannel {
    async fn request_offer(
        &mut self,
        server: &Location,
        datasets: &[String],
        tentative: usize,
    ) -> Result<ContractOffer, BrokerError> {
        self.asked
            .push((datasets.join(","), server.server_id.clone()));
        self.price(server, datasets, tentative)
    }

    async fn request_contract(
        &mut self,
        server: &Location,
        datasets: &[String],
    ) -> Result<Contract, BrokerError> {
        let offer = self.price(server, datasets, 0)?;
        Ok(sign_contract(&offer, &self.secret))
    }
}
