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

//! Brokering: contract offers, signed contracts and the greedy negotiation
//! that assigns every data set of a job to one hosting server.
//!
//! The negotiation walks the data sets largest first. For each one it asks
//! the server with the best current horsepower estimate for an offer, and
//! keeps asking the next candidate while the best offer so far is below that
//! candidate's estimate. Every offer replaces the server's estimate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use async_trait::async_trait;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::canonical;
use crate::catalog::{Catalog, Location};
use crate::model::DataSetDescriptor;

type HmacSha256 = Hmac<Sha256>;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const DEFAULT_CONTRACT_TTL_S: u64 = 300;
pub const SECRET_ENV: &str = "OXJOB_SECRET";

pub fn unix_now() -> Timestamp {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as Timestamp)
        .unwrap_or(0)
}

/// Deployment-wide key for contract MACs.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedSecret(Vec<u8>);

impl SharedSecret {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(SECRET_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(|s| Self(s.into_bytes()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractOffer {
    pub offer_id: String,
    pub server_id: String,
    pub endpoint: String,
    pub dataset_names: Vec<String>,
    pub horsepower: f64,
    /// Seconds before execution is expected to start.
    pub estimated_delay: f64,
    pub valid_from: Timestamp,
    pub valid_until: Timestamp,
    pub issuer: String,
}

/// Signed assignment of data sets to a server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contract {
    pub contract_id: String,
    pub server_id: String,
    pub endpoint: String,
    pub dataset_names: Vec<String>,
    pub horsepower: f64,
    pub estimated_delay: f64,
    pub valid_from: Timestamp,
    pub valid_until: Timestamp,
    pub issuer: String,
    /// Lowercase hex HMAC-SHA-256 over [`Contract::signing_bytes`].
    pub signature: String,
}

/// Every contract field except the signature.
#[derive(Serialize)]
struct SignedFields<'a> {
    contract_id: &'a str,
    server_id: &'a str,
    endpoint: &'a str,
    dataset_names: &'a [String],
    horsepower: f64,
    estimated_delay: f64,
    valid_from: Timestamp,
    valid_until: Timestamp,
    issuer: &'a str,
}

impl Contract {
    /// Canonical key-sorted JSON of all non-signature fields.
    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical::to_vec(&SignedFields {
            contract_id: &self.contract_id,
            server_id: &self.server_id,
            endpoint: &self.endpoint,
            dataset_names: &self.dataset_names,
            horsepower: self.horsepower,
            estimated_delay: self.estimated_delay,
            valid_from: self.valid_from,
            valid_until: self.valid_until,
            issuer: &self.issuer,
        })
        .expect("contract fields always encode")
    }

    /// Canonical encoding of the whole contract, signature included.
    pub fn to_bytes(&self) -> Vec<u8> {
        canonical::to_vec(self).expect("contract always encodes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Contract, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn covers(&self, names: &[String]) -> bool {
        names.iter().all(|n| self.dataset_names.contains(n))
    }
}

fn mac(secret: &SharedSecret, bytes: &[u8]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(secret.as_bytes()).expect("HMAC accepts any key length");
    mac.update(bytes);
    mac
}

pub fn sign_contract(offer: &ContractOffer, secret: &SharedSecret) -> Contract {
    let mut contract = Contract {
        contract_id: offer.offer_id.clone(),
        server_id: offer.server_id.clone(),
        endpoint: offer.endpoint.clone(),
        dataset_names: offer.dataset_names.clone(),
        horsepower: offer.horsepower,
        estimated_delay: offer.estimated_delay,
        valid_from: offer.valid_from,
        valid_until: offer.valid_until,
        issuer: offer.issuer.clone(),
        signature: String::new(),
    };
    let tag = mac(secret, &contract.signing_bytes()).finalize().into_bytes();
    contract.signature = hex::encode(tag);
    contract
}

/// True iff the signature is the lowercase hex MAC of the contract's
/// signing bytes under `secret`.
pub fn verify_contract(contract: &Contract, secret: &SharedSecret) -> bool {
    let sig = contract.signature.as_bytes();
    if sig.len() != 64 || !sig.iter().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f')) {
        return false;
    }
    let Ok(tag) = hex::decode(sig) else {
        return false;
    };
    mac(secret, &contract.signing_bytes()).verify_slice(&tag).is_ok()
}

/// Static terms a server uses when pricing offers.
#[derive(Debug, Clone, PartialEq)]
pub struct OfferTerms {
    pub server_id: String,
    pub endpoint: String,
    pub capacity_seed: f64,
    pub worker_pool_size: usize,
    /// Mean fragment run time in seconds, used for the delay estimate.
    pub mean_job_time_s: f64,
    pub contract_ttl_s: u64,
}

/// Price an offer. `active_fragments` counts the server's queued and
/// running fragments plus whatever the requesting agent has tentatively
/// placed on it already.
pub fn compute_offer(
    terms: &OfferTerms,
    hosted: &BTreeSet<String>,
    active_fragments: usize,
    datasets: &[String],
    now: Timestamp,
    offer_id: String,
) -> Result<ContractOffer, BrokerError> {
    if let Some(missing) = datasets.iter().find(|d| !hosted.contains(*d)) {
        return Err(BrokerError::DatasetNotHosted(missing.clone()));
    }
    let horsepower = terms.capacity_seed / (1.0 + active_fragments as f64);
    let estimated_delay = if active_fragments < terms.worker_pool_size {
        0.0
    } else {
        (active_fragments - terms.worker_pool_size + 1) as f64 * terms.mean_job_time_s
    };
    Ok(ContractOffer {
        offer_id,
        server_id: terms.server_id.clone(),
        endpoint: terms.endpoint.clone(),
        dataset_names: datasets.to_vec(),
        horsepower,
        estimated_delay,
        valid_from: now,
        valid_until: now + terms.contract_ttl_s as Timestamp,
        issuer: terms.server_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadSignature,
    Expired,
    WrongServer,
    DatasetNotCovered,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Server-side admission check for a fragment submitted under `contract`.
pub fn enforce_contract(
    server_id: &str,
    contract: &Contract,
    submitted: &[String],
    now: Timestamp,
    secret: &SharedSecret,
) -> Result<(), RejectReason> {
    if !verify_contract(contract, secret) {
        return Err(RejectReason::BadSignature);
    }
    if now < contract.valid_from || now > contract.valid_until {
        return Err(RejectReason::Expired);
    }
    if contract.server_id != server_id {
        return Err(RejectReason::WrongServer);
    }
    if !contract.covers(submitted) {
        return Err(RejectReason::DatasetNotCovered);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BrokerError {
    #[error("no server hosts data set {0}")]
    NoHostingServer(String),
    #[error("data set {0} is not hosted here")]
    DatasetNotHosted(String),
    #[error("server {server_id} unreachable: {message}")]
    Unreachable { server_id: String, message: String },
    #[error("negotiation failed: {0}")]
    NegotiationFailed(String),
}

/// The agent's rolling horsepower estimate per server.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BrokerSeeds(pub BTreeMap<String, f64>);

impl BrokerSeeds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_catalog(catalog: &Catalog) -> Self {
        Self(
            catalog
                .advertisements()
                .map(|ad| (ad.server_id.clone(), ad.capacity_seed))
                .collect(),
        )
    }

    /// Current estimate, falling back to the advertised capacity.
    pub fn estimate(&self, location: &Location) -> f64 {
        self.0
            .get(&location.server_id)
            .copied()
            .unwrap_or(location.capacity_seed)
    }

    pub fn set(&mut self, server_id: &str, horsepower: f64) {
        self.0.insert(server_id.to_string(), horsepower);
    }

    pub fn get(&self, server_id: &str) -> Option<f64> {
        self.0.get(server_id).copied()
    }
}

/// How the agent reaches servers during negotiation.
#[async_trait]
pub trait OfferChannel: Send {
    /// Ask for an offer covering `datasets`. `tentative` is the number of
    /// data sets this negotiation has already placed on the server.
    async fn request_offer(
        &mut self,
        server: &Location,
        datasets: &[String],
        tentative: usize,
    ) -> Result<ContractOffer, BrokerError>;

    async fn request_contract(
        &mut self,
        server: &Location,
        datasets: &[String],
    ) -> Result<Contract, BrokerError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfferRecord {
    pub dataset: String,
    pub server_id: String,
    /// `None` when the server could not be reached.
    pub horsepower: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Negotiation {
    /// One contract per server used, ordered by server id.
    pub contracts: Vec<Contract>,
    pub assignment: BTreeMap<String, String>,
    pub offers: Vec<OfferRecord>,
}

impl Negotiation {
    pub fn offer_requests(&self) -> usize {
        self.offers.len()
    }
}

/// Assign every data set to one server and collect one signed contract per
/// server. When `secret` is given every contract is verified before it is
/// returned.
pub async fn broker_job<C: OfferChannel + ?Sized>(
    datasets: &[DataSetDescriptor],
    catalog: &Catalog,
    seeds: &mut BrokerSeeds,
    channel: &mut C,
    secret: Option<&SharedSecret>,
) -> Result<Negotiation, BrokerError> {
    let mut order: Vec<&DataSetDescriptor> = datasets.iter().collect();
    order.sort_by(|a, b| {
        b.event_count
            .cmp(&a.event_count)
            .then_with(|| a.name.cmp(&b.name))
    });
    order.dedup_by(|a, b| a.name == b.name);

    let mut negotiation = Negotiation::default();
    let mut tentative: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut locations: BTreeMap<String, Location> = BTreeMap::new();

    for descriptor in order {
        let name = &descriptor.name;
        let mut candidates = catalog.locate(name);
        if candidates.is_empty() {
            return Err(BrokerError::NoHostingServer(name.clone()));
        }
        candidates.sort_by(|a, b| {
            seeds
                .estimate(b)
                .total_cmp(&seeds.estimate(a))
                .then_with(|| a.server_id.cmp(&b.server_id))
        });

        let request = std::slice::from_ref(name);
        let mut best: Option<(usize, f64)> = None;
        let mut failures = Vec::new();
        for (i, candidate) in candidates.iter().enumerate() {
            if let Some((_, best_hp)) = best {
                if best_hp >= seeds.estimate(candidate) {
                    break;
                }
            }
            let placed = tentative.get(&candidate.server_id).map_or(0, Vec::len);
            let reply = channel.request_offer(candidate, request, placed).await;
            let horsepower = match reply {
                Ok(offer) if offer.horsepower.is_finite() && offer.horsepower > 0.0 => {
                    Some(offer.horsepower)
                }
                Ok(offer) => {
                    failures.push(format!(
                        "{}: non-positive horsepower {}",
                        candidate.server_id, offer.horsepower
                    ));
                    None
                }
                Err(e) => {
                    failures.push(e.to_string());
                    None
                }
            };
            negotiation.offers.push(OfferRecord {
                dataset: name.clone(),
                server_id: candidate.server_id.clone(),
                horsepower,
            });
            if let Some(hp) = horsepower {
                seeds.set(&candidate.server_id, hp);
                if best.is_none_or(|(_, b)| hp > b) {
                    best = Some((i, hp));
                }
            }
        }

        let Some((winner, _)) = best else {
            return Err(BrokerError::NegotiationFailed(format!(
                "no offer for {name}: {}",
                failures.join("; ")
            )));
        };
        let location = &candidates[winner];
        tentative
            .entry(location.server_id.clone())
            .or_default()
            .push(name.clone());
        locations
            .entry(location.server_id.clone())
            .or_insert_with(|| location.clone());
        negotiation
            .assignment
            .insert(name.clone(), location.server_id.clone());
    }

    for (server_id, names) in &tentative {
        let location = &locations[server_id];
        let contract = channel.request_contract(location, names).await.map_err(|e| {
            BrokerError::NegotiationFailed(format!("contract from {server_id}: {e}"))
        })?;
        if contract.server_id != *server_id
            || contract.dataset_names.len() != names.len()
            || !contract.covers(names)
        {
            return Err(BrokerError::NegotiationFailed(format!(
                "contract from {server_id} does not match the request"
            )));
        }
        if let Some(secret) = secret {
            if !verify_contract(&contract, secret) {
                return Err(BrokerError::NegotiationFailed(format!(
                    "contract from {server_id} failed verification"
                )));
            }
        }
        negotiation.contracts.push(contract);
    }
    Ok(negotiation)
}
