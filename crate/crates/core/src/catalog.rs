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

//! Discovery: which data sets exist and which servers host them.
//!
//! A [`Catalog`] is a plain value. It can be loaded from a JSON file or
//! served by a [`Registry`], where servers push advertisements that expire
//! unless refreshed within the TTL.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::RwLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{matches, DataSetDescriptor, DataSetQuery};

pub const DEFAULT_REGISTRY_TTL: Duration = Duration::from_secs(60);

/// Agent/server interaction style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Server pushes status updates over the client's connection.
    Push,
    /// Client polls for status.
    Poll,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Push => "push",
            Scheme::Poll => "poll",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "push" => Ok(Scheme::Push),
            "poll" => Ok(Scheme::Poll),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerAdvertisement {
    pub server_id: String,
    pub endpoint: String,
    pub capacity_seed: f64,
    pub schemes: Vec<Scheme>,
    pub datasets: Vec<DataSetDescriptor>,
}

impl ServerAdvertisement {
    pub fn validate(&self) -> Result<(), CatalogError> {
        let invalid = |m: String| Err(CatalogError::InvalidAdvertisement(m));
        if self.server_id.is_empty() {
            return invalid("empty server_id".into());
        }
        if !(self.capacity_seed.is_finite() && self.capacity_seed > 0.0) {
            return invalid(format!(
                "{}: capacity_seed must be > 0, got {}",
                self.server_id, self.capacity_seed
            ));
        }
        if self.schemes.is_empty() {
            return invalid(format!("{}: no schemes", self.server_id));
        }
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if d.name.is_empty() {
                return invalid(format!("{}: data set with empty name", self.server_id));
            }
            if !names.insert(d.name.as_str()) {
                return invalid(format!(
                    "{}: data set {} listed twice",
                    self.server_id, d.name
                ));
            }
        }
        Ok(())
    }

    pub fn hosts(&self, name: &str) -> bool {
        self.datasets.iter().any(|d| d.name == name)
    }
}

/// One hosting location returned by [`Catalog::locate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub server_id: String,
    pub endpoint: String,
    pub capacity_seed: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("invalid advertisement: {0}")]
    InvalidAdvertisement(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("catalog file not found: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

/// On-disk and on-wire form of a catalog.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CatalogDocument {
    pub servers: Vec<ServerAdvertisement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    advertisements: BTreeMap<String, ServerAdvertisement>,
    generation: u64,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn advertisements(&self) -> impl Iterator<Item = &ServerAdvertisement> {
        self.advertisements.values()
    }

    pub fn server(&self, server_id: &str) -> Option<&ServerAdvertisement> {
        self.advertisements.get(server_id)
    }

    pub fn len(&self) -> usize {
        self.advertisements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advertisements.is_empty()
    }

    /// Insert or replace the advertisement for `ad.server_id`.
    pub fn register(&mut self, ad: ServerAdvertisement) -> Result<u64, CatalogError> {
        ad.validate()?;
        self.advertisements.insert(ad.server_id.clone(), ad);
        self.generation += 1;
        Ok(self.generation)
    }

    pub fn unregister(&mut self, server_id: &str) -> bool {
        let removed = self.advertisements.remove(server_id).is_some();
        if removed {
            self.generation += 1;
        }
        removed
    }

    /// Copy of this catalog without the given servers.
    pub fn without_servers<'a>(&self, excluded: impl IntoIterator<Item = &'a str>) -> Catalog {
        let mut out = self.clone();
        for id in excluded {
            out.advertisements.remove(id);
        }
        out
    }

    /// One descriptor per matching name, sorted by name.
    pub fn discover(&self, query: &DataSetQuery) -> Vec<DataSetDescriptor> {
        let mut by_name: BTreeMap<&str, &DataSetDescriptor> = BTreeMap::new();
        for ad in self.advertisements.values() {
            for d in &ad.datasets {
                by_name.entry(d.name.as_str()).or_insert(d);
            }
        }
        by_name
            .into_values()
            .filter(|d| matches(d, query))
            .cloned()
            .collect()
    }

    /// Every server hosting `name`, by capacity seed descending then
    /// server id ascending.
    pub fn locate(&self, name: &str) -> Vec<Location> {
        let mut found: Vec<Location> = self
            .advertisements
            .values()
            .filter(|ad| ad.hosts(name))
            .map(|ad| Location {
                server_id: ad.server_id.clone(),
                endpoint: ad.endpoint.clone(),
                capacity_seed: ad.capacity_seed,
            })
            .collect();
        found.sort_by(|a, b| {
            b.capacity_seed
                .total_cmp(&a.capacity_seed)
                .then_with(|| a.server_id.cmp(&b.server_id))
        });
        found
    }

    pub fn to_document(&self) -> CatalogDocument {
        CatalogDocument {
            servers: self.advertisements.values().cloned().collect(),
            generation: Some(self.generation),
        }
    }

    pub fn from_document(doc: CatalogDocument) -> Result<Catalog, ParseError> {
        let mut catalog = Catalog::new();
        for (i, ad) in doc.servers.into_iter().enumerate() {
            if catalog.advertisements.contains_key(&ad.server_id) {
                return Err(ParseError::Invalid {
                    field: format!("servers[{i}].server_id"),
                    message: format!("duplicate server {}", ad.server_id),
                });
            }
            let mut seen = BTreeSet::new();
            for (j, d) in ad.datasets.iter().enumerate() {
                if !seen.insert(d.name.as_str()) {
                    return Err(ParseError::Invalid {
                        field: format!("servers[{i}].datasets[{j}].name"),
                        message: format!("data set {} listed twice for {}", d.name, ad.server_id),
                    });
                }
            }
            catalog
                .register(ad)
                .map_err(|e| ParseError::Invalid {
                    field: format!("servers[{i}]"),
                    message: e.to_string(),
                })?;
        }
        if let Some(g) = doc.generation {
            catalog.generation = g;
        }
        Ok(catalog)
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, ParseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ParseError::NotFound(path.display().to_string()),
        _ => ParseError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    })?;
    let doc: CatalogDocument = serde_json::from_str(&text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Catalog::from_document(doc)
}

pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(&catalog.to_document())?;
    std::fs::write(path, text + "\n")
}

struct RegistryState {
    catalog: Catalog,
    refreshed: HashMap<String, Instant>,
}

/// Shared discovery service state. Advertisements not refreshed within the
/// TTL are dropped on the next read or write.
pub struct Registry {
    ttl: Duration,
    state: RwLock<RegistryState>,
}

impl Registry {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            state: RwLock::new(RegistryState {
                catalog: Catalog::new(),
                refreshed: HashMap::new(),
            }),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn register(&self, ad: ServerAdvertisement) -> Result<u64, CatalogError> {
        self.register_at(ad, Instant::now())
    }

    pub fn register_at(&self, ad: ServerAdvertisement, now: Instant) -> Result<u64, CatalogError> {
        let mut state = self.state.write().unwrap();
        Self::expire(&mut state, self.ttl, now);
        let id = ad.server_id.clone();
        let generation = state.catalog.register(ad)?;
        state.refreshed.insert(id, now);
        Ok(generation)
    }

    pub fn unregister(&self, server_id: &str) -> bool {
        let mut state = self.state.write().unwrap();
        state.refreshed.remove(server_id);
        state.catalog.unregister(server_id)
    }

    /// Consistent copy of the live catalog.
    pub fn snapshot(&self) -> Catalog {
        self.snapshot_at(Instant::now())
    }

    pub fn snapshot_at(&self, now: Instant) -> Catalog {
        let mut state = self.state.write().unwrap();
        Self::expire(&mut state, self.ttl, now);
        state.catalog.clone()
    }

    fn expire(state: &mut RegistryState, ttl: Duration, now: Instant) {
        let stale: Vec<String> = state
            .refreshed
            .iter()
            .filter(|(_, &t)| now.saturating_duration_since(t) > ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in stale {
            state.refreshed.remove(&id);
            state.catalog.unregister(&id);
        }
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::new(DEFAULT_REGISTRY_TTL)
    }
}
