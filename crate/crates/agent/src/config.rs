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

use std::path::{Path, PathBuf};
use std::time::Duration;

use oxjob_core::auth::Credentials;
use oxjob_core::catalog::Scheme;
use serde::{Deserialize, Serialize};

/// Prefix marking a catalog source as a registry endpoint.
pub const REGISTRY_PREFIX: &str = "tcp://";

/// Where the agent finds its catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogSource {
    File(PathBuf),
    Registry(String),
}

impl CatalogSource {
    /// `tcp://host:port` names a registry; anything else is a file path.
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix(REGISTRY_PREFIX) {
            Some(endpoint) => CatalogSource::Registry(endpoint.to_string()),
            None => CatalogSource::File(PathBuf::from(s)),
        }
    }
}

/// Agent configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Catalog file path, or `tcp://host:port` of a registry.
    pub catalog: String,
    pub credentials: Credentials,
    /// Forced monitoring scheme. By default push is used where offered.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Re-brokering attempts allowed per data set.
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    /// When set, contracts are verified before use.
    #[serde(default)]
    pub secret: Option<String>,
    /// Must match the servers' heartbeat interval.
    #[serde(default = "default_heartbeat_ms")]
    pub heartbeat_ms: u64,
    #[serde(default = "default_poll_interval_ms")]
    pub poll_interval_ms: u64,
}

fn default_retry_budget() -> u32 {
    2
}

fn default_heartbeat_ms() -> u64 {
    5_000
}

fn default_poll_interval_ms() -> u64 {
    100
}

impl AgentConfig {
    pub fn new(catalog: impl Into<String>, credentials: Credentials) -> Self {
        Self {
            catalog: catalog.into(),
            credentials,
            scheme: None,
            retry_budget: default_retry_budget(),
            secret: None,
            heartbeat_ms: default_heartbeat_ms(),
            poll_interval_ms: default_poll_interval_ms(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad agent config {}: {e}", path.display()))
    }

    pub fn source(&self) -> CatalogSource {
        CatalogSource::parse(&self.catalog)
    }

    pub fn heartbeat(&self) -> Duration {
        Duration::from_millis(self.heartbeat_ms.max(1))
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_millis(self.poll_interval_ms.max(1))
    }
}
