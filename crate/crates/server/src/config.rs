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

use oxjob_core::broker::DEFAULT_CONTRACT_TTL_S;
use oxjob_core::catalog::Scheme;
use serde::{Deserialize, Serialize};

/// Server configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// Listen address; port 0 picks a free port.
    pub endpoint: String,
    /// Defaults to the bound endpoint.
    #[serde(default)]
    pub server_id: Option<String>,
    pub capacity_seed: f64,
    pub schemes: Vec<Scheme>,
    /// Defaults to the number of logical CPUs.
    #[serde(default)]
    pub worker_pool: Option<usize>,
    pub stores: Vec<PathBuf>,
    /// Registry endpoint to advertise to.
    #[serde(default)]
    pub registry: Option<String>,
    pub user_file: PathBuf,
    #[serde(default = "default_ttl")]
    pub contract_ttl_s: u64,
    /// Contract MAC key. Falls back to `OXJOB_SECRET`.
    #[serde(default)]
    pub secret: Option<String>,
    #[serde(default = "default_mean_job_time")]
    pub mean_job_time_s: f64,
    #[serde(default = "default_heartbeat_ms")]
    pub heartbeat_ms: u64,
    #[serde(default = "default_progress_every")]
    pub progress_every: u64,
    #[serde(default)]
    pub work_per_event_us: u64,
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_refresh_s")]
    pub registry_refresh_s: u64,
}

fn default_ttl() -> u64 {
    DEFAULT_CONTRACT_TTL_S
}

fn default_mean_job_time() -> f64 {
    1.0
}

fn default_heartbeat_ms() -> u64 {
    5_000
}

fn default_progress_every() -> u64 {
    oxjob_core::analysis::DEFAULT_PROGRESS_EVERY
}

fn default_refresh_s() -> u64 {
    20
}

impl ServerConfig {
    pub fn new(endpoint: impl Into<String>, user_file: impl Into<PathBuf>) -> Self {
        Self {
            endpoint: endpoint.into(),
            server_id: None,
            capacity_seed: 1.0,
            schemes: vec![Scheme::Push, Scheme::Poll],
            worker_pool: None,
            stores: Vec::new(),
            registry: None,
            user_file: user_file.into(),
            contract_ttl_s: default_ttl(),
            secret: None,
            mean_job_time_s: default_mean_job_time(),
            heartbeat_ms: default_heartbeat_ms(),
            progress_every: default_progress_every(),
            work_per_event_us: 0,
            strict: false,
            registry_refresh_s: default_refresh_s(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("bad server config {}: {e}", path.display()))
    }

    pub fn worker_pool_size(&self) -> usize {
        self.worker_pool
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(usize::from)
                    .unwrap_or(1)
            })
            .max(1)
    }

    pub fn heartbeat(&self) -> Duration {
        Duration::from_millis(self.heartbeat_ms.max(1))
    }
}
