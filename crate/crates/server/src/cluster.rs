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

//! A whole deployment in one process: dummy stores, a user file, an
//! optional registry and several servers, each on its own loopback socket.
//! Used by tests, the examples and the load harness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context};
use oxjob_core::auth::{Credentials, UserEntry, UserFile};
use oxjob_core::catalog::{save_catalog, Catalog, Scheme};
use oxjob_core::dummy::{generate_dummy_store, DummyStoreSpec};

use crate::config::ServerConfig;
use crate::registry::RegistryHandle;
use crate::server::ServerHandle;

/// One server in a [`ClusterSpec`].
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub server_id: String,
    pub capacity_seed: f64,
    pub schemes: Vec<Scheme>,
    pub worker_pool: usize,
    /// Names of the stores this server hosts.
    pub datasets: Vec<String>,
    pub work_per_event_us: u64,
    pub heartbeat_ms: u64,
    pub mean_job_time_s: f64,
    pub strict: bool,
}

impl NodeSpec {
    pub fn new(server_id: impl Into<String>, capacity_seed: f64) -> Self {
        Self {
            server_id: server_id.into(),
            capacity_seed,
            schemes: vec![Scheme::Push, Scheme::Poll],
            worker_pool: 2,
            datasets: Vec::new(),
            work_per_event_us: 0,
            heartbeat_ms: 5_000,
            mean_job_time_s: 1.0,
            strict: false,
        }
    }

    pub fn hosting<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.datasets.extend(names.into_iter().map(Into::into));
        self
    }
}

#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub stores: Vec<DummyStoreSpec>,
    pub nodes: Vec<NodeSpec>,
    /// (username, password) pairs.
    pub users: Vec<(String, String)>,
    pub secret: String,
    pub with_registry: bool,
    /// Write events into the store files rather than a spec-only header.
    pub materialize: bool,
    pub contract_ttl_s: u64,
}

impl ClusterSpec {
    pub fn new(stores: Vec<DummyStoreSpec>, nodes: Vec<NodeSpec>) -> Self {
        Self {
            stores,
            nodes,
            users: vec![("alice".into(), "wonderland".into())],
            secret: "cluster-secret".into(),
            with_registry: false,
            materialize: false,
            contract_ttl_s: oxjob_core::broker::DEFAULT_CONTRACT_TTL_S,
        }
    }
}

/// Iterations for cluster user files. Kept low because test clusters
/// authenticate often.
const CLUSTER_ITERATIONS: u32 = 1_000;

pub struct LocalCluster {
    dir: tempfile::TempDir,
    servers: BTreeMap<String, ServerHandle>,
    registry: Option<RegistryHandle>,
    catalog: Catalog,
    catalog_path: PathBuf,
    credentials: Credentials,
    secret: String,
}

impl LocalCluster {
    pub async fn start(spec: ClusterSpec) -> anyhow::Result<LocalCluster> {
        let dir = tempfile::tempdir()?;
        let store_dir = dir.path().join("stores");
        std::fs::create_dir_all(&store_dir)?;
        let mut store_paths = BTreeMap::new();
        for store in &spec.stores {
            let path = store_dir.join(format!("{}.oxs", store.name));
            generate_dummy_store(store, &path, spec.materialize)
                .with_context(|| format!("writing {}", path.display()))?;
            store_paths.insert(store.name.clone(), path);
        }

        let user_file = dir.path().join("users.json");
        let mut users = UserFile::default();
        for (name, password) in &spec.users {
            users.add_user(UserEntry::new(name, password, b"oxjob", CLUSTER_ITERATIONS));
        }
        users.save(&user_file)?;
        let (user, password) = spec
            .users
            .first()
            .cloned()
            .ok_or_else(|| anyhow!("cluster needs at least one user"))?;

        let registry = if spec.with_registry {
            Some(RegistryHandle::start("127.0.0.1:0", oxjob_core::catalog::DEFAULT_REGISTRY_TTL).await?)
        } else {
            None
        };

        let mut servers = BTreeMap::new();
        let mut catalog = Catalog::new();
        for node in &spec.nodes {
            let mut cfg = ServerConfig::new("127.0.0.1:0", &user_file);
            cfg.server_id = Some(node.server_id.clone());
            cfg.capacity_seed = node.capacity_seed;
            cfg.schemes = node.schemes.clone();
            cfg.worker_pool = Some(node.worker_pool);
            cfg.secret = Some(spec.secret.clone());
            cfg.heartbeat_ms = node.heartbeat_ms;
            cfg.work_per_event_us = node.work_per_event_us;
            cfg.mean_job_time_s = node.mean_job_time_s;
            cfg.strict = node.strict;
            cfg.contract_ttl_s = spec.contract_ttl_s;
            cfg.registry = registry.as_ref().map(|r| r.endpoint());
            for name in &node.datasets {
                let path = store_paths
                    .get(name)
                    .ok_or_else(|| anyhow!("{} hosts unknown store {name}", node.server_id))?;
                cfg.stores.push(path.clone());
            }
            let handle = ServerHandle::start(cfg).await?;
            catalog.register(handle.advertisement())?;
            if servers.insert(node.server_id.clone(), handle).is_some() {
                bail!("duplicate server id {}", node.server_id);
            }
        }

        let catalog_path = dir.path().join("catalog.json");
        save_catalog(&catalog, &catalog_path)?;

        let cluster = LocalCluster {
            dir,
            servers,
            registry,
            catalog,
            catalog_path,
            credentials: Credentials::new(user, password),
            secret: spec.secret,
        };
        if cluster.registry.is_some() {
            cluster.wait_registered(Duration::from_secs(10)).await?;
        }
        Ok(cluster)
    }

    async fn wait_registered(&self, limit: Duration) -> anyhow::Result<()> {
        let registry = self.registry.as_ref().expect("registry present");
        let deadline = Instant::now() + limit;
        while registry.snapshot().len() < self.servers.len() {
            if Instant::now() > deadline {
                bail!("servers did not register within {limit:?}");
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        self.dir.path()
    }

    /// Catalog of every server as started, whether or not it still runs.
    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_path(&self) -> &Path {
        &self.catalog_path
    }

    pub fn registry_endpoint(&self) -> Option<String> {
        self.registry.as_ref().map(|r| r.endpoint())
    }

    pub fn credentials(&self) -> &Credentials {
        &self.credentials
    }

    pub fn secret(&self) -> &str {
        &self.secret
    }

    pub fn server(&self, server_id: &str) -> Option<&ServerHandle> {
        self.servers.get(server_id)
    }

    pub fn servers(&self) -> impl Iterator<Item = &ServerHandle> {
        self.servers.values()
    }

    pub async fn kill(&self, server_id: &str) -> anyhow::Result<()> {
        let server = self
            .server(server_id)
            .ok_or_else(|| anyhow!("no server {server_id}"))?;
        server.kill().await;
        Ok(())
    }

    pub async fn shutdown(&self) {
        for server in self.servers.values() {
            server.shutdown().await;
        }
        if let Some(r) = &self.registry {
            r.stop().await;
        }
    }
}
