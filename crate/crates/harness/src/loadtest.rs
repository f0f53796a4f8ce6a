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

//! Many servers, many clients, one shared registry. Every server's load
//! is sampled while the clients submit jobs, and the samples are written
//! as CSV.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use oxjob_agent::{run_job, AgentConfig, Selection};
use oxjob_core::analysis::AnalysisSpec;
use oxjob_core::dummy::{DummyStoreSpec, FieldSpec};
use oxjob_core::merge::MergeValue;
use oxjob_server::{ClusterSpec, LocalCluster, NodeSpec, ServerHandle};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use tokio::task::JoinSet;
use tracing::info;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadTestConfig {
    pub n_servers: usize,
    /// Physical hosts the servers would be spread over. Informational only:
    /// every server runs in this process.
    #[serde(default = "one")]
    pub n_server_hosts: usize,
    pub n_clients: usize,
    pub jobs_per_client: usize,
    pub max_inter_job_delay_ms: u64,
    pub datasets_per_job: usize,
    pub sample_interval_ms: u64,
    /// Data sets hosted by every server.
    #[serde(default = "default_datasets")]
    pub n_datasets: usize,
    #[serde(default = "default_events")]
    pub events_per_dataset: u64,
    /// Artificial work per event; 0 gives millisecond jobs.
    #[serde(default)]
    pub work_per_event_us: u64,
    #[serde(default = "default_pool")]
    pub worker_pool: usize,
    #[serde(default = "default_capacity")]
    pub capacity_seed: f64,
    #[serde(default)]
    pub seed: u64,
    pub csv_path: PathBuf,
}

fn one() -> usize {
    1
}

fn default_datasets() -> usize {
    8
}

fn default_events() -> u64 {
    200
}

fn default_pool() -> usize {
    2
}

fn default_capacity() -> f64 {
    10.0
}

impl LoadTestConfig {
    pub fn new(
        n_servers: usize,
        n_clients: usize,
        jobs_per_client: usize,
        csv_path: impl Into<PathBuf>,
    ) -> Self {
        Self {
            n_servers,
            n_server_hosts: 1,
            n_clients,
            jobs_per_client,
            max_inter_job_delay_ms: 200,
            datasets_per_job: 2,
            sample_interval_ms: 20,
            n_datasets: default_datasets(),
            events_per_dataset: default_events(),
            work_per_event_us: 0,
            worker_pool: default_pool(),
            capacity_seed: default_capacity(),
            seed: 0,
            csv_path: csv_path.into(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let counts = [
            ("n_servers", self.n_servers),
            ("n_server_hosts", self.n_server_hosts),
            ("n_clients", self.n_clients),
            ("jobs_per_client", self.jobs_per_client),
            ("datasets_per_job", self.datasets_per_job),
            ("n_datasets", self.n_datasets),
            ("worker_pool", self.worker_pool),
        ];
        for (name, n) in counts {
            if n == 0 {
                bail!("{name} must be at least 1");
            }
        }
        if self.datasets_per_job > self.n_datasets {
            bail!("datasets_per_job exceeds n_datasets");
        }
        if self.sample_interval_ms == 0 {
            bail!("sample_interval_ms must be at least 1");
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSample {
    pub ts_ms: u64,
    pub server_id: String,
    pub running: usize,
    pub queued: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerLoad {
    pub mean_running: f64,
    pub max_running: usize,
    pub mean_queued: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadTestSummary {
    pub jobs_completed: usize,
    pub wall_ms: u64,
    /// Steady-state window, the middle half of the run.
    pub window_ms: (u64, u64),
    pub per_server: BTreeMap<String, ServerLoad>,
    /// Largest per-server mean running load over the mean of those means.
    pub load_ratio: f64,
    pub max_running: usize,
    pub samples: usize,
    pub csv_path: PathBuf,
}

fn dataset_name(i: usize) -> String {
    format!("dummy-{i:03}")
}

fn stores(cfg: &LoadTestConfig) -> Vec<DummyStoreSpec> {
    (0..cfg.n_datasets)
        .map(|i| {
            DummyStoreSpec::new(dataset_name(i), cfg.events_per_dataset, cfg.seed + i as u64)
                .with_field(FieldSpec::uniform("x", 0.0, 1.0))
        })
        .collect()
}

fn sample(servers: &[ServerHandle], ts_ms: u64, out: &mut Vec<LoadSample>) {
    for s in servers {
        let load = s.load();
        out.push(LoadSample {
            ts_ms,
            server_id: s.server_id().to_string(),
            running: load.running,
            queued: load.queued,
        });
    }
}

/// Steady-state statistics over the middle half of `[0, wall_ms]`.
pub fn summarize(
    samples: &[LoadSample],
    wall_ms: u64,
) -> (BTreeMap<String, ServerLoad>, (u64, u64), f64) {
    let window = (wall_ms / 4, wall_ms - wall_ms / 4);
    let mut acc: BTreeMap<&str, (usize, usize, usize, usize)> = BTreeMap::new();
    for s in samples {
        let e = acc.entry(&s.server_id).or_default();
        if s.ts_ms >= window.0 && s.ts_ms <= window.1 {
            e.0 += 1;
            e.1 += s.running;
            e.2 = e.2.max(s.running);
            e.3 += s.queued;
        }
    }
    let per_server: BTreeMap<String, ServerLoad> = acc
        .into_iter()
        .map(|(id, (n, running, max, queued))| {
            let n = n.max(1) as f64;
            (
                id.to_string(),
                ServerLoad {
                    mean_running: running as f64 / n,
                    max_running: max,
                    mean_queued: queued as f64 / n,
                },
            )
        })
        .collect();
    let means: Vec<f64> = per_server.values().map(|l| l.mean_running).collect();
    let overall = means.iter().sum::<f64>() / means.len().max(1) as f64;
    let ratio = if overall > 0.0 {
        means.iter().cloned().fold(0.0, f64::max) / overall
    } else {
        1.0
    };
    (per_server, window, ratio)
}

pub fn write_csv(samples: &[LoadSample], path: &std::path::Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

async fn client(
    id: usize,
    cfg: Arc<LoadTestConfig>,
    agent: AgentConfig,
) -> anyhow::Result<usize> {
    let mut rng = StdRng::seed_from_u64(cfg.seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let all: Vec<String> = (0..cfg.n_datasets).map(dataset_name).collect();
    for job in 0..cfg.jobs_per_client {
        let delay = rng.gen_range(0..=cfg.max_inter_job_delay_ms);
        tokio::time::sleep(Duration::from_millis(delay)).await;
        let picked: Vec<String> = all
            .choose_multiple(&mut rng, cfg.datasets_per_job)
            .cloned()
            .collect();
        let expected = cfg.events_per_dataset * picked.len() as u64;
        let out = run_job(&AnalysisSpec::Count, &Selection::Names(picked), &agent)
            .await
            .with_context(|| format!("client {id} job {job}"))?;
        if out.result != MergeValue::counter(expected) {
            bail!(
                "client {id} job {job}: expected {expected} events, got {:?}",
                out.result
            );
        }
    }
    Ok(cfg.jobs_per_client)
}

/// Run the load test. Any failed or wrong job fails the run.
pub async fn load_test(cfg: &LoadTestConfig) -> anyhow::Result<LoadTestSummary> {
    cfg.validate()?;
    let names: Vec<String> = (0..cfg.n_datasets).map(dataset_name).collect();
    let nodes: Vec<NodeSpec> = (0..cfg.n_servers)
        .map(|i| {
            let mut n = NodeSpec::new(format!("server-{i:02}"), cfg.capacity_seed)
                .hosting(names.iter().cloned());
            n.worker_pool = cfg.worker_pool;
            n.work_per_event_us = cfg.work_per_event_us;
            n
        })
        .collect();
    let mut spec = ClusterSpec::new(stores(cfg), nodes);
    spec.with_registry = true;
    let cluster = LocalCluster::start(spec).await.context("launching servers")?;
    let servers: Vec<ServerHandle> = cluster.servers().cloned().collect();
    info!(
        servers = cfg.n_servers,
        hosts = cfg.n_server_hosts,
        clients = cfg.n_clients,
        "load test started"
    );

    let mut agent = AgentConfig::new(
        format!(
            "{}{}",
            oxjob_agent::config::REGISTRY_PREFIX,
            cluster.registry_endpoint().expect("registry")
        ),
        cluster.credentials().clone(),
    );
    agent.secret = Some(cluster.secret().to_string());
    agent.poll_interval_ms = 10;

    let start = Instant::now();
    let samples = Arc::new(Mutex::new(Vec::new()));
    let stop = Arc::new(tokio::sync::Notify::new());
    let sampler = {
        let samples = samples.clone();
        let stop = stop.clone();
        let servers = servers.clone();
        let every = Duration::from_millis(cfg.sample_interval_ms);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            let mut last = None;
            loop {
                tokio::select! {
                    _ = tick.tick() => {
                        let ts = start.elapsed().as_millis() as u64;
                        if last != Some(ts) {
                            sample(&servers, ts, &mut samples.lock().unwrap());
                            last = Some(ts);
                        }
                    }
                    _ = stop.notified() => break,
                }
            }
            last
        })
    };

    let shared = Arc::new(cfg.clone());
    let mut clients = JoinSet::new();
    for id in 0..cfg.n_clients {
        clients.spawn(client(id, shared.clone(), agent.clone()));
    }
    let mut completed = 0;
    let mut failure = None;
    while let Some(r) = clients.join_next().await {
        match r {
            Ok(Ok(n)) => completed += n,
            Ok(Err(e)) => {
                failure.get_or_insert(e);
            }
            Err(e) => {
                failure.get_or_insert(e.into());
            }
        }
    }
    stop.notify_one();
    let last = sampler.await?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let mut samples = std::mem::take(&mut *samples.lock().unwrap());
    if last != Some(wall_ms) {
        sample(&servers, wall_ms, &mut samples);
    }
    cluster.shutdown().await;
    write_csv(&samples, &cfg.csv_path)?;
    if let Some(e) = failure {
        return Err(e.context(format!("{completed} jobs completed before the failure")));
    }

    let (per_server, window_ms, load_ratio) = summarize(&samples, wall_ms);
    let max_running = samples.iter().map(|s| s.running).max().unwrap_or(0);
    Ok(LoadTestSummary {
        jobs_completed: completed,
        wall_ms,
        window_ms,
        per_server,
        load_ratio,
        max_running,
        samples: samples.len(),
        csv_path: cfg.csv_path.clone(),
    })
}
