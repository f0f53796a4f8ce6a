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

//! Job orchestration: discover, broker, split, submit, monitor,
//! re-broker on failure, fetch and merge.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use oxjob_core::analysis::{AnalysisSpec, JobFragment};
use oxjob_core::broker::{broker_job, BrokerError, BrokerSeeds, Contract, SharedSecret};
use oxjob_core::catalog::{load_catalog, Catalog, ParseError, Scheme};
use oxjob_core::merge::{merge_all, MergeError, MergeValue};
use oxjob_core::model::{DataSetDescriptor, DataSetQuery};
use oxjob_core::proto::client::{fetch_catalog, ClientError, ServerClient};
use oxjob_core::proto::{ErrorCode, FailureKind, FragmentState, FragmentStatus, StatusMessage};
use serde::Serialize;
use thiserror::Error;
use tokio::task::JoinSet;
use tracing::{info, warn};

use crate::channel::NetworkChannel;
use crate::config::{AgentConfig, CatalogSource};

/// Which data sets a job covers.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Names(Vec<String>),
    Query(DataSetQuery),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid analysis: {0}")]
    InvalidAnalysis(String),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("catalog unavailable: {0}")]
    CatalogUnavailable(String),
    #[error("EmptyJob: no data sets selected")]
    EmptyJob,
    #[error("NoHostingServer: no server hosts data set {0}")]
    NoHostingServer(String),
    #[error("authentication failed")]
    AuthFailed,
    #[error("brokering failed: {0}")]
    Broker(String),
    #[error("CoverageGap: {0}")]
    CoverageGap(String),
    #[error("fragment {fragment_id} failed on {server_id}: {message}")]
    FragmentFailed {
        fragment_id: String,
        server_id: String,
        message: String,
    },
    #[error("RetriesExhausted for {datasets:?}: {message} (completed: {completed:?})")]
    RetriesExhausted {
        datasets: Vec<String>,
        message: String,
        /// Data sets whose fragments had completed; their results are
        /// discarded.
        completed: Vec<String>,
    },
    #[error("MergeShapeMismatch: {0}")]
    MergeShapeMismatch(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl AgentError {
    /// Errors the user can fix by changing the request or setup.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            AgentError::Config(_)
                | AgentError::InvalidAnalysis(_)
                | AgentError::Catalog(_)
                | AgentError::EmptyJob
                | AgentError::NoHostingServer(_)
                | AgentError::AuthFailed
                | AgentError::FragmentFailed { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("data sets not covered by any contract: {0:?}")]
    CoverageGap(Vec<String>),
    #[error("data set {0} covered by more than one contract")]
    Overlap(String),
    #[error("contract covers {0}, which the job did not ask for")]
    Unrequested(String),
}

/// One fragment per contract. The contracts must cover `datasets` exactly
/// once.
pub fn split(
    job_id: &str,
    analysis: &AnalysisSpec,
    datasets: &[String],
    contracts: &[Contract],
) -> Result<Vec<JobFragment>, SplitError> {
    let wanted: BTreeSet<&str> = datasets.iter().map(String::as_str).collect();
    let mut covered = BTreeSet::new();
    for name in contracts.iter().flat_map(|c| &c.dataset_names) {
        if !wanted.contains(name.as_str()) {
            return Err(SplitError::Unrequested(name.clone()));
        }
        if !covered.insert(name.as_str()) {
            return Err(SplitError::Overlap(name.clone()));
        }
    }
    let missing: Vec<String> = wanted
        .difference(&covered)
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SplitError::CoverageGap(missing));
    }
    Ok(contracts
        .iter()
        .map(|c| JobFragment {
            job_id: job_id.to_string(),
            fragment_id: format!("{job_id}/{}", c.contract_id),
            analysis: analysis.clone(),
            dataset_names: c.dataset_names.clone(),
            contract_id: c.contract_id.clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FragmentOutcome {
    Completed,
    Failed { retryable: bool, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentReport {
    pub fragment_id: String,
    pub server_id: String,
    pub dataset_names: Vec<String>,
    /// 0 for the first try, n for the n-th re-brokering.
    pub attempt: u32,
    pub scheme: Scheme,
    #[serde(flatten)]
    pub outcome: FragmentOutcome,
    pub events_processed: u64,
    /// events_processed at every status observation.
    pub progress: Vec<u64>,
    pub messages: Vec<StatusMessage>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RebrokerRecord {
    pub fragment_id: String,
    pub server_id: String,
    pub dataset_names: Vec<String>,
    pub reason: String,
    pub replaced_by: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub discovery_ms: u64,
    pub brokering_ms: u64,
    pub execution_ms: u64,
    pub merge_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct JobReport {
    pub job_id: String,
    pub datasets: Vec<String>,
    /// Every contract obtained, including those from re-brokering.
    pub contracts: Vec<Contract>,
    pub offer_requests: usize,
    /// Every fragment attempt in completion order.
    pub fragments: Vec<FragmentReport>,
    pub retries: u32,
    pub rebrokered: Vec<RebrokerRecord>,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub result: MergeValue,
    pub report: JobReport,
}

/// Load the catalog named by the configuration.
pub async fn load_agent_catalog(config: &AgentConfig) -> Result<Catalog, AgentError> {
    match config.source() {
        CatalogSource::File(path) => load_catalog(&path).map_err(|e| match e {
            ParseError::Io { .. } => AgentError::CatalogUnavailable(e.to_string()),
            e => AgentError::Catalog(e.to_string()),
        }),
        CatalogSource::Registry(endpoint) => fetch_catalog(&endpoint)
            .await
            .map_err(|e| AgentError::CatalogUnavailable(format!("registry {endpoint}: {e}"))),
    }
}

/// Descriptors matching `query` across the catalog.
pub async fn discover(
    config: &AgentConfig,
    query: &DataSetQuery,
) -> Result<Vec<DataSetDescriptor>, AgentError> {
    Ok(load_agent_catalog(config).await?.discover(query))
}

fn resolve(catalog: &Catalog, selection: &Selection) -> Result<Vec<DataSetDescriptor>, AgentError> {
    let descriptors = match selection {
        Selection::Query(query) => catalog.discover(query),
        Selection::Names(names) => {
            let all: BTreeMap<String, DataSetDescriptor> = catalog
                .discover(&DataSetQuery::all())
                .into_iter()
                .map(|d| (d.name.clone(), d))
                .collect();
            let unique: BTreeSet<&String> = names.iter().collect();
            unique
                .into_iter()
                .map(|n| {
                    all.get(n)
                        .cloned()
                        .ok_or_else(|| AgentError::NoHostingServer(n.clone()))
                })
                .collect::<Result<_, _>>()?
        }
    };
    if descriptors.is_empty() {
        return Err(AgentError::EmptyJob);
    }
    Ok(descriptors)
}

fn ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

struct Attempt {
    fragment: JobFragment,
    contract: Contract,
    attempt: u32,
    scheme: Scheme,
}

enum Failure {
    Auth,
    Retryable(String),
    Fatal(String),
}

struct Finished {
    attempt: Attempt,
    result: Result<MergeValue, Failure>,
    status: Option<FragmentStatus>,
    progress: Vec<u64>,
    elapsed_ms: u64,
}

enum AttemptError {
    Client(ClientError),
    Failed(FragmentStatus),
}

impl From<ClientError> for AttemptError {
    fn from(e: ClientError) -> Self {
        AttemptError::Client(e)
    }
}

struct Monitor {
    credentials: oxjob_core::auth::Credentials,
    heartbeat: std::time::Duration,
    poll_interval: std::time::Duration,
}

impl Monitor {
    async fn run(&self, attempt: Attempt) -> Finished {
        let started = Instant::now();
        let mut progress = Vec::new();
        let mut last: Option<FragmentStatus> = None;
        let outcome = self.drive(&attempt, &mut progress, &mut last).await;
        let result = match outcome {
            Ok(value) => Ok(value),
            Err(AttemptError::Client(ClientError::AuthFailed)) => Err(Failure::Auth),
            Err(AttemptError::Client(e)) => {
                let retryable = e.is_infrastructure()
                    || matches!(
                        e,
                        ClientError::ContractRejected(_)
                            | ClientError::Remote {
                                code: ErrorCode::DatasetNotHosted,
                                ..
                            }
                    );
                if retryable {
                    Err(Failure::Retryable(e.to_string()))
                } else {
                    Err(Failure::Fatal(e.to_string()))
                }
            }
            Err(AttemptError::Failed(status)) => {
                let text = status
                    .messages
                    .iter()
                    .rev()
                    .find(|m| m.severity == oxjob_core::proto::Severity::Error)
                    .map(|m| m.text.clone())
                    .unwrap_or_else(|| "fragment failed".into());
                match status.failure {
                    Some(FailureKind::Analysis) => Err(Failure::Fatal(text)),
                    _ => Err(Failure::Retryable(text)),
                }
            }
        };
        Finished {
            attempt,
            result,
            status: last,
            progress,
            elapsed_ms: ms(started),
        }
    }

    async fn drive(
        &self,
        attempt: &Attempt,
        progress: &mut Vec<u64>,
        last: &mut Option<FragmentStatus>,
    ) -> Result<MergeValue, AttemptError> {
        let id = attempt.fragment.fragment_id.as_str();
        let mut client = ServerClient::connect(&attempt.contract.endpoint).await?;
        client.auth(&self.credentials).await?;
        client.submit(&attempt.contract, &attempt.fragment).await?;
        let mut observe = |s: &FragmentStatus| {
            progress.push(s.events_processed);
            *last = Some(s.clone());
        };
        let terminal = match attempt.scheme {
            Scheme::Push => {
                let mut stream = client.subscribe(id, self.heartbeat).await?;
                let terminal = stream.wait_terminal(&mut observe).await?;
                client = stream.into_client();
                terminal
            }
            Scheme::Poll => loop {
                let status = client.status(id).await?;
                observe(&status);
                if status.state.is_terminal() {
                    break status;
                }
                tokio::time::sleep(self.poll_interval).await;
            },
        };
        match terminal.state {
            FragmentState::Completed => Ok(client.fetch(id).await?),
            _ => Err(AttemptError::Failed(terminal)),
        }
    }
}

fn choose_scheme(config: &AgentConfig, catalog: &Catalog, server_id: &str) -> Scheme {
    if let Some(forced) = config.scheme {
        return forced;
    }
    let push = catalog
        .server(server_id)
        .is_some_and(|ad| ad.schemes.contains(&Scheme::Push));
    if push {
        Scheme::Push
    } else {
        Scheme::Poll
    }
}

fn broker_error(e: BrokerError, channel: &NetworkChannel) -> AgentError {
    if channel.auth_failed() {
        return AgentError::AuthFailed;
    }
    match e {
        BrokerError::NoHostingServer(name) => AgentError::NoHostingServer(name),
        e => AgentError::Broker(e.to_string()),
    }
}

/// Run `analysis` over the selected data sets and return the merged result.
pub async fn run_job(
    analysis: &AnalysisSpec,
    selection: &Selection,
    config: &AgentConfig,
) -> Result<JobOutcome, AgentError> {
    analysis
        .validate()
        .map_err(|e| AgentError::InvalidAnalysis(e.to_string()))?;
    let secret = config.secret.as_ref().map(|s| SharedSecret::new(s.as_bytes()));
    let job_start = Instant::now();
    let job_id = uuid::Uuid::new_v4().to_string();
    let mut report = JobReport {
        job_id: job_id.clone(),
        ..Default::default()
    };

    let catalog = load_agent_catalog(config).await?;
    let descriptors = resolve(&catalog, selection)?;
    let by_name: BTreeMap<String, DataSetDescriptor> = descriptors
        .iter()
        .map(|d| (d.name.clone(), d.clone()))
        .collect();
    report.datasets = by_name.keys().cloned().collect();
    report.timings.discovery_ms = ms(job_start);

    let broker_start = Instant::now();
    let mut seeds = BrokerSeeds::from_catalog(&catalog);
    let mut channel = NetworkChannel::new(config.credentials.clone());
    let negotiation = broker_job(&descriptors, &catalog, &mut seeds, &mut channel, secret.as_ref())
        .await
        .map_err(|e| broker_error(e, &channel))?;
    drop(channel);
    report.offer_requests += negotiation.offer_requests();
    let fragments = split(&job_id, analysis, &report.datasets, &negotiation.contracts)
        .map_err(|e| AgentError::CoverageGap(e.to_string()))?;
    report.contracts.extend(negotiation.contracts.iter().cloned());
    report.timings.brokering_ms = ms(broker_start);
    info!(job = %job_id, fragments = fragments.len(), "job brokered");

    let exec_start = Instant::now();
    let monitor = std::sync::Arc::new(Monitor {
        credentials: config.credentials.clone(),
        heartbeat: config.heartbeat(),
        poll_interval: config.poll_interval(),
    });
    let mut tasks = JoinSet::new();
    let spawn = |tasks: &mut JoinSet<Finished>, attempt: Attempt| {
        let monitor = monitor.clone();
        tasks.spawn(async move { monitor.run(attempt).await });
    };
    for (fragment, contract) in fragments.into_iter().zip(negotiation.contracts) {
        let scheme = choose_scheme(config, &catalog, &contract.server_id);
        spawn(
            &mut tasks,
            Attempt {
                fragment,
                contract,
                attempt: 0,
                scheme,
            },
        );
    }

    let mut attempts: BTreeMap<String, u32> = BTreeMap::new();
    let mut failed_servers: BTreeSet<String> = BTreeSet::new();
    let mut results: Vec<(String, MergeValue)> = Vec::new();
    let mut completed: BTreeSet<String> = BTreeSet::new();

    while let Some(joined) = tasks.join_next().await {
        let done = joined.map_err(|e| AgentError::Internal(e.to_string()))?;
        let Attempt {
            fragment,
            contract,
            attempt,
            scheme,
        } = done.attempt;
        let status = done.status.unwrap_or_else(FragmentStatus::queued);
        let outcome = match &done.result {
            Ok(_) => FragmentOutcome::Completed,
            Err(Failure::Retryable(m)) => FragmentOutcome::Failed {
                retryable: true,
                message: m.clone(),
            },
            Err(Failure::Fatal(m)) => FragmentOutcome::Failed {
                retryable: false,
                message: m.clone(),
            },
            Err(Failure::Auth) => FragmentOutcome::Failed {
                retryable: false,
                message: "authentication failed".into(),
            },
        };
        report.fragments.push(FragmentReport {
            fragment_id: fragment.fragment_id.clone(),
            server_id: contract.server_id.clone(),
            dataset_names: fragment.dataset_names.clone(),
            attempt,
            scheme,
            outcome,
            events_processed: status.events_processed,
            progress: done.progress,
            messages: status.messages,
            elapsed_ms: done.elapsed_ms,
        });

        let reason = match done.result {
            Ok(value) => {
                let key = fragment.dataset_names.iter().min().cloned().unwrap_or_default();
                completed.extend(fragment.dataset_names.iter().cloned());
                results.push((key, value));
                continue;
            }
            Err(Failure::Auth) => return Err(AgentError::AuthFailed),
            Err(Failure::Fatal(message)) => {
                return Err(AgentError::FragmentFailed {
                    fragment_id: fragment.fragment_id,
                    server_id: contract.server_id,
                    message,
                })
            }
            Err(Failure::Retryable(reason)) => reason,
        };

        warn!(fragment = %fragment.fragment_id, server = %contract.server_id, %reason, "re-brokering");
        failed_servers.insert(contract.server_id.clone());
        let mut exhausted = false;
        for name in &fragment.dataset_names {
            let n = attempts.entry(name.clone()).or_default();
            *n += 1;
            exhausted |= *n > config.retry_budget;
        }
        let give_up = |message: String| AgentError::RetriesExhausted {
            datasets: fragment.dataset_names.clone(),
            message,
            completed: completed.iter().cloned().collect(),
        };
        if exhausted {
            return Err(give_up(reason));
        }
        report.retries += 1;

        let remaining = catalog.without_servers(failed_servers.iter().map(String::as_str));
        let wanted: Vec<DataSetDescriptor> = fragment
            .dataset_names
            .iter()
            .map(|n| by_name[n].clone())
            .collect();
        let mut channel = NetworkChannel::new(config.credentials.clone());
        let negotiation =
            match broker_job(&wanted, &remaining, &mut seeds, &mut channel, secret.as_ref()).await {
                Ok(n) => n,
                Err(_) if channel.auth_failed() => return Err(AgentError::AuthFailed),
                Err(e) => return Err(give_up(format!("{reason}; re-brokering failed: {e}"))),
            };
        report.offer_requests += negotiation.offer_requests();
        let replacements = split(&job_id, analysis, &fragment.dataset_names, &negotiation.contracts)
            .map_err(|e| AgentError::CoverageGap(e.to_string()))?;
        report.contracts.extend(negotiation.contracts.iter().cloned());
        report.rebrokered.push(RebrokerRecord {
            fragment_id: fragment.fragment_id.clone(),
            server_id: contract.server_id.clone(),
            dataset_names: fragment.dataset_names.clone(),
            reason,
            replaced_by: replacements.iter().map(|f| f.fragment_id.clone()).collect(),
        });
        for (fragment, contract) in replacements.into_iter().zip(negotiation.contracts) {
            let scheme = choose_scheme(config, &catalog, &contract.server_id);
            spawn(
                &mut tasks,
                Attempt {
                    fragment,
                    contract,
                    attempt: attempt + 1,
                    scheme,
                },
            );
        }
    }
    report.timings.execution_ms = ms(exec_start);

    let merge_start = Instant::now();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let values: Vec<MergeValue> = results.into_iter().map(|(_, v)| v).collect();
    let result = merge_all(&values).map_err(|e| match e {
        MergeError::ShapeMismatch(m) => AgentError::MergeShapeMismatch(m),
        e => AgentError::Internal(e.to_string()),
    })?;
    report.timings.merge_ms = ms(merge_start);
    report.timings.total_ms = ms(job_start);
    info!(job = %job_id, retries = report.retries, "job complete");
    Ok(JobOutcome { result, report })
}
