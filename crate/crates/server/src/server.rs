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

//! The server daemon: hosts data sets, prices offers, signs contracts,
//! authenticates users and runs job fragments on a bounded worker pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{bail, Context};
use futures::{SinkExt, StreamExt};
use oxjob_core::analysis::{run_fragment, AnalysisError, JobFragment, RunOptions};
use oxjob_core::auth::{UserDirectory, UserFile};
use oxjob_core::broker::{
    compute_offer, enforce_contract, sign_contract, unix_now, OfferTerms, SharedSecret,
};
use oxjob_core::catalog::{Scheme, ServerAdvertisement};
use oxjob_core::dummy::open_store;
use oxjob_core::merge::MergeValue;
use oxjob_core::model::{matches, DataSet, DataSetDescriptor};
use oxjob_core::proto::client::ServerClient;
use oxjob_core::proto::*;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch, Semaphore};
use tokio_util::sync::CancellationToken;
use tokio_util::task::TaskTracker;
use tracing::{debug, info, warn};

use crate::config::ServerConfig;

/// Instantaneous fragment counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadSnapshot {
    pub running: usize,
    pub queued: usize,
}

impl LoadSnapshot {
    pub fn active(&self) -> usize {
        self.running + self.queued
    }
}

struct FragmentEntry {
    owner: String,
    status: watch::Sender<FragmentStatus>,
    result: Option<MergeValue>,
    cancel: Arc<AtomicBool>,
}

struct Shared {
    server_id: String,
    endpoint: String,
    terms: OfferTerms,
    schemes: Vec<Scheme>,
    datasets: BTreeMap<String, Arc<dyn DataSet>>,
    descriptors: Vec<DataSetDescriptor>,
    hosted: BTreeSet<String>,
    users: UserDirectory,
    secret: SharedSecret,
    fragments: Mutex<HashMap<String, FragmentEntry>>,
    pool: Arc<Semaphore>,
    run_opts: RunOptions,
    heartbeat: Duration,
    closing: AtomicBool,
    shutdown: CancellationToken,
}

fn note(severity: Severity, text: impl Into<String>) -> StatusMessage {
    StatusMessage {
        severity,
        text: text.into(),
        timestamp: unix_now(),
    }
}

impl Shared {
    fn advertisement(&self) -> ServerAdvertisement {
        ServerAdvertisement {
            server_id: self.server_id.clone(),
            endpoint: self.endpoint.clone(),
            capacity_seed: self.terms.capacity_seed,
            schemes: self.schemes.clone(),
            datasets: self.descriptors.clone(),
        }
    }

    fn load(&self) -> LoadSnapshot {
        let table = self.fragments.lock().unwrap();
        let mut snap = LoadSnapshot::default();
        for entry in table.values() {
            match entry.status.borrow().state {
                FragmentState::Running => snap.running += 1,
                FragmentState::Queued => snap.queued += 1,
                _ => {}
            }
        }
        snap
    }

    /// Apply `f` to a non-terminal fragment. Returns false if the fragment
    /// is unknown or already terminal.
    fn update(
        &self,
        fragment_id: &str,
        f: impl FnOnce(&mut FragmentStatus, &mut Option<MergeValue>),
    ) -> bool {
        let mut table = self.fragments.lock().unwrap();
        let Some(entry) = table.get_mut(fragment_id) else {
            return false;
        };
        if entry.status.borrow().state.is_terminal() {
            return false;
        }
        let result = &mut entry.result;
        entry.status.send_modify(|s| f(s, result));
        true
    }

    fn fail(&self, fragment_id: &str, kind: FailureKind, text: String) -> bool {
        self.update(fragment_id, |s, _| {
            s.state = FragmentState::Failed;
            s.failure = Some(kind);
            s.messages.push(note(Severity::Error, text));
        })
    }

    fn lookup(
        &self,
        fragment_id: &str,
        user: &str,
    ) -> Option<(watch::Receiver<FragmentStatus>, Option<MergeValue>)> {
        let table = self.fragments.lock().unwrap();
        table
            .get(fragment_id)
            .filter(|e| e.owner == user)
            .map(|e| (e.status.subscribe(), e.result.clone()))
    }
}

/// A running server. Dropping the handle leaves the server running; call
/// [`ServerHandle::shutdown`] or [`ServerHandle::kill`] to stop it.
#[derive(Clone)]
pub struct ServerHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    tracker: TaskTracker,
}

impl ServerHandle {
    /// Open the stores, bind the listener and start serving.
    pub async fn start(config: ServerConfig) -> anyhow::Result<ServerHandle> {
        if !(config.capacity_seed.is_finite() && config.capacity_seed > 0.0) {
            bail!("capacity_seed must be > 0");
        }
        if config.schemes.is_empty() {
            bail!("at least one scheme is required");
        }
        let secret = match &config.secret {
            Some(s) if !s.is_empty() => SharedSecret::new(s.as_bytes()),
            _ => SharedSecret::from_env().context("no contract secret: set OXJOB_SECRET")?,
        };
        let users = UserFile::load(&config.user_file)?.into_directory();

        let mut datasets: BTreeMap<String, Arc<dyn DataSet>> = BTreeMap::new();
        let mut descriptors = Vec::new();
        for path in &config.stores {
            let ds = open_store(path)?;
            let d = ds.descriptor()?;
            if datasets.insert(d.name.clone(), ds).is_some() {
                bail!("data set {} provided by two stores", d.name);
            }
            descriptors.push(d);
        }
        descriptors.sort_by(|a, b| a.name.cmp(&b.name));

        let listener = TcpListener::bind(&config.endpoint)
            .await
            .with_context(|| format!("cannot bind {}", config.endpoint))?;
        let addr = listener.local_addr()?;
        let endpoint = addr.to_string();
        let server_id = config.server_id.clone().unwrap_or_else(|| endpoint.clone());
        let pool_size = config.worker_pool_size();

        let shared = Arc::new(Shared {
            terms: OfferTerms {
                server_id: server_id.clone(),
                endpoint: endpoint.clone(),
                capacity_seed: config.capacity_seed,
                worker_pool_size: pool_size,
                mean_job_time_s: config.mean_job_time_s,
                contract_ttl_s: config.contract_ttl_s,
            },
            server_id,
            endpoint,
            schemes: config.schemes.clone(),
            hosted: datasets.keys().cloned().collect(),
            datasets,
            descriptors,
            users,
            secret,
            fragments: Mutex::new(HashMap::new()),
            pool: Arc::new(Semaphore::new(pool_size)),
            run_opts: RunOptions {
                strict: config.strict,
                progress_every: config.progress_every,
                work_per_event: Duration::from_micros(config.work_per_event_us),
            },
            heartbeat: config.heartbeat(),
            closing: AtomicBool::new(false),
            shutdown: CancellationToken::new(),
        });

        let tracker = TaskTracker::new();
        tracker.spawn(accept_loop(shared.clone(), listener, tracker.clone()));
        if let Some(registry) = config.registry.clone() {
            let every = Duration::from_secs(config.registry_refresh_s.max(1));
            tracker.spawn(advertise_loop(shared.clone(), registry, every));
        }
        info!(server = %shared.server_id, %addr, pool = pool_size, "server started");
        Ok(ServerHandle {
            shared,
            addr,
            tracker,
        })
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn server_id(&self) -> &str {
        &self.shared.server_id
    }

    pub fn advertisement(&self) -> ServerAdvertisement {
        self.shared.advertisement()
    }

    pub fn load(&self) -> LoadSnapshot {
        self.shared.load()
    }

    pub fn fragment_status(&self, fragment_id: &str) -> Option<FragmentStatus> {
        let table = self.shared.fragments.lock().unwrap();
        table.get(fragment_id).map(|e| e.status.borrow().clone())
    }

    pub fn is_stopped(&self) -> bool {
        self.shared.shutdown.is_cancelled()
    }

    /// Orderly stop: in-flight fragments are marked Failed, subscribers
    /// receive that final update, then every connection is closed.
    pub async fn shutdown(&self) {
        if self.shared.closing.swap(true, Ordering::SeqCst) {
            self.tracker.wait().await;
            return;
        }
        let ids: Vec<String> = {
            let table = self.shared.fragments.lock().unwrap();
            table
                .iter()
                .filter(|(_, e)| e.status.borrow().state.is_active())
                .map(|(id, e)| {
                    e.cancel.store(true, Ordering::SeqCst);
                    id.clone()
                })
                .collect()
        };
        for id in ids {
            self.shared.fail(
                &id,
                FailureKind::Infrastructure,
                "server shutting down".into(),
            );
        }
        // Let subscription tasks forward the final updates.
        tokio::time::sleep(Duration::from_millis(50)).await;
        self.shared.shutdown.cancel();
        self.tracker.close();
        self.tracker.wait().await;
        info!(server = %self.shared.server_id, "server stopped");
    }

    /// Abrupt stop, as if the process died: sockets close with no final
    /// messages and fragment state is abandoned.
    pub async fn kill(&self) {
        self.shared.closing.store(true, Ordering::SeqCst);
        {
            let table = self.shared.fragments.lock().unwrap();
            for e in table.values() {
                e.cancel.store(true, Ordering::SeqCst);
            }
        }
        self.shared.shutdown.cancel();
        self.tracker.close();
        self.tracker.wait().await;
        info!(server = %self.shared.server_id, "server killed");
    }
}

/// Run a server until Ctrl-C or SIGTERM, then shut it down.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let handle = ServerHandle::start(config).await?;
    println!("{} listening on {}", handle.server_id(), handle.endpoint());
    wait_for_signal().await;
    handle.shutdown().await;
    Ok(())
}

pub(crate) async fn wait_for_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

async fn accept_loop(shared: Arc<Shared>, listener: TcpListener, tracker: TaskTracker) {
    loop {
        tokio::select! {
            _ = shared.shutdown.cancelled() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    debug!(%peer, "connection");
                    tracker.spawn(serve_connection(shared.clone(), stream, tracker.clone()));
                }
                Err(e) => {
                    warn!("accept failed: {e}");
                    tokio::time::sleep(Duration::from_millis(10)).await;
                }
            }
        }
    }
}

async fn advertise_loop(shared: Arc<Shared>, registry: String, every: Duration) {
    let ad = shared.advertisement();
    loop {
        let attempt = async {
            let mut client = ServerClient::connect(&registry).await?;
            client.register(&ad).await
        };
        match attempt.await {
            Ok(r) => debug!(generation = r.generation, "advertised to {registry}"),
            Err(e) => warn!("cannot advertise to {registry}: {e}"),
        }
        tokio::select! {
            _ = shared.shutdown.cancelled() => break,
            _ = tokio::time::sleep(every) => {}
        }
    }
}

async fn serve_connection(shared: Arc<Shared>, stream: TcpStream, tracker: TaskTracker) {
    let (mut sink, mut lines) = Connection::new(stream).split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Message>();
    let mut session: Option<String> = None;
    loop {
        tokio::select! {
            _ = shared.shutdown.cancelled() => {
                if shared.closing.load(Ordering::SeqCst) {
                    while let Ok(msg) = rx.try_recv() {
                        if sink.send(msg.encode()).await.is_err() {
                            break;
                        }
                    }
                }
                break;
            }
            Some(msg) = rx.recv() => {
                if sink.send(msg.encode()).await.is_err() {
                    break;
                }
            }
            line = lines.next() => {
                let reply = match line {
                    None => break,
                    Some(Err(e)) => {
                        let fatal = !matches!(e, tokio_util::codec::LinesCodecError::MaxLineLengthExceeded);
                        let _ = sink
                            .send(Message::error("", ErrorBody::new(ErrorCode::BadRequest, e.to_string())).encode())
                            .await;
                        if fatal { break } else { continue }
                    }
                    Some(Ok(line)) => match Message::decode(&line) {
                        Ok(msg) => dispatch(&shared, msg, &mut session, &tx, &tracker).await,
                        Err(e) => Some(Message::error("", ErrorBody::new(ErrorCode::BadRequest, e.to_string()))),
                    },
                };
                if let Some(reply) = reply {
                    if sink.send(reply.encode()).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
}

fn bad_request(id: &str, message: impl Into<String>) -> Message {
    Message::error(id, ErrorBody::new(ErrorCode::BadRequest, message))
}

async fn dispatch(
    shared: &Arc<Shared>,
    msg: Message,
    session: &mut Option<String>,
    tx: &mpsc::UnboundedSender<Message>,
    tracker: &TaskTracker,
) -> Option<Message> {
    let id = msg.request_id.as_str();
    macro_rules! body {
        ($t:ty) => {
            match msg.body_as::<$t>() {
                Ok(b) => b,
                Err(e) => return Some(bad_request(id, e.to_string())),
            }
        };
    }
    macro_rules! user {
        () => {
            match session.as_deref() {
                Some(u) => u.to_string(),
                None => {
                    return Some(Message::error(
                        id,
                        ErrorBody::new(ErrorCode::NotAuthenticated, "authenticate first"),
                    ))
                }
            }
        };
    }

    match msg.kind {
        MessageType::Heartbeat => None,
        MessageType::Auth => {
            let creds = body!(Credentials);
            let shared = shared.clone();
            let outcome = tokio::task::spawn_blocking(move || shared.users.authenticate(&creds))
                .await
                .ok()
                .and_then(Result::ok);
            Some(match outcome {
                Some(username) => {
                    *session = Some(username.clone());
                    Message::new(MessageType::Auth, id, &AuthAccepted { username })
                }
                None => {
                    *session = None;
                    Message::error(
                        id,
                        ErrorBody::new(ErrorCode::AuthFailed, "authentication failed"),
                    )
                }
            })
        }
        MessageType::Discover => {
            let req = body!(DiscoverRequest);
            let datasets = shared
                .descriptors
                .iter()
                .filter(|d| matches(d, &req.query))
                .cloned()
                .collect();
            let servers = req.include_servers.then(|| vec![shared.advertisement()]);
            Some(Message::new(
                MessageType::Discover,
                id,
                &DiscoverResponse {
                    datasets,
                    servers,
                    generation: 0,
                },
            ))
        }
        MessageType::OfferRequest => {
            let _user = user!();
            let req = body!(OfferRequest);
            let active = shared.load().active() + req.tentative;
            Some(
                match compute_offer(
                    &shared.terms,
                    &shared.hosted,
                    active,
                    &req.dataset_names,
                    unix_now(),
                    uuid::Uuid::new_v4().to_string(),
                ) {
                    Ok(offer) => Message::new(MessageType::Offer, id, &OfferResponse { offer }),
                    Err(e) => Message::error(
                        id,
                        ErrorBody::new(ErrorCode::DatasetNotHosted, e.to_string()),
                    ),
                },
            )
        }
        MessageType::ContractRequest => {
            let _user = user!();
            let req = body!(ContractRequest);
            let active = shared.load().active();
            Some(
                match compute_offer(
                    &shared.terms,
                    &shared.hosted,
                    active,
                    &req.dataset_names,
                    unix_now(),
                    uuid::Uuid::new_v4().to_string(),
                ) {
                    Ok(offer) => Message::new(
                        MessageType::Contract,
                        id,
                        &ContractResponse {
                            contract: sign_contract(&offer, &shared.secret),
                        },
                    ),
                    Err(e) => Message::error(
                        id,
                        ErrorBody::new(ErrorCode::DatasetNotHosted, e.to_string()),
                    ),
                },
            )
        }
        MessageType::Submit => {
            let user = user!();
            let req = body!(SubmitRequest);
            Some(submit(shared, id, user, req, tracker))
        }
        MessageType::Status => {
            let user = user!();
            let req = body!(FragmentRef);
            if !shared.schemes.contains(&Scheme::Poll) {
                return Some(Message::error(
                    id,
                    ErrorBody::new(ErrorCode::SchemeUnsupported, "poll scheme not offered"),
                ));
            }
            Some(match shared.lookup(&req.fragment_id, &user) {
                Some((rx, _)) => Message::new(
                    MessageType::Status,
                    id,
                    &StatusBody {
                        fragment_id: req.fragment_id,
                        status: rx.borrow().clone(),
                    },
                ),
                None => unknown_fragment(id, &req.fragment_id),
            })
        }
        MessageType::Subscribe => {
            let user = user!();
            let req = body!(FragmentRef);
            if !shared.schemes.contains(&Scheme::Push) {
                return Some(Message::error(
                    id,
                    ErrorBody::new(ErrorCode::SchemeUnsupported, "push scheme not offered"),
                ));
            }
            match shared.lookup(&req.fragment_id, &user) {
                Some((rx, _)) => {
                    tracker.spawn(push_status(
                        shared.clone(),
                        id.to_string(),
                        req.fragment_id,
                        rx,
                        tx.clone(),
                    ));
                    None
                }
                None => Some(unknown_fragment(id, &req.fragment_id)),
            }
        }
        MessageType::Fetch => {
            let user = user!();
            let req = body!(FragmentRef);
            Some(match shared.lookup(&req.fragment_id, &user) {
                Some((rx, result)) => {
                    let state = rx.borrow().state;
                    match (state, result) {
                        (FragmentState::Completed, Some(value)) => Message::new(
                            MessageType::Result,
                            id,
                            &ResultBody {
                                fragment_id: req.fragment_id,
                                value,
                            },
                        ),
                        _ => Message::error(
                            id,
                            ErrorBody::new(
                                ErrorCode::NotCompleted,
                                format!("fragment {} is {state:?}", req.fragment_id),
                            ),
                        ),
                    }
                }
                None => unknown_fragment(id, &req.fragment_id),
            })
        }
        other => Some(bad_request(
            id,
            format!("{other:?} is not a request this server accepts"),
        )),
    }
}

fn unknown_fragment(id: &str, fragment_id: &str) -> Message {
    Message::error(
        id,
        ErrorBody::new(
            ErrorCode::UnknownFragment,
            format!("unknown fragment {fragment_id}"),
        ),
    )
}

fn submit(
    shared: &Arc<Shared>,
    id: &str,
    user: String,
    req: SubmitRequest,
    tracker: &TaskTracker,
) -> Message {
    if shared.closing.load(Ordering::SeqCst) {
        return Message::error(
            id,
            ErrorBody::new(ErrorCode::ShuttingDown, "server shutting down"),
        );
    }
    let SubmitRequest { contract, fragment } = req;
    if let Err(reason) = enforce_contract(
        &shared.server_id,
        &contract,
        &fragment.dataset_names,
        unix_now(),
        &shared.secret,
    ) {
        return Message::error(id, ErrorBody::rejected(reason));
    }
    if fragment.contract_id != contract.contract_id {
        return bad_request(id, "fragment names a different contract");
    }
    if let Err(e) = fragment.analysis.validate() {
        return bad_request(id, e.to_string());
    }
    let status = FragmentStatus::queued();
    {
        let mut table = shared.fragments.lock().unwrap();
        if table.contains_key(&fragment.fragment_id) {
            return bad_request(id, format!("fragment {} already submitted", fragment.fragment_id));
        }
        let (status_tx, _) = watch::channel(status.clone());
        table.insert(
            fragment.fragment_id.clone(),
            FragmentEntry {
                owner: user,
                status: status_tx,
                result: None,
                cancel: Arc::new(AtomicBool::new(false)),
            },
        );
    }
    let fragment_id = fragment.fragment_id.clone();
    tracker.spawn(execute(shared.clone(), fragment));
    Message::new(
        MessageType::Status,
        id,
        &StatusBody {
            fragment_id,
            status,
        },
    )
}

async fn execute(shared: Arc<Shared>, fragment: JobFragment) {
    let fragment_id = fragment.fragment_id.clone();
    let permit = tokio::select! {
        _ = shared.shutdown.cancelled() => return,
        p = shared.pool.clone().acquire_owned() => match p {
            Ok(p) => p,
            Err(_) => return,
        },
    };
    let cancel = {
        let table = shared.fragments.lock().unwrap();
        match table.get(&fragment_id) {
            Some(e) => e.cancel.clone(),
            None => return,
        }
    };
    let started = shared.update(&fragment_id, |s, _| {
        s.state = FragmentState::Running;
        s.messages.push(note(
            Severity::Info,
            format!("running on {}", shared.server_id),
        ));
    });
    if !started {
        return;
    }

    let datasets: Vec<Arc<dyn DataSet>> = fragment
        .dataset_names
        .iter()
        .filter_map(|n| shared.datasets.get(n).cloned())
        .collect();
    let worker = {
        let shared = shared.clone();
        let fragment_id = fragment_id.clone();
        tokio::task::spawn_blocking(move || {
            let refs: Vec<&dyn DataSet> = datasets.iter().map(|d| d.as_ref()).collect();
            let mut progress = |n: u64| {
                shared.update(&fragment_id, |s, _| {
                    s.events_processed = s.events_processed.max(n);
                });
            };
            run_fragment(
                &fragment.analysis,
                &refs,
                &shared.run_opts,
                &mut progress,
                &cancel,
            )
        })
    };
    let outcome = worker.await;
    drop(permit);

    match outcome {
        Ok(Ok(out)) => {
            shared.update(&fragment_id, move |s, result| {
                *result = Some(out.value);
                s.events_processed = out.events_processed;
                for w in out.warnings {
                    s.messages.push(note(Severity::Warning, w));
                }
                s.messages.push(note(
                    Severity::Info,
                    format!("completed {} events", out.events_processed),
                ));
                s.state = FragmentState::Completed;
            });
        }
        Ok(Err(AnalysisError::Cancelled)) => {
            shared.fail(
                &fragment_id,
                FailureKind::Infrastructure,
                "cancelled".into(),
            );
        }
        Ok(Err(e)) => {
            let kind = if e.is_deterministic() {
                FailureKind::Analysis
            } else {
                FailureKind::Infrastructure
            };
            let label = if e.is_deterministic() {
                "AnalysisError"
            } else {
                "StoreUnavailable"
            };
            shared.fail(&fragment_id, kind, format!("{label}: {e}"));
        }
        Err(e) => {
            shared.fail(
                &fragment_id,
                FailureKind::Infrastructure,
                format!("worker panicked: {e}"),
            );
        }
    }
}

/// Push scheme: forward every status change, with heartbeats in between,
/// until the fragment reaches a terminal state.
async fn push_status(
    shared: Arc<Shared>,
    request_id: String,
    fragment_id: String,
    mut rx: watch::Receiver<FragmentStatus>,
    tx: mpsc::UnboundedSender<Message>,
) {
    let mut heartbeat = tokio::time::interval(shared.heartbeat);
    heartbeat.tick().await;
    let event = |status: FragmentStatus| {
        Message::new(
            MessageType::StatusEvent,
            request_id.clone(),
            &StatusBody {
                fragment_id: fragment_id.clone(),
                status,
            },
        )
    };
    let mut status = rx.borrow_and_update().clone();
    loop {
        let terminal = status.state.is_terminal();
        if tx.send(event(status)).is_err() || terminal {
            return;
        }
        loop {
            tokio::select! {
                changed = rx.changed() => {
                    if changed.is_err() {
                        return;
                    }
                    break;
                }
                _ = heartbeat.tick() => {
                    let beat = Message::new(MessageType::Heartbeat, request_id.clone(), &serde_json::json!({}));
                    if tx.send(beat).is_err() {
                        return;
                    }
                }
                _ = shared.shutdown.cancelled() => return,
            }
        }
        status = rx.borrow_and_update().clone();
    }
}
