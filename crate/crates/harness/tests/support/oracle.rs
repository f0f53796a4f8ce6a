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

//! A step interpreter for greedy brokering, written independently of the
//! production broker. It executes the procedure one instruction at a
//! time against a table of servers:
//!
//! * data sets are taken largest first (ties by name);
//! * for each, hosts are ranked by current estimate (ties by id);
//! * the next host is asked only while its estimate beats the best offer
//!   so far;
//! * every offer replaces that server's estimate;
//! * the best offer wins (first one on ties) and counts as one more
//!   placed data set when that server prices later offers.

use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct OracleServer {
    pub id: String,
    pub capacity: f64,
    pub base_load: usize,
    pub reachable: bool,
    pub hosts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub assignment: BTreeMap<String, String>,
    /// (data set, server) for every offer request, in order.
    pub asked: Vec<(String, String)>,
    /// Why brokering stopped early, if it did.
    pub failure: Option<OracleError>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    NoHost(String),
    NoOffer(String),
}

enum Step {
    NextDataset,
    Rank,
    Consider,
    Ask,
    Settle,
}

pub fn run(
    servers: &[OracleServer],
    datasets: &[(String, u64)],
    estimates: &BTreeMap<String, f64>,
) -> OracleRun {
    let mut queue: Vec<(String, u64)> = datasets.to_vec();
    queue.sort_by(|a, b| (std::cmp::Reverse(a.1), &a.0).cmp(&(std::cmp::Reverse(b.1), &b.0)));
    queue.dedup_by(|a, b| a.0 == b.0);
    queue.reverse();

    let mut estimate: BTreeMap<String, f64> = servers
        .iter()
        .map(|s| (s.id.clone(), estimates.get(&s.id).copied().unwrap_or(s.capacity)))
        .collect();
    let mut placed: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = OracleRun {
        assignment: BTreeMap::new(),
        asked: Vec::new(),
        failure: None,
    };

    let mut current: Option<String> = None;
    let mut ranking: Vec<&OracleServer> = Vec::new();
    let mut cursor = 0usize;
    let mut best: Option<(String, f64)> = None;
    let mut step = Step::NextDataset;
    loop {
        step = match step {
            Step::NextDataset => match queue.pop() {
                None => return out,
                Some((name, _)) => {
                    current = Some(name);
                    best = None;
                    cursor = 0;
                    Step::Rank
                }
            },
            Step::Rank => {
                let name = current.as_ref().unwrap();
                ranking = servers.iter().filter(|s| s.hosts.contains(name)).collect();
                if ranking.is_empty() {
                    out.failure = Some(OracleError::NoHost(name.clone()));
                    return out;
                }
                // Insertion sort: descending estimate, then ascending id.
                for i in 1..ranking.len() {
                    let mut j = i;
                    while j > 0 {
                        let (a, b) = (ranking[j - 1], ranking[j]);
                        let (ea, eb) = (estimate[&a.id], estimate[&b.id]);
                        let swap = eb > ea || (eb == ea && b.id < a.id);
                        if !swap {
                            break;
                        }
                        ranking.swap(j - 1, j);
                        j -= 1;
                    }
                }
                Step::Consider
            }
            Step::Consider => {
                if cursor == ranking.len() {
                    Step::Settle
                } else {
                    let e = estimate[&ranking[cursor].id];
                    match &best {
                        Some((_, b)) if *b >= e => Step::Settle,
                        _ => Step::Ask,
                    }
                }
            }
            Step::Ask => {
                let server = ranking[cursor];
                let name = current.clone().unwrap();
                out.asked.push((name, server.id.clone()));
                if server.reachable {
                    let load = server.base_load + placed.get(&server.id).copied().unwrap_or(0);
                    let hp = server.capacity / (1 + load) as f64;
                    estimate.insert(server.id.clone(), hp);
                    if best.as_ref().is_none_or(|(_, b)| hp > *b) {
                        best = Some((server.id.clone(), hp));
                    }
                }
                cursor += 1;
                Step::Consider
            }
            Step::Settle => {
                let name = current.take().unwrap();
                let Some((winner, _)) = best.take() else {
                    out.failure = Some(OracleError::NoOffer(name));
                    return out;
                };
                *placed.entry(winner.clone()).or_default() += 1;
                out.assignment.insert(name, winner);
                Step::NextDataset
            }
        };
    }
}
