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

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero if any failed.

mod support;

#[path = "../../core/tests/support/arb.rs"]
mod arb;

use std::panic::AssertUnwindSafe;
use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use oxjob_agent::channel::NetworkChannel;
use oxjob_agent::{run_job, AgentConfig, Selection};
use oxjob_core::analysis::{run_fragment, AnalysisSpec, CompareOp, JobFragment, RunOptions};
use oxjob_core::broker::{
    broker_job, enforce_contract, sign_contract, verify_contract, BrokerError, BrokerSeeds,
    Contract, ContractOffer, RejectReason, SharedSecret,
};
use oxjob_core::dummy::{DummyDataSet, DummyStoreSpec, FieldSpec};
use oxjob_core::merge::{merge, merge_all, MergeValue};
use oxjob_core::model::{DataSet, Event, MemoryDataSet};
use oxjob_core::proto::client::ServerClient;
use oxjob_core::proto::FragmentStatus;
use oxjob_harness::{load_test, LoadSample, LoadTestConfig};
use oxjob_server::{ClusterSpec, LocalCluster, NodeSpec};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use support::oracle::{self, OracleError};
use support::sim::{Instance, SimChannel};

type Outcome = Result<String, String>;
type Criterion = fn(&tokio::runtime::Runtime) -> Outcome;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- 1 -------------------------------------------------------------------

fn merge_algebra(_rt: &tokio::runtime::Runtime) -> Outcome {
    const CASES: u32 = 1000;
    let started = Instant::now();
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let fail = |e: String| TestCaseError::fail(e);

    let mut runner = TestRunner::new(config.clone());
    runner
        .run(&arb::pair(), |(a, b)| {
            let ab = merge(&a, &b).map_err(|e| fail(e.to_string()))?;
            let ba = merge(&b, &a).map_err(|e| fail(e.to_string()))?;
            proptest::prop_assert_eq!(ab, ba);
            Ok(())
        })
        .map_err(|e| format!("commutativity: {e}"))?;

    let mut runner = TestRunner::new(config.clone());
    runner
        .run(&arb::triple(), |(a, b, c)| {
            let l = merge(&merge(&a, &b).unwrap(), &c).map_err(|e| fail(e.to_string()))?;
            let r = merge(&a, &merge(&b, &c).unwrap()).map_err(|e| fail(e.to_string()))?;
            proptest::prop_assert_eq!(l.serialize(), r.serialize());
            Ok(())
        })
        .map_err(|e| format!("associativity: {e}"))?;

    let mut runner = TestRunner::new(config.clone());
    runner
        .run(&arb::any_value(), |a| {
            let e = a.identity_like();
            proptest::prop_assert_eq!(&merge(&a, &e).unwrap(), &a);
            proptest::prop_assert_eq!(&merge(&e, &a).unwrap(), &a);
            Ok(())
        })
        .map_err(|e| format!("identity: {e}"))?;

    let mut runner = TestRunner::new(config);
    runner
        .run(&arb::any_value(), |a| {
            let bytes = a.serialize();
            let back = MergeValue::deserialize(&bytes).map_err(|e| fail(e.to_string()))?;
            proptest::prop_assert_eq!(&back, &a);
            proptest::prop_assert_eq!(back.serialize(), bytes);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;

    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("4 properties x {CASES} cases, 0 failures, {elapsed:.1?}"))
}

// ---- 2 -------------------------------------------------------------------

fn random_analysis(rng: &mut StdRng, depth: u32) -> AnalysisSpec {
    let field = |rng: &mut StdRng| ["x", "y"][rng.gen_range(0..2)].to_string();
    match rng.gen_range(0..if depth == 0 { 5 } else { 4 }) {
        0 => AnalysisSpec::Count,
        1 => AnalysisSpec::Sum { field: field(rng) },
        2 => {
            let lo = rng.gen_range(-3.0..0.0);
            AnalysisSpec::Histogram {
                field: field(rng),
                lo,
                hi: lo + rng.gen_range(0.5..5.0),
                nbins: rng.gen_range(1..40),
            }
        }
        3 => AnalysisSpec::FilterCount {
            field: field(rng),
            op: [CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge, CompareOp::Eq]
                [rng.gen_range(0..5)],
            threshold: rng.gen_range(-2.0..2.0),
        },
        _ => AnalysisSpec::Composite(
            (0..rng.gen_range(1..4))
                .map(|i| (format!("m{i}"), random_analysis(rng, depth + 1)))
                .collect(),
        ),
    }
}

fn evaluate(spec: &AnalysisSpec, parts: &[&dyn DataSet]) -> Result<MergeValue, String> {
    run_fragment(
        spec,
        parts,
        &RunOptions::default(),
        &mut |_| {},
        &AtomicBool::new(false),
    )
    .map(|o| o.value)
    .map_err(|e| e.to_string())
}

fn split_merge(_rt: &tokio::runtime::Runtime) -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    for trial in 0..50 {
        let analysis = random_analysis(&mut rng, 0);
        let spec = DummyStoreSpec::new(format!("trial-{trial}"), rng.gen_range(0..3000), rng.gen())
            .with_field(FieldSpec::uniform("x", -2.0, 2.0))
            .with_field(FieldSpec::gaussian("y", 0.0, 1.5));
        let whole = DummyDataSet::new(spec.clone());
        let k = rng.gen_range(1..=5);
        let mut buckets: Vec<Vec<Event>> = vec![Vec::new(); k];
        for id in 0..spec.event_count {
            buckets[rng.gen_range(0..k)].push(spec.event(id));
        }
        let parts: Vec<MemoryDataSet> = buckets
            .into_iter()
            .enumerate()
            .map(|(i, events)| MemoryDataSet::new(format!("{}-part{i}", spec.name), events).unwrap())
            .collect();

        let expected = evaluate(&analysis, &[&whole])?;
        let pieces: Vec<MergeValue> = parts
            .iter()
            .map(|p| evaluate(&analysis, &[p]))
            .collect::<Result<_, _>>()?;
        let merged = merge_all(&pieces).map_err(|e| e.to_string())?;
        check(merged.serialize() == expected.serialize(), || {
            format!("trial {trial} (k={k}, {analysis:?}) differs")
        })?;
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("50 triples, k <= 5, exact equality, {elapsed:.1?}"))
}

// ---- 3 -------------------------------------------------------------------

fn broker_oracle(rt: &tokio::runtime::Runtime) -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let secret = SharedSecret::new("acceptance");
    let (mut ok, mut errors) = (0, 0);
    for i in 0..200 {
        let inst = Instance::random(&mut rng);
        let expected = oracle::run(&inst.servers, &inst.datasets, &inst.seeds);

        let catalog = inst.catalog();
        let mut seeds = BrokerSeeds::from_catalog(&catalog);
        for (id, v) in &inst.seeds {
            seeds.set(id, *v);
        }
        let mut channel = SimChannel::new(&inst, secret.clone());
        let got = rt.block_on(broker_job(
            &inst.descriptors(),
            &catalog,
            &mut seeds,
            &mut channel,
            Some(&secret),
        ));
        check(channel.asked == expected.asked, || {
            format!("instance {i}: requests {:?} vs oracle {:?}", channel.asked, expected.asked)
        })?;
        match (&expected.failure, got) {
            (None, Ok(neg)) => {
                check(neg.assignment == expected.assignment, || {
                    format!(
                        "instance {i}: assignment {:?} vs oracle {:?}",
                        neg.assignment, expected.assignment
                    )
                })?;
                ok += 1;
            }
            (Some(OracleError::NoHost(a)), Err(BrokerError::NoHostingServer(b))) if *a == b => {
                errors += 1
            }
            (Some(OracleError::NoOffer(_)), Err(BrokerError::NegotiationFailed(_))) => errors += 1,
            (want, got) => return Err(format!("instance {i}: oracle {want:?}, broker {got:?}")),
        }
    }
    Ok(format!("200/200 agree ({ok} assignments, {errors} matching failures)"))
}

// ---- 4 -------------------------------------------------------------------

fn optimistic_agent(rt: &tokio::runtime::Runtime) -> Outcome {
    rt.block_on(async {
        let nodes: Vec<NodeSpec> = [3.0, 2.0, 1.5, 1.0]
            .iter()
            .enumerate()
            .map(|(i, c)| NodeSpec::new(format!("s{i}"), *c).hosting(["X"]))
            .collect();
        let n = nodes.len();
        let cluster = LocalCluster::start(ClusterSpec::new(
            vec![DummyStoreSpec::new("X", 100, 1)],
            nodes,
        ))
        .await
        .map_err(|e| e.to_string())?;
        let descriptors = vec![oxjob_core::model::DataSetDescriptor::new("X", 100)];
        let secret = SharedSecret::new(cluster.secret().as_bytes());

        // Every estimate is stale and far above what any server offers, so
        // no offer ever beats the next estimate.
        let mut stale = BrokerSeeds::new();
        for s in cluster.servers() {
            stale.set(s.server_id(), 1000.0);
        }
        let mut channel = NetworkChannel::new(cluster.credentials().clone());
        let neg = broker_job(&descriptors, cluster.catalog(), &mut stale, &mut channel, Some(&secret))
            .await
            .map_err(|e| e.to_string())?;
        let stale_requests = neg.offer_requests();

        let mut fresh = BrokerSeeds::from_catalog(cluster.catalog());
        let mut channel = NetworkChannel::new(cluster.credentials().clone());
        let fresh_neg = broker_job(&descriptors, cluster.catalog(), &mut fresh, &mut channel, Some(&secret))
            .await
            .map_err(|e| e.to_string())?;
        cluster.shutdown().await;

        check(stale_requests == n, || format!("{stale_requests} offer requests, expected {n}"))?;
        check(neg.assignment["X"] == "s0", || format!("assigned to {}", neg.assignment["X"]))?;
        Ok(format!(
            "stale seeds: {stale_requests} requests to {n} servers (fresh seeds: {})",
            fresh_neg.offer_requests()
        ))
    })
}

// ---- 5 -------------------------------------------------------------------

fn flip_string(s: &mut String, rng: &mut StdRng) {
    let mut bytes = std::mem::take(s).into_bytes();
    let i = rng.gen_range(0..bytes.len());
    // Low seven bits only: the byte stays ASCII and the string stays valid.
    bytes[i] ^= 1 << rng.gen_range(0..7);
    *s = String::from_utf8(bytes).expect("ascii");
}

fn tamper(c: &Contract, rng: &mut StdRng) -> Contract {
    let mut t = c.clone();
    let bit = |rng: &mut StdRng| 1u64 << rng.gen_range(0..64);
    match rng.gen_range(0..10) {
        0 => flip_string(&mut t.contract_id, rng),
        1 => flip_string(&mut t.server_id, rng),
        2 => flip_string(&mut t.endpoint, rng),
        3 => {
            let i = rng.gen_range(0..t.dataset_names.len());
            flip_string(&mut t.dataset_names[i], rng)
        }
        4 => t.horsepower = f64::from_bits(t.horsepower.to_bits() ^ bit(rng)),
        5 => t.estimated_delay = f64::from_bits(t.estimated_delay.to_bits() ^ bit(rng)),
        6 => t.valid_from ^= bit(rng) as i64,
        7 => t.valid_until ^= bit(rng) as i64,
        8 => flip_string(&mut t.issuer, rng),
        _ => flip_string(&mut t.signature, rng),
    }
    t
}

fn contract_security(_rt: &tokio::runtime::Runtime) -> Outcome {
    let secret = SharedSecret::new("deployment secret");
    let now = 1_700_000_000;
    let offer = ContractOffer {
        offer_id: "c-42".into(),
        server_id: "server-a".into(),
        endpoint: "10.0.0.1:7000".into(),
        dataset_names: vec!["dummy-A".into(), "dummy-B".into()],
        horsepower: 2.5,
        estimated_delay: 0.0,
        valid_from: now,
        valid_until: now + 300,
        issuer: "server-a".into(),
    };
    let contract = sign_contract(&offer, &secret);
    check(verify_contract(&contract, &secret), || "genuine contract rejected".into())?;
    let names = contract.dataset_names.clone();
    check(enforce_contract("server-a", &contract, &names, now + 1, &secret).is_ok(), || {
        "genuine contract not admitted".into()
    })?;

    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    for i in 0..64 {
        let t = tamper(&contract, &mut rng);
        check(t != contract || t.horsepower.is_nan() || t.estimated_delay.is_nan(), || {
            format!("tamper {i} changed nothing")
        })?;
        check(!verify_contract(&t, &secret), || format!("tamper {i} accepted: {t:?}"))?;
    }

    let expired = enforce_contract("server-a", &contract, &names, now + 301, &secret);
    check(expired == Err(RejectReason::Expired), || format!("late use gave {expired:?}"))?;
    let early = enforce_contract("server-a", &contract, &names, now - 1, &secret);
    check(early == Err(RejectReason::Expired), || format!("early use gave {early:?}"))?;
    let wrong = enforce_contract("server-b", &contract, &names, now + 1, &secret);
    check(wrong == Err(RejectReason::WrongServer), || format!("other server gave {wrong:?}"))?;
    Ok("64/64 single-bit tampers rejected; Expired and WrongServer enforced".into())
}

// ---- 6 -------------------------------------------------------------------

fn fault_tolerance(rt: &tokio::runtime::Runtime) -> Outcome {
    let started = Instant::now();
    let out = rt.block_on(async {
        let stores: Vec<DummyStoreSpec> = ["A", "B", "C"]
            .iter()
            .enumerate()
            .map(|(i, n)| DummyStoreSpec::new(*n, 1000, i as u64).with_field(FieldSpec::uniform("x", 0.0, 1.0)))
            .collect();
        let nodes: Vec<NodeSpec> = (1..=3)
            .map(|i| {
                let mut n = NodeSpec::new(format!("s{i}"), 2.0).hosting(["A", "B", "C"]);
                n.work_per_event_us = 1_500;
                n
            })
            .collect();
        let cluster = LocalCluster::start(ClusterSpec::new(stores, nodes))
            .await
            .map_err(|e| e.to_string())?;
        let mut cfg = AgentConfig::new(
            cluster.catalog_path().to_str().unwrap(),
            cluster.credentials().clone(),
        );
        cfg.secret = Some(cluster.secret().to_string());
        let selection = Selection::Names(vec!["A".into(), "B".into(), "C".into()]);
        let job = tokio::spawn(async move { run_job(&AnalysisSpec::Count, &selection, &cfg).await });

        let deadline = Instant::now() + Duration::from_secs(20);
        let victim = loop {
            if let Some(s) = cluster.servers().find(|s| s.load().running > 0) {
                break s.server_id().to_string();
            }
            if Instant::now() > deadline {
                return Err("no fragment started".to_string());
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        };
        cluster.kill(&victim).await.map_err(|e| e.to_string())?;
        let out = job.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
        cluster.shutdown().await;
        Ok::<_, String>((victim, out))
    });
    let (victim, out) = out?;
    check(out.result == MergeValue::counter(3000), || format!("result {:?}", out.result))?;
    let initial_on_victim: Vec<&str> = out
        .report
        .fragments
        .iter()
        .filter(|f| f.attempt == 0 && f.server_id == victim)
        .map(|f| f.fragment_id.as_str())
        .collect();
    let rebrokered: Vec<&str> = out.report.rebrokered.iter().map(|r| r.fragment_id.as_str()).collect();
    check(!rebrokered.is_empty() && rebrokered == initial_on_victim, || {
        format!("re-brokered {rebrokered:?}, fragments on {victim}: {initial_on_victim:?}")
    })?;
    check(out.report.retries == rebrokered.len() as u32, || format!("retries {}", out.report.retries))?;
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "killed {victim}; Counter(3000); re-brokered exactly {rebrokered:?}; {elapsed:.1?}"
    ))
}

// ---- 7 -------------------------------------------------------------------

fn load_reproduction(rt: &tokio::runtime::Runtime) -> Outcome {
    let started = Instant::now();
    let csv = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_load.csv");
    let mut cfg = LoadTestConfig::new(8, 20, 5, &csv);
    cfg.n_server_hosts = 2;
    cfg.n_datasets = 8;
    cfg.datasets_per_job = 2;
    cfg.events_per_dataset = 200;
    cfg.work_per_event_us = 1_000;
    cfg.worker_pool = 2;
    cfg.max_inter_job_delay_ms = 200;
    cfg.sample_interval_ms = 10;
    cfg.seed = 7;
    let summary = rt.block_on(load_test(&cfg)).map_err(|e| format!("{e:#}"))?;
    let elapsed = started.elapsed();
    check(summary.jobs_completed == 100, || format!("{} jobs", summary.jobs_completed))?;
    check(summary.load_ratio <= 2.0, || format!("max/mean load {:.3}", summary.load_ratio))?;
    let rows: Vec<LoadSample> = csv::Reader::from_path(&csv)
        .map_err(|e| e.to_string())?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    check(!rows.is_empty(), || "empty CSV".into())?;
    check(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "100/100 jobs correct; steady-state max/mean {:.3}; {} CSV rows at {}; {elapsed:.1?}",
        summary.load_ratio,
        rows.len(),
        csv.display()
    ))
}

// ---- 8 -------------------------------------------------------------------

fn comparable(s: &FragmentStatus) -> impl PartialEq + std::fmt::Debug {
    (
        s.state,
        s.events_processed,
        s.failure,
        s.messages.iter().map(|m| (m.severity, m.text.clone())).collect::<Vec<_>>(),
    )
}

fn scheme_equivalence(rt: &tokio::runtime::Runtime) -> Outcome {
    rt.block_on(async {
        let stores: Vec<DummyStoreSpec> = (0..4)
            .map(|i| {
                DummyStoreSpec::new(format!("d{i}"), 200 + 300 * i, 100 + i)
                    .with_field(FieldSpec::uniform("x", -2.0, 2.0))
                    .with_field(FieldSpec::gaussian("y", 0.0, 1.5))
            })
            .collect();
        let mut node = NodeSpec::new("s1", 1.0).hosting(["d0", "d1", "d2", "d3"]);
        node.worker_pool = 4;
        let cluster = LocalCluster::start(ClusterSpec::new(stores, vec![node]))
            .await
            .map_err(|e| e.to_string())?;
        let endpoint = cluster.server("s1").unwrap().endpoint();
        let connect = || async {
            let mut c = ServerClient::connect(&endpoint).await.map_err(|e| e.to_string())?;
            c.auth(cluster.credentials()).await.map_err(|e| e.to_string())?;
            Ok::<_, String>(c)
        };
        let mut rng = StdRng::seed_from_u64(0x5eed_0008);
        let mut control = connect().await?;
        for i in 0..20 {
            let analysis = random_analysis(&mut rng, 0);
            let names: Vec<String> = (0..4)
                .filter(|_| rng.gen_bool(0.6))
                .map(|d| format!("d{d}"))
                .collect();
            let names = if names.is_empty() { vec!["d0".to_string()] } else { names };
            let contract = control.request_contract(&names).await.map_err(|e| e.to_string())?;
            let fragment = |id: String| JobFragment {
                job_id: "scheme".into(),
                fragment_id: id,
                analysis: analysis.clone(),
                dataset_names: names.clone(),
                contract_id: contract.contract_id.clone(),
            };

            // One fragment watched both ways.
            let shared = format!("both-{i}");
            control.submit(&contract, &fragment(shared.clone())).await.map_err(|e| e.to_string())?;
            let mut stream = connect()
                .await?
                .subscribe(&shared, Duration::from_secs(5))
                .await
                .map_err(|e| e.to_string())?;
            let pushed = stream.wait_terminal(|_| {}).await.map_err(|e| e.to_string())?;
            let polled = control.status(&shared).await.map_err(|e| e.to_string())?;
            check(pushed == polled, || format!("fragment {i}: push {pushed:?} vs poll {polled:?}"))?;
            let via_push = stream.into_client().fetch(&shared).await.map_err(|e| e.to_string())?;

            // The same work again, watched by polling only.
            let solo = format!("poll-{i}");
            control.submit(&contract, &fragment(solo.clone())).await.map_err(|e| e.to_string())?;
            let polled_solo = loop {
                let s = control.status(&solo).await.map_err(|e| e.to_string())?;
                if s.state.is_terminal() {
                    break s;
                }
                tokio::time::sleep(Duration::from_millis(5)).await;
            };
            let via_poll = control.fetch(&solo).await.map_err(|e| e.to_string())?;
            check(comparable(&pushed) == comparable(&polled_solo), || {
                format!("fragment {i}: terminal status differs between schemes")
            })?;
            check(via_push.serialize() == via_poll.serialize(), || {
                format!("fragment {i}: results differ")
            })?;
        }
        cluster.shutdown().await;
        Ok("20/20 fragments: identical terminal status and result bytes".to_string())
    })
}

// ---- driver --------------------------------------------------------------

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("runtime");
    let criteria: [(&str, Criterion); 8] = [
        ("merge algebra", merge_algebra),
        ("split/merge equivalence", split_merge),
        ("broker oracle equivalence", broker_oracle),
        ("optimistic agent", optimistic_agent),
        ("contract security", contract_security),
        ("fault tolerance", fault_tolerance),
        ("desk-scale load test", load_reproduction),
        ("scheme equivalence", scheme_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| run(&rt)))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
