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

//! Declarative analyses and the event loop that runs one job fragment.
//!
//! Every analysis produces a [`MergeValue`] whose merge over any partition
//! of the input equals the result over the whole input. Float sums are
//! carried as integer micro-units for that reason.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merge::{Histogram, MergeValue};
use crate::model::{DataSet, Event, StoreError};

pub const SUM_COUNT: &str = "count";
pub const SUM_POSITIVE: &str = "sum_times_1e6_rounded";
pub const SUM_NEGATIVE: &str = "neg_sum_times_1e6_rounded";
pub const DEFAULT_PROGRESS_EVERY: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CompareOp {
    pub fn test(self, value: f64, threshold: f64) -> bool {
        match self {
            CompareOp::Lt => value < threshold,
            CompareOp::Le => value <= threshold,
            CompareOp::Gt => value > threshold,
            CompareOp::Ge => value >= threshold,
            CompareOp::Eq => value == threshold,
        }
    }
}

/// An analysis the server knows how to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum AnalysisSpec {
    Count,
    Sum {
        field: String,
    },
    Histogram {
        field: String,
        lo: f64,
        hi: f64,
        nbins: u32,
    },
    FilterCount {
        field: String,
        op: CompareOp,
        threshold: f64,
    },
    Composite(BTreeMap<String, AnalysisSpec>),
}

impl AnalysisSpec {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        match self {
            AnalysisSpec::Histogram { lo, hi, nbins, .. } => Histogram::new(*lo, *hi, *nbins)
                .map(drop)
                .map_err(|e| AnalysisError::InvalidSpec(e.to_string())),
            AnalysisSpec::Composite(members) => {
                if members.is_empty() {
                    return Err(AnalysisError::InvalidSpec("empty composite".into()));
                }
                members.values().try_for_each(AnalysisSpec::validate)
            }
            AnalysisSpec::Sum { field } | AnalysisSpec::FilterCount { field, .. }
                if field.is_empty() =>
            {
                Err(AnalysisError::InvalidSpec("empty field name".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One contract's share of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFragment {
    pub job_id: String,
    pub fragment_id: String,
    pub analysis: AnalysisSpec,
    pub dataset_names: Vec<String>,
    pub contract_id: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid analysis: {0}")]
    InvalidSpec(String),
    #[error("field {field} missing from event {event_id} of {dataset}")]
    MissingField {
        field: String,
        dataset: String,
        event_id: u64,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cancelled")]
    Cancelled,
}

impl AnalysisError {
    /// Deterministic failures would recur on any server.
    pub fn is_deterministic(&self) -> bool {
        matches!(
            self,
            AnalysisError::InvalidSpec(_) | AnalysisError::MissingField { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Fail on a missing field instead of skipping the event.
    pub strict: bool,
    pub progress_every: u64,
    /// Artificial work per event, for load studies.
    pub work_per_event: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            strict: false,
            progress_every: DEFAULT_PROGRESS_EVERY,
            work_per_event: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentOutput {
    pub value: MergeValue,
    pub events_processed: u64,
    pub warnings: Vec<String>,
}

enum Accumulator {
    Count(u64),
    Sum {
        field: String,
        count: u64,
        positive: u64,
        negative: u64,
    },
    Histogram {
        field: String,
        hist: Histogram,
    },
    FilterCount {
        field: String,
        op: CompareOp,
        threshold: f64,
        count: u64,
    },
    Composite(BTreeMap<String, Accumulator>),
}

impl Accumulator {
    fn new(spec: &AnalysisSpec) -> Result<Self, AnalysisError> {
        Ok(match spec {
            AnalysisSpec::Count => Accumulator::Count(0),
            AnalysisSpec::Sum { field } => Accumulator::Sum {
                field: field.clone(),
                count: 0,
                positive: 0,
                negative: 0,
            },
            AnalysisSpec::Histogram {
                field,
                lo,
                hi,
                nbins,
            } => Accumulator::Histogram {
                field: field.clone(),
                hist: Histogram::new(*lo, *hi, *nbins)
                    .map_err(|e| AnalysisError::InvalidSpec(e.to_string()))?,
            },
            AnalysisSpec::FilterCount {
                field,
                op,
                threshold,
            } => Accumulator::FilterCount {
                field: field.clone(),
                op: *op,
                threshold: *threshold,
                count: 0,
            },
            AnalysisSpec::Composite(members) => Accumulator::Composite(
                members
                    .iter()
                    .map(|(k, s)| Accumulator::new(s).map(|a| (k.clone(), a)))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Feed one event; `missing` collects fields the event lacked.
    fn feed(&mut self, event: &Event, missing: &mut Vec<String>) {
        let lookup = |field: &str, missing: &mut Vec<String>| {
            let v = event.get(field).filter(|v| v.is_finite());
            if v.is_none() {
                missing.push(field.to_string());
            }
            v
        };
        match self {
            Accumulator::Count(n) => *n += 1,
            Accumulator::Sum {
                field,
                count,
                positive,
                negative,
            } => {
                if let Some(v) = lookup(field, missing) {
                    let micro = (v * 1e6).round();
                    if micro >= 0.0 {
                        *positive += micro as u64;
                    } else {
                        *negative += (-micro) as u64;
                    }
                    *count += 1;
                }
            }
            Accumulator::Histogram { field, hist } => {
                if let Some(v) = lookup(field, missing) {
                    hist.fill(v);
                }
            }
            Accumulator::FilterCount {
                field,
                op,
                threshold,
                count,
            } => {
                // Events without the field never match; that is not an
                // error for a filter.
                if let Some(v) = event.get(field) {
                    if op.test(v, *threshold) {
                        *count += 1;
                    }
                }
            }
            Accumulator::Composite(members) => {
                for acc in members.values_mut() {
                    acc.feed(event, missing);
                }
            }
        }
    }

    fn finish(self) -> MergeValue {
        match self {
            Accumulator::Count(n) => MergeValue::counter(n),
            Accumulator::Sum {
                count,
                positive,
                negative,
                ..
            } => MergeValue::compound([
                (SUM_COUNT, MergeValue::counter(count)),
                (SUM_POSITIVE, MergeValue::counter(positive)),
                (SUM_NEGATIVE, MergeValue::counter(negative)),
            ]),
            Accumulator::Histogram { hist, .. } => MergeValue::Histogram(hist),
            Accumulator::FilterCount { count, .. } => MergeValue::counter(count),
            Accumulator::Composite(members) => MergeValue::Compound {
                members: members.into_iter().map(|(k, a)| (k, a.finish())).collect(),
            },
        }
    }
}

/// Recover the float total from a `sum` analysis result.
pub fn sum_of(value: &MergeValue) -> Option<f64> {
    let pos = value.member(SUM_POSITIVE)?.as_count()?;
    let neg = value.member(SUM_NEGATIVE)?.as_count()?;
    Some((pos as f64 - neg as f64) / 1e6)
}

/// Run `spec` over every event of every data set, in order.
///
/// `progress` receives the running event total at least every
/// `opts.progress_every` events and once at the end. Setting `cancel`
/// aborts between events.
pub fn run_fragment(
    spec: &AnalysisSpec,
    datasets: &[&dyn DataSet],
    opts: &RunOptions,
    progress: &mut dyn FnMut(u64),
    cancel: &AtomicBool,
) -> Result<FragmentOutput, AnalysisError> {
    spec.validate()?;
    let mut acc = Accumulator::new(spec)?;
    let mut processed = 0u64;
    let mut skipped: BTreeMap<String, u64> = BTreeMap::new();
    let mut missing = Vec::new();
    let every = opts.progress_every.max(1);
    let mut owed = Duration::ZERO;

    for ds in datasets {
        for item in ds.iterate() {
            if cancel.load(Ordering::Relaxed) {
                return Err(AnalysisError::Cancelled);
            }
            let event = item?;
            missing.clear();
            acc.feed(&event, &mut missing);
            if let Some(field) = missing.first() {
                if opts.strict {
                    return Err(AnalysisError::MissingField {
                        field: field.clone(),
                        dataset: ds.name().to_string(),
                        event_id: event.id,
                    });
                }
                for f in missing.drain(..) {
                    *skipped.entry(f).or_default() += 1;
                }
            }
            processed += 1;
            if !opts.work_per_event.is_zero() {
                owed += opts.work_per_event;
                if owed >= Duration::from_millis(1) {
                    std::thread::sleep(owed);
                    owed = Duration::ZERO;
                }
            }
            if processed.is_multiple_of(every) {
                progress(processed);
            }
        }
    }
    if !owed.is_zero() {
        std::thread::sleep(owed);
    }
    progress(processed);

    let warnings = skipped
        .into_iter()
        .map(|(field, n)| format!("field {field} missing or non-finite in {n} events; skipped"))
        .collect();
    Ok(FragmentOutput {
        value: acc.finish(),
        events_processed: processed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dummy::{DummyDataSet, DummyStoreSpec, FieldSpec};
    use crate::merge::merge;
    use crate::model::MemoryDataSet;

    fn gaussian_set(name: &str, n: u64, seed: u64) -> DummyDataSet {
        DummyDataSet::new(
            DummyStoreSpec::new(name, n, seed).with_field(FieldSpec::gaussian("x", 0.0, 1.0)),
        )
    }

    fn run(spec: &AnalysisSpec, sets: &[&dyn DataSet]) -> FragmentOutput {
        run_fragment(
            spec,
            sets,
            &RunOptions::default(),
            &mut |_| {},
            &AtomicBool::new(false),
        )
        .unwrap()
    }

    #[test]
    fn count_counts_events() {
        let ds = gaussian_set("d", 1000, 1);
        assert_eq!(run(&AnalysisSpec::Count, &[&ds]).value, MergeValue::counter(1000));
    }

    #[test]
    fn filter_count_matches_generator_count() {
        let ds = gaussian_set("g", 10_000, 42);
        let spec = AnalysisSpec::FilterCount {
            field: "x".into(),
            op: CompareOp::Lt,
            threshold: 0.0,
        };
        let got = run(&spec, &[&ds]).value.as_count().unwrap();
        // Oracle straight from the generator.
        let spec_g = ds.spec().clone();
        let want = (0..10_000)
            .filter(|&id| spec_g.event(id).get("x").unwrap() < 0.0)
            .count() as u64;
        assert_eq!(got, want);
        assert!((4850..=5150).contains(&got), "{got}");
    }

    #[test]
    fn histogram_over_two_sets_equals_merge_of_each() {
        let a = gaussian_set("a", 500, 1);
        let b = gaussian_set("b", 700, 2);
        let spec = AnalysisSpec::Histogram {
            field: "x".into(),
            lo: -2.0,
            hi: 2.0,
            nbins: 16,
        };
        let both = run(&spec, &[&a, &b]).value;
        let split = merge(&run(&spec, &[&a]).value, &run(&spec, &[&b]).value).unwrap();
        assert_eq!(both, split);
    }

    #[test]
    fn sum_is_carried_in_micro_units() {
        let events = vec![
            Event::new(0).with_field("x", 1.25),
            Event::new(1).with_field("x", -3.5),
            Event::new(2).with_field("x", 0.000_000_4),
        ];
        let ds = MemoryDataSet::new("m", events).unwrap();
        let out = run(&AnalysisSpec::Sum { field: "x".into() }, &[&ds]).value;
        assert_eq!(out.member(SUM_COUNT).unwrap().as_count(), Some(3));
        assert_eq!(out.member(SUM_POSITIVE).unwrap().as_count(), Some(1_250_000));
        assert_eq!(out.member(SUM_NEGATIVE).unwrap().as_count(), Some(3_500_000));
        assert_eq!(sum_of(&out), Some(-2.25));
    }

    #[test]
    fn missing_field_lenient_and_strict() {
        let events = vec![
            Event::new(0).with_field("x", 1.0),
            Event::new(1).with_field("y", 1.0),
        ];
        let ds = MemoryDataSet::new("m", events).unwrap();
        let spec = AnalysisSpec::Sum { field: "x".into() };
        let out = run(&spec, &[&ds]);
        assert_eq!(out.events_processed, 2);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(sum_of(&out.value), Some(1.0));

        let strict = RunOptions {
            strict: true,
            ..RunOptions::default()
        };
        let err = run_fragment(&spec, &[&ds], &strict, &mut |_| {}, &AtomicBool::new(false))
            .unwrap_err();
        assert!(err.is_deterministic());
        assert!(matches!(err, AnalysisError::MissingField { event_id: 1, .. }));
    }

    #[test]
    fn filter_ignores_events_without_field() {
        let ds = MemoryDataSet::new("m", vec![Event::new(0)]).unwrap();
        let spec = AnalysisSpec::FilterCount {
            field: "x".into(),
            op: CompareOp::Le,
            threshold: 10.0,
        };
        let out = run(&spec, &[&ds]);
        assert_eq!(out.value, MergeValue::counter(0));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn composite_runs_members() {
        let ds = gaussian_set("d", 300, 3);
        let spec = AnalysisSpec::Composite(BTreeMap::from([
            ("n".to_string(), AnalysisSpec::Count),
            (
                "pos".to_string(),
                AnalysisSpec::FilterCount {
                    field: "x".into(),
                    op: CompareOp::Ge,
                    threshold: 0.0,
                },
            ),
        ]));
        let out = run(&spec, &[&ds]).value;
        assert_eq!(out.member("n").unwrap().as_count(), Some(300));
        assert!(out.member("pos").unwrap().as_count().unwrap() < 300);
    }

    #[test]
    fn progress_reported_every_chunk() {
        let ds = gaussian_set("d", 2500, 3);
        let mut seen = Vec::new();
        run_fragment(
            &AnalysisSpec::Count,
            &[&ds],
            &RunOptions::default(),
            &mut |n| seen.push(n),
            &AtomicBool::new(false),
        )
        .unwrap();
        assert_eq!(seen, vec![1000, 2000, 2500]);
    }

    #[test]
    fn cancellation_stops_the_loop() {
        let ds = gaussian_set("d", 10, 3);
        let r = run_fragment(
            &AnalysisSpec::Count,
            &[&ds],
            &RunOptions::default(),
            &mut |_| {},
            &AtomicBool::new(true),
        );
        assert_eq!(r, Err(AnalysisError::Cancelled));
    }

    #[test]
    fn invalid_histogram_spec_rejected() {
        let spec = AnalysisSpec::Histogram {
            field: "x".into(),
            lo: 1.0,
            hi: 0.0,
            nbins: 4,
        };
        assert!(matches!(spec.validate(), Err(AnalysisError::InvalidSpec(_))));
    }

    #[test]
    fn spec_json_shape() {
        let s: AnalysisSpec = serde_json::from_str(r#"{"kind":"count"}"#).unwrap();
        assert_eq!(s, AnalysisSpec::Count);
        let s: AnalysisSpec = serde_json::from_str(
            r#"{"kind":"filter_count","params":{"field":"x","op":"lt","threshold":0.0}}"#,
        )
        .unwrap();
        assert!(matches!(s, AnalysisSpec::FilterCount { op: CompareOp::Lt, .. }));
        let s: AnalysisSpec = serde_json::from_str(
            r#"{"kind":"composite","params":{"n":{"kind":"count"}}}"#,
        )
        .unwrap();
        assert!(matches!(s, AnalysisSpec::Composite(m) if m.len() == 1));
    }
}
