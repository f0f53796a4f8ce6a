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

//! Mergeable values: the results of split job fragments and the algebra
//! that folds them back into one.
//!
//! `merge` is associative and commutative on compatible values and
//! [`MergeValue::identity_like`] yields its neutral element, so fragment
//! results may be combined in any order. Row lists are kept in canonical
//! (sorted) order to preserve commutativity.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("merge_all called with no values")]
    EmptyInput,
    #[error("counter overflow")]
    Overflow,
    #[error("decode error: {0}")]
    Decode(String),
}

fn mismatch(msg: impl Into<String>) -> MergeError {
    MergeError::ShapeMismatch(msg.into())
}

/// Fixed-binning histogram with under- and overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub nbins: u32,
    pub bins: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    /// Empty histogram. Fails unless `hi > lo` and `nbins >= 1`.
    pub fn new(lo: f64, hi: f64, nbins: u32) -> Result<Self, MergeError> {
        let h = Self {
            lo,
            hi,
            nbins,
            bins: vec![0.0; nbins as usize],
            underflow: 0.0,
            overflow: 0.0,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), MergeError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(mismatch(format!(
                "histogram range [{}, {}) is empty",
                self.lo, self.hi
            )));
        }
        if self.nbins == 0 || self.bins.len() != self.nbins as usize {
            return Err(mismatch(format!(
                "histogram declares {} bins, holds {}",
                self.nbins,
                self.bins.len()
            )));
        }
        Ok(())
    }

    /// Half-open binning: below `lo` goes to underflow, at or above `hi`
    /// (and NaN) to overflow.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        if value < self.lo {
            return None;
        }
        if value >= self.hi || value.is_nan() {
            return None;
        }
        let pos = ((value - self.lo) / (self.hi - self.lo) * self.nbins as f64).floor() as usize;
        Some(pos.min(self.nbins as usize - 1))
    }

    pub fn fill(&mut self, value: f64) {
        self.fill_weighted(value, 1.0);
    }

    pub fn fill_weighted(&mut self, value: f64, weight: f64) {
        match self.bin_of(value) {
            Some(i) => self.bins[i] += weight,
            None if value < self.lo => self.underflow += weight,
            None => self.overflow += weight,
        }
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.nbins == other.nbins
    }

    /// Sum of every bin including under- and overflow.
    pub fn entries(&self) -> f64 {
        self.bins.iter().sum::<f64>() + self.underflow + self.overflow
    }
}

/// A tagged, mergeable analysis result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MergeValue {
    Counter {
        count: u64,
    },
    Histogram(Histogram),
    Set {
        elements: BTreeSet<String>,
    },
    Map {
        entries: BTreeMap<String, MergeValue>,
    },
    #[serde(rename = "rowlist")]
    RowList {
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
    },
    /// Member-wise merged record. Members that should not take part in a
    /// merge are simply left out.
    Compound {
        members: BTreeMap<String, MergeValue>,
    },
}

impl MergeValue {
    pub fn counter(count: u64) -> Self {
        MergeValue::Counter { count }
    }

    pub fn set<I, S>(elements: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MergeValue::Set {
            elements: elements.into_iter().map(Into::into).collect(),
        }
    }

    pub fn map<I, K>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, MergeValue)>,
        K: Into<String>,
    {
        MergeValue::Map {
            entries: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn compound<I, K>(members: I) -> Self
    where
        I: IntoIterator<Item = (K, MergeValue)>,
        K: Into<String>,
    {
        MergeValue::Compound {
            members: members.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    /// Row list in canonical order.
    pub fn rowlist(column_names: Vec<String>, mut rows: Vec<Vec<f64>>) -> Result<Self, MergeError> {
        check_rows(&column_names, &rows)?;
        sort_rows(&mut rows);
        Ok(MergeValue::RowList { column_names, rows })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MergeValue::Counter { .. } => "counter",
            MergeValue::Histogram(_) => "histogram",
            MergeValue::Set { .. } => "set",
            MergeValue::Map { .. } => "map",
            MergeValue::RowList { .. } => "rowlist",
            MergeValue::Compound { .. } => "compound",
        }
    }

    pub fn as_count(&self) -> Option<u64> {
        match self {
            MergeValue::Counter { count } => Some(*count),
            _ => None,
        }
    }

    pub fn member(&self, name: &str) -> Option<&MergeValue> {
        match self {
            MergeValue::Compound { members } => members.get(name),
            MergeValue::Map { entries } => entries.get(name),
            _ => None,
        }
    }

    /// Check the structural invariants of this value and everything under it.
    pub fn validate(&self) -> Result<(), MergeError> {
        match self {
            MergeValue::Counter { .. } | MergeValue::Set { .. } => Ok(()),
            MergeValue::Histogram(h) => h.validate(),
            MergeValue::Map { entries: m } | MergeValue::Compound { members: m } => {
                m.values().try_for_each(MergeValue::validate)
            }
            MergeValue::RowList { column_names, rows } => check_rows(column_names, rows),
        }
    }

    /// The neutral element with this value's shape.
    pub fn identity_like(&self) -> MergeValue {
        match self {
            MergeValue::Counter { .. } => MergeValue::Counter { count: 0 },
            MergeValue::Histogram(h) => MergeValue::Histogram(Histogram {
                lo: h.lo,
                hi: h.hi,
                nbins: h.nbins,
                bins: vec![0.0; h.bins.len()],
                underflow: 0.0,
                overflow: 0.0,
            }),
            MergeValue::Set { .. } => MergeValue::Set {
                elements: BTreeSet::new(),
            },
            MergeValue::Map { .. } => MergeValue::Map {
                entries: BTreeMap::new(),
            },
            MergeValue::RowList { column_names, .. } => MergeValue::RowList {
                column_names: column_names.clone(),
                rows: Vec::new(),
            },
            MergeValue::Compound { members } => MergeValue::Compound {
                members: members
                    .iter()
                    .map(|(k, v)| (k.clone(), v.identity_like()))
                    .collect(),
            },
        }
    }

    /// Canonical JSON bytes: equal values give equal bytes.
    pub fn serialize(&self) -> Vec<u8> {
        canonical::to_vec(self).expect("merge values always encode")
    }

    pub fn deserialize(bytes: &[u8]) -> Result<MergeValue, MergeError> {
        let value: MergeValue =
            serde_json::from_slice(bytes).map_err(|e| MergeError::Decode(e.to_string()))?;
        value
            .validate()
            .map_err(|e| MergeError::Decode(e.to_string()))?;
        Ok(value)
    }
}

fn check_rows(column_names: &[String], rows: &[Vec<f64>]) -> Result<(), MergeError> {
    match rows.iter().position(|r| r.len() != column_names.len()) {
        Some(i) => Err(mismatch(format!(
            "row {i} has {} values for {} columns",
            rows[i].len(),
            column_names.len()
        ))),
        None => Ok(()),
    }
}

fn row_order(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn sort_rows(rows: &mut [Vec<f64>]) {
    rows.sort_by(|a, b| row_order(a, b));
}

/// Combine two values of the same shape.
pub fn merge(a: &MergeValue, b: &MergeValue) -> Result<MergeValue, MergeError> {
    use MergeValue::*;
    match (a, b) {
        (Counter { count: x }, Counter { count: y }) => Ok(Counter {
            count: x.checked_add(*y).ok_or(MergeError::Overflow)?,
        }),
        (Histogram(x), Histogram(y)) => {
            if !x.same_binning(y) {
                return Err(mismatch(format!(
                    "histogram binning ({}, {}, {}) vs ({}, {}, {})",
                    x.lo, x.hi, x.nbins, y.lo, y.hi, y.nbins
                )));
            }
            x.validate()?;
            y.validate()?;
            Ok(Histogram(self::Histogram {
                lo: x.lo,
                hi: x.hi,
                nbins: x.nbins,
                bins: x.bins.iter().zip(&y.bins).map(|(p, q)| p + q).collect(),
                underflow: x.underflow + y.underflow,
                overflow: x.overflow + y.overflow,
            }))
        }
        (Set { elements: x }, Set { elements: y }) => Ok(Set {
            elements: x.union(y).cloned().collect(),
        }),
        (Map { entries: x }, Map { entries: y }) => {
            let mut out = x.clone();
            for (k, v) in y {
                let merged = match out.get(k) {
                    Some(existing) => merge(existing, v)?,
                    None => v.clone(),
                };
                out.insert(k.clone(), merged);
            }
            Ok(Map { entries: out })
        }
        (
            RowList {
                column_names: cx,
                rows: rx,
            },
            RowList {
                column_names: cy,
                rows: ry,
            },
        ) => {
            if cx != cy {
                return Err(mismatch(format!("row columns {cx:?} vs {cy:?}")));
            }
            check_rows(cx, rx)?;
            check_rows(cy, ry)?;
            let mut rows = Vec::with_capacity(rx.len() + ry.len());
            rows.extend(rx.iter().cloned());
            rows.extend(ry.iter().cloned());
            sort_rows(&mut rows);
            Ok(RowList {
                column_names: cx.clone(),
                rows,
            })
        }
        (Compound { members: x }, Compound { members: y }) => {
            if !x.keys().eq(y.keys()) {
                return Err(mismatch(format!(
                    "compound members {:?} vs {:?}",
                    x.keys().collect::<Vec<_>>(),
                    y.keys().collect::<Vec<_>>()
                )));
            }
            let members = x
                .iter()
                .zip(y.values())
                .map(|((k, p), q)| merge(p, q).map(|m| (k.clone(), m)))
                .collect::<Result<_, _>>()?;
            Ok(Compound { members })
        }
        _ => Err(mismatch(format!("cannot merge {} with {}", a.kind(), b.kind()))),
    }
}

/// Left fold of [`merge`] over a non-empty slice.
pub fn merge_all(values: &[MergeValue]) -> Result<MergeValue, MergeError> {
    let (first, rest) = values.split_first().ok_or(MergeError::EmptyInput)?;
    first.validate()?;
    rest.iter().try_fold(first.clone(), |acc, v| merge(&acc, v))
}
