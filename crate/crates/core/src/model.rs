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

//! Events, data sets and the access contract every data source implements.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an event, unique within its data set.
pub type EventId = u64;

/// A uniquely numbered record of named numeric fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub fields: BTreeMap<String, f64>,
}

impl Event {
    pub fn new(id: EventId) -> Self {
        Self {
            id,
            fields: BTreeMap::new(),
        }
    }

    pub fn with_field(mut self, name: impl Into<String>, value: f64) -> Self {
        self.fields.insert(name.into(), value);
        self
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        self.fields.get(field).copied()
    }
}

/// Discovery-time summary of a data set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataSetDescriptor {
    pub name: String,
    pub event_count: u64,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl DataSetDescriptor {
    pub fn new(name: impl Into<String>, event_count: u64) -> Self {
        Self {
            name: name.into(),
            event_count,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with_parameter(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.parameters.insert(key.into(), value.into());
        self
    }
}

/// A filter over descriptors. The default query matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSetQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_pattern: Option<String>,
    #[serde(default)]
    pub parameter_constraints: BTreeMap<String, String>,
}

impl DataSetQuery {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn name(pattern: impl Into<String>) -> Self {
        Self {
            name_pattern: Some(pattern.into()),
            ..Self::default()
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.parameter_constraints.insert(key.into(), value.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.name_pattern.is_none() && self.parameter_constraints.is_empty()
    }
}

/// True iff the descriptor's name matches the glob (`*`, `?`) and every
/// parameter constraint is present with exactly the required value.
///
/// A pattern that fails to compile as a glob only matches its literal text.
pub fn matches(descriptor: &DataSetDescriptor, query: &DataSetQuery) -> bool {
    if let Some(pattern) = &query.name_pattern {
        let hit = match glob::Pattern::new(pattern) {
            Ok(p) => p.matches(&descriptor.name),
            Err(_) => pattern == &descriptor.name,
        };
        if !hit {
            return false;
        }
    }
    query
        .parameter_constraints
        .iter()
        .all(|(k, v)| descriptor.parameters.get(k) == Some(v))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("store unavailable for data set {name}: {reason}")]
    StoreUnavailable { name: String, reason: String },
    #[error("event {id} not found in data set {name}")]
    EventNotFound { name: String, id: EventId },
    #[error("duplicate event id {id} in data set {name}")]
    DuplicateEventId { name: String, id: EventId },
    #[error("cannot open store {path}: {reason}")]
    Open { path: String, reason: String },
}

pub type EventStream<'a> = Box<dyn Iterator<Item = Result<Event, StoreError>> + Send + 'a>;

/// Read-only access to one named data set.
///
/// Handles are opened by a store implementation and closed on drop.
/// Iteration order is deterministic and every id appears exactly once.
pub trait DataSet: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn descriptor(&self) -> Result<DataSetDescriptor, StoreError>;

    fn event_by_id(&self, id: EventId) -> Result<Event, StoreError>;

    /// Stream every event. A read failure terminates the stream with an
    /// `Err` item.
    fn iterate(&self) -> EventStream<'_>;
}

/// Data set held entirely in memory.
#[derive(Debug, Clone)]
pub struct MemoryDataSet {
    name: String,
    parameters: BTreeMap<String, String>,
    events: Vec<Event>,
    index: HashMap<EventId, usize>,
}

impl MemoryDataSet {
    pub fn new(name: impl Into<String>, events: Vec<Event>) -> Result<Self, StoreError> {
        let name = name.into();
        let mut index = HashMap::with_capacity(events.len());
        for (pos, event) in events.iter().enumerate() {
            if index.insert(event.id, pos).is_some() {
                return Err(StoreError::DuplicateEventId {
                    name,
                    id: event.id,
                });
            }
        }
        Ok(Self {
            name,
            parameters: BTreeMap::new(),
            events,
            index,
        })
    }

    pub fn with_parameters(mut self, parameters: BTreeMap<String, String>) -> Self {
        self.parameters = parameters;
        self
    }
}

impl DataSet for MemoryDataSet {
    fn name(&self) -> &str {
        &self.name
    }

    fn descriptor(&self) -> Result<DataSetDescriptor, StoreError> {
        Ok(DataSetDescriptor {
            name: self.name.clone(),
            event_count: self.events.len() as u64,
            parameters: self.parameters.clone(),
        })
    }

    fn event_by_id(&self, id: EventId) -> Result<Event, StoreError> {
        self.index
            .get(&id)
            .map(|&pos| self.events[pos].clone())
            .ok_or_else(|| StoreError::EventNotFound {
                name: self.name.clone(),
                id,
            })
    }

    fn iterate(&self) -> EventStream<'_> {
        Box::new(self.events.iter().cloned().map(Ok))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(name: &str) -> DataSetDescriptor {
        DataSetDescriptor::new(name, 10)
    }

    #[test]
    fn glob_prefix_matches() {
        assert!(matches(&desc("ZH_nunubb"), &DataSetQuery::name("ZH*")));
        assert!(!matches(&desc("WW"), &DataSetQuery::name("ZH*")));
        assert!(matches(&desc("run7"), &DataSetQuery::name("run?")));
    }

    #[test]
    fn missing_parameter_does_not_match() {
        let q = DataSetQuery::all().with_param("era", "test");
        assert!(!matches(&desc("A"), &q));
        assert!(matches(&desc("A").with_parameter("era", "test"), &q));
        assert!(!matches(&desc("A").with_parameter("era", "prod"), &q));
    }

    #[test]
    fn empty_query_matches_everything() {
        let q = DataSetQuery::all();
        assert!(q.is_empty());
        for name in ["", "a", "ZH", "[weird"] {
            assert!(matches(&desc(name), &q));
        }
    }

    #[test]
    fn bad_glob_falls_back_to_literal() {
        assert!(matches(&desc("[x"), &DataSetQuery::name("[x")));
        assert!(!matches(&desc("x"), &DataSetQuery::name("[x")));
    }

    #[test]
    fn memory_set_rejects_duplicate_ids() {
        let err = MemoryDataSet::new("d", vec![Event::new(1), Event::new(1)]).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateEventId { id: 1, .. }));
    }

    #[test]
    fn memory_set_lookup_and_iteration_agree() {
        let events: Vec<_> = (0..100u64)
            .map(|i| Event::new(i * 7 + 3).with_field("x", i as f64))
            .collect();
        let ds = MemoryDataSet::new("m", events).unwrap();
        let seen: Vec<_> = ds.iterate().map(Result::unwrap).collect();
        assert_eq!(seen.len() as u64, ds.descriptor().unwrap().event_count);
        for e in &seen {
            assert_eq!(&ds.event_by_id(e.id).unwrap(), e);
        }
        assert!(matches!(
            ds.event_by_id(u64::MAX),
            Err(StoreError::EventNotFound { .. })
        ));
    }

    #[test]
    fn empty_memory_set() {
        let ds = MemoryDataSet::new("empty", vec![]).unwrap();
        assert_eq!(ds.descriptor().unwrap().event_count, 0);
        assert_eq!(ds.iterate().count(), 0);
    }
}
