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

//! Deterministic synthetic data source and its on-disk store format.
//!
//! A store file starts with one JSON line holding the [`DummyStoreSpec`].
//! Any following lines are materialized events, one JSON object per line.
//! A file holding only the spec line is regenerated lazily on open.
//!
//! Every event is a pure function of `(seed, id, fields)`: the generator for
//! event `id` is a splitmix64 stream whose state is `seed ^ id * GOLDEN`,
//! uniform draws take the top 53 bits, and gaussians use one Box-Muller
//! cosine branch per draw.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::model::{DataSet, DataSetDescriptor, Event, EventId, EventStream, StoreError};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Uniform { a: f64, b: f64 },
    Gaussian { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub distribution: Distribution,
}

impl FieldSpec {
    pub fn uniform(name: impl Into<String>, a: f64, b: f64) -> Self {
        Self {
            name: name.into(),
            distribution: Distribution::Uniform { a, b },
        }
    }

    pub fn gaussian(name: impl Into<String>, mu: f64, sigma: f64) -> Self {
        Self {
            name: name.into(),
            distribution: Distribution::Gaussian { mu, sigma },
        }
    }
}

/// Everything needed to regenerate a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyStoreSpec {
    pub name: String,
    pub event_count: u64,
    pub seed: u64,
    #[serde(default)]
    pub fields: Vec<FieldSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, String>,
}

impl DummyStoreSpec {
    pub fn new(name: impl Into<String>, event_count: u64, seed: u64) -> Self {
        Self {
            name: name.into(),
            event_count,
            seed,
            fields: Vec::new(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with_field(mut self, field: FieldSpec) -> Self {
        self.fields.push(field);
        self
    }

    pub fn with_parameter(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    /// Generate event `id` directly, without touching its neighbours.
    pub fn event(&self, id: EventId) -> Event {
        let state = self.seed ^ id.wrapping_mul(GOLDEN);
        let mut rng = SplitMix64::from_seed(state.to_le_bytes());
        let mut event = Event::new(id);
        for field in &self.fields {
            let value = match field.distribution {
                Distribution::Uniform { a, b } => a + (b - a) * unit(&mut rng),
                Distribution::Gaussian { mu, sigma } => {
                    // 1 - u lies in (0, 1], keeping ln finite.
                    let u1 = 1.0 - unit(&mut rng);
                    let u2 = unit(&mut rng);
                    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    mu + sigma * z
                }
            };
            event.fields.insert(field.name.clone(), value);
        }
        event
    }

    fn descriptor(&self) -> DataSetDescriptor {
        DataSetDescriptor {
            name: self.name.clone(),
            event_count: self.event_count,
            parameters: self.parameters.clone(),
        }
    }
}

fn unit(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Lazily generated data set; ids are `0..event_count`.
#[derive(Debug, Clone)]
pub struct DummyDataSet {
    spec: DummyStoreSpec,
}

impl DummyDataSet {
    pub fn new(spec: DummyStoreSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &DummyStoreSpec {
        &self.spec
    }
}

impl DataSet for DummyDataSet {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn descriptor(&self) -> Result<DataSetDescriptor, StoreError> {
        Ok(self.spec.descriptor())
    }

    fn event_by_id(&self, id: EventId) -> Result<Event, StoreError> {
        if id < self.spec.event_count {
            Ok(self.spec.event(id))
        } else {
            Err(StoreError::EventNotFound {
                name: self.spec.name.clone(),
                id,
            })
        }
    }

    fn iterate(&self) -> EventStream<'_> {
        Box::new((0..self.spec.event_count).map(|id| Ok(self.spec.event(id))))
    }
}

/// Data set backed by a materialized store file. Events are streamed from
/// disk on every iteration; lookups go through a byte-offset index built at
/// open time.
#[derive(Debug)]
pub struct FileDataSet {
    spec: DummyStoreSpec,
    path: PathBuf,
    offsets: HashMap<EventId, u64>,
    first_event_offset: u64,
}

impl FileDataSet {
    fn unavailable(&self, reason: impl ToString) -> StoreError {
        StoreError::StoreUnavailable {
            name: self.spec.name.clone(),
            reason: reason.to_string(),
        }
    }

    fn read_line_at(&self, offset: u64) -> Result<Event, StoreError> {
        let mut file = File::open(&self.path).map_err(|e| self.unavailable(e))?;
        file.seek(SeekFrom::Start(offset))
            .map_err(|e| self.unavailable(e))?;
        let mut line = String::new();
        BufReader::new(file)
            .read_line(&mut line)
            .map_err(|e| self.unavailable(e))?;
        serde_json::from_str(&line).map_err(|e| self.unavailable(e))
    }
}

impl DataSet for FileDataSet {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn descriptor(&self) -> Result<DataSetDescriptor, StoreError> {
        Ok(self.spec.descriptor())
    }

    fn event_by_id(&self, id: EventId) -> Result<Event, StoreError> {
        match self.offsets.get(&id) {
            Some(&offset) => self.read_line_at(offset),
            None => Err(StoreError::EventNotFound {
                name: self.spec.name.clone(),
                id,
            }),
        }
    }

    fn iterate(&self) -> EventStream<'_> {
        let reader = File::open(&self.path).and_then(|mut f| {
            f.seek(SeekFrom::Start(self.first_event_offset))?;
            Ok(BufReader::new(f))
        });
        let mut lines = match reader {
            Ok(r) => r.lines(),
            Err(e) => return Box::new(std::iter::once(Err(self.unavailable(e)))),
        };
        let expected = self.spec.event_count;
        let mut yielded = 0u64;
        let mut failed = false;
        Box::new(std::iter::from_fn(move || {
            if failed || yielded == expected {
                return None;
            }
            let item = match lines.next() {
                Some(Ok(line)) => {
                    serde_json::from_str::<Event>(&line).map_err(|e| self.unavailable(e))
                }
                Some(Err(e)) => Err(self.unavailable(e)),
                None => Err(self.unavailable(format!(
                    "store truncated after {yielded} of {expected} events"
                ))),
            };
            match item {
                Ok(_) => yielded += 1,
                Err(_) => failed = true,
            }
            Some(item)
        }))
    }
}

/// Write a store file for `spec`. With `materialize` the events follow the
/// spec line; otherwise the file holds the spec only. Output is
/// byte-identical for equal specs.
pub fn generate_dummy_store(
    spec: &DummyStoreSpec,
    path: impl AsRef<Path>,
    materialize: bool,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, spec)?;
    out.write_all(b"\n")?;
    if materialize {
        for id in 0..spec.event_count {
            serde_json::to_writer(&mut out, &spec.event(id))?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

/// Open a store file as a data set handle.
pub fn open_store(path: impl AsRef<Path>) -> Result<Arc<dyn DataSet>, StoreError> {
    let path = path.as_ref();
    let open_err = |reason: String| StoreError::Open {
        path: path.display().to_string(),
        reason,
    };
    let file = File::open(path).map_err(|e| open_err(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    let header_len = reader
        .read_line(&mut header)
        .map_err(|e| open_err(e.to_string()))?;
    if header_len == 0 {
        return Err(open_err("empty store file".into()));
    }
    let spec: DummyStoreSpec =
        serde_json::from_str(&header).map_err(|e| open_err(format!("bad header: {e}")))?;

    let mut offsets = HashMap::new();
    let mut offset = header_len as u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| open_err(e.to_string()))?;
        if n == 0 {
            break;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| open_err(format!("bad event at byte {offset}: {e}")))?;
        if offsets.insert(event.id, offset).is_some() {
            return Err(StoreError::DuplicateEventId {
                name: spec.name,
                id: event.id,
            });
        }
        offset += n as u64;
    }

    if offsets.is_empty() {
        return Ok(Arc::new(DummyDataSet::new(spec)));
    }
    if offsets.len() as u64 != spec.event_count {
        return Err(open_err(format!(
            "header declares {} events, file holds {}",
            spec.event_count,
            offsets.len()
        )));
    }
    Ok(Arc::new(FileDataSet {
        spec,
        path: path.to_path_buf(),
        offsets,
        first_event_offset: header_len as u64,
    }))
}
