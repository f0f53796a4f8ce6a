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

//! The oxjob agent. It finds data sets, negotiates contracts with the
//! servers hosting them, runs one fragment per contract, survives server
//! failures by re-brokering, and merges the fragment results.

pub mod channel;
pub mod cli;
pub mod config;
pub mod job;

pub use config::{AgentConfig, CatalogSource};
pub use job::{
    discover, run_job, split, AgentError, FragmentOutcome, FragmentReport, JobOutcome, JobReport,
    RebrokerRecord, Selection, SplitError,
};
