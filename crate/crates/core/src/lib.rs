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

//! Core of the oxjob distributed analysis framework.
//!
//! A job runs in three phases. Discovery finds data sets through a
//! [`catalog::Catalog`]. Brokering assigns each data set to a hosting server
//! under a signed [`broker::Contract`]. Execution runs one fragment per
//! contract on the servers and folds the fragment results together with
//! [`merge::merge_all`].

pub mod analysis;
pub mod auth;
pub mod broker;
pub mod canonical;
pub mod catalog;
pub mod dummy;
pub mod merge;
pub mod model;
pub mod proto;

pub use merge::{merge, merge_all, Histogram, MergeError, MergeValue};
pub use model::{DataSet, DataSetDescriptor, DataSetQuery, Event, EventId, StoreError};
