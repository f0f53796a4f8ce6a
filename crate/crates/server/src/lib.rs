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

//! Server side of oxjob: the daemon that hosts data sets and runs job
//! fragments, plus the discovery registry.

pub mod cluster;
pub mod config;
pub mod registry;
pub mod server;

pub use cluster::{ClusterSpec, LocalCluster, NodeSpec};
pub use config::ServerConfig;
pub use registry::RegistryHandle;
pub use server::{serve, LoadSnapshot, ServerHandle};

/// Install a stderr subscriber honouring `RUST_LOG`.
pub fn init_tracing() {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
}
