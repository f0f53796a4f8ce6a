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

use std::time::Duration;

use clap::Parser;
use oxjob_server::{init_tracing, RegistryHandle};

/// Run an oxjob discovery registry.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7400")]
    listen: String,
    /// Seconds an advertisement lives without a refresh.
    #[arg(long, default_value_t = 60)]
    ttl_s: u64,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_tracing();
    let args = Args::parse();
    let registry = RegistryHandle::start(&args.listen, Duration::from_secs(args.ttl_s)).await?;
    println!("registry listening on {}", registry.endpoint());
    tokio::signal::ctrl_c().await?;
    registry.stop().await;
    Ok(())
}
