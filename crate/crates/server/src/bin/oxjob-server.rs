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

use std::io::BufRead;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use oxjob_core::auth::{UserEntry, UserFile};
use oxjob_server::{init_tracing, serve, ServerConfig};

/// Run an oxjob server.
#[derive(Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Args {
    /// Server configuration file (JSON).
    #[arg(long, required = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Add or replace a user in a user file. The password is read from
    /// the first line of stdin.
    AddUser {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        username: String,
        #[arg(long, default_value_t = 600_000)]
        iterations: u32,
    },
}

fn add_user(users: &PathBuf, username: &str, iterations: u32) -> anyhow::Result<()> {
    let mut file = if users.exists() {
        UserFile::load(users)?
    } else {
        UserFile::default()
    };
    let mut password = String::new();
    std::io::stdin()
        .lock()
        .read_line(&mut password)
        .context("reading password from stdin")?;
    let password = password.trim_end_matches(['\r', '\n']);
    if password.is_empty() {
        bail!("empty password");
    }
    let salt_seed = uuid::Uuid::new_v4();
    file.add_user(UserEntry::new(username, password, salt_seed.as_bytes(), iterations));
    file.save(users)
        .with_context(|| format!("writing {}", users.display()))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    if let Some(Command::AddUser {
        users,
        username,
        iterations,
    }) = args.command
    {
        return add_user(&users, &username, iterations);
    }
    init_tracing();
    let config = args.config.expect("clap requires --config");
    serve(ServerConfig::load(&config)?).await
}
