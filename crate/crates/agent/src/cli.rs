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

//! Command-line front end. Exit codes: 0 success, 1 user error,
//! 2 infrastructure failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use oxjob_core::analysis::AnalysisSpec;
use oxjob_core::catalog::Scheme;
use oxjob_core::model::{DataSetDescriptor, DataSetQuery};

use crate::config::AgentConfig;
use crate::job::{discover, run_job, AgentError, JobReport, Selection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INFRA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "oxjob", version, about = "Run analysis jobs on oxjob servers")]
struct Cli {
    /// Agent configuration file (JSON).
    #[arg(long, global = true, default_value = "oxjob.json")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List data sets known to the catalog.
    Discover {
        /// Glob over data set names.
        #[arg(long)]
        name: Option<String>,
        /// Parameter constraint, KEY=VALUE. Repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
        #[arg(long)]
        json: bool,
    },
    /// Run an analysis and write the merged result.
    Run {
        /// Analysis spec file (JSON).
        #[arg(long)]
        analysis: PathBuf,
        /// Data set name. Repeatable.
        #[arg(long = "dataset", required_unless_present = "query", conflicts_with = "query")]
        datasets: Vec<String>,
        /// Glob over data set names.
        #[arg(long)]
        query: Option<String>,
        #[arg(long = "param", value_parser = parse_param, requires = "query")]
        params: Vec<(String, String)>,
        /// Result file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full job report here as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Force a monitoring scheme.
        #[arg(long)]
        scheme: Option<Scheme>,
    },
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected KEY=VALUE, got {s:?}")),
    }
}

fn query(name: Option<String>, params: Vec<(String, String)>) -> DataSetQuery {
    let mut q = DataSetQuery {
        name_pattern: name,
        ..Default::default()
    };
    for (k, v) in params {
        q = q.with_param(k, v);
    }
    q
}

fn exit_code(e: &AgentError) -> i32 {
    if e.is_user_error() {
        EXIT_USER
    } else {
        EXIT_INFRA
    }
}

fn table(descriptors: &[DataSetDescriptor]) -> String {
    let width = descriptors
        .iter()
        .map(|d| d.name.len())
        .chain([4])
        .max()
        .unwrap_or(4);
    let mut out = format!("{:<width$}  {:>10}  PARAMETERS\n", "NAME", "EVENTS");
    for d in descriptors {
        let params: Vec<String> = d.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out += &format!("{:<width$}  {:>10}  {}\n", d.name, d.event_count, params.join(","));
    }
    out
}

fn summary(report: &JobReport) -> String {
    let mut out = format!(
        "job {}: {} data sets, {} contracts, {} offer requests, {} retries, {} ms\n",
        report.job_id,
        report.datasets.len(),
        report.contracts.len(),
        report.offer_requests,
        report.retries,
        report.timings.total_ms
    );
    for f in &report.fragments {
        out += &format!(
            "  {} on {} [{}] {:?}: {} events\n",
            f.fragment_id,
            f.server_id,
            f.dataset_names.join(","),
            f.outcome,
            f.events_processed
        );
    }
    for r in &report.rebrokered {
        out += &format!(
            "  re-brokered {} from {}: {}\n",
            r.fragment_id, r.server_id, r.reason
        );
    }
    out
}

/// Run the CLI on `argv` (program name first) and return the exit code.
pub async fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Cli::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    match execute(args).await {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

async fn execute(args: Cli) -> Result<(), AgentError> {
    let mut config = AgentConfig::load(&args.config).map_err(AgentError::Config)?;
    match args.command {
        Command::Discover { name, params, json } => {
            let descriptors = discover(&config, &query(name, params)).await?;
            let text = if json {
                serde_json::to_string_pretty(&descriptors).expect("descriptors encode") + "\n"
            } else {
                table(&descriptors)
            };
            print!("{text}");
        }
        Command::Run {
            analysis,
            datasets,
            query: pattern,
            params,
            out,
            report,
            scheme,
        } => {
            let text = std::fs::read_to_string(&analysis)
                .map_err(|e| AgentError::Config(format!("cannot read {}: {e}", analysis.display())))?;
            let spec: AnalysisSpec = serde_json::from_str(&text)
                .map_err(|e| AgentError::InvalidAnalysis(format!("{}: {e}", analysis.display())))?;
            if scheme.is_some() {
                config.scheme = scheme;
            }
            let selection = match pattern {
                Some(p) => Selection::Query(query(Some(p), params)),
                None => Selection::Names(datasets),
            };
            let outcome = run_job(&spec, &selection, &config).await?;
            let bytes = outcome.result.serialize();
            match out {
                Some(path) => std::fs::write(&path, &bytes).map_err(|e| {
                    AgentError::Config(format!("cannot write {}: {e}", path.display()))
                })?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    let _ = stdout.write_all(&bytes);
                    let _ = stdout.write_all(b"\n");
                }
            }
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&outcome.report).expect("report encodes");
                std::fs::write(&path, json + "\n").map_err(|e| {
                    AgentError::Config(format!("cannot write {}: {e}", path.display()))
                })?;
            }
            eprint!("{}", summary(&outcome.report));
        }
    }
    Ok(())
}
