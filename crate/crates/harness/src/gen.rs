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

use std::path::{Path, PathBuf};

use anyhow::Context;
use oxjob_core::dummy::{generate_dummy_store, DummyStoreSpec};
use serde::{Deserialize, Serialize};

/// Input of `oxjob-harness gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub out_dir: PathBuf,
    /// Write every event rather than the spec line alone.
    #[serde(default)]
    pub materialize: bool,
    pub stores: Vec<DummyStoreSpec>,
}

/// Write one store file per spec, named `<name>.oxs`. Returns the paths.
pub fn generate(cfg: &GenConfig, base: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let dir = base.join(&cfg.out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.stores
        .iter()
        .map(|spec| {
            let path = dir.join(format!("{}.oxs", spec.name));
            generate_dummy_store(spec, &path, cfg.materialize)
                .with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}
