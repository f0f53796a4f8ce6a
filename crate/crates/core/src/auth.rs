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

//! Password authentication against a server-local user file of salted
//! PBKDF2-HMAC-SHA-256 hashes.

use std::collections::BTreeMap;
use std::path::Path;

use hmac::Hmac;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_ITERATIONS: u32 = 10_000;

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

impl Credentials {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Self {
        Self {
            username: username.into(),
            password: password.into(),
        }
    }
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credentials")
            .field("username", &self.username)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEntry {
    pub username: String,
    /// Hex-encoded salt.
    pub salt: String,
    /// Hex-encoded derived key.
    pub hash: String,
    pub iterations: u32,
}

#[derive(Debug, Error)]
pub enum UserFileError {
    #[error("cannot read user file {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad user file {path}: {message}")]
    Parse { path: String, message: String },
}

/// The uniform authentication failure. It never says which half of the
/// credentials was wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("authentication failed")]
pub struct AuthFailed;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFile {
    pub users: Vec<UserEntry>,
}

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; 32] {
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2::<Hmac<Sha256>>(password.as_bytes(), salt, iterations.max(1), &mut out)
        .expect("HMAC accepts any key length");
    out
}

impl UserEntry {
    /// Hash `password` under a salt derived from `username` and `salt_seed`.
    pub fn new(username: &str, password: &str, salt_seed: &[u8], iterations: u32) -> Self {
        let salt: [u8; 16] = Sha256::new()
            .chain_update(username.as_bytes())
            .chain_update([0u8])
            .chain_update(salt_seed)
            .finalize()[..16]
            .try_into()
            .expect("16-byte prefix");
        Self {
            username: username.to_string(),
            salt: hex::encode(salt),
            hash: hex::encode(derive(password, &salt, iterations)),
            iterations,
        }
    }
}

impl UserFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, UserFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| UserFileError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| UserFileError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn add_user(&mut self, entry: UserEntry) {
        self.users.retain(|u| u.username != entry.username);
        self.users.push(entry);
    }

    pub fn into_directory(self) -> UserDirectory {
        UserDirectory {
            users: self
                .users
                .into_iter()
                .map(|u| (u.username.clone(), u))
                .collect(),
        }
    }
}

/// In-memory lookup table built from a [`UserFile`].
#[derive(Debug, Clone, Default)]
pub struct UserDirectory {
    users: BTreeMap<String, UserEntry>,
}

impl UserDirectory {
    pub fn authenticate(&self, creds: &Credentials) -> Result<String, AuthFailed> {
        match self.users.get(&creds.username) {
            Some(user) => {
                let (Ok(salt), Ok(expected)) = (hex::decode(&user.salt), hex::decode(&user.hash))
                else {
                    return Err(AuthFailed);
                };
                let got = derive(&creds.password, &salt, user.iterations);
                if constant_time_eq(&got, &expected) {
                    Ok(user.username.clone())
                } else {
                    Err(AuthFailed)
                }
            }
            None => {
                // Same work as a real check, so timing does not reveal
                // whether the user exists.
                let iterations = self
                    .users
                    .values()
                    .next()
                    .map_or(DEFAULT_ITERATIONS, |u| u.iterations);
                let _ = derive(&creds.password, b"no-such-user-salt", iterations);
                Err(AuthFailed)
            }
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directory() -> UserDirectory {
        let mut f = UserFile::default();
        f.add_user(UserEntry::new("alice", "wonderland", b"seed", 100));
        f.add_user(UserEntry::new("bob", "builder", b"seed", 100));
        f.into_directory()
    }

    #[test]
    fn correct_credentials_accepted() {
        assert_eq!(
            directory().authenticate(&Credentials::new("alice", "wonderland")),
            Ok("alice".into())
        );
    }

    #[test]
    fn wrong_password_and_unknown_user_look_identical() {
        let d = directory();
        let wrong = d.authenticate(&Credentials::new("alice", "nope"));
        let unknown = d.authenticate(&Credentials::new("mallory", "nope"));
        assert_eq!(wrong, Err(AuthFailed));
        assert_eq!(wrong, unknown);
        assert_eq!(
            wrong.unwrap_err().to_string(),
            unknown.unwrap_err().to_string()
        );
    }

    #[test]
    fn passwords_are_not_stored() {
        let e = UserEntry::new("alice", "wonderland", b"seed", 100);
        assert!(!serde_json::to_string(&e).unwrap().contains("wonderland"));
        let other = UserEntry::new("bob", "wonderland", b"seed", 100);
        assert_ne!(e.salt, other.salt);
        assert_ne!(e.hash, other.hash);
    }

    #[test]
    fn user_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("users.json");
        let mut f = UserFile::default();
        f.add_user(UserEntry::new("alice", "pw", b"x", 50));
        f.save(&p).unwrap();
        assert_eq!(UserFile::load(&p).unwrap(), f);
    }

    #[test]
    fn credentials_debug_hides_password() {
        let s = format!("{:?}", Credentials::new("alice", "hunter2"));
        assert!(!s.contains("hunter2"));
    }
}
