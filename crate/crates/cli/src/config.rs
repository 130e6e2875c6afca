//! Server configuration: listen address, store path and the static
//! bearer-token table.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store = "./archive"
//!
//! [[users]]
//! id = "u1"
//! token_sha256 = "<hex sha-256 of the token>"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use archivist_core::{Error, Result, UserId};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct UserEntry {
    pub id: UserId,
    pub token_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub store: PathBuf,
    #[serde(default)]
    pub users: Vec<UserEntry>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

pub fn token_hash(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

impl ServerConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ServerConfig =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {}", e.message())))?;
        for u in &cfg.users {
            let ok = u.token_sha256.len() == 64 && u.token_sha256.bytes().all(|b| b.is_ascii_hexdigit());
            if !ok {
                return Err(Error::Validation(format!(
                    "config: token_sha256 of `{}` must be 64 hex digits",
                    u.id
                )));
            }
        }
        Ok(cfg)
    }

    /// Relative store paths resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        if cfg.store.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.store = dir.join(&cfg.store);
            }
        }
        Ok(cfg)
    }

    /// Token hash → user.
    pub fn token_table(&self) -> BTreeMap<String, UserId> {
        self.users
            .iter()
            .map(|u| (u.token_sha256.to_ascii_lowercase(), u.id.clone()))
            .collect()
    }
}
