use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use crate::error::{ApiError, Result};

pub const ENV_BIND: &str = "MERGEBO_BIND";
pub const ENV_GENERATOR_URL: &str = "MERGEBO_GENERATOR_URL";
pub const ENV_DATA_DIR: &str = "MERGEBO_DATA_DIR";
pub const ENV_GENERATOR_TIMEOUT: &str = "MERGEBO_GENERATOR_TIMEOUT_SECS";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Image generator for external-mode sessions.
    pub generator_url: Option<String>,
    /// Where session transcripts are persisted; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub generator_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            generator_url: None,
            data_dir: None,
            generator_timeout: Duration::from_secs(120),
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by the `MERGEBO_*` environment variables.
    pub fn from_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(bind) = std::env::var(ENV_BIND) {
            cfg.bind = bind
                .parse()
                .map_err(|e| ApiError::BadRequest(format!("{ENV_BIND}={bind}: {e}")))?;
        }
        cfg.generator_url = std::env::var(ENV_GENERATOR_URL).ok().filter(|s| !s.is_empty());
        cfg.data_dir = std::env::var_os(ENV_DATA_DIR).map(PathBuf::from);
        if let Ok(secs) = std::env::var(ENV_GENERATOR_TIMEOUT) {
            let secs: f64 = secs
                .parse()
                .map_err(|e| ApiError::BadRequest(format!("{ENV_GENERATOR_TIMEOUT}={secs}: {e}")))?;
            cfg.generator_timeout = Duration::from_secs_f64(secs);
        }
        Ok(cfg)
    }
}
