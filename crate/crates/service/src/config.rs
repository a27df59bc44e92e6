use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sevscale::audit::DatasheetConfig;
use sevscale::CampaignPolicy;

use crate::error::ServiceError;

/// Service configuration file. Bind address and data directory can be
/// overridden from the command line or the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    /// When set, campaign management and export endpoints require it as a
    /// bearer token.
    pub admin_token: Option<String>,
    /// Policy for campaigns created without one.
    pub default_policy: CampaignPolicy,
    pub datasheet: DatasheetConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            admin_token: None,
            default_policy: CampaignPolicy::default(),
            datasheet: DatasheetConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let config: Self = toml::from_str(text).map_err(|e| ServiceError::Storage(format!("config: {e}")))?;
        config.default_policy.validate()?;
        Ok(config)
    }
}
