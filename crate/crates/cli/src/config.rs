//! Endpoint settings. The access token comes from the environment or this
//! file and is never accepted on the command line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use adaudit::ingest::TOKEN_ENV;

pub const DEFAULT_REQUESTS_PER_MINUTE: u32 = 10;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub endpoint_url: Option<String>,
    pub access_token: Option<String>,
    pub requests_per_minute: Option<u32>,
    pub country: Option<String>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The environment variable wins over the file.
    pub fn token(&self) -> Result<String> {
        match std::env::var(TOKEN_ENV) {
            Ok(t) if !t.trim().is_empty() => Ok(t),
            _ => match &self.access_token {
                Some(t) if !t.trim().is_empty() => Ok(t.clone()),
                _ => bail!("no access token: set {TOKEN_ENV} or `access_token` in the config file"),
            },
        }
    }

    pub fn requests_per_minute(&self) -> u32 {
        self.requests_per_minute.unwrap_or(DEFAULT_REQUESTS_PER_MINUTE).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let c: Config = toml::from_str(
            "endpoint_url = \"https://h/ads_archive\"\naccess_token = \"t\"\nrequests_per_minute = 5\ncountry = \"GB\"\n",
        )
        .unwrap();
        assert_eq!(c.endpoint_url.as_deref(), Some("https://h/ads_archive"));
        assert_eq!(c.requests_per_minute(), 5);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<Config>("token = \"x\"").is_err());
    }
}
