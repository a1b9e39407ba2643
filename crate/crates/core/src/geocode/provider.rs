use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cache::{parse_entries, CacheError};
use super::{form_query, GeoPoint, GeocodeProvider, ProviderError};
use crate::ingest::DivisionKey;

/// Answers queries from a file in the coordinate-cache format.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    by_query: HashMap<String, GeoPoint>,
}

impl FixtureProvider {
    pub fn from_entries(entries: BTreeMap<DivisionKey, GeoPoint>) -> Self {
        let by_query = entries
            .into_iter()
            .map(|(k, p)| (form_query(&k).to_lowercase(), p))
            .collect();
        Self { by_query }
    }

    pub fn load(path: &Path) -> Result<Self, CacheError> {
        let text = fs::read_to_string(path).map_err(|source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_entries(parse_entries(&text, path)?.into_iter().collect()))
    }
}

impl GeocodeProvider for FixtureProvider {
    fn resolve(&self, query: &str) -> Result<Option<GeoPoint>, ProviderError> {
        Ok(self.by_query.get(&query.trim().to_lowercase()).copied())
    }

    fn max_in_flight(&self) -> Option<usize> {
        None
    }
}

/// Settings for a JSON-over-HTTP geocoding endpoint.
///
/// `endpoint` may contain `{query}` and `{key}` placeholders; both are
/// URL-encoded on substitution. The key itself is only ever read from the
/// environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    pub api_key_env: Option<String>,
    /// JSON pointer to the array of candidate results. When unset the
    /// coordinate pointers apply to the whole response.
    pub results_pointer: Option<String>,
    pub lat_pointer: String,
    pub lon_pointer: String,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key_env: None,
            results_pointer: Some("/results".into()),
            lat_pointer: "/geometry/location/lat".into(),
            lon_pointer: "/geometry/location/lng".into(),
            max_in_flight: 1,
            timeout_secs: 30,
        }
    }
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        if !config.endpoint.contains("{query}") {
            return Err(ProviderError(format!(
                "endpoint {:?} has no {{query}} placeholder",
                config.endpoint
            )));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ProviderError(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    fn url_for(&self, query: &str) -> String {
        let mut url = self.config.endpoint.replace("{query}", &urlencoding::encode(query));
        if let Some(key) = &self.api_key {
            url = url.replace("{key}", &urlencoding::encode(key));
        }
        url
    }

    /// Extracts the first result's coordinates from a response body.
    pub fn parse_response(&self, query: &str, body: &Value) -> Result<Option<GeoPoint>, ProviderError> {
        let result = match &self.config.results_pointer {
            Some(ptr) => {
                let Some(results) = body.pointer(ptr) else {
                    return Ok(None);
                };
                let results = results
                    .as_array()
                    .ok_or_else(|| ProviderError(format!("{ptr} is not an array")))?;
                if results.len() > 1 {
                    log::warn!("{} results for {query:?}, using the first", results.len());
                }
                match results.first() {
                    Some(first) => first,
                    None => return Ok(None),
                }
            }
            None => body,
        };
        let (Some(lat), Some(lon)) = (
            result.pointer(&self.config.lat_pointer),
            result.pointer(&self.config.lon_pointer),
        ) else {
            return Ok(None);
        };
        let point = GeoPoint::new(as_degrees(lat)?, as_degrees(lon)?)
            .map_err(|e| ProviderError(format!("{query:?}: {e}")))?;
        Ok(Some(point))
    }
}

fn as_degrees(v: &Value) -> Result<f64, ProviderError> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| ProviderError(format!("coordinate {v} is not a number")))
}

impl GeocodeProvider for HttpProvider {
    fn resolve(&self, query: &str) -> Result<Option<GeoPoint>, ProviderError> {
        let mut response = self
            .agent
            .get(&self.url_for(query))
            .call()
            .map_err(|e| ProviderError(format!("request for {query:?} failed: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError(format!("request for {query:?} returned HTTP {status}")));
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError(format!("reading response for {query:?}: {e}")))?;
        let body: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError(format!("response for {query:?}: {e}")))?;
        self.parse_response(query, &body)
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.config.max_in_flight.max(1))
    }
}
