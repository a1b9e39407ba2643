//! Command-line flags, the optional TOML config file, and their merge into
//! one validated [`PipelineConfig`].

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::danger::Measure;
use crate::geocode::HttpProviderConfig;
use crate::geograph::Metric;
use crate::ingest::ColumnSchema;
use crate::riskmap::{Normalization, DEFAULT_CAP};

pub const DEFAULT_THRESHOLD: f64 = 1.3;

#[derive(Debug, Parser)]
#[command(name = "hotspot", version, about = "Score administrative divisions for hotspot risk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resolve every division in the infection table, filling the coordinate cache.
    Geocode(Flags),
    /// Join infections with cached coordinates and write the graph JSON.
    BuildGraph(Flags),
    /// Score every node of a graph JSON and write the danger JSON.
    Score(Flags),
    /// Normalize a danger JSON and write the GeoJSON (and optional HTML) map.
    Render(Flags),
    /// Run every stage in order.
    Pipeline(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Fixture,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    #[default]
    Cap,
    Iqr,
}

/// Every option any subcommand understands. Values given here override the
/// config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub infections: Option<PathBuf>,
    #[arg(long = "coords-cache")]
    pub coords_cache: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Backing file for the fixture provider (coordinate-cache format).
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = Metric::from_str)]
    pub metric: Option<Metric>,
    #[arg(long, value_parser = Measure::from_str)]
    pub measure: Option<Measure>,
    #[arg(long, value_enum)]
    pub normalize: Option<NormalizeMode>,
    #[arg(long)]
    pub cap: Option<f64>,
    /// Graph JSON read by `score`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Danger JSON read by `render`.
    #[arg(long)]
    pub danger: Option<PathBuf>,
    #[arg(long = "out-geojson")]
    pub out_geojson: Option<PathBuf>,
    #[arg(long = "out-html")]
    pub out_html: Option<PathBuf>,
    #[arg(long = "out-graph")]
    pub out_graph: Option<PathBuf>,
    #[arg(long = "out-danger")]
    pub out_danger: Option<PathBuf>,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long = "col-parent")]
    pub col_parent: Option<String>,
    #[arg(long = "col-division")]
    pub col_division: Option<String>,
    #[arg(long = "col-active")]
    pub col_active: Option<String>,
    #[arg(long = "col-delta")]
    pub col_delta: Option<String>,
    /// URL template with {query} and optional {key} placeholders.
    #[arg(long = "http-endpoint")]
    pub http_endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long = "http-key-env")]
    pub http_key_env: Option<String>,
    #[arg(long = "http-results-pointer")]
    pub http_results_pointer: Option<String>,
    #[arg(long = "http-lat-pointer")]
    pub http_lat_pointer: Option<String>,
    #[arg(long = "http-lon-pointer")]
    pub http_lon_pointer: Option<String>,
    #[arg(long = "http-max-in-flight")]
    pub http_max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    infections: Option<PathBuf>,
    coords_cache: Option<PathBuf>,
    provider: Option<ProviderKind>,
    fixture: Option<PathBuf>,
    threshold: Option<f64>,
    metric: Option<Metric>,
    measure: Option<Measure>,
    normalize: Option<NormalizeMode>,
    cap: Option<f64>,
    graph: Option<PathBuf>,
    danger: Option<PathBuf>,
    out_geojson: Option<PathBuf>,
    out_html: Option<PathBuf>,
    out_graph: Option<PathBuf>,
    out_danger: Option<PathBuf>,
    schema: Option<ColumnSchema>,
    http: Option<HttpProviderConfig>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub infections: Option<PathBuf>,
    pub coords_cache: Option<PathBuf>,
    pub provider: ProviderKind,
    pub fixture: Option<PathBuf>,
    pub http: HttpProviderConfig,
    pub schema: ColumnSchema,
    pub threshold: f64,
    pub metric: Metric,
    pub measure: Measure,
    pub normalization: Normalization,
    pub graph: Option<PathBuf>,
    pub danger: Option<PathBuf>,
    pub out_geojson: Option<PathBuf>,
    pub out_html: Option<PathBuf>,
    pub out_graph: Option<PathBuf>,
    pub out_danger: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            infections: None,
            coords_cache: None,
            provider: ProviderKind::Fixture,
            fixture: None,
            http: HttpProviderConfig::default(),
            schema: ColumnSchema::default(),
            threshold: DEFAULT_THRESHOLD,
            metric: Metric::DegreeEuclidean,
            measure: Measure::Nwos,
            normalization: Normalization::Cap { cap: DEFAULT_CAP },
            graph: None,
            danger: None,
            out_geojson: None,
            out_html: None,
            out_graph: None,
            out_danger: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config file {0}: {1}")]
    Read(PathBuf, String),
    #[error("config file {0}: {1}")]
    Parse(PathBuf, String),
    #[error("threshold must be a positive finite distance, got {0}")]
    Threshold(f64),
    #[error("cap must be a positive finite number, got {0}")]
    Cap(f64),
    #[error("{0} is used for more than one input/output")]
    SharedPath(PathBuf),
    #[error("missing required setting --{0}")]
    Missing(&'static str),
}

impl PipelineConfig {
    /// Defaults, overlaid by the config file (if any), overlaid by flags.
    pub fn resolve(flags: &Flags) -> Result<Self, ConfigError> {
        let file = match &flags.config {
            Some(path) => load_config_file(path)?,
            None => ConfigFile::default(),
        };
        let mut c = PipelineConfig::default();
        if let Some(schema) = file.schema {
            c.schema = schema;
        }
        if let Some(http) = file.http {
            c.http = http;
        }

        macro_rules! pick {
            ($field:ident) => {
                flags.$field.clone().or(file.$field)
            };
        }
        c.infections = pick!(infections);
        c.coords_cache = pick!(coords_cache);
        c.provider = pick!(provider).unwrap_or_default();
        c.fixture = pick!(fixture);
        c.threshold = pick!(threshold).unwrap_or(DEFAULT_THRESHOLD);
        c.metric = pick!(metric).unwrap_or_default();
        c.measure = pick!(measure).unwrap_or_default();
        c.graph = pick!(graph);
        c.danger = pick!(danger);
        c.out_geojson = pick!(out_geojson);
        c.out_html = pick!(out_html);
        c.out_graph = pick!(out_graph);
        c.out_danger = pick!(out_danger);
        let cap = pick!(cap).unwrap_or(DEFAULT_CAP);
        c.normalization = match pick!(normalize).unwrap_or_default() {
            NormalizeMode::Cap => Normalization::Cap { cap },
            NormalizeMode::Iqr => Normalization::Iqr,
        };

        if let Some(d) = flags.delimiter {
            c.schema.delimiter = d;
        }
        for (flag, slot) in [
            (&flags.col_parent, &mut c.schema.parent),
            (&flags.col_division, &mut c.schema.division),
            (&flags.col_active, &mut c.schema.active),
            (&flags.col_delta, &mut c.schema.delta_active),
            (&flags.http_endpoint, &mut c.http.endpoint),
            (&flags.http_lat_pointer, &mut c.http.lat_pointer),
            (&flags.http_lon_pointer, &mut c.http.lon_pointer),
        ] {
            if let Some(v) = flag {
                *slot = v.clone();
            }
        }
        if flags.http_key_env.is_some() {
            c.http.api_key_env = flags.http_key_env.clone();
        }
        if flags.http_results_pointer.is_some() {
            c.http.results_pointer = flags.http_results_pointer.clone().filter(|p| !p.is_empty());
        }
        if let Some(n) = flags.http_max_in_flight {
            c.http.max_in_flight = n;
        }

        c.validate(cap)?;
        Ok(c)
    }

    fn validate(&self, cap: f64) -> Result<(), ConfigError> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        if !(cap.is_finite() && cap > 0.0) {
            return Err(ConfigError::Cap(cap));
        }
        let mut seen: Vec<PathBuf> = Vec::new();
        for p in [
            &self.infections,
            &self.coords_cache,
            &self.fixture,
            &self.graph,
            &self.danger,
            &self.out_geojson,
            &self.out_html,
            &self.out_graph,
            &self.out_danger,
        ]
        .into_iter()
        .flatten()
        {
            let abs = std::path::absolute(p).unwrap_or_else(|_| p.clone());
            if seen.contains(&abs) {
                return Err(ConfigError::SharedPath(p.clone()));
            }
            seen.push(abs);
        }
        Ok(())
    }
}

fn load_config_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e.to_string()))?;
    let mut file: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Parse(path.to_path_buf(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for slot in [
        &mut file.infections,
        &mut file.coords_cache,
        &mut file.fixture,
        &mut file.graph,
        &mut file.danger,
        &mut file.out_geojson,
        &mut file.out_html,
        &mut file.out_graph,
        &mut file.out_danger,
    ] {
        if let Some(p) = slot.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::resolve(&Flags::default()).unwrap();
        assert_eq!(c.threshold, 1.3);
        assert_eq!(c.metric, Metric::DegreeEuclidean);
        assert_eq!(c.measure, Measure::Nwos);
        assert_eq!(c.normalization, Normalization::Cap { cap: 0.3 });
        assert_eq!(c.provider, ProviderKind::Fixture);
    }

    #[test]
    fn validation() {
        let flags = Flags { threshold: Some(0.0), ..Default::default() };
        assert_eq!(PipelineConfig::resolve(&flags), Err(ConfigError::Threshold(0.0)));
        let flags = Flags { cap: Some(-1.0), ..Default::default() };
        assert_eq!(PipelineConfig::resolve(&flags), Err(ConfigError::Cap(-1.0)));
        let flags = Flags {
            out_geojson: Some("a.json".into()),
            out_graph: Some("./a.json".into()),
            ..Default::default()
        };
        assert!(matches!(PipelineConfig::resolve(&flags), Err(ConfigError::SharedPath(_))));
    }

    #[test]
    fn flags_override_file_and_paths_are_relative_to_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            r#"
infections = "data/cases.csv"
threshold = 2.0
metric = "haversine-km"
measure = "isl"
normalize = "iqr"

[schema]
division = "district_name"

[http]
endpoint = "https://geo.example/search?q={query}"
api_key_env = "GEO_KEY"
"#,
        )
        .unwrap();
        let flags = Flags {
            config: Some(path.clone()),
            threshold: Some(250.0),
            ..Default::default()
        };
        let c = PipelineConfig::resolve(&flags).unwrap();
        assert_eq!(c.threshold, 250.0);
        assert_eq!(c.metric, Metric::HaversineKm);
        assert_eq!(c.measure, Measure::Isl);
        assert_eq!(c.normalization, Normalization::Iqr);
        assert_eq!(c.infections.unwrap(), dir.path().join("data/cases.csv"));
        assert_eq!(c.schema.division, "district_name");
        assert_eq!(c.schema.parent, "State");
        assert_eq!(c.http.api_key_env.as_deref(), Some("GEO_KEY"));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "api_key = \"secret\"\n").unwrap();
        let flags = Flags { config: Some(path), ..Default::default() };
        assert!(matches!(PipelineConfig::resolve(&flags), Err(ConfigError::Parse(..))));
    }
}
