//! The command-line front end: each subcommand is one file-to-file stage,
//! and `pipeline` chains them in memory.

mod config;
mod files;

use std::error::Error as StdError;
use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::atomic::write_atomic;
use crate::danger::score_all;
use crate::geocode::{resolve_all, CoordCache, FixtureProvider, GeocodeProvider, HttpProvider};
use crate::geograph::{build_graph, EpiGraph};
use crate::ingest::{load_infection_table, merge_coordinates, DivisionKey, InfectionTable};
use crate::riskmap::{build_features, emit_geojson, emit_html, quantile};

pub use config::{Cli, Command, ConfigError, Flags, NormalizeMode, PipelineConfig, ProviderKind, DEFAULT_THRESHOLD};
pub use files::{DangerFile, DangerRow, FileError, GraphEdge, GraphFile, GraphNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Geocode,
    Graph,
    Score,
    Render,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Geocode => "geocode",
            Stage::Graph => "graph",
            Stage::Score => "score",
            Stage::Render => "render",
        })
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Box<dyn StdError + Send + Sync>,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

impl StdError for StageError {
    fn source(&self) -> Option<&(dyn StdError + 'static)> {
        Some(self.source.as_ref())
    }
}

impl StageError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Config => 2,
            _ => 1,
        }
    }
}

fn at<E: Into<Box<dyn StdError + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> StageError {
    move |e| StageError { stage, source: e.into() }
}

fn with_path<E: fmt::Display>(path: &Path) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &'static str) -> Result<&'a Path, StageError> {
    value.as_deref().ok_or_else(|| at(Stage::Config)(ConfigError::Missing(flag)))
}

/// Counts and statistics gathered while running one or more stages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub loaded: Option<usize>,
    pub dropped: Option<usize>,
    pub geocode_misses: Vec<DivisionKey>,
    pub unresolved: Vec<DivisionKey>,
    pub nodes: Option<usize>,
    pub edges: Option<usize>,
    /// min, median, max of raw danger.
    pub danger: Option<(f64, f64, f64)>,
    pub written: Vec<PathBuf>,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(n) = self.loaded {
            writeln!(f, "divisions loaded: {n}")?;
        }
        if let Some(n) = self.dropped {
            writeln!(f, "rows dropped: {n}")?;
        }
        if !self.geocode_misses.is_empty() {
            writeln!(f, "geocoder misses: {}", self.geocode_misses.len())?;
        }
        if self.nodes.is_some() {
            writeln!(f, "unresolved keys: {}", self.unresolved.len())?;
            for k in &self.unresolved {
                writeln!(f, "  {k}")?;
            }
        }
        if let Some(n) = self.nodes {
            writeln!(f, "nodes: {n}")?;
        }
        if let Some(n) = self.edges {
            writeln!(f, "edges: {n}")?;
        }
        if let Some((lo, mid, hi)) = self.danger {
            writeln!(f, "danger min/median/max: {lo:.6} / {mid:.6} / {hi:.6}")?;
        }
        for p in &self.written {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: &Cli) -> Result<Report, StageError> {
    let (Command::Geocode(flags)
    | Command::BuildGraph(flags)
    | Command::Score(flags)
    | Command::Render(flags)
    | Command::Pipeline(flags)) = &cli.command;
    let config = PipelineConfig::resolve(flags).map_err(at(Stage::Config))?;
    match cli.command {
        Command::Geocode(_) => run_geocode(&config),
        Command::BuildGraph(_) => run_build_graph(&config),
        Command::Score(_) => run_score(&config),
        Command::Render(_) => run_render(&config),
        Command::Pipeline(_) => run_pipeline(&config),
    }
}

fn ingest(config: &PipelineConfig, report: &mut Report) -> Result<InfectionTable, StageError> {
    let path = require(&config.infections, "infections")?;
    let file = File::open(path).map_err(with_path(path)).map_err(at(Stage::Ingest))?;
    let table = load_infection_table(BufReader::new(file), &config.schema)
        .map_err(with_path(path))
        .map_err(at(Stage::Ingest))?;
    report.loaded = Some(table.records.len());
    report.dropped = Some(table.dropped.len());
    Ok(table)
}

fn open_cache(config: &PipelineConfig, stage: Stage) -> Result<CoordCache, StageError> {
    let path = require(&config.coords_cache, "coords-cache")?;
    CoordCache::open(path).map_err(at(stage))
}

fn geocode(config: &PipelineConfig, table: &InfectionTable, cache: &mut CoordCache, report: &mut Report) -> Result<(), StageError> {
    let provider: Box<dyn GeocodeProvider> = match config.provider {
        ProviderKind::Fixture => {
            let path = require(&config.fixture, "fixture")?;
            Box::new(FixtureProvider::load(path).map_err(at(Stage::Geocode))?)
        }
        ProviderKind::Http => Box::new(HttpProvider::new(config.http.clone()).map_err(at(Stage::Config))?),
    };
    let keys: Vec<DivisionKey> = table.records.iter().map(|r| r.key.clone()).collect();
    let resolution = resolve_all(&keys, provider.as_ref(), cache).map_err(at(Stage::Geocode))?;
    report.geocode_misses = resolution.misses;
    Ok(())
}

fn graph_from(config: &PipelineConfig, table: &InfectionTable, cache: &CoordCache, report: &mut Report) -> Result<EpiGraph, StageError> {
    let merged = merge_coordinates(&table.records, cache.entries());
    for key in &merged.unresolved {
        log::warn!("no coordinates for {key}; excluded from the graph");
    }
    report.unresolved = merged.unresolved;
    let graph = build_graph(merged.divisions, config.threshold, config.metric).map_err(at(Stage::Graph))?;
    report.nodes = Some(graph.len());
    report.edges = Some(graph.edge_count());
    Ok(graph)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T, stage: Stage, report: &mut Report) -> Result<(), StageError> {
    let mut text = serde_json::to_string_pretty(value).map_err(at(stage))?;
    text.push('\n');
    write_atomic(path, |w| w.write_all(text.as_bytes()))
        .map_err(with_path(path))
        .map_err(at(stage))?;
    report.written.push(path.to_path_buf());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, StageError> {
    let text = fs::read_to_string(path).map_err(with_path(path)).map_err(at(stage))?;
    serde_json::from_str(&text).map_err(with_path(path)).map_err(at(stage))
}

fn score(graph: &EpiGraph, config: &PipelineConfig, report: &mut Report) -> DangerFile {
    let danger = score_all(graph, config.measure);
    let mut values: Vec<f64> = danger.values.values().copied().collect();
    if !values.is_empty() {
        values.sort_by(f64::total_cmp);
        report.danger = Some((values[0], quantile(&values, 0.5), values[values.len() - 1]));
    }
    DangerFile::new(&danger, graph)
}

fn render(danger: DangerFile, config: &PipelineConfig, report: &mut Report) -> Result<(), StageError> {
    let out = require(&config.out_geojson, "out-geojson")?;
    let (danger, sites) = danger.into_parts().map_err(at(Stage::Render))?;
    let features = if danger.values.is_empty() {
        Vec::new()
    } else {
        build_features(&danger, &sites, config.normalization).map_err(at(Stage::Render))?
    };
    write_atomic(out, |w| emit_geojson(&features, w))
        .map_err(with_path(out))
        .map_err(at(Stage::Render))?;
    report.written.push(out.to_path_buf());
    if let Some(html) = &config.out_html {
        write_atomic(html, |w| emit_html(&features, w))
            .map_err(with_path(html))
            .map_err(at(Stage::Render))?;
        report.written.push(html.clone());
    }
    Ok(())
}

pub fn run_geocode(config: &PipelineConfig) -> Result<Report, StageError> {
    let mut report = Report::default();
    let table = ingest(config, &mut report)?;
    let mut cache = open_cache(config, Stage::Geocode)?;
    geocode(config, &table, &mut cache, &mut report)?;
    Ok(report)
}

pub fn run_build_graph(config: &PipelineConfig) -> Result<Report, StageError> {
    let mut report = Report::default();
    let out = require(&config.out_graph, "out-graph")?;
    let table = ingest(config, &mut report)?;
    let cache = open_cache(config, Stage::Graph)?;
    let graph = graph_from(config, &table, &cache, &mut report)?;
    write_json(out, &GraphFile::from_graph(&graph), Stage::Graph, &mut report)?;
    Ok(report)
}

pub fn run_score(config: &PipelineConfig) -> Result<Report, StageError> {
    let mut report = Report::default();
    let input = require(&config.graph, "graph")?;
    let out = require(&config.out_danger, "out-danger")?;
    let graph = read_json::<GraphFile>(input, Stage::Score)?
        .into_graph()
        .map_err(with_path(input))
        .map_err(at(Stage::Score))?;
    report.nodes = Some(graph.len());
    report.edges = Some(graph.edge_count());
    let danger = score(&graph, config, &mut report);
    write_json(out, &danger, Stage::Score, &mut report)?;
    Ok(report)
}

pub fn run_render(config: &PipelineConfig) -> Result<Report, StageError> {
    let mut report = Report::default();
    let input = require(&config.danger, "danger")?;
    let danger: DangerFile = read_json(input, Stage::Render)?;
    render(danger, config, &mut report)?;
    Ok(report)
}

/// Ingest, geocode, graph, score and render in one pass.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Report, StageError> {
    let mut report = Report::default();
    require(&config.out_geojson, "out-geojson")?;
    let table = ingest(config, &mut report)?;
    let mut cache = open_cache(config, Stage::Geocode)?;
    geocode(config, &table, &mut cache, &mut report)?;
    let graph = graph_from(config, &table, &cache, &mut report)?;
    if let Some(out) = &config.out_graph {
        write_json(out, &GraphFile::from_graph(&graph), Stage::Graph, &mut report)?;
    }
    let danger = score(&graph, config, &mut report);
    if let Some(out) = &config.out_danger {
        write_json(out, &danger, Stage::Score, &mut report)?;
    }
    render(danger, config, &mut report)?;
    Ok(report)
}
