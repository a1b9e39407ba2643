//! Threshold-connected division graph.
//!
//! Every division is a node weighted by its active cases. Two divisions are
//! joined when their centres are at most `threshold` apart; the edge carries
//! that distance. Neighbourhoods overlap freely, each node being the centre
//! of its own neighbourhood.

mod neighbors;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geocode::GeoPoint;
use crate::ingest::{Division, DivisionKey};

pub use neighbors::{brute_force_neighbors, grid_neighbors};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Pairs closer than this are treated as the same place.
pub const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Plain Euclidean distance in (lat, lon) degree space.
    #[default]
    DegreeEuclidean,
    /// Great-circle distance in kilometres.
    HaversineKm,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::DegreeEuclidean => "degree-euclidean",
            Metric::HaversineKm => "haversine-km",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "degree-euclidean" => Ok(Metric::DegreeEuclidean),
            "haversine-km" => Ok(Metric::HaversineKm),
            other => Err(format!("unknown metric {other:?} (expected degree-euclidean or haversine-km)")),
        }
    }
}

pub fn distance(a: GeoPoint, b: GeoPoint, metric: Metric) -> f64 {
    match metric {
        Metric::DegreeEuclidean => {
            let dlat = a.lat() - b.lat();
            let dlon = a.lon() - b.lon();
            (dlat * dlat + dlon * dlon).sqrt()
        }
        Metric::HaversineKm => {
            let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
            let dphi = p2 - p1;
            let dlambda = (b.lon() - a.lon()).to_radians();
            let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
            2.0 * EARTH_RADIUS_KM * h.min(1.0).sqrt().asin()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("threshold must be a positive finite distance, got {0}")]
    InvalidThreshold(f64),
    #[error("divisions {a} and {b} share the same centre {point}")]
    Coincident {
        a: DivisionKey,
        b: DivisionKey,
        point: GeoPoint,
    },
    #[error("division {0} appears more than once")]
    DuplicateNode(DivisionKey),
    #[error("edge references unknown node {0:?}")]
    UnknownNode(String),
    #[error("edge {a} - {b}: {message}")]
    BadEdge {
        a: DivisionKey,
        b: DivisionKey,
        message: String,
    },
}

/// Undirected edge between node indices `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub dist: f64,
}

/// Immutable weighted graph over divisions.
///
/// Adjacency lists are sorted by the neighbour's [`DivisionKey`] so that
/// anything summed over a neighbourhood does not depend on input order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiGraph {
    nodes: Vec<Division>,
    adjacency: Vec<Vec<Neighbor>>,
    edge_count: usize,
    threshold: f64,
    metric: Metric,
}

pub(crate) fn check_threshold(threshold: f64) -> Result<(), GraphError> {
    if threshold.is_finite() && threshold > 0.0 {
        Ok(())
    } else {
        Err(GraphError::InvalidThreshold(threshold))
    }
}

/// Connects every pair of divisions at most `threshold` apart.
pub fn build_graph(divisions: Vec<Division>, threshold: f64, metric: Metric) -> Result<EpiGraph, GraphError> {
    let edges = grid_neighbors(&divisions, threshold, metric)?;
    EpiGraph::from_parts(divisions, edges, threshold, metric)
}

impl EpiGraph {
    /// Assembles a graph from nodes and an explicit edge list, checking the
    /// graph invariants.
    pub fn from_parts(nodes: Vec<Division>, edges: Vec<Edge>, threshold: f64, metric: Metric) -> Result<Self, GraphError> {
        check_threshold(threshold)?;
        let mut keys = HashSet::with_capacity(nodes.len());
        for n in &nodes {
            if !keys.insert(n.key.match_key()) {
                return Err(GraphError::DuplicateNode(n.key.clone()));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            let n = nodes.len();
            if e.a >= n || e.b >= n {
                return Err(GraphError::UnknownNode(format!("#{}", e.a.max(e.b))));
            }
            let bad = |message: &str| GraphError::BadEdge {
                a: nodes[e.a].key.clone(),
                b: nodes[e.b].key.clone(),
                message: message.to_string(),
            };
            if e.a == e.b {
                return Err(bad("self-loop"));
            }
            if !(e.dist > 0.0 && e.dist <= threshold) {
                return Err(bad(&format!("distance {} outside (0, {threshold}]", e.dist)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(bad("duplicate edge"));
            }
            adjacency[e.a].push(Neighbor { node: e.b, dist: e.dist });
            adjacency[e.b].push(Neighbor { node: e.a, dist: e.dist });
        }
        for list in &mut adjacency {
            list.sort_by(|x, y| nodes[x.node].key.cmp(&nodes[y.node].key));
        }
        Ok(Self {
            nodes,
            adjacency,
            edge_count: seen.len(),
            threshold,
            metric,
        })
    }

    pub fn nodes(&self) -> &[Division] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Division {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn index_of(&self, key: &DivisionKey) -> Option<usize> {
        let mk = key.match_key();
        self.nodes.iter().position(|n| n.key.match_key() == mk)
    }

    /// Edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| {
                list.iter()
                    .filter(move |nb| nb.node > a)
                    .map(move |nb| Edge { a, b: nb.node, dist: nb.dist })
            })
            .collect();
        out.sort_by_key(|e| (e.a, e.b));
        out
    }
}
