//! On-disk forms of the intermediate artifacts passed between stages.

use serde::{Deserialize, Serialize};

use crate::danger::{DangerVector, Measure};
use crate::geocode::{GeoPoint, InvalidPoint};
use crate::geograph::{Edge, EpiGraph, GraphError, Metric};
use crate::ingest::{Division, DivisionKey, KeyError};
use crate::riskmap::Site;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Point(#[from] InvalidPoint),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("danger value for {0} is not a finite non-negative number")]
    BadDanger(String),
    #[error("division {0} is listed twice")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub active: u64,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: String,
    pub b: String,
    pub dist: f64,
}

/// Node-link JSON form of an [`EpiGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub threshold: f64,
    pub metric: Metric,
}

impl GraphFile {
    pub fn from_graph(graph: &EpiGraph) -> Self {
        let nodes = graph
            .nodes()
            .iter()
            .map(|d| GraphNode {
                id: d.key.id(),
                lat: d.point.lat(),
                lon: d.point.lon(),
                active: d.active,
                delta: d.delta_active,
            })
            .collect();
        let edges = graph
            .edges()
            .into_iter()
            .map(|e| GraphEdge {
                a: graph.node(e.a).key.id(),
                b: graph.node(e.b).key.id(),
                dist: e.dist,
            })
            .collect();
        Self {
            nodes,
            edges,
            threshold: graph.threshold(),
            metric: graph.metric(),
        }
    }

    pub fn into_graph(self) -> Result<EpiGraph, FileError> {
        let mut ids = std::collections::HashMap::with_capacity(self.nodes.len());
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.into_iter().enumerate() {
            let key = DivisionKey::parse_id(&n.id)?;
            if ids.insert(n.id.clone(), i).is_some() {
                return Err(FileError::Duplicate(n.id));
            }
            nodes.push(Division {
                key,
                point: GeoPoint::new(n.lat, n.lon)?,
                active: n.active,
                delta_active: n.delta,
            });
        }
        let lookup = |id: &str| ids.get(id).copied().ok_or_else(|| GraphError::UnknownNode(id.to_string()));
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (lookup(&e.a)?, lookup(&e.b)?);
                Ok(Edge { a: a.min(b), b: a.max(b), dist: e.dist })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        Ok(EpiGraph::from_parts(nodes, edges, self.threshold, self.metric)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DangerRow {
    pub division: String,
    pub parent: String,
    pub lat: f64,
    pub lon: f64,
    pub active: u64,
    pub danger: f64,
}

/// Raw danger per division, with enough location data to draw the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DangerFile {
    pub measure: Measure,
    pub max_v: u64,
    pub max_e: f64,
    pub divisions: Vec<DangerRow>,
}

impl DangerFile {
    pub fn new(danger: &DangerVector, graph: &EpiGraph) -> Self {
        let divisions = graph
            .nodes()
            .iter()
            .map(|d| DangerRow {
                division: d.key.division().to_string(),
                parent: d.key.parent().to_string(),
                lat: d.point.lat(),
                lon: d.point.lon(),
                active: d.active,
                danger: danger.values[&d.key],
            })
            .collect::<Vec<_>>();
        let mut file = Self {
            measure: danger.measure,
            max_v: danger.max_v,
            max_e: danger.max_e,
            divisions,
        };
        file.divisions
            .sort_by(|x, y| (&x.division, &x.parent).cmp(&(&y.division, &y.parent)));
        file
    }

    pub fn into_parts(self) -> Result<(DangerVector, Vec<Site>), FileError> {
        let mut values = std::collections::BTreeMap::new();
        let mut sites = Vec::with_capacity(self.divisions.len());
        for row in self.divisions {
            let key = DivisionKey::new(&row.division, &row.parent)?;
            if !(row.danger.is_finite() && row.danger >= 0.0) {
                return Err(FileError::BadDanger(key.to_string()));
            }
            if values.insert(key.clone(), row.danger).is_some() {
                return Err(FileError::Duplicate(key.to_string()));
            }
            sites.push(Site {
                key,
                point: GeoPoint::new(row.lat, row.lon)?,
                active: row.active,
            });
        }
        let danger = DangerVector {
            measure: self.measure,
            values,
            max_v: self.max_v,
            max_e: self.max_e,
        };
        Ok((danger, sites))
    }
}
