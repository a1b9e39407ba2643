//! Danger levels: how strongly a division is exposed to its neighbours'
//! caseloads.
//!
//! Node weights (active cases) and edge weights (distances) are first scaled
//! by their maxima, so every measure is a ratio independent of the units of
//! either.
//!
//! * `Nwos`: mean over neighbours of `v(j) / e(i,j)`.
//! * `Nws`: the same mean with the division's own growth-weighted caseload
//!   counted as one more member.
//! * `Isl`: mean over neighbours of `v(i) * v(j) / e(i,j)^2`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geograph::EpiGraph;
use crate::ingest::DivisionKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Nearest neighbours, without self.
    #[default]
    Nwos,
    /// Nearest neighbours, with self.
    Nws,
    /// Inverse-square law.
    Isl,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Nwos => "nwos",
            Measure::Nws => "nws",
            Measure::Isl => "isl",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nwos" => Ok(Measure::Nwos),
            "nws" => Ok(Measure::Nws),
            "isl" => Ok(Measure::Isl),
            other => Err(format!("unknown measure {other:?} (expected nwos, nws or isl)")),
        }
    }
}

/// Scaled node and edge weights of a graph.
///
/// `edge[i][n]` is the scale of the edge to `graph.neighbors(i)[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scales {
    pub node: Vec<f64>,
    pub edge: Vec<Vec<f64>>,
    pub max_v: u64,
    pub max_e: f64,
}

impl Scales {
    /// Scale of edge `(i, j)`, if it exists.
    pub fn edge_scale(&self, graph: &EpiGraph, i: usize, j: usize) -> Option<f64> {
        graph
            .neighbors(i)
            .iter()
            .position(|nb| nb.node == j)
            .map(|n| self.edge[i][n])
    }
}

/// Divides node weights by the largest node weight and edge distances by the
/// longest edge. An all-zero caseload scales to all zeros.
pub fn scale_weights(graph: &EpiGraph) -> Scales {
    let max_v = graph.nodes().iter().map(|d| d.active).max().unwrap_or(0);
    let node = graph
        .nodes()
        .iter()
        .map(|d| if max_v == 0 { 0.0 } else { d.active as f64 / max_v as f64 })
        .collect();
    let max_e = (0..graph.len())
        .flat_map(|i| graph.neighbors(i).iter().map(|nb| nb.dist))
        .fold(0.0, f64::max);
    let edge = (0..graph.len())
        .map(|i| graph.neighbors(i).iter().map(|nb| nb.dist / max_e).collect())
        .collect();
    Scales { node, edge, max_v, max_e }
}

/// Impact of neighbour `j` on `i`. Panics if `(i, j)` is not an edge.
pub fn impact(graph: &EpiGraph, scales: &Scales, i: usize, j: usize) -> f64 {
    let e = scales
        .edge_scale(graph, i, j)
        .unwrap_or_else(|| panic!("no edge between nodes {i} and {j}"));
    scales.node[j] / e
}

/// Sum of neighbour impacts on `i`, in adjacency (key) order.
fn neighbor_impact_sum(graph: &EpiGraph, scales: &Scales, i: usize) -> f64 {
    graph
        .neighbors(i)
        .iter()
        .zip(&scales.edge[i])
        .map(|(nb, e)| scales.node[nb.node] / e)
        .sum()
}

pub fn d_nwos(graph: &EpiGraph, scales: &Scales, i: usize) -> f64 {
    let n = graph.neighbors(i).len();
    if n == 0 {
        return 0.0;
    }
    neighbor_impact_sum(graph, scales, i) / n as f64
}

/// The division's own scaled caseload, grown by its relative case change.
/// The growth factor is floored at zero; no cases means no self impact.
pub fn impact_self(graph: &EpiGraph, scales: &Scales, i: usize) -> f64 {
    let d = graph.node(i);
    if d.active == 0 {
        return 0.0;
    }
    let growth = 1.0 + d.delta_active as f64 / d.active as f64;
    scales.node[i] * growth.max(0.0)
}

pub fn d_nws(graph: &EpiGraph, scales: &Scales, i: usize) -> f64 {
    let n = graph.neighbors(i).len();
    (neighbor_impact_sum(graph, scales, i) + impact_self(graph, scales, i)) / (n + 1) as f64
}

/// One inverse-square term. Symmetric in its node arguments.
pub fn isl_term(v_i: f64, v_j: f64, edge_scale: f64) -> f64 {
    (v_i * v_j) / (edge_scale * edge_scale)
}

pub fn d_isl(graph: &EpiGraph, scales: &Scales, i: usize) -> f64 {
    let neighbors = graph.neighbors(i);
    if neighbors.is_empty() {
        return 0.0;
    }
    let sum: f64 = neighbors
        .iter()
        .zip(&scales.edge[i])
        .map(|(nb, &e)| isl_term(scales.node[i], scales.node[nb.node], e))
        .sum();
    sum / neighbors.len() as f64
}

/// Raw danger of every division under one measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DangerVector {
    pub measure: Measure,
    pub values: BTreeMap<DivisionKey, f64>,
    pub max_v: u64,
    pub max_e: f64,
}

pub fn score_all(graph: &EpiGraph, measure: Measure) -> DangerVector {
    let scales = scale_weights(graph);
    let f = match measure {
        Measure::Nwos => d_nwos,
        Measure::Nws => d_nws,
        Measure::Isl => d_isl,
    };
    let values = (0..graph.len())
        .map(|i| (graph.node(i).key.clone(), f(graph, &scales, i)))
        .collect();
    DangerVector {
        measure,
        values,
        max_v: scales.max_v,
        max_e: scales.max_e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocode::GeoPoint;
    use crate::geograph::{build_graph, Edge, Metric};
    use crate::ingest::Division;
    use proptest::prelude::*;

    fn div(name: &str, lat: f64, lon: f64, active: u64, delta: i64) -> Division {
        Division {
            key: DivisionKey::new(name, "S").unwrap(),
            point: GeoPoint::new(lat, lon).unwrap(),
            active,
            delta_active: delta,
        }
    }

    /// A-B 1.0, A-C 1.2, B-C 2.0 apart; V = 100, 50, 0; dV = 10, 5, 0.
    fn fixture() -> EpiGraph {
        build_graph(
            vec![
                div("A", 20.0, 75.0, 100, 10),
                div("B", 20.0, 76.0, 50, 5),
                div("C", 20.0 + 0.8316f64.sqrt(), 74.22, 0, 0),
            ],
            1.3,
            Metric::DegreeEuclidean,
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn scales() {
        let g = fixture();
        let s = scale_weights(&g);
        assert_eq!(s.node, vec![1.0, 0.5, 0.0]);
        close(s.max_e, 1.2);
        close(s.edge_scale(&g, 0, 1).unwrap(), 1.0 / 1.2);
        close(s.edge_scale(&g, 0, 2).unwrap(), 1.0);
        assert_eq!(s.edge_scale(&g, 1, 2), None);
    }

    #[test]
    fn all_zero_cases_scale_to_zero() {
        let g = build_graph(
            vec![div("A", 0.0, 0.0, 0, 3), div("B", 0.0, 1.0, 0, -1)],
            1.3,
            Metric::DegreeEuclidean,
        )
        .unwrap();
        assert_eq!(scale_weights(&g).node, vec![0.0, 0.0]);
        for m in [Measure::Nwos, Measure::Nws, Measure::Isl] {
            assert!(score_all(&g, m).values.values().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn impacts() {
        let g = fixture();
        let s = scale_weights(&g);
        close(impact(&g, &s, 0, 1), 0.6);
        close(impact(&g, &s, 0, 2), 0.0);
        close(impact(&g, &s, 1, 0), 1.2);
    }

    #[test]
    fn self_impact() {
        let g = fixture();
        let s = scale_weights(&g);
        close(impact_self(&g, &s, 0), 1.1);
        close(impact_self(&g, &s, 1), 0.55);
        assert_eq!(impact_self(&g, &s, 2), 0.0);

        let shrinking = build_graph(vec![div("A", 0.0, 0.0, 10, -20)], 1.0, Metric::DegreeEuclidean).unwrap();
        let s = scale_weights(&shrinking);
        assert_eq!(impact_self(&shrinking, &s, 0), 0.0);
    }

    #[test]
    fn fixture_table() {
        let g = fixture();
        let s = scale_weights(&g);
        let expect = [
            (d_nwos as fn(&EpiGraph, &Scales, usize) -> f64, [0.3, 1.2, 1.0]),
            (d_nws, [1.7 / 3.0, 0.875, 0.5]),
            (d_isl, [0.36, 0.72, 0.0]),
        ];
        for (f, values) in expect {
            for (i, v) in values.iter().enumerate() {
                close(f(&g, &s, i), *v);
            }
        }
    }

    #[test]
    fn isolated_node_conventions() {
        let g = build_graph(
            vec![div("A", 0.0, 0.0, 40, 4), div("B", 10.0, 10.0, 80, 0)],
            1.3,
            Metric::DegreeEuclidean,
        )
        .unwrap();
        let s = scale_weights(&g);
        assert_eq!(s.max_e, 0.0);
        assert_eq!(d_nwos(&g, &s, 0), 0.0);
        assert_eq!(d_isl(&g, &s, 0), 0.0);
        close(d_nws(&g, &s, 0), 0.5 * 1.1);
    }

    #[test]
    fn measure_names() {
        for m in [Measure::Nwos, Measure::Nws, Measure::Isl] {
            assert_eq!(m.as_str().parse::<Measure>().unwrap(), m);
        }
        assert!("gravity".parse::<Measure>().is_err());
    }

    fn random_graph() -> impl Strategy<Value = (Vec<(u64, i64)>, Vec<(usize, usize, f64)>)> {
        (2usize..25).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u64..500, -100i64..100), n),
                proptest::collection::vec((0..n, 0..n, 0.01f64..2.0), 0..3 * n),
            )
        })
    }

    fn assemble(nodes: &[(u64, i64)], edges: &[(usize, usize, f64)], dist_scale: f64) -> EpiGraph {
        let divisions = nodes
            .iter()
            .enumerate()
            .map(|(i, &(v, dv))| div(&format!("N{i:02}"), 0.0, 0.0, v, dv))
            .collect();
        let mut seen = std::collections::HashSet::new();
        let edges = edges
            .iter()
            .filter(|(a, b, _)| a != b && seen.insert((*a.min(b), *a.max(b))))
            .map(|&(a, b, d)| Edge { a: a.min(b), b: a.max(b), dist: d * dist_scale })
            .collect();
        EpiGraph::from_parts(divisions, edges, 2.0 * dist_scale, Metric::DegreeEuclidean).unwrap()
    }

    proptest! {
        #[test]
        fn distance_units_cancel((nodes, edges) in random_graph(), k in 0.01f64..100.0) {
            let g1 = assemble(&nodes, &edges, 1.0);
            let g2 = assemble(&nodes, &edges, k);
            for m in [Measure::Nwos, Measure::Nws, Measure::Isl] {
                let (a, b) = (score_all(&g1, m), score_all(&g2, m));
                for (key, v) in &a.values {
                    prop_assert!((v - b.values[key]).abs() <= 1e-12 * v.abs().max(1.0), "{m} {key}: {v} vs {}", b.values[key]);
                }
            }
        }

        #[test]
        fn isl_terms_symmetric((nodes, edges) in random_graph()) {
            let g = assemble(&nodes, &edges, 1.0);
            let s = scale_weights(&g);
            for e in g.edges() {
                let ab = isl_term(s.node[e.a], s.node[e.b], s.edge_scale(&g, e.a, e.b).unwrap());
                let ba = isl_term(s.node[e.b], s.node[e.a], s.edge_scale(&g, e.b, e.a).unwrap());
                prop_assert_eq!(ab.to_bits(), ba.to_bits());
            }
        }

        #[test]
        fn never_negative((nodes, edges) in random_graph()) {
            let g = assemble(&nodes, &edges, 1.0);
            for m in [Measure::Nwos, Measure::Nws, Measure::Isl] {
                prop_assert!(score_all(&g, m).values.values().all(|v| *v >= 0.0 && v.is_finite()));
            }
        }

        #[test]
        fn neighbour_growth_never_lowers_danger((nodes, edges) in random_graph(), bump in 1u64..50) {
            let g = assemble(&nodes, &edges, 1.0);
            let s = scale_weights(&g);
            let max_v = s.max_v;
            // bump one node that is not the unique maximum, staying at or below max(V)
            let Some(j) = (0..g.len()).find(|&j| nodes[j].0 + bump <= max_v && nodes[j].0 < max_v) else {
                return Ok(());
            };
            let mut bumped = nodes.clone();
            bumped[j].0 += bump;
            let g2 = assemble(&bumped, &edges, 1.0);
            prop_assert_eq!(scale_weights(&g2).max_v, max_v);
            for nb in g.neighbors(j) {
                let i = nb.node;
                let s2 = scale_weights(&g2);
                prop_assert!(d_nwos(&g2, &s2, i) >= d_nwos(&g, &s, i));
                prop_assert!(d_nws(&g2, &s2, i) >= d_nws(&g, &s, i));
                if nodes[i].0 > 0 {
                    prop_assert!(d_isl(&g2, &s2, i) >= d_isl(&g, &s, i));
                }
            }
        }
    }
}
