//! Division-level hotspot risk scoring.
//!
//! The pipeline loads per-division infection counts, resolves each division
//! to a coordinate, connects divisions whose centres lie within a distance
//! threshold, scores each division with one of three impact measures and
//! renders the normalized scores as a colour-coded point map.
//!
//! ```text
//! ingest -> geocode -> geograph -> danger -> riskmap
//! ```

pub mod cli;
pub mod danger;
pub mod geocode;
pub mod geograph;
pub mod ingest;
pub mod riskmap;

mod atomic;
mod fmt;

pub use danger::{score_all, DangerVector, Measure};
pub use geocode::{form_query, resolve_all, CoordCache, GeoPoint, GeocodeProvider};
pub use geograph::{build_graph, distance, EpiGraph, Metric};
pub use ingest::{load_infection_table, merge_coordinates, Division, DivisionKey, InfectionRecord};
pub use riskmap::{gradient, normalize_cap, normalize_iqr, RiskFeature, Rgb};
