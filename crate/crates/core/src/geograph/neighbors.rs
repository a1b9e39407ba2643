//! Fixed-radius neighbour discovery: the direct all-pairs scan and a uniform
//! grid index that must return exactly the same edge set.

use std::collections::HashMap;

use super::{check_threshold, distance, Edge, GraphError, Metric, COINCIDENT_EPS, EARTH_RADIUS_KM};
use crate::geocode::GeoPoint;
use crate::ingest::Division;

/// Kilometres per degree of latitude used to size grid rows. Slightly below
/// the true 111.1949 so rows are never too short.
const KM_PER_DEGREE: f64 = 111.19;

/// Upper bound on how much wider than tall a haversine grid cell may be.
const MAX_LON_WIDENING: f64 = 5.0;

fn coincident(divisions: &[Division], a: usize, b: usize) -> GraphError {
    GraphError::Coincident {
        a: divisions[a].key.clone(),
        b: divisions[b].key.clone(),
        point: divisions[a].point,
    }
}

/// All-pairs scan: every unordered pair is measured once and connected when
/// its distance is at most `threshold`.
pub fn brute_force_neighbors(divisions: &[Division], threshold: f64, metric: Metric) -> Result<Vec<Edge>, GraphError> {
    check_threshold(threshold)?;
    let n = divisions.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(divisions[i].point, divisions[j].point, metric);
            if d < COINCIDENT_EPS {
                return Err(coincident(divisions, i, j));
            }
            if d <= threshold {
                edges.push(Edge { a: i, b: j, dist: d });
            }
        }
    }
    Ok(edges)
}

/// Grid-accelerated equivalent of [`brute_force_neighbors`].
///
/// Points are bucketed into cells at least one search radius on a side, so
/// every pair within range lies in the same or an adjacent cell. For the
/// haversine metric longitude wraps at the antimeridian, and the number of
/// columns searched grows with latitude as meridians converge.
pub fn grid_neighbors(divisions: &[Division], threshold: f64, metric: Metric) -> Result<Vec<Edge>, GraphError> {
    check_threshold(threshold)?;
    let reach = threshold.max(COINCIDENT_EPS);
    let points: Vec<GeoPoint> = divisions.iter().map(|d| d.point).collect();
    let grid = match metric {
        Metric::DegreeEuclidean => Grid::planar(&points, reach),
        Metric::HaversineKm => Grid::spherical(&points, reach),
    };

    let mut edges = Vec::new();
    let mut first_coincident: Option<(usize, usize)> = None;
    let mut candidates = Vec::new();
    for i in 0..points.len() {
        candidates.clear();
        grid.candidates(i, &points, &mut candidates);
        for &j in &candidates {
            if j <= i {
                continue;
            }
            let d = distance(points[i], points[j], metric);
            if d < COINCIDENT_EPS {
                if first_coincident.is_none_or(|c| (i, j) < c) {
                    first_coincident = Some((i, j));
                }
            } else if d <= threshold {
                edges.push(Edge { a: i, b: j, dist: d });
            }
        }
    }
    if let Some((a, b)) = first_coincident {
        return Err(coincident(divisions, a, b));
    }
    edges.sort_by_key(|e| (e.a, e.b));
    Ok(edges)
}

type Cell = (i64, i64);

enum Layout {
    /// Square cells in degree space, no wrapping.
    Planar { size: f64 },
    /// Rows of fixed height in latitude; columns wrap around the globe.
    Spherical {
        row_height: f64,
        col_width: f64,
        cols: i64,
        /// sin^2(reach / 2R), the haversine of the search radius.
        hav_reach: f64,
    },
}

struct Grid {
    layout: Layout,
    cells: HashMap<Cell, Vec<usize>>,
    rows: HashMap<i64, Vec<usize>>,
    home: Vec<Cell>,
}

/// Cell edge derived from a radius, padded so floating-point rounding in
/// the cell index never splits an in-range pair across non-adjacent cells.
fn padded(len: f64) -> f64 {
    len * (1.0 + 1e-9) + 1e-12
}

impl Grid {
    fn planar(points: &[GeoPoint], reach: f64) -> Self {
        Self::bucket(Layout::Planar { size: padded(reach) }, points)
    }

    fn spherical(points: &[GeoPoint], reach: f64) -> Self {
        let row_height = padded(reach / KM_PER_DEGREE);
        let max_abs_lat = points.iter().map(|p| p.lat().abs()).fold(0.0, f64::max);
        let widen = (1.0 / max_abs_lat.to_radians().cos()).min(MAX_LON_WIDENING);
        let cols = ((360.0 / (row_height * widen)).floor() as i64).max(1);
        let half_angle = padded(reach) / (2.0 * EARTH_RADIUS_KM);
        let hav_reach = if half_angle >= std::f64::consts::FRAC_PI_2 {
            1.0
        } else {
            half_angle.sin().powi(2)
        };
        let layout = Layout::Spherical {
            row_height,
            col_width: 360.0 / cols as f64,
            cols,
            hav_reach,
        };
        Self::bucket(layout, points)
    }

    fn bucket(layout: Layout, points: &[GeoPoint]) -> Self {
        let mut grid = Self {
            layout,
            cells: HashMap::new(),
            rows: HashMap::new(),
            home: Vec::with_capacity(points.len()),
        };
        for (i, p) in points.iter().enumerate() {
            let cell = grid.cell_of(*p);
            grid.cells.entry(cell).or_default().push(i);
            grid.rows.entry(cell.0).or_default().push(i);
            grid.home.push(cell);
        }
        grid
    }

    fn cell_of(&self, p: GeoPoint) -> Cell {
        match self.layout {
            Layout::Planar { size } => ((p.lat() / size).floor() as i64, (p.lon() / size).floor() as i64),
            Layout::Spherical {
                row_height,
                col_width,
                cols,
                ..
            } => {
                let row = ((p.lat() + 90.0) / row_height).floor() as i64;
                let col = ((p.lon() + 180.0) / col_width).floor() as i64;
                (row, col.rem_euclid(cols))
            }
        }
    }

    /// Pushes every point that could lie within reach of point `i`. The
    /// result is a superset of the true neighbours (and includes `i`).
    fn candidates(&self, i: usize, points: &[GeoPoint], out: &mut Vec<usize>) {
        let (row, col) = self.home[i];
        match self.layout {
            Layout::Planar { .. } => {
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        if let Some(members) = self.cells.get(&(row + dr, col + dc)) {
                            out.extend_from_slice(members);
                        }
                    }
                }
            }
            Layout::Spherical {
                row_height,
                col_width,
                cols,
                hav_reach,
            } => {
                let lat_cos = points[i].lat().to_radians().cos();
                for r in row - 1..=row + 1 {
                    let Some(row_members) = self.rows.get(&r) else {
                        continue;
                    };
                    let span = lon_span(r, row_height, lat_cos, hav_reach);
                    let k = span.map(|deg| (deg / col_width).floor() as i64 + 1);
                    match k {
                        Some(k) if 2 * k + 1 < cols && ((2 * k + 1) as usize) < row_members.len() => {
                            for c in col - k..=col + k {
                                if let Some(members) = self.cells.get(&(r, c.rem_euclid(cols))) {
                                    out.extend_from_slice(members);
                                }
                            }
                        }
                        _ => out.extend_from_slice(row_members),
                    }
                }
            }
        }
    }
}

/// Largest longitude difference (degrees) a point at latitude cosine
/// `lat_cos` can have from an in-range point in grid row `row`. `None` when
/// every longitude is possible.
///
/// From hav(d/R) = hav(dlat) + cos(lat1) cos(lat2) hav(dlon), a pair within
/// range satisfies cos(lat1) cos(lat2) hav(dlon) <= hav(reach/R).
fn lon_span(row: i64, row_height: f64, lat_cos: f64, hav_reach: f64) -> Option<f64> {
    let lo = (-90.0 + row as f64 * row_height - 1e-9).clamp(-90.0, 90.0);
    let hi = (-90.0 + (row + 1) as f64 * row_height + 1e-9).clamp(-90.0, 90.0);
    let far_lat = lo.abs().max(hi.abs());
    let cos_product = lat_cos * far_lat.to_radians().cos();
    if cos_product <= 1e-12 {
        return None;
    }
    let ratio = hav_reach / cos_product;
    if ratio >= 1.0 {
        return None;
    }
    let span = 2.0 * ratio.sqrt().asin().to_degrees();
    Some(span * (1.0 + 1e-6) + 1e-9)
}
