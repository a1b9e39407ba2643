//! Normalizing raw danger to [0, 1] and colouring it green -> orange -> red.

mod emit;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::danger::DangerVector;
use crate::fmt::round_sig9;
use crate::geocode::GeoPoint;
use crate::ingest::DivisionKey;

pub use emit::{emit_geojson, emit_html};

/// Raw danger at or above this value is treated as maximal.
pub const DEFAULT_CAP: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("cap must be a positive finite number, got {0}")]
    InvalidCap(f64),
    #[error("cannot normalize an empty set of danger values")]
    Empty,
    #[error("gradient position {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("no location for {0}")]
    MissingSite(DivisionKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub fn hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.r, self.g, self.b)
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

pub const GREEN: Rgb = Rgb::new(0, 255, 0);
pub const ORANGE: Rgb = Rgb::new(255, 165, 0);
pub const RED: Rgb = Rgb::new(255, 0, 0);

/// Piecewise-linear green (0) -> orange (0.5) -> red (1), channels rounded
/// half-up.
pub fn gradient(t: f64) -> Result<Rgb, RiskError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(RiskError::OutOfRange(t));
    }
    let (from, to, u) = if t <= 0.5 {
        (GREEN, ORANGE, t / 0.5)
    } else {
        (ORANGE, RED, (t - 0.5) / 0.5)
    };
    let lerp = |a: u8, b: u8| {
        let v = f64::from(a) + (f64::from(b) - f64::from(a)) * u;
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    };
    Ok(Rgb::new(lerp(from.r, to.r), lerp(from.g, to.g), lerp(from.b, to.b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Normalization {
    /// `min(raw, cap) / cap`.
    Cap { cap: f64 },
    /// Clamp to the interquartile range and rescale it to [0, 1].
    Iqr,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::Cap { cap: DEFAULT_CAP }
    }
}

impl FromStr for Normalization {
    type Err = String;

    /// Accepts `cap`, `cap:<value>` or `iqr`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "cap" => Ok(Normalization::default()),
            None if s == "iqr" => Ok(Normalization::Iqr),
            Some(("cap", v)) => v
                .parse()
                .map(|cap| Normalization::Cap { cap })
                .map_err(|_| format!("bad cap value {v:?}")),
            _ => Err(format!("unknown normalization {s:?} (expected cap or iqr)")),
        }
    }
}

pub fn normalize_cap(values: &DangerVector, cap: f64) -> Result<BTreeMap<DivisionKey, f64>, RiskError> {
    if !(cap.is_finite() && cap > 0.0) {
        return Err(RiskError::InvalidCap(cap));
    }
    Ok(values
        .values
        .iter()
        .map(|(k, &raw)| (k.clone(), raw.min(cap) / cap))
        .collect())
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn normalize_iqr(values: &DangerVector) -> Result<BTreeMap<DivisionKey, f64>, RiskError> {
    if values.values.is_empty() {
        return Err(RiskError::Empty);
    }
    let mut sorted: Vec<f64> = values.values.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let spread = q3 - q1;
    Ok(values
        .values
        .iter()
        .map(|(k, &raw)| {
            let norm = if spread > 0.0 {
                ((raw.clamp(q1, q3) - q1) / spread).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (k.clone(), norm)
        })
        .collect())
}

pub fn normalize(values: &DangerVector, mode: Normalization) -> Result<BTreeMap<DivisionKey, f64>, RiskError> {
    match mode {
        Normalization::Cap { cap } => normalize_cap(values, cap),
        Normalization::Iqr => normalize_iqr(values),
    }
}

/// Where a division is drawn and how many active cases it has.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub key: DivisionKey,
    pub point: GeoPoint,
    pub active: u64,
}

/// One point of the risk map.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFeature {
    pub key: DivisionKey,
    pub point: GeoPoint,
    pub active: u64,
    pub danger_raw: f64,
    pub danger_norm: f64,
    pub color: Rgb,
}

/// Normalizes `danger` and pairs each value with its site, in key order.
///
/// Normalized values are rounded to the 9 significant digits the map files
/// carry, and colours are taken from the rounded value.
pub fn build_features(danger: &DangerVector, sites: &[Site], mode: Normalization) -> Result<Vec<RiskFeature>, RiskError> {
    let norms = normalize(danger, mode)?;
    let by_key: BTreeMap<&DivisionKey, &Site> = sites.iter().map(|s| (&s.key, s)).collect();
    danger
        .values
        .iter()
        .map(|(key, &raw)| {
            let site = by_key.get(key).ok_or_else(|| RiskError::MissingSite(key.clone()))?;
            let danger_norm = round_sig9(norms[key]);
            Ok(RiskFeature {
                key: key.clone(),
                point: site.point,
                active: site.active,
                danger_raw: raw,
                danger_norm,
                color: gradient(danger_norm)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::danger::Measure;
    use proptest::prelude::*;

    fn vector(raw: &[f64]) -> DangerVector {
        DangerVector {
            measure: Measure::Nwos,
            values: raw
                .iter()
                .enumerate()
                .map(|(i, &v)| (DivisionKey::new(&format!("D{i:03}"), "S").unwrap(), v))
                .collect(),
            max_v: 1,
            max_e: 1.0,
        }
    }

    fn norms(m: &BTreeMap<DivisionKey, f64>) -> Vec<f64> {
        m.values().copied().collect()
    }

    #[test]
    fn cap_examples() {
        let n = normalize_cap(&vector(&[0.36, 0.15, 0.0, 0.3]), 0.3).unwrap();
        assert_eq!(norms(&n), vec![1.0, 0.5, 0.0, 1.0]);
        assert_eq!(normalize_cap(&vector(&[1.0]), 0.0), Err(RiskError::InvalidCap(0.0)));
        assert!(normalize_cap(&vector(&[1.0]), -0.3).is_err());
    }

    /// Quantile by explicit position in the sorted list, independent of
    /// `quantile`.
    fn oracle_quantile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let pos = p * (v.len() as f64 - 1.0);
        let below = v[pos as usize];
        let above = v[(pos as usize + 1).min(v.len() - 1)];
        below + (above - below) * pos.fract()
    }

    #[test]
    fn iqr_examples() {
        let raw = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(oracle_quantile(&raw, 0.25), 1.0);
        assert_eq!(oracle_quantile(&raw, 0.75), 3.0);
        let n = normalize_iqr(&vector(&raw)).unwrap();
        assert_eq!(norms(&n), vec![0.0, 0.0, 0.5, 1.0, 1.0]);
        let flat = normalize_iqr(&vector(&[0.2, 0.2, 0.2])).unwrap();
        assert!(flat.values().all(|&v| v == 0.0));
        assert_eq!(normalize_iqr(&vector(&[])), Err(RiskError::Empty));
        assert_eq!(norms(&normalize_iqr(&vector(&[7.0])).unwrap()), vec![0.0]);
    }

    #[test]
    fn gradient_stops() {
        assert_eq!(gradient(0.0).unwrap(), GREEN);
        assert_eq!(gradient(0.5).unwrap(), ORANGE);
        assert_eq!(gradient(1.0).unwrap(), RED);
        // halfway to orange: red 127.5 rounds up, green 210 exact
        assert_eq!(gradient(0.25).unwrap(), Rgb::new(128, 210, 0));
        assert_eq!(gradient(1.0).unwrap().hex(), "#FF0000");
        assert!(gradient(-0.01).is_err());
        assert!(gradient(1.01).is_err());
        assert!(gradient(f64::NAN).is_err());
    }

    #[test]
    fn parse_normalization() {
        assert_eq!("cap".parse::<Normalization>().unwrap(), Normalization::Cap { cap: 0.3 });
        assert_eq!("cap:0.5".parse::<Normalization>().unwrap(), Normalization::Cap { cap: 0.5 });
        assert_eq!("iqr".parse::<Normalization>().unwrap(), Normalization::Iqr);
        assert!("zscore".parse::<Normalization>().is_err());
    }

    proptest! {
        #[test]
        fn quantile_matches_oracle(values in proptest::collection::vec(0.0f64..10.0, 1..50), p in 0.0f64..=1.0) {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert!((quantile(&sorted, p) - oracle_quantile(&values, p)).abs() < 1e-12);
        }

        #[test]
        fn normalization_preserves_order(values in proptest::collection::vec(0.0f64..2.0, 1..60), cap in 0.01f64..1.0) {
            let dv = vector(&values);
            for n in [normalize_cap(&dv, cap).unwrap(), normalize_iqr(&dv).unwrap()] {
                let pairs: Vec<(f64, f64)> = dv.values.iter().map(|(k, &r)| (r, n[k])).collect();
                for &(r1, n1) in &pairs {
                    prop_assert!((0.0..=1.0).contains(&n1));
                    for &(r2, n2) in &pairs {
                        if r1 <= r2 {
                            prop_assert!(n1 <= n2);
                        }
                    }
                }
            }
        }

        #[test]
        fn gradient_moves_toward_red(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (c1, c2) = (gradient(lo).unwrap(), gradient(hi).unwrap());
            prop_assert!(c1.r <= c2.r);
            prop_assert!(c1.g >= c2.g);
            prop_assert_eq!(c1.b, 0);
        }
    }
}
