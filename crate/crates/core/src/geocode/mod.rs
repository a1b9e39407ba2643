//! Resolving division keys to coordinates through a pluggable provider,
//! fronted by a persistent on-disk cache.

mod cache;
mod provider;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DivisionKey;

pub use cache::{CacheError, CoordCache};
pub use provider::{FixtureProvider, HttpProvider, HttpProviderConfig};

#[derive(Debug, Error, PartialEq)]
#[error("invalid coordinate (lat {lat}, lon {lon})")]
pub struct InvalidPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Latitude/longitude in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, InvalidPoint> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(InvalidPoint { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = InvalidPoint;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Something that turns a free-text location query into a point.
pub trait GeocodeProvider: Sync {
    /// `Ok(None)` means the provider answered but knows no such place.
    fn resolve(&self, query: &str) -> Result<Option<GeoPoint>, ProviderError>;

    /// Upper bound on concurrent `resolve` calls; `None` means unbounded.
    fn max_in_flight(&self) -> Option<usize> {
        Some(1)
    }
}

impl<P: GeocodeProvider + ?Sized> GeocodeProvider for &P {
    fn resolve(&self, query: &str) -> Result<Option<GeoPoint>, ProviderError> {
        (**self).resolve(query)
    }

    fn max_in_flight(&self) -> Option<usize> {
        (**self).max_in_flight()
    }
}

/// The query string sent to a provider: `"<division>, <parent>"`.
pub fn form_query(key: &DivisionKey) -> String {
    format!("{}, {}", key.division(), key.parent())
}

#[derive(Debug, Error)]
pub enum GeocodeError {
    #[error("provider failed for {} key(s) (first: {first_error}); resolved entries were cached, rerun to retry", failed.len())]
    Transport {
        failed: Vec<DivisionKey>,
        first_error: ProviderError,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resolution {
    pub points: BTreeMap<DivisionKey, GeoPoint>,
    /// Keys the provider answered as unknown.
    pub misses: Vec<DivisionKey>,
    pub cache_hits: usize,
    pub provider_calls: usize,
}

/// Resolves every key, consulting `cache` first and the provider only for
/// misses. New resolutions are added to the cache and persisted before
/// returning.
pub fn resolve_all<P: GeocodeProvider + ?Sized>(
    keys: &[DivisionKey],
    provider: &P,
    cache: &mut CoordCache,
) -> Result<Resolution, GeocodeError> {
    let mut res = Resolution::default();
    let mut pending: Vec<DivisionKey> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for key in keys {
        if !seen.insert(key.match_key()) {
            continue;
        }
        match cache.get(key) {
            Some(p) => {
                res.points.insert(key.clone(), p);
                res.cache_hits += 1;
            }
            None => pending.push(key.clone()),
        }
    }
    if pending.is_empty() {
        return Ok(res);
    }

    let answers = query_provider(&pending, provider);
    res.provider_calls = answers.len();

    let mut failed = Vec::new();
    let mut first_error = None;
    let mut added = false;
    for (key, answer) in pending.into_iter().zip(answers) {
        match answer {
            Ok(Some(point)) => {
                cache.insert(key.clone(), point);
                res.points.insert(key, point);
                added = true;
            }
            Ok(None) => {
                log::warn!("geocoder has no result for {:?}", form_query(&key));
                res.misses.push(key);
            }
            Err(e) => {
                first_error.get_or_insert(e);
                failed.push(key);
            }
        }
    }
    if added {
        cache.save()?;
    }
    match first_error {
        Some(first_error) => Err(GeocodeError::Transport { failed, first_error }),
        None => Ok(res),
    }
}

/// Issues one provider call per key with the provider's declared parallelism.
/// Answers come back in key order.
fn query_provider<P: GeocodeProvider + ?Sized>(
    keys: &[DivisionKey],
    provider: &P,
) -> Vec<Result<Option<GeoPoint>, ProviderError>> {
    let workers = provider
        .max_in_flight()
        .unwrap_or_else(|| thread::available_parallelism().map_or(4, |n| n.get()))
        .clamp(1, keys.len());
    if workers == 1 {
        return keys.iter().map(|k| provider.resolve(&form_query(k))).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Option<GeoPoint>, ProviderError>>>> =
        keys.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= keys.len() {
                    break;
                }
                let answer = provider.resolve(&form_query(&keys[i]));
                *slots[i].lock().unwrap() = Some(answer);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}
