use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::GeoPoint;
use crate::atomic::write_atomic;
use crate::ingest::{DivisionKey, KeyError};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("coordinate cache {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("coordinate cache {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("coordinate cache {path}: bad key: {source}")]
    Key { path: PathBuf, source: KeyError },
}

/// Persistent `division|parent -> {lat, lon}` map.
///
/// Lookups ignore case; the stored spelling is whatever was inserted first.
#[derive(Debug, Clone, Default)]
pub struct CoordCache {
    path: Option<PathBuf>,
    entries: BTreeMap<DivisionKey, GeoPoint>,
    index: HashMap<(String, String), DivisionKey>,
}

impl CoordCache {
    /// A cache that is never written to disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the cache at `path`. A missing file is an empty cache.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let path = path.into();
        let mut cache = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(cache),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        for (key, point) in parse_entries(&text, &path)? {
            cache.insert(key, point);
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &DivisionKey) -> Option<GeoPoint> {
        self.index.get(&key.match_key()).map(|k| self.entries[k])
    }

    pub fn insert(&mut self, key: DivisionKey, point: GeoPoint) {
        match self.index.get(&key.match_key()) {
            Some(existing) => {
                self.entries.insert(existing.clone(), point);
            }
            None => {
                self.index.insert(key.match_key(), key.clone());
                self.entries.insert(key, point);
            }
        }
    }

    pub fn entries(&self) -> &BTreeMap<DivisionKey, GeoPoint> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let text = render_entries(&self.entries);
        write_atomic(path, |w| w.write_all(text.as_bytes())).map_err(|source| CacheError::Io {
            path: path.clone(),
            source,
        })
    }
}

pub(crate) fn parse_entries(text: &str, path: &Path) -> Result<Vec<(DivisionKey, GeoPoint)>, CacheError> {
    let raw: BTreeMap<String, GeoPoint> = serde_json::from_str(text).map_err(|e| CacheError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    raw.into_iter()
        .map(|(id, p)| {
            DivisionKey::parse_id(&id)
                .map(|k| (k, p))
                .map_err(|source| CacheError::Key {
                    path: path.to_path_buf(),
                    source,
                })
        })
        .collect()
}

fn render_entries(entries: &BTreeMap<DivisionKey, GeoPoint>) -> String {
    let by_id: BTreeMap<String, GeoPoint> = entries.iter().map(|(k, p)| (k.id(), *p)).collect();
    let mut text = serde_json::to_string_pretty(&by_id).expect("points serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(d: &str, p: &str) -> DivisionKey {
        DivisionKey::new(d, p).unwrap()
    }

    #[test]
    fn missing_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let c = CoordCache::open(dir.path().join("nope.json")).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut c = CoordCache::open(&path).unwrap();
        c.insert(key("Mumbai", "Maharashtra"), GeoPoint::new(19.076, 72.8777).unwrap());
        c.save().unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["Mumbai|Maharashtra"]["lat"], 19.076);
        assert_eq!(v["Mumbai|Maharashtra"]["lon"], 72.8777);
    }

    #[test]
    fn malformed_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"NoSeparator": {"lat": 1, "lon": 2}}"#).unwrap();
        assert!(matches!(CoordCache::open(&path), Err(CacheError::Key { .. })));
        fs::write(&path, "[1,2]").unwrap();
        assert!(matches!(CoordCache::open(&path), Err(CacheError::Format { .. })));
    }

    #[test]
    fn unwritable_location_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("sub");
        let mut c = CoordCache::open(blocker.join("c.json")).unwrap();
        fs::write(&blocker, "x").unwrap();
        c.insert(key("A", "B"), GeoPoint::new(0.0, 0.0).unwrap());
        assert!(matches!(c.save(), Err(CacheError::Io { .. })));
    }

    proptest! {
        #[test]
        fn save_load_is_bit_exact(points in proptest::collection::vec((-90.0f64..=90.0, -180.0f64..=180.0), 0..40)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.json");
            let mut c = CoordCache::open(&path).unwrap();
            for (i, (lat, lon)) in points.iter().enumerate() {
                c.insert(key(&format!("D{i}"), "S"), GeoPoint::new(*lat, *lon).unwrap());
            }
            c.save().unwrap();
            let back = CoordCache::open(&path).unwrap();
            prop_assert_eq!(back.entries().len(), c.entries().len());
            for (k, p) in c.entries() {
                let q = back.entries()[k];
                prop_assert_eq!(p.lat().to_bits(), q.lat().to_bits());
                prop_assert_eq!(p.lon().to_bits(), q.lon().to_bits());
            }
        }
    }
}
