//! Loading and cleaning of per-division infection tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geocode::GeoPoint;

/// Division names that carry counts not attributed to any real division.
const UNASSIGNED_NAMES: [&str; 3] = ["unassigned", "unknown", "other"];

/// Separator used in the textual `division|parent` form of a key.
pub const KEY_SEPARATOR: char = '|';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("empty {0} name")]
    Empty(&'static str),
    #[error("division name {0:?} is a placeholder for unassigned counts")]
    Unassigned(String),
    #[error("name {0:?} contains the reserved character '|'")]
    ReservedChar(String),
    #[error("malformed key {0:?}, expected \"division|parent\"")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("row {row}: column {column:?}: {message}")]
    Parse {
        row: u64,
        column: String,
        message: String,
    },
    #[error("row {row}: {source}")]
    Key { row: u64, source: KeyError },
    #[error("row {row}: duplicate division {key} (first seen on row {first_row})")]
    Duplicate {
        row: u64,
        first_row: u64,
        key: DivisionKey,
    },
    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),
}

/// Collapses whitespace runs and trims both ends.
pub fn clean_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_unassigned(name: &str) -> bool {
    UNASSIGNED_NAMES
        .iter()
        .any(|b| name.eq_ignore_ascii_case(b))
}

/// Identity of an administrative division within its parent (e.g. a district
/// within a state). Names are stored cleaned.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DivisionKey {
    division: String,
    parent: String,
}

impl DivisionKey {
    pub fn new(division: &str, parent: &str) -> Result<Self, KeyError> {
        let division = clean_name(division);
        let parent = clean_name(parent);
        if division.is_empty() {
            return Err(KeyError::Empty("division"));
        }
        if parent.is_empty() {
            return Err(KeyError::Empty("parent"));
        }
        if is_unassigned(&division) {
            return Err(KeyError::Unassigned(division));
        }
        for name in [&division, &parent] {
            if name.contains(KEY_SEPARATOR) {
                return Err(KeyError::ReservedChar(name.clone()));
            }
        }
        Ok(Self { division, parent })
    }

    pub fn division(&self) -> &str {
        &self.division
    }

    pub fn parent(&self) -> &str {
        &self.parent
    }

    /// Case-folded form used when matching keys from different sources.
    pub fn match_key(&self) -> (String, String) {
        (self.division.to_lowercase(), self.parent.to_lowercase())
    }

    /// `division|parent`, the form used in cache and graph files.
    pub fn id(&self) -> String {
        format!("{}{KEY_SEPARATOR}{}", self.division, self.parent)
    }

    pub fn parse_id(id: &str) -> Result<Self, KeyError> {
        let (division, parent) = id
            .split_once(KEY_SEPARATOR)
            .ok_or_else(|| KeyError::Malformed(id.to_string()))?;
        if parent.contains(KEY_SEPARATOR) {
            return Err(KeyError::Malformed(id.to_string()));
        }
        Self::new(division, parent)
    }
}

impl fmt::Display for DivisionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.division, self.parent)
    }
}

/// One retained row of the infection table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionRecord {
    pub key: DivisionKey,
    pub active: u64,
    /// Change in active cases since the previous report; may be negative.
    pub delta_active: i64,
}

/// An infection record joined with its coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Division {
    pub key: DivisionKey,
    pub point: GeoPoint,
    pub active: u64,
    pub delta_active: i64,
}

/// Column names of the four fields the pipeline needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub parent: String,
    pub division: String,
    pub active: String,
    pub delta_active: String,
    pub delimiter: char,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            parent: "State".into(),
            division: "District".into(),
            active: "Active".into(),
            delta_active: "Delta_Active".into(),
            delimiter: ',',
        }
    }
}

/// A row removed during cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRow {
    pub row: u64,
    pub division: String,
    pub parent: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfectionTable {
    pub records: Vec<InfectionRecord>,
    pub dropped: Vec<DroppedRow>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    let wanted = name.trim();
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(wanted))
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn cell<'r>(record: &'r csv::StringRecord, idx: usize, column: &str, row: u64) -> Result<&'r str, IngestError> {
    record.get(idx).ok_or_else(|| IngestError::Parse {
        row,
        column: column.to_string(),
        message: "missing cell".into(),
    })
}

fn parse_count<T: std::str::FromStr>(raw: &str, column: &str, row: u64) -> Result<T, IngestError> {
    raw.trim().parse::<T>().map_err(|_| IngestError::Parse {
        row,
        column: column.to_string(),
        message: format!("{:?} is not a valid count", raw),
    })
}

/// Reads a delimited infection table, keeping only the four schema columns.
///
/// Rows whose division is empty or a placeholder ("Unassigned", "Unknown",
/// "Other") are dropped and reported. Row numbers in errors are 1-based file
/// lines, so the header is line 1.
pub fn load_infection_table<R: Read>(source: R, schema: &ColumnSchema) -> Result<InfectionTable, IngestError> {
    let delimiter = u8::try_from(schema.delimiter).map_err(|_| IngestError::Parse {
        row: 0,
        column: String::new(),
        message: format!("delimiter {:?} is not a single byte", schema.delimiter),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let parent_idx = column_index(&headers, &schema.parent)?;
    let division_idx = column_index(&headers, &schema.division)?;
    let active_idx = column_index(&headers, &schema.active)?;
    let delta_idx = column_index(&headers, &schema.delta_active)?;

    let mut table = InfectionTable::default();
    let mut seen: HashMap<(String, String), u64> = HashMap::new();

    for result in reader.records() {
        let record = result?;
        let row = record.position().map_or(0, |p| p.line());
        let division = cell(&record, division_idx, &schema.division, row)?;
        let parent = cell(&record, parent_idx, &schema.parent, row)?;

        let key = match DivisionKey::new(division, parent) {
            Ok(key) => key,
            Err(KeyError::Empty(_)) | Err(KeyError::Unassigned(_)) => {
                table.dropped.push(DroppedRow {
                    row,
                    division: clean_name(division),
                    parent: clean_name(parent),
                });
                continue;
            }
            Err(source) => return Err(IngestError::Key { row, source }),
        };

        let active: u64 = parse_count(cell(&record, active_idx, &schema.active, row)?, &schema.active, row)?;
        let delta_active: i64 =
            parse_count(cell(&record, delta_idx, &schema.delta_active, row)?, &schema.delta_active, row)?;

        if let Some(&first_row) = seen.get(&key.match_key()) {
            return Err(IngestError::Duplicate { row, first_row, key });
        }
        seen.insert(key.match_key(), row);
        table.records.push(InfectionRecord { key, active, delta_active });
    }
    Ok(table)
}

/// Re-applies name cleaning and placeholder filtering to already loaded records.
pub fn clean_records(records: &[InfectionRecord]) -> Vec<InfectionRecord> {
    records
        .iter()
        .filter_map(|r| {
            DivisionKey::new(r.key.division(), r.key.parent())
                .ok()
                .map(|key| InfectionRecord { key, ..r.clone() })
        })
        .collect()
}

/// Result of joining records with coordinates. Every input record lands in
/// exactly one of the two lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Merged {
    pub divisions: Vec<Division>,
    pub unresolved: Vec<DivisionKey>,
}

/// Joins infection records with coordinates, matching names case-insensitively.
pub fn merge_coordinates(records: &[InfectionRecord], coords: &BTreeMap<DivisionKey, GeoPoint>) -> Merged {
    let mut index: HashMap<(String, String), GeoPoint> = HashMap::with_capacity(coords.len());
    for (key, point) in coords {
        index.entry(key.match_key()).or_insert(*point);
    }
    let mut merged = Merged::default();
    for r in records {
        match index.get(&r.key.match_key()) {
            Some(point) => merged.divisions.push(Division {
                key: r.key.clone(),
                point: *point,
                active: r.active,
                delta_active: r.delta_active,
            }),
            None => merged.unresolved.push(r.key.clone()),
        }
    }
    merged
}
