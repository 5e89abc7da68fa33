//! Trip records and their CSV/JSON-schema ingestion.
//!
//! Every trip is split into four parts: identifiers (trip and driver), the
//! environment vector `s` the driver cannot control, the behavior vector `a`
//! the driver does control, and the performance vector `q` that is measured.
//! Which CSV column lands in which part is declared by a [`DatasetSchema`].

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio;

pub const DEFAULT_TARGET_METRIC: &str = "total_mpg";

fn default_target_metric() -> String {
    DEFAULT_TARGET_METRIC.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub env_columns: Vec<String>,
    pub behavior_columns: Vec<String>,
    pub performance_columns: Vec<String>,
    pub trip_id_column: String,
    pub driver_id_column: String,
    #[serde(default = "default_target_metric")]
    pub target_metric: String,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        for (label, cols) in [
            ("env_columns", &self.env_columns),
            ("behavior_columns", &self.behavior_columns),
            ("performance_columns", &self.performance_columns),
        ] {
            if cols.is_empty() {
                return Err(Error::InvalidSchema(format!("{label} is empty")));
            }
        }
        let mut seen = HashSet::new();
        let all = self
            .env_columns
            .iter()
            .chain(&self.behavior_columns)
            .chain(&self.performance_columns)
            .chain([&self.trip_id_column, &self.driver_id_column]);
        for name in all {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "column `{name}` is mapped more than once"
                )));
            }
        }
        if self.metric_index().is_none() {
            return Err(Error::InvalidSchema(format!(
                "target metric `{}` is not a performance column",
                self.target_metric
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let schema: Self = fsio::read_json(path)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_json(path, self)
    }

    pub fn env_dim(&self) -> usize {
        self.env_columns.len()
    }

    pub fn behavior_dim(&self) -> usize {
        self.behavior_columns.len()
    }

    pub fn performance_dim(&self) -> usize {
        self.performance_columns.len()
    }

    /// Position of the target metric inside the performance vector.
    pub fn metric_index(&self) -> Option<usize> {
        self.performance_columns
            .iter()
            .position(|c| *c == self.target_metric)
    }

    pub fn behavior_index(&self, name: &str) -> Result<usize> {
        self.behavior_columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownDimension(name.to_string()))
    }

    /// Stable digest of the column layout, recorded in model bundles.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for group in [
            &self.env_columns,
            &self.behavior_columns,
            &self.performance_columns,
        ] {
            for name in group {
                hasher.update(name.as_bytes());
                hasher.update([0u8]);
            }
            hasher.update([1u8]);
        }
        hasher.update(self.trip_id_column.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.driver_id_column.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.target_metric.as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub driver_id: String,
    pub env: Vec<f64>,
    pub behavior: Vec<f64>,
    pub performance: Vec<f64>,
}

impl TripRecord {
    /// The stacked vector `[s; a; q]`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.env.len() + self.behavior.len() + self.performance.len());
        x.extend_from_slice(&self.env);
        x.extend_from_slice(&self.behavior);
        x.extend_from_slice(&self.performance);
        x
    }
}

/// A row dropped during a lenient load.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based data row number (the header is not counted).
    pub row: usize,
    pub column: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip rows with bad values instead of aborting.
    pub lenient: bool,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<TripRecord>,
    schema: DatasetSchema,
    driver_index: BTreeMap<String, Vec<usize>>,
    skipped: Vec<SkippedRow>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, records: Vec<TripRecord>) -> Result<Self> {
        schema.validate()?;
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (ds, da, dq) = (schema.env_dim(), schema.behavior_dim(), schema.performance_dim());
        let mut driver_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            for (expected, v) in [(ds, &r.env), (da, &r.behavior), (dq, &r.performance)] {
                if v.len() != expected {
                    return Err(Error::dims(expected, v.len()));
                }
            }
            if r.driver_id.is_empty() {
                return Err(Error::BadValue {
                    row: i + 1,
                    column: schema.driver_id_column.clone(),
                });
            }
            let columns = schema
                .env_columns
                .iter()
                .chain(&schema.behavior_columns)
                .chain(&schema.performance_columns);
            if let Some((col, _)) = columns
                .zip(r.env.iter().chain(&r.behavior).chain(&r.performance))
                .find(|(_, v)| !v.is_finite())
            {
                return Err(Error::BadValue {
                    row: i + 1,
                    column: col.clone(),
                });
            }
            driver_index.entry(r.driver_id.clone()).or_default().push(i);
        }
        Ok(Dataset {
            records,
            schema,
            driver_index,
            skipped: Vec::new(),
        })
    }

    pub fn records(&self) -> &[TripRecord] {
        &self.records
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Driver ids in ascending order, each with its record indices.
    pub fn driver_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.driver_index
    }

    pub fn driver_count(&self) -> usize {
        self.driver_index.len()
    }

    pub fn driver_indices(&self, driver_id: &str) -> Result<&[usize]> {
        self.driver_index
            .get(driver_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownDriver(driver_id.to_string()))
    }

    /// Rows dropped by a lenient load.
    pub fn skipped(&self) -> &[SkippedRow] {
        &self.skipped
    }

    /// Writes the dataset as CSV with columns in schema order. Values are
    /// printed in shortest round-trip form so a reload is bit-exact.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let s = &self.schema;
        let header = [&s.trip_id_column, &s.driver_id_column]
            .into_iter()
            .chain(&s.env_columns)
            .chain(&s.behavior_columns)
            .chain(&s.performance_columns);
        w.write_record(header)?;
        let mut row: Vec<String> = Vec::new();
        for r in &self.records {
            row.clear();
            row.push(r.trip_id.clone());
            row.push(r.driver_id.clone());
            row.extend(
                r.env
                    .iter()
                    .chain(&r.behavior)
                    .chain(&r.performance)
                    .map(|v| format!("{v:?}")),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn column_positions(header: &csv::StringRecord, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))
        })
        .collect()
}

fn parse_finite(field: Option<&str>) -> Option<f64> {
    field
        .and_then(|f| f.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

/// Loads a CSV file with a header row, mapping columns through `schema`.
pub fn load_dataset(path: &Path, schema: &DatasetSchema, opts: LoadOptions) -> Result<Dataset> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers()?.clone();
    let trip_col = column_positions(&header, std::slice::from_ref(&schema.trip_id_column))?[0];
    let driver_col = column_positions(&header, std::slice::from_ref(&schema.driver_id_column))?[0];
    let groups = [
        (column_positions(&header, &schema.env_columns)?, &schema.env_columns),
        (column_positions(&header, &schema.behavior_columns)?, &schema.behavior_columns),
        (column_positions(&header, &schema.performance_columns)?, &schema.performance_columns),
    ];

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let parsed = (|| -> std::result::Result<TripRecord, String> {
            let driver_id = row.get(driver_col).map(str::trim).unwrap_or_default();
            if driver_id.is_empty() {
                return Err(schema.driver_id_column.clone());
            }
            let mut vectors: [Vec<f64>; 3] = Default::default();
            for ((positions, names), out) in groups.iter().zip(vectors.iter_mut()) {
                for (&pos, name) in positions.iter().zip(names.iter()) {
                    out.push(parse_finite(row.get(pos)).ok_or_else(|| name.clone())?);
                }
            }
            let [env, behavior, performance] = vectors;
            Ok(TripRecord {
                trip_id: row.get(trip_col).map(str::trim).unwrap_or_default().to_string(),
                driver_id: driver_id.to_string(),
                env,
                behavior,
                performance,
            })
        })();
        match parsed {
            Ok(r) => records.push(r),
            Err(column) if opts.lenient => {
                log::warn!("{}: skipping row {row_no}, bad value in `{column}`", path.display());
                skipped.push(SkippedRow { row: row_no, column });
            }
            Err(column) => return Err(Error::BadValue { row: row_no, column }),
        }
    }
    if !skipped.is_empty() {
        log::warn!("{}: skipped {} row(s)", path.display(), skipped.len());
    }
    let mut ds = Dataset::new(schema.clone(), records)?;
    ds.skipped = skipped;
    Ok(ds)
}
