use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::time::{Duration, Instant};

use log::warn;
use serde::Serialize;

use super::{ColumnData, ColumnKind, PointTable, RawTable, Schema};
use crate::cellgrid::Domain;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ExtractOptions {
    pub schema: Schema,
    pub domain: Domain,
    pub lon_col: String,
    pub lat_col: String,
    /// Persist raw lon/lat next to the keys for exact point-in-polygon checks.
    pub keep_coords: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExtractReport {
    pub input_rows: usize,
    pub kept_rows: usize,
    /// Rows with a missing or unparseable field.
    pub dropped_unparseable: usize,
    /// Rows with non-finite coordinates or coordinates outside the domain.
    pub dropped_out_of_domain: usize,
    #[serde(with = "secs")]
    pub clean_time: Duration,
    #[serde(with = "secs")]
    pub sort_time: Duration,
}

impl ExtractReport {
    pub fn dropped(&self) -> usize {
        self.dropped_unparseable + self.dropped_out_of_domain
    }
}

pub(crate) mod secs {
    use std::time::Duration;

    use serde::Serializer;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

/// Reads RFC-4180 CSV with a header row, drops dirty rows and returns the
/// key-sorted table.
pub fn extract<R: Read>(source: R, opts: &ExtractOptions) -> Result<(PointTable, ExtractReport)> {
    let start = Instant::now();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let lon_idx = find(&opts.lon_col)?;
    let lat_idx = find(&opts.lat_col)?;
    let value_idx: Vec<usize> = opts
        .schema
        .columns()
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<_>>()?;

    let mut raw = RawTable::new(opts.schema.clone());
    let mut report = ExtractReport::default();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        report.input_rows += 1;
        if !push_record(&mut raw, &record, lon_idx, lat_idx, &value_idx) {
            report.dropped_unparseable += 1;
        }
    }
    let parse_time = start.elapsed();

    let (table, timing) = raw.into_point_table(opts.domain, opts.keep_coords);
    report.dropped_out_of_domain = timing.dropped;
    report.kept_rows = table.row_count();
    report.clean_time = parse_time + timing.clean;
    report.sort_time = timing.sort;
    if table.is_empty() {
        warn!("extract produced no rows ({} input rows dropped)", report.input_rows);
    }
    Ok((table, report))
}

pub fn extract_path(path: impl AsRef<Path>, opts: &ExtractOptions) -> Result<(PointTable, ExtractReport)> {
    extract(File::open(path)?, opts)
}

fn push_record(raw: &mut RawTable, rec: &csv::StringRecord, lon: usize, lat: usize, values: &[usize]) -> bool {
    let num = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok());
    let (Some(x), Some(y)) = (num(lon), num(lat)) else {
        return false;
    };
    // parse every value before mutating so a bad row leaves no partial state
    let mut parsed = Vec::with_capacity(values.len());
    for (&i, def) in values.iter().zip(raw.schema.columns()) {
        let field = rec.get(i).map(str::trim).unwrap_or("");
        let v = match def.kind {
            ColumnKind::Numeric => field.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::F),
            ColumnKind::Temporal => field.parse::<i64>().ok().map(Value::I),
        };
        match v {
            Some(v) => parsed.push(v),
            None => return false,
        }
    }
    raw.lon.push(x);
    raw.lat.push(y);
    for (col, v) in raw.columns.iter_mut().zip(parsed) {
        match (col, v) {
            (ColumnData::Numeric(c), Value::F(v)) => c.push(v),
            (ColumnData::Temporal(c), Value::I(v)) => c.push(v),
            _ => unreachable!("value kind follows the schema"),
        }
    }
    true
}

enum Value {
    F(f64),
    I(i64),
}
