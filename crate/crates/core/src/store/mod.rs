//! The extract phase: cleaned, keyed and key-sorted columnar base data.

mod extract;
mod filter;
pub mod synth;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cellgrid::{CellId, Domain, MAX_LEVEL};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub(crate) use extract::secs;
pub use extract::{extract, extract_path, ExtractOptions, ExtractReport};
pub use filter::{apply_filter, BoundFilter, CmpOp, Conjunct, FilterPredicate, Selection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// 64-bit float.
    Numeric,
    /// Seconds since the Unix epoch.
    Temporal,
}

impl ColumnKind {
    fn tag(self) -> u8 {
        match self {
            ColumnKind::Numeric => 0,
            ColumnKind::Temporal => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<ColumnKind> {
        match tag {
            0 => Ok(ColumnKind::Numeric),
            1 => Ok(ColumnKind::Temporal),
            t => Err(Error::Malformed(format!("unknown column kind {t}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<ColumnDef>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnDef>) -> Result<Schema> {
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(Error::InvalidSchema("column names must be nonempty".into()));
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u32(self.columns.len() as u32);
        for c in &self.columns {
            w.str(&c.name);
            w.u8(c.kind.tag());
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Schema> {
        let n = r.u32()? as usize;
        let mut columns = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name = r.str()?;
            let kind = ColumnKind::from_tag(r.u8()?)?;
            columns.push(ColumnDef { name, kind });
        }
        Schema::new(columns)
    }
}

impl FromStr for Schema {
    type Err = Error;

    /// Parses `name:kind,...` with kind `numeric`/`f64` or `temporal`/`time`.
    fn from_str(s: &str) -> Result<Schema> {
        let mut columns = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, kind) = part.split_once(':').unwrap_or((part, "numeric"));
            let kind = match kind.trim() {
                "numeric" | "f64" | "num" => ColumnKind::Numeric,
                "temporal" | "time" | "i64" => ColumnKind::Temporal,
                other => return Err(Error::InvalidSchema(format!("unknown column kind `{other}`"))),
            };
            columns.push(ColumnDef { name: name.trim().to_string(), kind });
        }
        Schema::new(columns)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .columns
            .iter()
            .map(|c| {
                let kind = match c.kind {
                    ColumnKind::Numeric => "numeric",
                    ColumnKind::Temporal => "temporal",
                };
                format!("{}:{kind}", c.name)
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Temporal(Vec<i64>),
}

impl ColumnData {
    pub fn empty(kind: ColumnKind) -> ColumnData {
        match kind {
            ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
            ColumnKind::Temporal => ColumnData::Temporal(Vec::new()),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Temporal(_) => ColumnKind::Temporal,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Temporal(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value as f64; temporal values are exact below 2^53.
    #[inline]
    pub fn get(&self, row: usize) -> f64 {
        match self {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Temporal(v) => v[row] as f64,
        }
    }

    pub fn gather(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Temporal(v) => ColumnData::Temporal(rows.iter().map(|&i| v[i]).collect()),
        }
    }

    fn words(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        match self {
            ColumnData::Numeric(v) => Box::new(v.iter().map(|x| x.to_bits())),
            ColumnData::Temporal(v) => Box::new(v.iter().map(|&x| x as u64)),
        }
    }

    fn from_words(kind: ColumnKind, words: Vec<u64>) -> ColumnData {
        match kind {
            ColumnKind::Numeric => ColumnData::Numeric(words.into_iter().map(f64::from_bits).collect()),
            ColumnKind::Temporal => ColumnData::Temporal(words.into_iter().map(|w| w as i64).collect()),
        }
    }
}

/// Unsorted, unkeyed points as parsed from a source.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    pub lon: Vec<f64>,
    pub lat: Vec<f64>,
    pub columns: Vec<ColumnData>,
}

impl RawTable {
    pub fn new(schema: Schema) -> RawTable {
        let columns = schema.columns().iter().map(|c| ColumnData::empty(c.kind)).collect();
        RawTable { schema, lon: Vec::new(), lat: Vec::new(), columns }
    }

    pub fn len(&self) -> usize {
        self.lon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lon.is_empty()
    }

    /// Copies the given rows in the given order.
    pub fn gather(&self, rows: &[usize]) -> RawTable {
        RawTable {
            schema: self.schema.clone(),
            lon: rows.iter().map(|&i| self.lon[i]).collect(),
            lat: rows.iter().map(|&i| self.lat[i]).collect(),
            columns: self.columns.iter().map(|c| c.gather(rows)).collect(),
        }
    }

    /// Cleans, keys and stably sorts the rows. Rows with non-finite
    /// coordinates or coordinates outside `domain` are dropped.
    pub fn into_point_table(&self, domain: Domain, keep_coords: bool) -> (PointTable, CleanSortTiming) {
        let start = Instant::now();
        let mut kept = Vec::with_capacity(self.len());
        let mut keys = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            if let Ok(key) = domain.cell_of_point(self.lon[i], self.lat[i], MAX_LEVEL) {
                kept.push(i);
                keys.push(key);
            }
        }
        let clean = start.elapsed();

        let start = Instant::now();
        let mut order: Vec<usize> = (0..kept.len()).collect();
        order.sort_by_key(|&i| keys[i]);
        let rows: Vec<usize> = order.iter().map(|&i| kept[i]).collect();
        let sorted_keys = order.iter().map(|&i| keys[i]).collect();
        let columns = self.columns.iter().map(|c| c.gather(&rows)).collect();
        let coords = keep_coords.then(|| Coords {
            lon: rows.iter().map(|&i| self.lon[i]).collect(),
            lat: rows.iter().map(|&i| self.lat[i]).collect(),
        });
        let sort = start.elapsed();

        let table = PointTable {
            domain,
            key_level: MAX_LEVEL,
            schema: self.schema.clone(),
            keys: sorted_keys,
            columns,
            coords,
        };
        (table, CleanSortTiming { clean, sort, dropped: self.len() - kept.len() })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CleanSortTiming {
    pub clean: Duration,
    pub sort: Duration,
    pub dropped: usize,
}

/// Raw point positions kept alongside the keys.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords {
    pub lon: Vec<f64>,
    pub lat: Vec<f64>,
}

/// Key-sorted columnar base data. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTable {
    pub(crate) domain: Domain,
    pub(crate) key_level: u8,
    pub(crate) schema: Schema,
    pub(crate) keys: Vec<CellId>,
    pub(crate) columns: Vec<ColumnData>,
    pub(crate) coords: Option<Coords>,
}

const TABLE_MAGIC: &[u8; 4] = b"GBPT";
const TABLE_VERSION: u16 = 1;

impl PointTable {
    pub fn empty(domain: Domain, schema: Schema) -> PointTable {
        RawTable::new(schema).into_point_table(domain, false).0
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn key_level(&self) -> u8 {
        self.key_level
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn keys(&self) -> &[CellId] {
        &self.keys
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn coords(&self) -> Option<&Coords> {
        self.coords.as_ref()
    }

    pub fn row_count(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Point position of a row: the raw coordinates when kept, otherwise the
    /// center of its leaf cell.
    pub fn position(&self, row: usize) -> (f64, f64) {
        match &self.coords {
            Some(c) => (c.lon[row], c.lat[row]),
            None => self.domain.cell_center(self.keys[row]),
        }
    }

    /// Row range whose keys lie in `[lo, hi]` (raw key values).
    pub fn key_range(&self, lo: u64, hi: u64) -> std::ops::Range<usize> {
        let start = self.keys.partition_point(|k| k.raw() < lo);
        let end = start + self.keys[start..].partition_point(|k| k.raw() <= hi);
        start..end
    }

    /// Unkeyed rows at their positions, in key order.
    pub fn to_raw(&self) -> RawTable {
        let (lon, lat) = (0..self.row_count()).map(|r| self.position(r)).unzip();
        RawTable { schema: self.schema.clone(), lon, lat, columns: self.columns.clone() }
    }

    /// Copies the selected rows, preserving their order.
    pub fn select_rows(&self, rows: &[usize]) -> PointTable {
        PointTable {
            domain: self.domain,
            key_level: self.key_level,
            schema: self.schema.clone(),
            keys: rows.iter().map(|&i| self.keys[i]).collect(),
            columns: self.columns.iter().map(|c| c.gather(rows)).collect(),
            coords: self.coords.as_ref().map(|c| Coords {
                lon: rows.iter().map(|&i| c.lon[i]).collect(),
                lat: rows.iter().map(|&i| c.lat[i]).collect(),
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.row_count();
        let mut w = Writer::new(TABLE_MAGIC, TABLE_VERSION);
        for v in [self.domain.min_lon, self.domain.min_lat, self.domain.max_lon, self.domain.max_lat] {
            w.f64(v);
        }
        w.u8(self.key_level);
        w.u8(self.coords.is_some() as u8);
        self.schema.encode(&mut w);
        w.u64(n as u64);
        w.reserve(n * 8 * (1 + self.columns.len() + 2 * self.coords.is_some() as usize) + 4);
        for k in &self.keys {
            w.u64(k.raw());
        }
        for c in &self.columns {
            for word in c.words() {
                w.u64(word);
            }
        }
        if let Some(c) = &self.coords {
            for v in c.lon.iter().chain(&c.lat) {
                w.f64(*v);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PointTable> {
        let mut r = Reader::open(bytes, TABLE_MAGIC, TABLE_VERSION)?;
        let domain = Domain::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?)?;
        let key_level = r.u8()?;
        if key_level > MAX_LEVEL {
            return Err(Error::Malformed(format!("key level {key_level}")));
        }
        let has_coords = r.u8()? != 0;
        let schema = Schema::decode(&mut r)?;
        let n = r.u64()? as usize;
        let keys: Vec<CellId> = r.u64_array(n)?.into_iter().map(CellId::from_raw_unchecked).collect();
        if keys.iter().any(|k| !k.is_valid()) || keys.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Malformed("keys are invalid or unsorted".into()));
        }
        let mut columns = Vec::with_capacity(schema.len());
        for def in schema.columns() {
            columns.push(ColumnData::from_words(def.kind, r.u64_array(n)?));
        }
        let coords = if has_coords {
            let lon = r.u64_array(n)?.into_iter().map(f64::from_bits).collect();
            let lat = r.u64_array(n)?.into_iter().map(f64::from_bits).collect();
            Some(Coords { lon, lat })
        } else {
            None
        };
        r.finish()?;
        Ok(PointTable { domain, key_level, schema, keys, columns, coords })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PointTable> {
        PointTable::from_bytes(&fs::read(path)?)
    }
}
