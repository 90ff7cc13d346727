use std::io;

use thiserror::Error;

use crate::cellgrid::CellId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell path has {0} digits, at most 31 are allowed")]
    PathTooDeep(usize),
    #[error("invalid cell path digit {0}")]
    InvalidDigit(u8),
    #[error("invalid cell id {0:#018x}")]
    InvalidCellId(u64),
    #[error("level {level} out of range ({reason})")]
    LevelOutOfRange { level: u8, reason: &'static str },
    #[error("point ({lon}, {lat}) lies outside the domain")]
    OutOfDomain { lon: f64, lat: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("no level up to 31 satisfies an error bound of {0} m")]
    Unsatisfiable(f64),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid aggregate spec: {0}")]
    InvalidAggSpec(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u16, expected: u16 },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("{} appended rows fall into cells missing from the block", .0.len())]
    RequiresRebuild(Vec<CellId>),
    #[error("appended row {row} does not satisfy the block filter")]
    FilterViolation { row: usize },
    #[error("appended rows do not match the block: {0}")]
    IncompatibleRows(String),
    #[error("cache budget of {budget} bytes is below the minimum of {minimum} bytes")]
    BudgetTooSmall { budget: usize, minimum: usize },
    #[error("corrupt aggregate trie region: {0}")]
    CorruptRegion(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid geojson: {0}")]
    GeoJson(String),
}
