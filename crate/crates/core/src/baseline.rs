//! On-the-fly aggregation over the sorted base data: an exact
//! point-in-polygon scan and a binary search over covering key ranges.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cellgrid::{cover_polygon, Polygon};
use crate::error::{Error, Result};
use crate::geoblock::{Accumulator, AggSpec, ColumnAggregate, QueryResult};
use crate::store::{FilterPredicate, PointTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    BruteExact,
    BinsearchCovering,
}

impl FromStr for OracleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<OracleMethod> {
        match s {
            "brute" | "brute_exact" => Ok(OracleMethod::BruteExact),
            "binsearch" | "binsearch_covering" => Ok(OracleMethod::BinsearchCovering),
            _ => Err(Error::InvalidArgument(format!("unknown oracle method `{s}`"))),
        }
    }
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMethod::BruteExact => "brute_exact",
            OracleMethod::BinsearchCovering => "binsearch_covering",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    #[serde(flatten)]
    pub result: QueryResult,
}

fn push_row(acc: &mut Accumulator, table: &PointTable, row: usize, bound: &[usize]) {
    acc.count += 1;
    for (a, &c) in acc.columns.iter_mut().zip(bound) {
        let v = table.columns()[c].get(row);
        a.merge(&ColumnAggregate { min: v, max: v, sum: v });
    }
}

/// Aggregates every filtered row whose position lies in the polygon.
pub fn brute_exact(table: &PointTable, filter: &FilterPredicate, poly: &Polygon, spec: &AggSpec) -> Result<OracleResult> {
    let f = filter.bind(table.schema())?;
    let bound = spec.bind(table.schema())?;
    let mut acc = Accumulator::new(bound.columns.len());
    for row in 0..table.row_count() {
        if !f.matches(table.columns(), row) {
            continue;
        }
        let (lon, lat) = table.position(row);
        if poly.contains(lon, lat) {
            push_row(&mut acc, table, row, &bound.columns);
        }
    }
    Ok(OracleResult { method: OracleMethod::BruteExact, result: acc.into_result(table.schema(), &bound) })
}

/// Aggregates the filtered rows inside each covering cell, located by
/// binary search over the sorted keys.
pub fn binsearch_covering(
    table: &PointTable,
    filter: &FilterPredicate,
    poly: &Polygon,
    spec: &AggSpec,
    block_level: u8,
    max_cells: usize,
) -> Result<OracleResult> {
    let f = filter.bind(table.schema())?;
    let bound = spec.bind(table.schema())?;
    let covering = cover_polygon(poly, block_level, max_cells, table.domain())?;
    let mut acc = Accumulator::new(bound.columns.len());
    for cell in &covering.cells {
        for row in table.key_range(cell.range_min(), cell.range_max()) {
            if f.matches(table.columns(), row) {
                push_row(&mut acc, table, row, &bound.columns);
            }
        }
    }
    let mut result = acc.into_result(table.schema(), &bound);
    result.cells_visited = covering.len();
    result.epsilon_m = covering.epsilon_m;
    Ok(OracleResult { method: OracleMethod::BinsearchCovering, result })
}
