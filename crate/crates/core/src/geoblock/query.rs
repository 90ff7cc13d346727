use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::store::{ColumnKind, Schema};

/// Running min/max/sum of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnAggregate {
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl ColumnAggregate {
    pub const EMPTY: ColumnAggregate = ColumnAggregate { min: f64::INFINITY, max: f64::NEG_INFINITY, sum: 0.0 };

    #[inline]
    pub fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.sum += v;
    }

    #[inline]
    pub fn merge(&mut self, o: &ColumnAggregate) {
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
        self.sum += o.sum;
    }
}

impl Default for ColumnAggregate {
    fn default() -> Self {
        ColumnAggregate::EMPTY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

impl AggFunc {
    fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Avg => "avg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggRequest {
    pub func: AggFunc,
    /// `None` only for `count`.
    pub column: Option<String>,
}

impl AggRequest {
    pub fn label(&self) -> String {
        match &self.column {
            Some(c) => format!("{}:{c}", self.func.name()),
            None => self.func.name().to_string(),
        }
    }
}

/// Requested aggregates, e.g. `count,sum:fare,avg:tip`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggSpec {
    pub requested: Vec<AggRequest>,
}

impl AggSpec {
    pub fn count_only() -> AggSpec {
        AggSpec { requested: vec![AggRequest { func: AggFunc::Count, column: None }] }
    }

    /// count plus sum/min/max/avg of every column.
    pub fn all(schema: &Schema) -> AggSpec {
        let mut requested = vec![AggRequest { func: AggFunc::Count, column: None }];
        for c in schema.columns() {
            for func in [AggFunc::Sum, AggFunc::Min, AggFunc::Max, AggFunc::Avg] {
                requested.push(AggRequest { func, column: Some(c.name.clone()) });
            }
        }
        AggSpec { requested }
    }

    pub fn bind(&self, schema: &Schema) -> Result<BoundAggSpec> {
        let mut columns: Vec<usize> = Vec::new();
        for r in &self.requested {
            if let Some(name) = &r.column {
                let idx = schema.index_of(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
                if !columns.contains(&idx) {
                    columns.push(idx);
                }
            }
        }
        columns.sort_unstable();
        Ok(BoundAggSpec { columns })
    }
}

impl FromStr for AggSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<AggSpec> {
        let mut requested = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (func, column) = match part.split_once(':') {
                Some((f, c)) => (f.trim(), Some(c.trim().to_string())),
                None => (part, None),
            };
            let func = match func.to_ascii_lowercase().as_str() {
                "count" => AggFunc::Count,
                "sum" => AggFunc::Sum,
                "min" => AggFunc::Min,
                "max" => AggFunc::Max,
                "avg" | "mean" => AggFunc::Avg,
                other => return Err(Error::InvalidAggSpec(format!("unknown function `{other}`"))),
            };
            let column = if func == AggFunc::Count { None } else { column };
            if func != AggFunc::Count && column.as_deref().is_none_or(str::is_empty) {
                return Err(Error::InvalidAggSpec(format!("`{part}` needs a column")));
            }
            requested.push(AggRequest { func, column });
        }
        if requested.is_empty() {
            return Err(Error::InvalidAggSpec("no aggregates requested".into()));
        }
        Ok(AggSpec { requested })
    }
}

impl fmt::Display for AggSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.requested.iter().map(AggRequest::label).collect();
        f.write_str(&labels.join(","))
    }
}

/// Sorted, deduplicated schema indices of the columns a query folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundAggSpec {
    pub columns: Vec<usize>,
}

impl BoundAggSpec {
    pub fn all_columns(schema: &Schema) -> BoundAggSpec {
        BoundAggSpec { columns: (0..schema.len()).collect() }
    }
}

/// Partial aggregate over the bound columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    pub count: u64,
    pub columns: Vec<ColumnAggregate>,
}

impl Accumulator {
    pub fn new(width: usize) -> Accumulator {
        Accumulator { count: 0, columns: vec![ColumnAggregate::EMPTY; width] }
    }

    /// Folds a full-width per-column record, picking the bound columns.
    #[inline]
    pub fn fold(&mut self, count: u64, full: &[ColumnAggregate], bound: &[usize]) {
        self.count += count;
        for (acc, &c) in self.columns.iter_mut().zip(bound) {
            acc.merge(&full[c]);
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        for (a, b) in self.columns.iter_mut().zip(&other.columns) {
            a.merge(b);
        }
    }

    pub fn into_result(self, schema: &Schema, bound: &BoundAggSpec) -> QueryResult {
        let columns = bound
            .columns
            .iter()
            .zip(self.columns)
            .map(|(&c, agg)| {
                let def = &schema.columns()[c];
                let has = self.count > 0;
                ColumnResult {
                    column: def.name.clone(),
                    kind: def.kind,
                    min: has.then_some(agg.min),
                    max: has.then_some(agg.max),
                    sum: agg.sum,
                    avg: has.then(|| agg.sum / self.count as f64),
                }
            })
            .collect();
        QueryResult { count: self.count, columns, ..QueryResult::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnResult {
    pub column: String,
    pub kind: ColumnKind,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub sum: f64,
    /// Absent when the result is empty.
    pub avg: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub count: u64,
    pub columns: Vec<ColumnResult>,
    /// Covering cells that survived the header check.
    pub cells_visited: usize,
    /// Covering cells answered from the cache without scanning.
    pub cache_hits: usize,
    /// Cell aggregates read from the aggregate array.
    pub aggregates_scanned: usize,
    pub epsilon_m: f64,
}

impl QueryResult {
    pub fn column(&self, name: &str) -> Option<&ColumnResult> {
        self.columns.iter().find(|c| c.column == name)
    }

    pub fn value(&self, req: &AggRequest) -> Option<f64> {
        if req.func == AggFunc::Count {
            return Some(self.count as f64);
        }
        let c = self.column(req.column.as_deref()?)?;
        match req.func {
            AggFunc::Count => unreachable!(),
            AggFunc::Sum => Some(c.sum),
            AggFunc::Min => c.min,
            AggFunc::Max => c.max,
            AggFunc::Avg => c.avg,
        }
    }

    /// One JSON field per requested aggregate, keyed by its label.
    pub fn to_json(&self, spec: &AggSpec) -> Map<String, Value> {
        let mut out = Map::new();
        for req in &spec.requested {
            let value = match (req.func, self.value(req)) {
                (AggFunc::Count, _) => Value::from(self.count),
                (_, None) => Value::Null,
                (AggFunc::Min | AggFunc::Max, Some(v))
                    if req.column.as_deref().and_then(|c| self.column(c)).map(|c| c.kind)
                        == Some(ColumnKind::Temporal) =>
                {
                    Value::from(v as i64)
                }
                (_, Some(v)) => Value::from(v),
            };
            out.insert(req.label(), value);
        }
        out
    }
}
