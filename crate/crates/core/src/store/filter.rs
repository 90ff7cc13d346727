use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ColumnData, PointTable, Schema};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    #[inline]
    pub fn eval(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conjunct {
    pub column: String,
    pub op: CmpOp,
    pub value: f64,
}

/// A conjunction of column comparisons applied at build time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub conjuncts: Vec<Conjunct>,
}

// longest tokens first so `<=` is not read as `<`
const OPS: &[(&str, CmpOp)] = &[
    ("<=", CmpOp::Le),
    (">=", CmpOp::Ge),
    ("!=", CmpOp::Ne),
    ("<>", CmpOp::Ne),
    ("==", CmpOp::Eq),
    ("≤", CmpOp::Le),
    ("≥", CmpOp::Ge),
    ("≠", CmpOp::Ne),
    ("=", CmpOp::Eq),
    ("<", CmpOp::Lt),
    (">", CmpOp::Gt),
];

impl FilterPredicate {
    pub fn all() -> FilterPredicate {
        FilterPredicate::default()
    }

    pub fn and(mut self, column: &str, op: CmpOp, value: f64) -> FilterPredicate {
        self.conjuncts.push(Conjunct { column: column.to_string(), op, value });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.conjuncts.is_empty()
    }

    pub fn bind(&self, schema: &Schema) -> Result<BoundFilter> {
        let conds = self
            .conjuncts
            .iter()
            .map(|c| {
                schema
                    .index_of(&c.column)
                    .map(|i| (i, c.op, c.value))
                    .ok_or_else(|| Error::MissingColumn(c.column.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(BoundFilter { conds })
    }
}

impl FromStr for FilterPredicate {
    type Err = Error;

    /// Parses conjuncts such as `fare>=10, passengers=2` or
    /// `fare>=10 AND passengers=2`. An empty string selects everything.
    fn from_str(s: &str) -> Result<FilterPredicate> {
        let normalized = s.replace(" AND ", ",").replace(" and ", ",");
        let mut conjuncts = Vec::new();
        for part in normalized.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (pos, token, op) = OPS
                .iter()
                .filter_map(|&(tok, op)| part.find(tok).map(|pos| (pos, tok, op)))
                .min_by_key(|&(pos, tok, _)| (pos, std::cmp::Reverse(tok.len())))
                .ok_or_else(|| Error::InvalidFilter(format!("no comparison in `{part}`")))?;
            let column = part[..pos].trim();
            let value = part[pos + token.len()..].trim();
            if column.is_empty() {
                return Err(Error::InvalidFilter(format!("missing column in `{part}`")));
            }
            let value: f64 = value
                .parse()
                .map_err(|_| Error::InvalidFilter(format!("`{value}` is not a number")))?;
            conjuncts.push(Conjunct { column: column.to_string(), op, value });
        }
        Ok(FilterPredicate { conjuncts })
    }
}

impl fmt::Display for FilterPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{}{}{}", c.column, c.op.symbol(), c.value)?;
        }
        Ok(())
    }
}

/// A filter resolved against a schema.
#[derive(Clone, Debug)]
pub struct BoundFilter {
    conds: Vec<(usize, CmpOp, f64)>,
}

impl BoundFilter {
    pub fn is_trivial(&self) -> bool {
        self.conds.is_empty()
    }

    #[inline]
    pub fn matches(&self, columns: &[ColumnData], row: usize) -> bool {
        self.conds.iter().all(|&(c, op, v)| op.eval(columns[c].get(row), v))
    }
}

/// Selected row indices in key order.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub rows: Vec<usize>,
    pub total: usize,
}

impl Selection {
    pub fn selectivity(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.rows.len() as f64 / self.total as f64
        }
    }
}

pub fn apply_filter(table: &PointTable, filter: &FilterPredicate) -> Result<Selection> {
    let bound = filter.bind(&table.schema)?;
    let rows = if bound.is_trivial() {
        (0..table.row_count()).collect()
    } else {
        (0..table.row_count()).filter(|&i| bound.matches(&table.columns, i)).collect()
    };
    Ok(Selection { rows, total: table.row_count() })
}
