//! Error-bounded spatial aggregation over arbitrary polygons.
//!
//! Points are keyed by quadtree cells and sorted once ([`store`]). A
//! [`GeoBlock`] pre-aggregates them per cell at a fixed level and answers
//! SELECT and COUNT queries over polygon coverings ([`cellgrid`]) whose
//! error is bounded by the largest boundary cell diagonal. Skewed workloads
//! are sped up by an [`AggregateTrie`] cache ([`aggtrie`]); [`baseline`]
//! holds exact oracles.
//!
//! ```
//! use geoblocks::prelude::*;
//!
//! let raw = synth::generate_raw(&SynthConfig::new(1000, Distribution::Uniform, 7));
//! let (table, _) = raw.into_point_table(Domain::NYC, false);
//! let block = GeoBlock::build(&table, &FilterPredicate::all(), 12).unwrap();
//! let everything = Polygon::rectangle(Domain::NYC.rect()).unwrap();
//! assert_eq!(block.count_query(&everything, DEFAULT_MAX_CELLS).unwrap(), 1000);
//! ```

pub mod aggtrie;
pub mod baseline;
pub mod cellgrid;
mod codec;
pub mod error;
pub mod geoblock;
pub mod store;

pub use aggtrie::AggregateTrie;
pub use error::{Error, Result};
pub use geoblock::GeoBlock;

pub mod prelude {
    pub use crate::aggtrie::{adapted_select, AggregateTrie, StatsCollector, StatsTrie};
    pub use crate::baseline::{binsearch_covering, brute_exact, OracleMethod};
    pub use crate::cellgrid::{cover_polygon, CellId, Covering, Domain, Polygon, Rect, DEFAULT_MAX_CELLS};
    pub use crate::error::{Error, Result};
    pub use crate::geoblock::{AggSpec, GeoBlock, QueryResult};
    pub use crate::store::synth::{self, Distribution, SynthConfig};
    pub use crate::store::{extract, ExtractOptions, FilterPredicate, PointTable, Schema};
}
