//! GeoBlocks: per-cell aggregates at a fixed block level over key-sorted
//! base data, with SELECT and range-sum COUNT queries over polygon coverings.

mod format;
mod query;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::aggtrie::AggregateTrie;
use crate::cellgrid::{cover_polygon, CellId, Covering, Domain, Polygon};
use crate::error::{Error, Result};
use crate::store::{apply_filter, FilterPredicate, PointTable, Schema};

pub use query::{
    Accumulator, AggFunc, AggRequest, AggSpec, BoundAggSpec, ColumnAggregate, ColumnResult, QueryResult,
};

/// Aggregate of one non-empty grid cell. Per-column aggregates live in a
/// separate array, see [`GeoBlock::column_aggregates`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellAggregate {
    pub cell: CellId,
    /// Row index of the first contained tuple in the filtered base data.
    pub offset: u64,
    pub count: u64,
    pub min_key: CellId,
    pub max_key: CellId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalHeader {
    pub block_level: u8,
    pub key_level: u8,
    pub schema: Schema,
    pub domain: Domain,
    pub filter: FilterPredicate,
    pub min_cell: Option<CellId>,
    pub max_cell: Option<CellId>,
    pub total_count: u64,
    pub totals: Vec<ColumnAggregate>,
    pub aggregate_count: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BuildReport {
    pub input_rows: usize,
    pub selected_rows: usize,
    pub selectivity: f64,
    #[serde(with = "crate::store::secs")]
    pub filter_time: Duration,
    #[serde(with = "crate::store::secs")]
    pub aggregate_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoBlock {
    header: GlobalHeader,
    cells: Vec<CellAggregate>,
    /// `cells.len() * schema.len()` entries, one run per cell.
    columns: Vec<ColumnAggregate>,
    cache: Option<AggregateTrie>,
    /// Set by appends; offsets no longer form a prefix sum.
    offsets_stale: bool,
}

/// Bytes of one cell aggregate in the aggregate array, used to size cache
/// budgets: cell, offset, count, min/max key, and min/max/sum per column.
pub fn aggregate_record_bytes(ncols: usize) -> usize {
    5 * 8 + 24 * ncols
}

impl GeoBlock {
    pub fn build(table: &PointTable, filter: &FilterPredicate, block_level: u8) -> Result<GeoBlock> {
        Ok(GeoBlock::build_with_report(table, filter, block_level)?.0)
    }

    /// Filters the key-sorted rows, then aggregates them in one pass,
    /// starting a new cell aggregate whenever the truncated key changes.
    pub fn build_with_report(
        table: &PointTable,
        filter: &FilterPredicate,
        block_level: u8,
    ) -> Result<(GeoBlock, BuildReport)> {
        if block_level > table.key_level() {
            return Err(Error::LevelOutOfRange { level: block_level, reason: "block level exceeds the key level" });
        }
        let start = Instant::now();
        let selection = apply_filter(table, filter)?;
        let filter_time = start.elapsed();

        let start = Instant::now();
        let ncols = table.schema().len();
        let keys = table.keys();
        let data = table.columns();
        let mut cells: Vec<CellAggregate> = Vec::new();
        let mut columns: Vec<ColumnAggregate> = Vec::new();
        for (pos, &row) in selection.rows.iter().enumerate() {
            let key = keys[row];
            let cell = key.parent_unchecked(block_level);
            match cells.last_mut() {
                Some(last) if last.cell == cell => {
                    last.count += 1;
                    last.max_key = key;
                }
                _ => {
                    cells.push(CellAggregate { cell, offset: pos as u64, count: 1, min_key: key, max_key: key });
                    columns.extend(std::iter::repeat_n(ColumnAggregate::EMPTY, ncols));
                }
            }
            let base = columns.len() - ncols;
            for (c, col) in data.iter().enumerate() {
                columns[base + c].push(col.get(row));
            }
        }
        let header = GlobalHeader {
            block_level,
            key_level: table.key_level(),
            schema: table.schema().clone(),
            domain: *table.domain(),
            filter: filter.clone(),
            min_cell: None,
            max_cell: None,
            total_count: 0,
            totals: Vec::new(),
            aggregate_count: 0,
        };
        let block = GeoBlock::assemble(header, cells, columns, false);
        let report = BuildReport {
            input_rows: table.row_count(),
            selected_rows: selection.rows.len(),
            selectivity: selection.selectivity(),
            filter_time,
            aggregate_time: start.elapsed(),
        };
        Ok((block, report))
    }

    /// Recomputes the header totals from the aggregates.
    fn assemble(
        mut header: GlobalHeader,
        cells: Vec<CellAggregate>,
        columns: Vec<ColumnAggregate>,
        offsets_stale: bool,
    ) -> GeoBlock {
        let ncols = header.schema.len();
        let mut totals = vec![ColumnAggregate::EMPTY; ncols];
        if ncols > 0 {
            for chunk in columns.chunks_exact(ncols) {
                for (t, c) in totals.iter_mut().zip(chunk) {
                    t.merge(c);
                }
            }
        }
        header.min_cell = cells.first().map(|c| c.cell);
        header.max_cell = cells.last().map(|c| c.cell);
        header.total_count = cells.iter().map(|c| c.count).sum();
        header.totals = totals;
        header.aggregate_count = cells.len();
        GeoBlock { header, cells, columns, cache: None, offsets_stale }
    }

    pub fn header(&self) -> &GlobalHeader {
        &self.header
    }

    pub fn block_level(&self) -> u8 {
        self.header.block_level
    }

    pub fn schema(&self) -> &Schema {
        &self.header.schema
    }

    pub fn domain(&self) -> &Domain {
        &self.header.domain
    }

    pub fn aggregates(&self) -> &[CellAggregate] {
        &self.cells
    }

    pub fn column_aggregates(&self, index: usize) -> &[ColumnAggregate] {
        let n = self.header.schema.len();
        &self.columns[index * n..(index + 1) * n]
    }

    pub fn offsets_stale(&self) -> bool {
        self.offsets_stale
    }

    /// Size of the cell-aggregate array in bytes.
    pub fn aggregate_bytes(&self) -> usize {
        self.cells.len() * aggregate_record_bytes(self.header.schema.len())
    }

    pub fn cache(&self) -> Option<&AggregateTrie> {
        self.cache.as_ref()
    }

    pub fn set_cache(&mut self, trie: AggregateTrie) -> Result<()> {
        if trie.column_count() != self.header.schema.len() || trie.root() != self.trie_root() {
            return Err(Error::CorruptRegion("cache was built for a different block".into()));
        }
        self.cache = Some(trie);
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Smallest cell enclosing every stored aggregate; the cache trie root.
    pub fn trie_root(&self) -> CellId {
        match (self.header.min_cell, self.header.max_cell) {
            (Some(lo), Some(hi)) => lo.common_ancestor(hi),
            _ => CellId::ROOT,
        }
    }

    pub fn covering(&self, poly: &Polygon, max_cells: usize) -> Result<Covering> {
        cover_polygon(poly, self.header.block_level, max_cells, &self.header.domain)
    }

    /// Covering cells that may overlap stored data, judged by the header's
    /// minimum and maximum cell.
    pub fn prune(&self, covering: &Covering) -> Vec<CellId> {
        let (Some(lo), Some(hi)) = (self.header.min_cell, self.header.max_cell) else {
            return Vec::new();
        };
        covering
            .cells
            .iter()
            .copied()
            .filter(|c| c.range_max() >= lo.raw() && c.range_min() <= hi.raw())
            .collect()
    }

    /// Index range of the aggregates inside `cell`, searching from `from`.
    #[inline]
    pub(crate) fn cell_span(&self, cell: CellId, from: usize) -> (usize, usize) {
        let (first, last) = (cell.range_min(), cell.range_max());
        let tail = &self.cells[from..];
        let start = from + tail.partition_point(|a| a.cell.raw() < first);
        let end = start + self.cells[start..].partition_point(|a| a.cell.raw() <= last);
        (start, end)
    }

    /// Folds aggregates `start..end` into `acc`.
    #[inline]
    pub(crate) fn fold_span(&self, start: usize, end: usize, acc: &mut Accumulator, bound: &[usize]) {
        let n = self.header.schema.len();
        for i in start..end {
            acc.fold(self.cells[i].count, &self.columns[i * n..(i + 1) * n], bound);
        }
    }

    /// Aggregate of every stored cell inside `cell`, over all columns.
    pub fn aggregate_cell(&self, cell: CellId) -> Accumulator {
        let bound = BoundAggSpec::all_columns(&self.header.schema);
        let mut acc = Accumulator::new(bound.columns.len());
        let (start, end) = self.cell_span(cell, 0);
        self.fold_span(start, end, &mut acc, &bound.columns);
        acc
    }

    /// Aggregates over an ascending list of disjoint cells. Returns the
    /// number of aggregates read.
    pub fn select_cells(&self, cells: &[CellId], bound: &BoundAggSpec, acc: &mut Accumulator) -> usize {
        let mut cursor = 0;
        let mut scanned = 0;
        for &cell in cells {
            let (start, end) = self.cell_span(cell, cursor);
            self.fold_span(start, end, acc, &bound.columns);
            scanned += end - start;
            cursor = end;
        }
        scanned
    }

    pub fn select_query(&self, poly: &Polygon, spec: &AggSpec, max_cells: usize) -> Result<QueryResult> {
        let covering = self.covering(poly, max_cells)?;
        self.select_covering(&covering, spec)
    }

    pub fn select_covering(&self, covering: &Covering, spec: &AggSpec) -> Result<QueryResult> {
        let bound = spec.bind(&self.header.schema)?;
        let cells = self.prune(covering);
        let mut acc = Accumulator::new(bound.columns.len());
        let scanned = self.select_cells(&cells, &bound, &mut acc);
        let mut result = acc.into_result(&self.header.schema, &bound);
        result.cells_visited = cells.len();
        result.aggregates_scanned = scanned;
        result.epsilon_m = covering.epsilon_m;
        Ok(result)
    }

    /// Tuple count inside the covering, from the first and last contained
    /// aggregate of each cell: `last.offset + last.count - first.offset`.
    pub fn count_query(&self, poly: &Polygon, max_cells: usize) -> Result<u64> {
        let covering = self.covering(poly, max_cells)?;
        Ok(self.count_covering(&covering))
    }

    pub fn count_covering(&self, covering: &Covering) -> u64 {
        let cells = self.prune(covering);
        if self.offsets_stale {
            let mut acc = Accumulator::new(0);
            self.select_cells(&cells, &BoundAggSpec { columns: Vec::new() }, &mut acc);
            return acc.count;
        }
        let level = self.header.block_level;
        let mut total = 0;
        let mut cursor = 0;
        for cell in cells {
            let first_child = cell.first_child_at(level).raw();
            let last_child = cell.last_child_at(level).raw();
            let first = cursor + self.cells[cursor..].partition_point(|a| a.cell.raw() < first_child);
            let end = first + self.cells[first..].partition_point(|a| a.cell.raw() <= last_child);
            if end > first {
                let (f, l) = (&self.cells[first], &self.cells[end - 1]);
                total += l.offset + l.count - f.offset;
            }
            cursor = end;
        }
        total
    }

    /// Merges runs of aggregates sharing a cell at `new_level`.
    pub fn coarsen(&self, new_level: u8) -> Result<GeoBlock> {
        if new_level >= self.header.block_level {
            return Err(Error::LevelOutOfRange { level: new_level, reason: "coarsening needs a coarser level" });
        }
        let ncols = self.header.schema.len();
        let mut cells: Vec<CellAggregate> = Vec::new();
        let mut columns: Vec<ColumnAggregate> = Vec::new();
        for (i, agg) in self.cells.iter().enumerate() {
            let parent = agg.cell.parent_unchecked(new_level);
            let src = &self.columns[i * ncols..(i + 1) * ncols];
            match cells.last_mut() {
                Some(last) if last.cell == parent => {
                    last.count += agg.count;
                    last.min_key = last.min_key.min(agg.min_key);
                    last.max_key = last.max_key.max(agg.max_key);
                    let base = columns.len() - ncols;
                    for (dst, s) in columns[base..].iter_mut().zip(src) {
                        dst.merge(s);
                    }
                }
                _ => {
                    cells.push(CellAggregate { cell: parent, ..*agg });
                    columns.extend_from_slice(src);
                }
            }
        }
        let mut header = self.header.clone();
        header.block_level = new_level;
        Ok(GeoBlock::assemble(header, cells, columns, self.offsets_stale))
    }

    /// Folds new rows into the aggregates of the cells they fall into.
    ///
    /// Offsets are left untouched and marked stale, so COUNT falls back to
    /// summing counts until a rebuild; the cache is dropped. Rows landing in
    /// cells without an aggregate yield [`Error::RequiresRebuild`] and leave
    /// the block unchanged.
    pub fn append_batch(&self, rows: &PointTable) -> Result<GeoBlock> {
        if rows.schema() != &self.header.schema {
            return Err(Error::IncompatibleRows("schema differs".into()));
        }
        if rows.domain() != &self.header.domain || rows.key_level() != self.header.key_level {
            return Err(Error::IncompatibleRows("domain or key level differs".into()));
        }
        let filter = self.header.filter.bind(&self.header.schema)?;
        let level = self.header.block_level;
        let mut targets = Vec::with_capacity(rows.row_count());
        let mut missing = BTreeSet::new();
        for (row, key) in rows.keys().iter().enumerate() {
            if !filter.matches(rows.columns(), row) {
                return Err(Error::FilterViolation { row });
            }
            let cell = key.parent_unchecked(level);
            match self.cells.binary_search_by_key(&cell, |a| a.cell) {
                Ok(i) => targets.push(i),
                Err(_) => {
                    missing.insert(cell);
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::RequiresRebuild(missing.into_iter().collect()));
        }

        let ncols = self.header.schema.len();
        let mut cells = self.cells.clone();
        let mut columns = self.columns.clone();
        for (row, &i) in targets.iter().enumerate() {
            let key = rows.keys()[row];
            let agg = &mut cells[i];
            agg.count += 1;
            agg.min_key = agg.min_key.min(key);
            agg.max_key = agg.max_key.max(key);
            for (c, col) in rows.columns().iter().enumerate() {
                columns[i * ncols + c].push(col.get(row));
            }
        }
        let stale = self.offsets_stale || !rows.is_empty();
        Ok(GeoBlock::assemble(self.header.clone(), cells, columns, stale))
    }
}
