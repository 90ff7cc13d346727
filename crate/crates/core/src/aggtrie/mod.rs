//! Query-driven cache of cell aggregates in a compact in-place trie.
//!
//! The region starts with the root node at offset 0. A node is two u32 byte
//! offsets from the region start, `first_child` and `aggregate`, with 0 as
//! null. Children are allocated as blocks of four nodes in digit order. The
//! aggregate records follow the node region: a u64 count and min, max, sum
//! per column.

mod adapted;
mod stats;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::cellgrid::CellId;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geoblock::{Accumulator, ColumnAggregate, GeoBlock};

pub use adapted::{adapted_select, adapted_select_covering, select_with_stats};
pub use stats::{CellScore, CollectorSnapshot, HitWindow, StatsCollector, StatsTrie, DEFAULT_HIT_WINDOW};

pub const NODE_BYTES: usize = 8;
pub const CHILD_BLOCK_BYTES: usize = 4 * NODE_BYTES;
/// Root node plus its child block.
pub const MIN_BUDGET_BYTES: usize = NODE_BYTES + CHILD_BLOCK_BYTES;
/// Consecutive candidates that may fail to fit before selection stops.
pub const MAX_CONSECUTIVE_MISFITS: usize = 10;

pub fn record_bytes(ncols: usize) -> usize {
    8 + 24 * ncols
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregateTrie {
    root: CellId,
    ncols: usize,
    budget_bytes: usize,
    node_bytes: usize,
    region: Vec<u8>,
}

/// A cached aggregate record inside the region.
#[derive(Clone, Copy, Debug)]
pub struct CachedAggregate<'a> {
    bytes: &'a [u8],
}

impl CachedAggregate<'_> {
    pub fn count(&self) -> u64 {
        u64::from_le_bytes(self.bytes[..8].try_into().unwrap())
    }

    pub fn column(&self, i: usize) -> ColumnAggregate {
        let f = |k: usize| {
            let at = 8 + 24 * i + 8 * k;
            f64::from_bits(u64::from_le_bytes(self.bytes[at..at + 8].try_into().unwrap()))
        };
        ColumnAggregate { min: f(0), max: f(1), sum: f(2) }
    }

    #[inline]
    pub fn fold_into(&self, acc: &mut Accumulator, bound: &[usize]) {
        acc.count += self.count();
        for (a, &c) in acc.columns.iter_mut().zip(bound) {
            a.merge(&self.column(c));
        }
    }

    pub fn to_accumulator(&self, ncols: usize) -> Accumulator {
        Accumulator { count: self.count(), columns: (0..ncols).map(|i| self.column(i)).collect() }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Probe<'a> {
    Hit(CachedAggregate<'a>),
    /// The node exists but holds no aggregate; carries its byte offset.
    NodeNoAgg(u32),
    Miss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub cached_cells: usize,
    pub bytes_used: usize,
    pub budget_bytes: usize,
    pub node_bytes: usize,
}

impl AggregateTrie {
    /// A trie with only the root node.
    pub fn empty(root: CellId, ncols: usize, budget_bytes: usize) -> Result<AggregateTrie> {
        if budget_bytes < MIN_BUDGET_BYTES {
            return Err(Error::BudgetTooSmall { budget: budget_bytes, minimum: MIN_BUDGET_BYTES });
        }
        Ok(AggregateTrie { root, ncols, budget_bytes, node_bytes: NODE_BYTES, region: vec![0; NODE_BYTES] })
    }

    /// Caches the best-ranked cells of `stats` that fit into `budget_bytes`.
    pub fn build(block: &GeoBlock, stats: &StatsTrie, budget_bytes: usize) -> Result<AggregateTrie> {
        let root = block.trie_root();
        let ncols = block.schema().len();
        if budget_bytes < MIN_BUDGET_BYTES {
            return Err(Error::BudgetTooSmall { budget: budget_bytes, minimum: MIN_BUDGET_BYTES });
        }
        let rec = record_bytes(ncols);
        let mut used = NODE_BYTES;
        let mut expanded: BTreeSet<CellId> = BTreeSet::new();
        let mut cached: BTreeMap<CellId, Accumulator> = BTreeMap::new();
        let mut misfits = 0;
        for cand in stats.rank_cells() {
            let cell = cand.cell;
            if cell.level() > block.block_level() || !root.contains(cell) || cached.contains_key(&cell) {
                continue;
            }
            let missing = (root.level()..cell.level())
                .filter(|&l| !expanded.contains(&cell.parent_unchecked(l)))
                .count();
            let cost = missing * CHILD_BLOCK_BYTES + rec;
            if used + cost > budget_bytes {
                misfits += 1;
                if misfits >= MAX_CONSECUTIVE_MISFITS {
                    break;
                }
                continue;
            }
            misfits = 0;
            used += cost;
            for l in root.level()..cell.level() {
                expanded.insert(cell.parent_unchecked(l));
            }
            cached.insert(cell, block.aggregate_cell(cell));
        }
        let trie = AggregateTrie::layout(root, ncols, budget_bytes, &expanded, &cached);
        debug_assert_eq!(trie.region.len(), used);
        Ok(trie)
    }

    /// Writes nodes breadth-first, then the aggregate records in node order.
    fn layout(
        root: CellId,
        ncols: usize,
        budget_bytes: usize,
        expanded: &BTreeSet<CellId>,
        cached: &BTreeMap<CellId, Accumulator>,
    ) -> AggregateTrie {
        let mut order: Vec<CellId> = vec![root];
        let mut first_child: Vec<u32> = vec![0];
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let cell = order[i];
            if expanded.contains(&cell) {
                first_child[i] = (order.len() * NODE_BYTES) as u32;
                for d in 0..4 {
                    order.push(cell.child(d));
                    first_child.push(0);
                    queue.push_back(order.len() - 1);
                }
            }
        }
        let node_bytes = order.len() * NODE_BYTES;
        let rec = record_bytes(ncols);
        let mut region = vec![0u8; node_bytes];
        for (i, cell) in order.iter().enumerate() {
            let at = i * NODE_BYTES;
            region[at..at + 4].copy_from_slice(&first_child[i].to_le_bytes());
            if let Some(acc) = cached.get(cell) {
                let off = region.len() as u32;
                region[at + 4..at + 8].copy_from_slice(&off.to_le_bytes());
                region.reserve(rec);
                region.extend_from_slice(&acc.count.to_le_bytes());
                for c in &acc.columns {
                    for v in [c.min, c.max, c.sum] {
                        region.extend_from_slice(&v.to_bits().to_le_bytes());
                    }
                }
            }
        }
        AggregateTrie { root, ncols, budget_bytes, node_bytes, region }
    }

    pub fn root(&self) -> CellId {
        self.root
    }

    pub fn column_count(&self) -> usize {
        self.ncols
    }

    pub fn budget_bytes(&self) -> usize {
        self.budget_bytes
    }

    pub fn region(&self) -> &[u8] {
        &self.region
    }

    pub fn bytes_used(&self) -> usize {
        self.region.len()
    }

    pub fn cached_cells(&self) -> usize {
        (self.region.len() - self.node_bytes) / record_bytes(self.ncols)
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            cached_cells: self.cached_cells(),
            bytes_used: self.bytes_used(),
            budget_bytes: self.budget_bytes,
            node_bytes: self.node_bytes,
        }
    }

    #[inline]
    fn word(&self, at: usize) -> Result<u32> {
        self.region
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::CorruptRegion(format!("offset {at} beyond region of {} bytes", self.region.len())))
    }

    fn node_outcome(&self, node: u32, is_root: bool) -> Result<Probe<'_>> {
        let agg = self.word(node as usize + 4)? as usize;
        if agg != 0 {
            let end = agg + record_bytes(self.ncols);
            let bytes = self
                .region
                .get(agg..end)
                .ok_or_else(|| Error::CorruptRegion(format!("aggregate at {agg} beyond region")))?;
            return Ok(Probe::Hit(CachedAggregate { bytes }));
        }
        // an empty slot in a child block is not a node of its own
        if !is_root && self.word(node as usize)? == 0 {
            return Ok(Probe::Miss);
        }
        Ok(Probe::NodeNoAgg(node))
    }

    /// Steps from `node` to its child `digit`.
    pub fn probe_child(&self, node: u32, digit: u8) -> Result<Probe<'_>> {
        let first = self.word(node as usize)?;
        if first == 0 {
            return Ok(Probe::Miss);
        }
        let child = first + NODE_BYTES as u32 * digit as u32;
        if child as usize + NODE_BYTES > self.node_bytes {
            return Err(Error::CorruptRegion(format!("child offset {child} beyond node region")));
        }
        self.node_outcome(child, false)
    }

    /// Walks one child step per level below the root. Cells outside or
    /// coarser than the root are misses.
    pub fn probe(&self, cell: CellId) -> Result<Probe<'_>> {
        if !self.root.contains(cell) {
            return Ok(Probe::Miss);
        }
        let mut node = 0u32;
        for depth in self.root.level() + 1..=cell.level() {
            let first = self.word(node as usize)?;
            if first == 0 {
                return Ok(Probe::Miss);
            }
            node = first + NODE_BYTES as u32 * cell.digit_at(depth) as u32;
            if node as usize + NODE_BYTES > self.node_bytes {
                return Err(Error::CorruptRegion(format!("child offset {node} beyond node region")));
            }
        }
        self.node_outcome(node, node == 0)
    }

    /// Cached cells with their node depth below the root, found by a
    /// depth-first walk that rejects cycles and out-of-range offsets.
    pub fn cached(&self) -> Result<Vec<CellId>> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![(0u32, self.root)];
        while let Some((node, cell)) = stack.pop() {
            if !seen.insert(node) {
                return Err(Error::CorruptRegion(format!("node {node} reached twice")));
            }
            if node as usize + NODE_BYTES > self.node_bytes {
                return Err(Error::CorruptRegion(format!("node {node} beyond node region")));
            }
            let agg = self.word(node as usize + 4)? as usize;
            if agg != 0 {
                if agg < self.node_bytes || agg + record_bytes(self.ncols) > self.region.len() {
                    return Err(Error::CorruptRegion(format!("aggregate offset {agg}")));
                }
                out.push(cell);
            }
            let first = self.word(node as usize)?;
            if first != 0 {
                if cell.level() >= crate::cellgrid::MAX_LEVEL || !(first as usize).is_multiple_of(NODE_BYTES) {
                    return Err(Error::CorruptRegion(format!("child block at {first}")));
                }
                for d in (0..4u8).rev() {
                    stack.push((first + NODE_BYTES as u32 * d as u32, cell.child(d)));
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Region size of an encoding with four child pointers and one
    /// aggregate pointer (20 bytes) per existing node, for the same cells.
    pub fn four_pointer_bytes(&self) -> Result<usize> {
        let cells = self.cached()?;
        let mut nodes: BTreeSet<CellId> = BTreeSet::from([self.root]);
        for c in &cells {
            for l in self.root.level()..=c.level() {
                nodes.insert(c.parent_unchecked(l));
            }
        }
        Ok(nodes.len() * 20 + cells.len() * record_bytes(self.ncols))
    }

    /// Whether some node has exactly one existing child.
    pub fn has_single_child_node(&self) -> Result<bool> {
        let cells = self.cached()?;
        let mut nodes: BTreeSet<CellId> = BTreeSet::new();
        for c in &cells {
            for l in self.root.level() + 1..=c.level() {
                nodes.insert(c.parent_unchecked(l));
            }
        }
        let mut children: BTreeMap<CellId, usize> = BTreeMap::new();
        for n in &nodes {
            *children.entry(n.immediate_parent().expect("below root")).or_insert(0) += 1;
        }
        Ok(children.values().any(|&n| n == 1))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.root.raw());
        w.u32(self.ncols as u32);
        w.u64(self.budget_bytes as u64);
        w.u64(self.node_bytes as u64);
        w.bytes(&self.region);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<AggregateTrie> {
        let root = CellId::from_raw(r.u64()?).map_err(|_| Error::CorruptRegion("invalid root".into()))?;
        let ncols = r.u32()? as usize;
        let budget_bytes = r.u64()? as usize;
        let node_bytes = r.u64()? as usize;
        let region = r.bytes()?.to_vec();
        if node_bytes < NODE_BYTES
            || node_bytes > region.len()
            || !(node_bytes - NODE_BYTES).is_multiple_of(CHILD_BLOCK_BYTES)
            || !(region.len() - node_bytes).is_multiple_of(record_bytes(ncols))
            || region.len() > budget_bytes
        {
            return Err(Error::CorruptRegion("inconsistent region sizes".into()));
        }
        let trie = AggregateTrie { root, ncols, budget_bytes, node_bytes, region };
        if trie.cached()?.len() != trie.cached_cells() {
            return Err(Error::CorruptRegion("unreachable aggregate records".into()));
        }
        Ok(trie)
    }
}
