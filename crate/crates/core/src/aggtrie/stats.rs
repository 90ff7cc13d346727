use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;

use crate::cellgrid::{CellId, Covering};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geoblock::GeoBlock;

const STATS_MAGIC: &[u8; 4] = b"GBST";
const STATS_VERSION: u16 = 1;

pub const DEFAULT_HIT_WINDOW: usize = 1024;

/// Per-cell query hit counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StatsTrie {
    hits: BTreeMap<CellId, u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CellScore {
    pub cell: CellId,
    pub score: u64,
    pub level: u8,
}

impl StatsTrie {
    pub fn increment(&mut self, cell: CellId) {
        *self.hits.entry(cell).or_insert(0) += 1;
    }

    pub fn hits(&self, cell: CellId) -> u64 {
        self.hits.get(&cell).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.hits.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellId, u64)> + '_ {
        self.hits.iter().map(|(&c, &n)| (c, n))
    }

    pub fn merge(&mut self, other: &StatsTrie) {
        for (c, n) in other.iter() {
            *self.hits.entry(c).or_insert(0) += n;
        }
    }

    /// Records one hit per covering cell that survives the block's header
    /// check. Returns the recorded cells.
    pub fn record_hits(&mut self, covering: &Covering, block: &GeoBlock) -> Vec<CellId> {
        let cells = block.prune(covering);
        for &c in &cells {
            self.increment(c);
        }
        cells
    }

    /// Cells by score (own hits plus direct-parent hits) descending, then
    /// level ascending, then id ascending.
    pub fn rank_cells(&self) -> Vec<CellScore> {
        let mut out: Vec<CellScore> = self
            .hits
            .iter()
            .map(|(&cell, &n)| {
                let parent = cell.immediate_parent().map_or(0, |p| self.hits(p));
                CellScore { cell, score: n + parent, level: cell.level() }
            })
            .collect();
        out.sort_by(|a, b| b.score.cmp(&a.score).then(a.level.cmp(&b.level)).then(a.cell.cmp(&b.cell)));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(STATS_MAGIC, STATS_VERSION);
        w.u64(self.hits.len() as u64);
        for (c, n) in self.iter() {
            w.u64(c.raw());
            w.u64(n);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<StatsTrie> {
        let mut r = Reader::open(bytes, STATS_MAGIC, STATS_VERSION)?;
        let n = r.u64()? as usize;
        let words = r.u64_array(n.checked_mul(2).ok_or_else(|| Error::Malformed("stats length".into()))?)?;
        r.finish()?;
        let mut hits = BTreeMap::new();
        for pair in words.chunks_exact(2) {
            let cell = CellId::from_raw(pair[0]).map_err(|_| Error::Malformed("invalid cell in stats".into()))?;
            if pair[1] == 0 {
                return Err(Error::Malformed("zero hit count in stats".into()));
            }
            hits.insert(cell, pair[1]);
        }
        Ok(StatsTrie { hits })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Loads a sidecar, or returns empty stats when the file does not exist.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<StatsTrie> {
        match fs::read(path) {
            Ok(bytes) => StatsTrie::from_bytes(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(StatsTrie::default()),
            Err(e) => Err(e.into()),
        }
    }
}

/// Sliding window over probe outcomes.
#[derive(Clone, Debug)]
pub struct HitWindow {
    capacity: usize,
    outcomes: VecDeque<bool>,
    hits: usize,
}

impl Default for HitWindow {
    fn default() -> Self {
        HitWindow::new(DEFAULT_HIT_WINDOW)
    }
}

impl HitWindow {
    pub fn new(capacity: usize) -> HitWindow {
        let capacity = capacity.max(1);
        HitWindow { capacity, outcomes: VecDeque::with_capacity(capacity), hits: 0 }
    }

    pub fn push(&mut self, hit: bool) {
        if self.outcomes.len() == self.capacity && self.outcomes.pop_front() == Some(true) {
            self.hits -= 1;
        }
        self.outcomes.push_back(hit);
        self.hits += hit as usize;
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// 0 for an empty window.
    pub fn hit_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.hits as f64 / self.outcomes.len() as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CollectorSnapshot {
    pub queries: u64,
    pub recorded_cells: u64,
    pub window_len: usize,
    pub hit_rate: f64,
}

#[derive(Debug, Default)]
struct CollectorState {
    stats: StatsTrie,
    window: HitWindow,
    queries: u64,
    recorded: u64,
}

/// Serializes hit recording from concurrent queries.
#[derive(Debug, Default)]
pub struct StatsCollector {
    state: Mutex<CollectorState>,
}

impl StatsCollector {
    pub fn new(stats: StatsTrie, window: usize) -> StatsCollector {
        StatsCollector {
            state: Mutex::new(CollectorState { stats, window: HitWindow::new(window), queries: 0, recorded: 0 }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, CollectorState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Records one query: a hit per surviving covering cell, and whether each
    /// was answered from the cache.
    pub fn record(&self, cells: &[CellId], outcomes: &[bool]) {
        let mut s = self.lock();
        s.queries += 1;
        s.recorded += cells.len() as u64;
        for &c in cells {
            s.stats.increment(c);
        }
        for &o in outcomes {
            s.window.push(o);
        }
    }

    pub fn stats(&self) -> StatsTrie {
        self.lock().stats.clone()
    }

    pub fn snapshot(&self) -> CollectorSnapshot {
        let s = self.lock();
        CollectorSnapshot {
            queries: s.queries,
            recorded_cells: s.recorded,
            window_len: s.window.len(),
            hit_rate: s.window.hit_rate(),
        }
    }

    pub fn hit_rate(&self) -> f64 {
        self.lock().window.hit_rate()
    }

    pub fn queries(&self) -> u64 {
        self.lock().queries
    }
}
