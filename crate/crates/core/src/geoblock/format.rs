use std::fs;
use std::path::Path;

use super::{CellAggregate, ColumnAggregate, GeoBlock, GlobalHeader};
use crate::aggtrie::AggregateTrie;
use crate::cellgrid::{CellId, Domain, MAX_LEVEL};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::store::{FilterPredicate, Schema};

const BLOCK_MAGIC: &[u8; 4] = b"GBBK";
const BLOCK_VERSION: u16 = 1;

fn put_agg(w: &mut Writer, a: &ColumnAggregate) {
    w.f64(a.min);
    w.f64(a.max);
    w.f64(a.sum);
}

fn get_agg(r: &mut Reader<'_>) -> Result<ColumnAggregate> {
    Ok(ColumnAggregate { min: r.f64()?, max: r.f64()?, sum: r.f64()? })
}

fn get_cell(r: &mut Reader<'_>) -> Result<CellId> {
    let raw = r.u64()?;
    CellId::from_raw(raw).map_err(|_| Error::Malformed(format!("invalid cell id {raw:#018x}")))
}

impl GeoBlock {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let ncols = h.schema.len();
        let mut w = Writer::new(BLOCK_MAGIC, BLOCK_VERSION);
        w.reserve(self.cells.len() * super::aggregate_record_bytes(ncols) + 256);
        w.u8(h.block_level);
        w.u8(h.key_level);
        h.schema.encode(&mut w);
        for v in [h.domain.min_lon, h.domain.min_lat, h.domain.max_lon, h.domain.max_lat] {
            w.f64(v);
        }
        w.str(&h.filter.to_string());
        w.u8(self.offsets_stale as u8);
        w.u64(h.total_count);
        for t in &h.totals {
            put_agg(&mut w, t);
        }
        w.u64(self.cells.len() as u64);
        for (i, c) in self.cells.iter().enumerate() {
            w.u64(c.cell.raw());
            w.u64(c.offset);
            w.u64(c.count);
            w.u64(c.min_key.raw());
            w.u64(c.max_key.raw());
            for a in self.column_aggregates(i) {
                put_agg(&mut w, a);
            }
        }
        match &self.cache {
            Some(trie) => {
                w.u8(1);
                trie.encode(&mut w);
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<GeoBlock> {
        let mut r = Reader::open(bytes, BLOCK_MAGIC, BLOCK_VERSION)?;
        let block_level = r.u8()?;
        let key_level = r.u8()?;
        if key_level > MAX_LEVEL || block_level > key_level {
            return Err(Error::Malformed(format!("levels {block_level}/{key_level}")));
        }
        let schema = Schema::decode(&mut r)?;
        let domain = Domain::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?)?;
        let filter: FilterPredicate = r.str()?.parse()?;
        let offsets_stale = r.u8()? != 0;
        let total_count = r.u64()?;
        let ncols = schema.len();
        let totals = (0..ncols).map(|_| get_agg(&mut r)).collect::<Result<Vec<_>>>()?;
        let n = r.u64()? as usize;
        if n > bytes.len() / 40 {
            return Err(Error::Malformed(format!("aggregate count {n}")));
        }
        let mut cells = Vec::with_capacity(n);
        let mut columns = Vec::with_capacity(n * ncols);
        for _ in 0..n {
            let cell = get_cell(&mut r)?;
            let offset = r.u64()?;
            let count = r.u64()?;
            let min_key = get_cell(&mut r)?;
            let max_key = get_cell(&mut r)?;
            if cell.level() != block_level || !cell.contains(min_key) || !cell.contains(max_key) || count == 0 {
                return Err(Error::Malformed(format!("inconsistent aggregate for cell {cell}")));
            }
            if cells.last().is_some_and(|p: &CellAggregate| p.cell >= cell) {
                return Err(Error::Malformed("aggregates are not sorted".into()));
            }
            cells.push(CellAggregate { cell, offset, count, min_key, max_key });
            for _ in 0..ncols {
                columns.push(get_agg(&mut r)?);
            }
        }
        let cache = match r.u8()? {
            0 => None,
            1 => Some(AggregateTrie::decode(&mut r)?),
            t => return Err(Error::Malformed(format!("cache tag {t}"))),
        };
        r.finish()?;

        let header = GlobalHeader {
            block_level,
            key_level,
            schema,
            domain,
            filter,
            min_cell: None,
            max_cell: None,
            total_count: 0,
            totals: Vec::new(),
            aggregate_count: 0,
        };
        let mut block = GeoBlock::assemble(header, cells, columns, offsets_stale);
        if block.header.total_count != total_count
            || block.header.totals.iter().zip(&totals).any(|(a, b)| !same_bits(a, b))
        {
            return Err(Error::Malformed("header totals disagree with the aggregates".into()));
        }
        if let Some(trie) = cache {
            block.set_cache(trie)?;
        }
        Ok(block)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GeoBlock> {
        GeoBlock::from_bytes(&fs::read(path)?)
    }
}

fn same_bits(a: &ColumnAggregate, b: &ColumnAggregate) -> bool {
    a.min.to_bits() == b.min.to_bits() && a.max.to_bits() == b.max.to_bits() && a.sum.to_bits() == b.sum.to_bits()
}
