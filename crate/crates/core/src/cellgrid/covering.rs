use std::collections::BTreeSet;

use super::{CellId, CellRelation, Domain, Polygon, MAX_LEVEL};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_CELLS: usize = 256;

/// Disjoint cells, ascending by id, whose union contains a polygon clipped
/// to the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Covering {
    pub cells: Vec<CellId>,
    pub max_level: u8,
    /// Largest diagonal among cells that straddle the polygon outline; every
    /// point of the covering lies within this distance of the polygon.
    pub epsilon_m: f64,
}

impl Covering {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn contains_cell(&self, id: CellId) -> bool {
        let i = self.cells.partition_point(|c| c.range_max() < id.raw());
        self.cells.get(i).is_some_and(|c| c.contains(id))
    }
}

/// Covers `poly` with cells no deeper than `max_level`.
///
/// Descends level by level, dropping disjoint cells, keeping contained ones
/// and refining those on the outline. When refining the next level would
/// exceed `max_cells`, sibling groups on that level are merged back into
/// their parents, largest group first, until the budget holds.
pub fn cover_polygon(poly: &Polygon, max_level: u8, max_cells: usize, domain: &Domain) -> Result<Covering> {
    if max_level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange { level: max_level, reason: "coverings stop at level 31" });
    }
    if max_cells < 4 {
        return Err(Error::InvalidArgument(format!("max_cells must be at least 4, got {max_cells}")));
    }

    // (cell, on_outline)
    let mut settled: Vec<(CellId, bool)> = Vec::new();
    let mut frontier: Vec<CellId> = Vec::new();
    match poly.classify(&domain.cell_rect(CellId::ROOT)) {
        CellRelation::Disjoint => {}
        CellRelation::Contained => settled.push((CellId::ROOT, false)),
        CellRelation::Intersects => frontier.push(CellId::ROOT),
    }

    let mut level = 0u8;
    while level < max_level && !frontier.is_empty() {
        let mut next_frontier = Vec::with_capacity(frontier.len() * 2);
        let mut next_contained = Vec::new();
        // parent -> number of emitted children
        let mut groups: Vec<(CellId, usize)> = Vec::with_capacity(frontier.len());
        for &parent in &frontier {
            let mut emitted = 0;
            for digit in 0..4 {
                let child = parent.child(digit);
                match poly.classify(&domain.cell_rect(child)) {
                    CellRelation::Disjoint => {}
                    CellRelation::Contained => {
                        next_contained.push(child);
                        emitted += 1;
                    }
                    CellRelation::Intersects => {
                        next_frontier.push(child);
                        emitted += 1;
                    }
                }
            }
            groups.push((parent, emitted));
        }

        let refined = settled.len() + next_contained.len() + next_frontier.len();
        if refined > max_cells {
            merge_back(&mut settled, frontier.len(), groups, next_contained, next_frontier, max_cells);
            frontier.clear();
            break;
        }
        settled.extend(next_contained.into_iter().map(|c| (c, false)));
        frontier = next_frontier;
        level += 1;
    }
    settled.extend(frontier.into_iter().map(|c| (c, true)));
    settled.sort_unstable_by_key(|&(c, _)| c);

    let epsilon_m = settled
        .iter()
        .filter(|(_, outline)| *outline)
        .map(|&(c, _)| domain.cell_max_diagonal_m(c))
        .fold(0.0, f64::max);
    Ok(Covering {
        cells: settled.into_iter().map(|(c, _)| c).collect(),
        max_level,
        epsilon_m,
    })
}

/// Starts from the fully refined next level and folds sibling groups back
/// into their (outline) parents until at most `max_cells` remain.
fn merge_back(
    settled: &mut Vec<(CellId, bool)>,
    frontier_len: usize,
    mut groups: Vec<(CellId, usize)>,
    next_contained: Vec<CellId>,
    next_frontier: Vec<CellId>,
    max_cells: usize,
) {
    debug_assert!(settled.len() + frontier_len <= max_cells);
    let mut count = settled.len() + next_contained.len() + next_frontier.len();
    groups.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut merged = BTreeSet::new();
    for (parent, size) in groups {
        if count <= max_cells {
            break;
        }
        count -= size.saturating_sub(1);
        merged.insert(parent);
    }
    for parent in &merged {
        settled.push((*parent, true));
    }
    let is_merged = |c: &CellId| merged.contains(&c.immediate_parent().expect("child has a parent"));
    settled.extend(next_contained.into_iter().filter(|c| !is_merged(c)).map(|c| (c, false)));
    settled.extend(next_frontier.into_iter().filter(|c| !is_merged(c)).map(|c| (c, true)));
}
