//! Quadtree cell ids over a rectangular lon/lat domain.
//!
//! A cell at level `L` is identified by a 64-bit key: the top `2·L` bits hold
//! the path from the root (two bits per subdivision, Morton order with the
//! digit `(y_bit << 1) | x_bit`), followed by a single sentinel bit and zeros.
//! Integer order of keys equals curve order, and every descendant of a cell
//! sorts inside [`CellId::range_min`, `CellId::range_max`].

mod covering;
mod geometry;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use covering::{cover_polygon, Covering, DEFAULT_MAX_CELLS};
pub use geometry::{CellRelation, Polygon, Rect};

/// Deepest representable level: 62 path bits plus the sentinel.
pub const MAX_LEVEL: u8 = 31;

/// Meters per degree of longitude at the equator.
pub const METERS_PER_DEG_LON: f64 = 111_320.0;
/// Meters per degree of latitude.
pub const METERS_PER_DEG_LAT: f64 = 110_574.0;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(transparent)]
#[serde(transparent)]
pub struct CellId(u64);

#[inline]
const fn lsb_for_level(level: u8) -> u64 {
    1u64 << (63 - 2 * level as u32)
}

/// Spreads the low 32 bits of `v` onto the even bit positions.
#[inline]
fn spread_bits(v: u32) -> u64 {
    let mut x = v as u64;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

#[inline]
fn compact_bits(v: u64) -> u32 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x as u32
}

impl CellId {
    pub const ROOT: CellId = CellId(1 << 63);

    /// Wraps raw bits, checking the sentinel position.
    pub fn from_raw(bits: u64) -> Result<CellId> {
        let id = CellId(bits);
        if id.is_valid() {
            Ok(id)
        } else {
            Err(Error::InvalidCellId(bits))
        }
    }

    /// Wraps raw bits without validation. Keys read back from storage that
    /// were produced by this crate are valid by construction.
    #[inline]
    pub const fn from_raw_unchecked(bits: u64) -> CellId {
        CellId(bits)
    }

    #[inline]
    pub const fn raw(self) -> u64 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        self.0 != 0 && self.0.trailing_zeros() % 2 == 1
    }

    pub fn from_path(digits: &[u8]) -> Result<CellId> {
        if digits.len() > MAX_LEVEL as usize {
            return Err(Error::PathTooDeep(digits.len()));
        }
        let mut id = CellId::ROOT;
        for &d in digits {
            if d > 3 {
                return Err(Error::InvalidDigit(d));
            }
            id = id.child(d);
        }
        Ok(id)
    }

    /// Builds the level-`level` cell at grid coordinates `(i, j)`, where
    /// `i` indexes columns (x) and `j` rows (y), both `< 2^level`.
    pub fn from_ij(i: u32, j: u32, level: u8) -> CellId {
        debug_assert!(level <= MAX_LEVEL);
        if level == 0 {
            return CellId::ROOT;
        }
        let morton = spread_bits(i) | (spread_bits(j) << 1);
        let path = morton << (64 - 2 * level as u32);
        CellId(path | lsb_for_level(level))
    }

    /// Grid coordinates `(i, j)` of this cell at its own level.
    pub fn ij(self) -> (u32, u32) {
        let level = self.level();
        if level == 0 {
            return (0, 0);
        }
        let morton = self.0 >> (64 - 2 * level as u32);
        (compact_bits(morton), compact_bits(morton >> 1))
    }

    #[inline]
    pub fn level(self) -> u8 {
        ((63 - self.0.trailing_zeros()) / 2) as u8
    }

    pub fn checked_level(self) -> Result<u8> {
        if self.is_valid() {
            Ok(self.level())
        } else {
            Err(Error::InvalidCellId(self.0))
        }
    }

    #[inline]
    pub fn lsb(self) -> u64 {
        self.0 & self.0.wrapping_neg()
    }

    /// Smallest key of any descendant (inclusive).
    #[inline]
    pub fn range_min(self) -> u64 {
        self.0 - (self.lsb() - 1)
    }

    /// Largest key of any descendant (inclusive).
    #[inline]
    pub fn range_max(self) -> u64 {
        self.0 + (self.lsb() - 1)
    }

    #[inline]
    pub fn contains(self, other: CellId) -> bool {
        self.range_min() <= other.0 && other.0 <= self.range_max()
    }

    /// True if the descendant ranges of both cells overlap, i.e. one contains
    /// the other.
    #[inline]
    pub fn intersects(self, other: CellId) -> bool {
        other.range_min() <= self.range_max() && other.range_max() >= self.range_min()
    }

    pub fn parent(self, level: u8) -> Result<CellId> {
        if level > self.level() {
            return Err(Error::LevelOutOfRange {
                level,
                reason: "parent level must not exceed the cell level",
            });
        }
        Ok(self.parent_unchecked(level))
    }

    #[inline]
    pub fn parent_unchecked(self, level: u8) -> CellId {
        let lsb = lsb_for_level(level);
        CellId((self.0 & lsb.wrapping_neg()) | lsb)
    }

    /// The direct parent, or `None` for the root.
    pub fn immediate_parent(self) -> Option<CellId> {
        match self.level() {
            0 => None,
            l => Some(self.parent_unchecked(l - 1)),
        }
    }

    /// Child `digit` (0..=3). Must not be called on a level-31 cell.
    #[inline]
    pub fn child(self, digit: u8) -> CellId {
        debug_assert!(digit < 4 && self.level() < MAX_LEVEL);
        let new_lsb = self.lsb() >> 2;
        CellId(self.0 - self.lsb() + new_lsb + (digit as u64) * 2 * new_lsb)
    }

    pub fn children(self) -> Result<[CellId; 4]> {
        if self.level() >= MAX_LEVEL {
            return Err(Error::LevelOutOfRange {
                level: self.level() + 1,
                reason: "leaf cells have no children",
            });
        }
        Ok([self.child(0), self.child(1), self.child(2), self.child(3)])
    }

    /// Path digit taken at subdivision `depth` (1-based, `depth <= level`).
    #[inline]
    pub fn digit_at(self, depth: u8) -> u8 {
        ((self.0 >> (64 - 2 * depth as u32)) & 3) as u8
    }

    pub fn path(self) -> Vec<u8> {
        (1..=self.level()).map(|d| self.digit_at(d)).collect()
    }

    /// First descendant at `level`.
    #[inline]
    pub fn first_child_at(self, level: u8) -> CellId {
        CellId(self.0 - self.lsb() + lsb_for_level(level))
    }

    /// Last descendant at `level`.
    #[inline]
    pub fn last_child_at(self, level: u8) -> CellId {
        CellId(self.0.wrapping_add(self.lsb()).wrapping_sub(lsb_for_level(level)))
    }

    /// All descendants at `level` as the inclusive id interval
    /// `(first, last)`; consecutive members differ by `2·lsb(level)`.
    pub fn children_at_level(self, level: u8) -> Result<(CellId, CellId)> {
        if level < self.level() || level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange {
                level,
                reason: "child level must lie between the cell level and 31",
            });
        }
        Ok((self.first_child_at(level), self.last_child_at(level)))
    }

    /// Smallest cell containing both `self` and `other`.
    pub fn common_ancestor(self, other: CellId) -> CellId {
        let max_level = self.level().min(other.level());
        let diff = self.0 ^ other.0;
        let shared = if diff == 0 {
            max_level
        } else {
            ((diff.leading_zeros() / 2) as u8).min(max_level)
        };
        self.parent_unchecked(shared)
    }

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Debug for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CellId({:016x})", self.0)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for CellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = u64::from_str_radix(s.trim_start_matches("0x"), 16)
            .map_err(|_| Error::InvalidCellId(0))?;
        CellId::from_raw(bits)
    }
}

/// The rectangular lon/lat area that is recursively subdivided.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl Domain {
    /// Bounding box of New York City, used by the synthetic generators.
    pub const NYC: Domain = Domain {
        min_lon: -74.2591,
        min_lat: 40.4774,
        max_lon: -73.7004,
        max_lat: 40.9176,
    };

    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Domain> {
        let all_finite = [min_lon, min_lat, max_lon, max_lat].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidDomain("bounds must be finite".into()));
        }
        if min_lon >= max_lon || min_lat >= max_lat {
            return Err(Error::InvalidDomain("min must be below max on both axes".into()));
        }
        Ok(Domain { min_lon, min_lat, max_lon, max_lat })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    #[inline]
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.min_lon, self.min_lat, self.max_lon, self.max_lat)
    }

    /// The leaf-level or block-level key of a point.
    pub fn cell_of_point(&self, lon: f64, lat: f64, level: u8) -> Result<CellId> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange { level, reason: "levels stop at 31" });
        }
        if !(lon.is_finite() && lat.is_finite() && self.contains(lon, lat)) {
            return Err(Error::OutOfDomain { lon, lat });
        }
        let n = 1u64 << level;
        let x = (lon - self.min_lon) / self.width();
        let y = (lat - self.min_lat) / self.height();
        let i = ((x * n as f64) as u64).min(n - 1);
        let j = ((y * n as f64) as u64).min(n - 1);
        Ok(CellId::from_ij(i as u32, j as u32, level))
    }

    pub fn cell_rect(&self, id: CellId) -> Rect {
        let level = id.level();
        let n = (1u64 << level) as f64;
        let (i, j) = id.ij();
        let (sw, sh) = (self.width() / n, self.height() / n);
        let min_lon = self.min_lon + i as f64 * sw;
        let min_lat = self.min_lat + j as f64 * sh;
        let max_lon = if i as f64 + 1.0 == n { self.max_lon } else { self.min_lon + (i + 1) as f64 * sw };
        let max_lat = if j as f64 + 1.0 == n { self.max_lat } else { self.min_lat + (j + 1) as f64 * sh };
        Rect::new(min_lon, min_lat, max_lon, max_lat)
    }

    /// Center of a cell; for leaf keys this is the stored point position.
    pub fn cell_center(&self, id: CellId) -> (f64, f64) {
        let r = self.cell_rect(id);
        ((r.min_x + r.max_x) * 0.5, (r.min_y + r.max_y) * 0.5)
    }

    /// Side lengths in degrees of any cell at `level`.
    pub fn cell_size_deg(&self, level: u8) -> (f64, f64) {
        let n = (1u64 << level) as f64;
        (self.width() / n, self.height() / n)
    }

    /// Cell diagonal in meters, longitude scaled at the cell-center latitude.
    pub fn cell_diagonal_m(&self, id: CellId) -> f64 {
        let r = self.cell_rect(id);
        let lat_c = (r.min_y + r.max_y) * 0.5;
        let (w, h) = self.cell_size_deg(id.level());
        diagonal_m(w, h, lat_c)
    }

    /// Largest diagonal of the cell when longitude is scaled at any latitude
    /// inside it. Bounds the distance between any two of its points as
    /// measured by [`Polygon::distance_m`] from either point.
    pub fn cell_max_diagonal_m(&self, id: CellId) -> f64 {
        let r = self.cell_rect(id);
        let (w, h) = self.cell_size_deg(id.level());
        diagonal_m(w, h, lat_nearest_equator(r.min_y, r.max_y))
    }

    /// Upper bound of the diagonal of any level-`level` cell in the domain.
    pub fn max_cell_diagonal_m(&self, level: u8) -> f64 {
        let (w, h) = self.cell_size_deg(level);
        diagonal_m(w, h, lat_nearest_equator(self.min_lat, self.max_lat))
    }

    /// Smallest level whose cells all have a diagonal of at most `epsilon_m`.
    pub fn level_for_error(&self, epsilon_m: f64) -> Result<u8> {
        if epsilon_m.is_nan() || epsilon_m <= 0.0 {
            return Err(Error::Unsatisfiable(epsilon_m));
        }
        (0..=MAX_LEVEL)
            .find(|&l| self.max_cell_diagonal_m(l) <= epsilon_m)
            .ok_or(Error::Unsatisfiable(epsilon_m))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.min_lon, self.min_lat, self.max_lon, self.max_lat)
    }
}

impl FromStr for Domain {
    type Err = Error;

    /// Parses `lon0,lat0,lon1,lat1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidDomain(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            &[a, b, c, d] => Domain::new(a, b, c, d),
            _ => Err(Error::InvalidDomain(format!("{s:?}: expected four numbers"))),
        }
    }
}

fn lat_nearest_equator(lat0: f64, lat1: f64) -> f64 {
    if lat0 <= 0.0 && lat1 >= 0.0 {
        0.0
    } else if lat0 > 0.0 {
        lat0
    } else {
        lat1
    }
}

#[inline]
pub(crate) fn diagonal_m(w_deg: f64, h_deg: f64, lat: f64) -> f64 {
    let dx = w_deg * METERS_PER_DEG_LON * lat.to_radians().cos();
    let dy = h_deg * METERS_PER_DEG_LAT;
    dx.hypot(dy)
}
