//! Planar predicates over lon/lat polygons: point containment, cell
//! classification and point-to-outline distance.

use serde_json::{json, Value};

use super::{METERS_PER_DEG_LAT, METERS_PER_DEG_LON};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Rect {
        Rect { min_x, min_y, max_x, max_y }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.min_x + self.max_x) * 0.5, (self.min_y + self.max_y) * 0.5]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.min_x, self.min_y],
            [self.max_x, self.min_y],
            [self.max_x, self.max_y],
            [self.min_x, self.max_y],
        ]
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min_x && p[0] <= self.max_x && p[1] >= self.min_y && p[1] <= self.max_y
    }

    /// True if the open interiors of both rectangles overlap.
    fn interiors_overlap(&self, o: &Rect) -> bool {
        self.min_x < o.max_x && o.min_x < self.max_x && self.min_y < o.max_y && o.min_y < self.max_y
    }

    /// Does segment `a`-`b` pass through the open interior?
    ///
    /// Clips the segment to the closed rectangle; a chord of a convex set lies
    /// on its boundary exactly when its midpoint does.
    fn segment_enters_interior(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let clips = [
            (-dx, a[0] - self.min_x),
            (dx, self.max_x - a[0]),
            (-dy, a[1] - self.min_y),
            (dy, self.max_y - a[1]),
        ];
        for (p, q) in clips {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    if r > t1 {
                        return false;
                    }
                    t0 = t0.max(r);
                } else {
                    if r < t0 {
                        return false;
                    }
                    t1 = t1.min(r);
                }
            }
        }
        let t = (t0 + t1) * 0.5;
        let (mx, my) = (a[0] + t * dx, a[1] + t * dy);
        mx > self.min_x && mx < self.max_x && my > self.min_y && my < self.max_y
    }
}

/// Relation between a cell rectangle and a polygon, judged on interiors:
/// shared outline segments alone do not make a cell intersect.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellRelation {
    Disjoint,
    Intersects,
    Contained,
}

/// A polygon with one outer ring followed by holes. Rings are stored open
/// (the closing vertex is not repeated).
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    rings: Vec<Vec<[f64; 2]>>,
    bbox: Rect,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<[f64; 2]>>) -> Result<Polygon> {
        if rings.is_empty() {
            return Err(Error::InvalidPolygon("polygon has no rings".into()));
        }
        let mut cleaned = Vec::with_capacity(rings.len());
        for (ri, mut ring) in rings.into_iter().enumerate() {
            if ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPolygon(format!("ring {ri} has non-finite coordinates")));
            }
            ring.dedup();
            while ring.len() > 1 && ring.first() == ring.last() {
                ring.pop();
            }
            if ring.len() < 3 {
                return Err(Error::InvalidPolygon(format!(
                    "ring {ri} needs at least 3 distinct vertices"
                )));
            }
            if let Some((i, j)) = self_intersection(&ring) {
                return Err(Error::InvalidPolygon(format!(
                    "ring {ri} self-intersects at edges {i} and {j}"
                )));
            }
            cleaned.push(ring);
        }
        let mut bbox = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &cleaned[0] {
            bbox.min_x = bbox.min_x.min(v[0]);
            bbox.min_y = bbox.min_y.min(v[1]);
            bbox.max_x = bbox.max_x.max(v[0]);
            bbox.max_y = bbox.max_y.max(v[1]);
        }
        Ok(Polygon { rings: cleaned, bbox })
    }

    pub fn rectangle(rect: Rect) -> Result<Polygon> {
        Polygon::new(vec![rect.corners().to_vec()])
    }

    pub fn rings(&self) -> &[Vec<[f64; 2]>] {
        &self.rings
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn vertices(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.rings.iter().flatten().copied()
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.rings
            .iter()
            .flat_map(|r| r.iter().zip(r.iter().cycle().skip(1)).map(|(a, b)| (*a, *b)))
    }

    /// Parses a GeoJSON `Polygon` geometry, or a `Feature` wrapping one.
    pub fn from_geojson(value: &Value) -> Result<Polygon> {
        let kind = value.get("type").and_then(Value::as_str);
        let geometry = match kind {
            Some("Feature") => value
                .get("geometry")
                .ok_or_else(|| Error::GeoJson("feature without geometry".into()))?,
            Some("Polygon") => value,
            Some(other) => return Err(Error::GeoJson(format!("expected a Polygon, got {other}"))),
            None => return Err(Error::GeoJson("missing `type`".into())),
        };
        if geometry.get("type").and_then(Value::as_str) != Some("Polygon") {
            return Err(Error::GeoJson("feature geometry is not a Polygon".into()));
        }
        let coords = geometry
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::GeoJson("missing coordinates".into()))?;
        let mut rings = Vec::with_capacity(coords.len());
        for ring in coords {
            let ring = ring.as_array().ok_or_else(|| Error::GeoJson("ring is not an array".into()))?;
            let mut pts = Vec::with_capacity(ring.len());
            for pos in ring {
                let pos = pos.as_array().filter(|p| p.len() >= 2);
                let pos = pos.ok_or_else(|| Error::GeoJson("position needs [lon, lat]".into()))?;
                match (pos[0].as_f64(), pos[1].as_f64()) {
                    (Some(lon), Some(lat)) => pts.push([lon, lat]),
                    _ => return Err(Error::GeoJson("non-numeric coordinate".into())),
                }
            }
            rings.push(pts);
        }
        Polygon::new(rings)
    }

    pub fn from_geojson_str(s: &str) -> Result<Polygon> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::GeoJson(e.to_string()))?;
        Polygon::from_geojson(&v)
    }

    pub fn to_geojson(&self) -> Value {
        let rings: Vec<Vec<[f64; 2]>> = self
            .rings
            .iter()
            .map(|r| {
                let mut closed = r.clone();
                closed.push(r[0]);
                closed
            })
            .collect();
        json!({ "type": "Polygon", "coordinates": rings })
    }

    /// Even-odd containment; points on the outline count as inside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let p = [lon, lat];
        if !self.bbox.contains_point(p) {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if on_segment(p, a, b) {
                return true;
            }
            // vertices exactly on the ray are treated as lying above it
            if (a[1] >= lat) != (b[1] >= lat) {
                let x = a[0] + (lat - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if lon < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn classify(&self, rect: &Rect) -> CellRelation {
        if !self.bbox.interiors_overlap(rect) {
            return CellRelation::Disjoint;
        }
        if self.edges().any(|(a, b)| rect.segment_enters_interior(a, b)) {
            return CellRelation::Intersects;
        }
        // No outline passes through the open rectangle, so it lies wholly on
        // one side; its center decides which.
        let [cx, cy] = rect.center();
        if self.contains(cx, cy) {
            CellRelation::Contained
        } else {
            CellRelation::Disjoint
        }
    }

    /// Distance in meters from a point to the polygon: zero inside, else the
    /// shortest distance to any ring edge. Longitude is scaled at the
    /// latitude of the query point.
    pub fn distance_m(&self, lon: f64, lat: f64) -> f64 {
        if self.contains(lon, lat) {
            return 0.0;
        }
        let kx = METERS_PER_DEG_LON * lat.to_radians().cos();
        let ky = METERS_PER_DEG_LAT;
        let local = |v: [f64; 2]| [(v[0] - lon) * kx, (v[1] - lat) * ky];
        self.edges()
            .map(|(a, b)| point_segment_distance([0.0, 0.0], local(a), local(b)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[inline]
fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

#[inline]
fn within_box(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

#[inline]
fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    within_box(p, a, b) && cross(a, b, p) == 0.0
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_box(a, c, d))
        || (d2 == 0.0 && within_box(b, c, d))
        || (d3 == 0.0 && within_box(c, a, b))
        || (d4 == 0.0 && within_box(d, a, b))
}

/// First pair of non-adjacent intersecting edges, or adjacent edges that
/// fold back onto each other.
fn self_intersection(ring: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = ring.len();
    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        // adjacent edge i+1 shares vertex b; reject a fold-back
        let (_, c) = edge((i + 1) % n);
        if cross(a, b, c) == 0.0 && (c[0] - b[0]) * (a[0] - b[0]) + (c[1] - b[1]) * (a[1] - b[1]) > 0.0 {
            return Some((i, (i + 1) % n));
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - qx).hypot(p[1] - qy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::rectangle(Rect::new(x0, y0, x1, y1)).unwrap()
    }

    #[test]
    fn validation() {
        assert!(Polygon::new(vec![]).is_err());
        assert!(Polygon::new(vec![vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]]).is_err());
        // bow tie
        let bow = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(Polygon::new(vec![bow]), Err(Error::InvalidPolygon(_))));
        // closing vertex is dropped
        let p = Polygon::new(vec![vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]]).unwrap();
        assert_eq!(p.rings()[0].len(), 3);
        assert!(Polygon::new(vec![vec![[0.0, 0.0], [f64::NAN, 0.0], [1.0, 1.0]]]).is_err());
        // spike folding back along an edge
        let spike = vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        assert!(Polygon::new(vec![spike]).is_err());
    }

    #[test]
    fn containment_with_boundary_and_holes() {
        let outer = vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        let hole = vec![[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]];
        let p = Polygon::new(vec![outer, hole]).unwrap();
        assert!(p.contains(0.5, 0.5));
        assert!(!p.contains(2.0, 2.0));
        assert!(p.contains(1.0, 2.0)); // on the hole outline
        assert!(p.contains(4.0, 4.0)); // vertex
        assert!(p.contains(2.0, 0.0)); // edge
        assert!(!p.contains(5.0, 2.0));
        // ray through a vertex
        let diamond = Polygon::new(vec![vec![[0.0, 1.0], [1.0, 0.0], [2.0, 1.0], [1.0, 2.0]]]).unwrap();
        assert!(diamond.contains(0.5, 1.0));
        assert!(!diamond.contains(-0.5, 1.0));
        assert!(!diamond.contains(2.5, 1.0));
    }

    #[test]
    fn classification() {
        let unit = square(0.0, 0.0, 1.0, 1.0);
        assert_eq!(unit.classify(&Rect::new(0.0, 0.0, 1.0, 1.0)), CellRelation::Contained);
        let q0 = square(0.0, 0.0, 0.4, 0.4);
        assert_eq!(q0.classify(&Rect::new(0.5, 0.5, 1.0, 1.0)), CellRelation::Disjoint);
        // touching along a shared side only
        let q2 = square(0.0, 0.5, 0.5, 1.0);
        assert_eq!(q2.classify(&Rect::new(0.5, 0.5, 1.0, 1.0)), CellRelation::Disjoint);
        assert_eq!(q2.classify(&Rect::new(0.0, 0.5, 0.5, 1.0)), CellRelation::Contained);
        assert_eq!(q2.classify(&Rect::new(0.0, 0.0, 1.0, 1.0)), CellRelation::Intersects);
        // polygon strictly inside the cell
        assert_eq!(square(0.2, 0.2, 0.3, 0.3).classify(&Rect::new(0.0, 0.0, 1.0, 1.0)), CellRelation::Intersects);
        // frame whose hole is exactly the cell
        let frame = Polygon::new(vec![
            vec![[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [0.0, 3.0]],
            vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]],
        ])
        .unwrap();
        assert_eq!(frame.classify(&Rect::new(1.0, 1.0, 2.0, 2.0)), CellRelation::Disjoint);
    }

    #[test]
    fn triangle_cutting_a_corner_intersects() {
        let tri = Polygon::new(vec![vec![[0.8, 0.8], [1.2, 0.8], [0.8, 1.2]]]).unwrap();
        let cell = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(tri.classify(&cell), CellRelation::Intersects);
        // dense sampling finds points both inside and outside
        let (mut inside, mut outside) = (0, 0);
        for i in 0..=100 {
            for j in 0..=100 {
                if tri.contains(i as f64 / 100.0, j as f64 / 100.0) {
                    inside += 1;
                } else {
                    outside += 1;
                }
            }
        }
        assert!(inside > 0 && outside > 0);
    }

    #[test]
    fn distances() {
        let p = Polygon::new(vec![vec![[-74.0, 40.6], [-73.8, 40.6], [-73.8, 40.8], [-74.0, 40.8]]]).unwrap();
        assert_eq!(p.distance_m(-74.0, 40.6), 0.0);
        assert_eq!(p.distance_m(-73.9, 40.7), 0.0);
        // south of the bottom edge: purely meridional
        let d = 0.01;
        let got = p.distance_m(-73.9, 40.6 - d);
        let want = d * METERS_PER_DEG_LAT;
        assert!((got - want).abs() / want < 0.005);
        // west of the left edge
        let got = p.distance_m(-74.0 - d, 40.7);
        let want = d * METERS_PER_DEG_LON * 40.7f64.to_radians().cos();
        assert!((got - want).abs() / want < 0.005);
    }

    #[test]
    fn geojson_round_trip() {
        let s = r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}"#;
        let p = Polygon::from_geojson_str(s).unwrap();
        assert_eq!(p.rings()[0].len(), 4);
        let back = Polygon::from_geojson(&p.to_geojson()).unwrap();
        assert_eq!(back, p);
        let feat = format!(r#"{{"type":"Feature","properties":{{}},"geometry":{s}}}"#);
        assert_eq!(Polygon::from_geojson_str(&feat).unwrap(), p);
        assert!(Polygon::from_geojson_str(r#"{"type":"Point","coordinates":[0,0]}"#).is_err());
        assert!(Polygon::from_geojson_str(r#"{"type":"Polygon","coordinates":[[[0,0],[1,1]]]}"#).is_err());
    }
}
