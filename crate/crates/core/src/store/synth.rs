//! Deterministic taxi-like point data.
//!
//! Columns: `lon, lat, fare, tip, distance, passengers, pickup_time`. Fares
//! are log-normal with median `e^FARE_LN_MU`; the clustered mode draws most
//! points from Gaussian hotspots to mimic urban skew.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, LogNormal, Normal};

use super::{ColumnData, RawTable, Schema};
use crate::cellgrid::{Domain, Polygon, Rect};
use crate::error::{Error, Result};

pub const FARE_LN_MU: f64 = 2.3;
pub const FARE_LN_SIGMA: f64 = 0.6;
/// Share of clustered-mode points drawn from hotspots; the rest is uniform.
pub const HOTSPOT_SHARE: f64 = 0.9;
const EPOCH_2015: i64 = 1_420_070_400;
const YEAR_SECS: i64 = 365 * 86_400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform,
    /// `k` hotspots with standard deviation `spread` as a fraction of the
    /// domain extent.
    Clustered { k: usize, spread: f64 },
}

impl FromStr for Distribution {
    type Err = Error;

    /// `uniform` or `clustered:K:SPREAD`.
    fn from_str(s: &str) -> Result<Distribution> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["uniform"] => Ok(Distribution::Uniform),
            ["clustered", k, spread] => {
                let k: usize = k.parse().map_err(|_| Error::InvalidArgument(format!("bad hotspot count `{k}`")))?;
                let spread: f64 = spread
                    .parse()
                    .ok()
                    .filter(|s: &f64| *s > 0.0 && s.is_finite())
                    .ok_or_else(|| Error::InvalidArgument(format!("bad spread `{spread}`")))?;
                if k == 0 {
                    return Err(Error::InvalidArgument("clustered mode needs at least one hotspot".into()));
                }
                Ok(Distribution::Clustered { k, spread })
            }
            _ => Err(Error::InvalidArgument(format!("unknown distribution `{s}`"))),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => f.write_str("uniform"),
            Distribution::Clustered { k, spread } => write!(f, "clustered:{k}:{spread}"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub n: usize,
    pub distribution: Distribution,
    pub seed: u64,
    pub domain: Domain,
}

impl SynthConfig {
    pub fn new(n: usize, distribution: Distribution, seed: u64) -> SynthConfig {
        SynthConfig { n, distribution, seed, domain: Domain::NYC }
    }
}

pub fn schema() -> Schema {
    "fare:numeric,tip:numeric,distance:numeric,passengers:numeric,pickup_time:temporal"
        .parse()
        .expect("static schema")
}

struct Hotspot {
    lon: f64,
    lat: f64,
    sd_lon: f64,
    sd_lat: f64,
}

impl Hotspot {
    fn rect(&self, d: &Domain) -> Rect {
        Rect::new(
            (self.lon - 3.0 * self.sd_lon).max(d.min_lon),
            (self.lat - 3.0 * self.sd_lat).max(d.min_lat),
            (self.lon + 3.0 * self.sd_lon).min(d.max_lon),
            (self.lat + 3.0 * self.sd_lat).min(d.max_lat),
        )
    }
}

fn hotspots(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Hotspot> {
    let Distribution::Clustered { k, spread } = cfg.distribution else {
        return Vec::new();
    };
    let d = cfg.domain;
    (0..k)
        .map(|_| Hotspot {
            lon: d.min_lon + d.width() * rng.random_range(0.1..0.9),
            lat: d.min_lat + d.height() * rng.random_range(0.1..0.9),
            sd_lon: d.width() * spread,
            sd_lat: d.height() * spread,
        })
        .collect()
}

/// The generator-side hotspot rectangles (center ± 3 standard deviations).
pub fn hotspot_rects(cfg: &SynthConfig) -> Vec<Rect> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    hotspots(cfg, &mut rng).iter().map(|h| h.rect(&cfg.domain)).collect()
}

/// Generates the points in memory.
pub fn generate_raw(cfg: &SynthConfig) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spots = hotspots(cfg, &mut rng);
    let d = cfg.domain;
    let fare_dist = LogNormal::new(FARE_LN_MU, FARE_LN_SIGMA).expect("valid log-normal");
    let dist_dist = Exp::new(1.0 / 3.0).expect("valid exponential");
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    let mut t = RawTable::new(schema());
    t.lon.reserve(cfg.n);
    t.lat.reserve(cfg.n);
    let (mut fare, mut tip, mut distance, mut passengers, mut pickup) = (
        Vec::with_capacity(cfg.n),
        Vec::with_capacity(cfg.n),
        Vec::with_capacity(cfg.n),
        Vec::with_capacity(cfg.n),
        Vec::with_capacity(cfg.n),
    );
    for _ in 0..cfg.n {
        let (lon, lat) = if !spots.is_empty() && rng.random_bool(HOTSPOT_SHARE) {
            let h = &spots[rng.random_range(0..spots.len())];
            loop {
                let lon = h.lon + h.sd_lon * std_normal.sample(&mut rng);
                let lat = h.lat + h.sd_lat * std_normal.sample(&mut rng);
                if d.contains(lon, lat) {
                    break (lon, lat);
                }
            }
        } else {
            (
                d.min_lon + d.width() * rng.random::<f64>(),
                d.min_lat + d.height() * rng.random::<f64>(),
            )
        };
        t.lon.push(lon);
        t.lat.push(lat);
        let f: f64 = fare_dist.sample(&mut rng);
        fare.push(f);
        tip.push(f * rng.random_range(0.0..0.3));
        distance.push(dist_dist.sample(&mut rng));
        passengers.push(rng.random_range(1..=6) as f64);
        pickup.push(EPOCH_2015 + rng.random_range(0..YEAR_SECS));
    }
    t.columns = vec![
        ColumnData::Numeric(fare),
        ColumnData::Numeric(tip),
        ColumnData::Numeric(distance),
        ColumnData::Numeric(passengers),
        ColumnData::Temporal(pickup),
    ];
    t
}

/// Writes the generated points as CSV with a header row.
pub fn write_csv<W: Write>(cfg: &SynthConfig, out: W) -> Result<()> {
    let raw = generate_raw(cfg);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lon", "lat", "fare", "tip", "distance", "passengers", "pickup_time"])?;
    for i in 0..raw.len() {
        let mut rec: Vec<String> = vec![raw.lon[i].to_string(), raw.lat[i].to_string()];
        rec.extend(raw.columns.iter().map(|c| match c {
            ColumnData::Numeric(v) => v[i].to_string(),
            ColumnData::Temporal(v) => v[i].to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn synth_generate(cfg: &SynthConfig) -> String {
    let mut buf = Vec::new();
    write_csv(cfg, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Random star-shaped polygons standing in for neighborhoods. Radii are
/// between `min_frac` and `max_frac` of the smaller domain extent.
pub fn random_polygons(domain: &Domain, n: usize, min_frac: f64, max_frac: f64, seed: u64) -> Vec<Polygon> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = domain.width().min(domain.height());
    (0..n)
        .map(|_| {
            let cx = domain.min_lon + domain.width() * rng.random_range(0.05..0.95);
            let cy = domain.min_lat + domain.height() * rng.random_range(0.05..0.95);
            let r = extent * rng.random_range(min_frac..=max_frac);
            let k = rng.random_range(5..=12);
            let step = std::f64::consts::TAU / k as f64;
            let angles: Vec<f64> = (0..k).map(|i| (i as f64 + rng.random_range(0.1..0.9)) * step).collect();
            let ring = angles
                .iter()
                .map(|a| {
                    let rr = r * rng.random_range(0.4..=1.0);
                    [cx + rr * a.cos(), cy + rr * a.sin()]
                })
                .collect();
            Polygon::new(vec![ring]).expect("star-shaped rings are simple")
        })
        .collect()
}
