use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use geoblocks::cellgrid::{Domain, Polygon};
use geoblocks::geoblock::AggSpec;
use geoblocks::store::synth::random_polygons;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_REFRESH_EVERY: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    Base,
    Skewed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedPolygon {
    pub name: String,
    /// GeoJSON Polygon geometry.
    pub geometry: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub polygon: String,
    #[serde(default = "one")]
    pub repeat: usize,
    #[serde(default)]
    pub subset: Subset,
}

fn one() -> usize {
    1
}

fn default_aggs() -> String {
    "count".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub polygons: Vec<NamedPolygon>,
    pub sequence: Vec<Step>,
    #[serde(default = "default_aggs")]
    pub aggs: String,
    #[serde(default)]
    pub seed: u64,
}

/// A workload with polygons parsed and the sequence expanded.
#[derive(Clone, Debug)]
pub struct ResolvedWorkload {
    pub polygons: BTreeMap<String, Polygon>,
    pub queries: Vec<(String, Subset)>,
    pub spec: AggSpec,
}

impl WorkloadSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<WorkloadSpec> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing workload {}", path.display()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedWorkload> {
        let mut polygons = BTreeMap::new();
        for p in &self.polygons {
            let poly = Polygon::from_geojson(&p.geometry).with_context(|| format!("polygon `{}`", p.name))?;
            if polygons.insert(p.name.clone(), poly).is_some() {
                bail!("duplicate polygon name `{}`", p.name);
            }
        }
        let mut queries = Vec::new();
        for s in &self.sequence {
            if !polygons.contains_key(&s.polygon) {
                bail!("sequence names unknown polygon `{}`", s.polygon);
            }
            if s.repeat == 0 {
                bail!("repeat for `{}` must be at least 1", s.polygon);
            }
            queries.extend(std::iter::repeat_n((s.polygon.clone(), s.subset), s.repeat));
        }
        let spec: AggSpec = self.aggs.parse()?;
        Ok(ResolvedWorkload { polygons, queries, spec })
    }

    /// Every polygon once, then `skew_rounds` passes over a seeded random
    /// `skew_fraction` of them (rounded up).
    pub fn skewed(polygons: &[Polygon], skew_fraction: f64, skew_rounds: usize, aggs: &str, seed: u64) -> WorkloadSpec {
        let named: Vec<NamedPolygon> = polygons
            .iter()
            .enumerate()
            .map(|(i, p)| NamedPolygon { name: format!("p{i}"), geometry: p.to_geojson() })
            .collect();
        let mut sequence: Vec<Step> =
            named.iter().map(|p| Step { polygon: p.name.clone(), repeat: 1, subset: Subset::Base }).collect();
        let hot = skewed_indices(polygons.len(), skew_fraction, seed);
        for _ in 0..skew_rounds {
            for &i in &hot {
                sequence.push(Step { polygon: named[i].name.clone(), repeat: 1, subset: Subset::Skewed });
            }
        }
        WorkloadSpec { polygons: named, sequence, aggs: aggs.into(), seed }
    }

    /// [`WorkloadSpec::skewed`] over random star-shaped neighborhoods.
    pub fn synthetic(domain: &Domain, n: usize, skew_fraction: f64, skew_rounds: usize, aggs: &str, seed: u64) -> WorkloadSpec {
        let polys = random_polygons(domain, n, 0.02, 0.15, seed);
        WorkloadSpec::skewed(&polys, skew_fraction, skew_rounds, aggs, seed)
    }
}

/// Sorted indices of `ceil(fraction * n)` polygons picked with a seeded RNG.
pub fn skewed_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((n as f64 * fraction).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}
