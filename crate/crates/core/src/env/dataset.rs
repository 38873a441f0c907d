//! Scene datasets and their on-disk layout.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic     4 bytes  "PHSC"
//! version   u32      1
//! domain    u32      Domain::code
//! frames    u32      T
//! dims      u32      D
//! n_scenes  u32
//! n_props   u32
//! per property: name_len u32, name utf-8, n_bins u32, bin values f64 * n_bins
//! features  f64 * n_scenes * T * D   (scene-major, then frame, then dim)
//! bins      u32 * n_scenes * n_props
//! seeds     u64 * n_scenes
//! outcomes  f64 * n_scenes           (NaN when the domain has none)
//! ```
//!
//! Property values are not stored; they are recovered from the grid.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    gen_abstract_scenes, gen_collision_trajectories, gen_ramp_trajectories, gen_spring_mass, EnvError, PropertyGrid,
    Result, Scene,
};
use crate::io::{write_atomic, ByteError, Reader, Writer};
use crate::seed;

const MAGIC: &[u8; 4] = b"PHSC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    SpringMass,
    Ramp,
    Collision,
    AbstractScenes,
    /// Features supplied from outside.
    External,
}

impl Domain {
    pub fn code(self) -> u32 {
        match self {
            Domain::SpringMass => 0,
            Domain::Ramp => 1,
            Domain::Collision => 2,
            Domain::AbstractScenes => 3,
            Domain::External => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Domain::SpringMass,
            1 => Domain::Ramp,
            2 => Domain::Collision,
            3 => Domain::AbstractScenes,
            4 => Domain::External,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::SpringMass => "spring_mass",
            Domain::Ramp => "ramp",
            Domain::Collision => "collision",
            Domain::AbstractScenes => "abstract_scenes",
            Domain::External => "external",
        }
    }

    pub fn grid(self) -> Option<PropertyGrid> {
        match self {
            Domain::SpringMass => Some(PropertyGrid::spring_mass()),
            Domain::Ramp => Some(PropertyGrid::ramp()),
            Domain::Collision => Some(PropertyGrid::collision()),
            Domain::AbstractScenes => Some(PropertyGrid::abstract_scenes()),
            Domain::External => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Domain {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self> {
        [Domain::SpringMass, Domain::Ramp, Domain::Collision, Domain::AbstractScenes, Domain::External]
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| EnvError::InvalidParameter(format!("unknown domain {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain: Domain,
    pub grid: PropertyGrid,
    /// `scenes[i].id == i`.
    pub scenes: Vec<Scene>,
}

impl Dataset {
    /// Generate `n_scenes` scenes of a built-in domain from `seed`.
    pub fn generate(domain: Domain, n_scenes: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::stream(seed, "scenes");
        let grid = domain
            .grid()
            .ok_or_else(|| EnvError::InvalidParameter("external datasets are ingested, not generated".into()))?;
        let scenes = match domain {
            Domain::SpringMass => gen_spring_mass(n_scenes, &grid, &mut rng)?,
            Domain::Ramp => gen_ramp_trajectories(n_scenes, &grid, &mut rng)?,
            Domain::Collision => gen_collision_trajectories(n_scenes, &grid, &mut rng)?,
            Domain::AbstractScenes => gen_abstract_scenes(n_scenes, &mut rng),
            Domain::External => unreachable!(),
        };
        Dataset::new(domain, grid, scenes)
    }

    pub fn new(domain: Domain, grid: PropertyGrid, scenes: Vec<Scene>) -> Result<Self> {
        let ds = Dataset { domain, grid, scenes };
        ds.validate()?;
        Ok(ds)
    }

    pub fn frames(&self) -> usize {
        self.scenes.first().map_or(0, |s| s.frames)
    }

    pub fn dims(&self) -> usize {
        self.scenes.first().map_or(0, |s| s.dims)
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let (t, d) = (self.frames(), self.dims());
        for (i, s) in self.scenes.iter().enumerate() {
            if s.id != i {
                return Err(EnvError::InvalidParameter(format!("scene at index {i} has id {}", s.id)));
            }
            if s.frames != t || s.dims != d || s.features.len() != t * d {
                return Err(EnvError::InvalidParameter(format!("scene {i} has shape {}x{}, expected {t}x{d}", s.frames, s.dims)));
            }
            if !s.is_finite() {
                return Err(EnvError::InvalidParameter(format!("scene {i} has non-finite features")));
            }
            if s.property_bins.len() != self.grid.len() {
                return Err(EnvError::InvalidParameter(format!("scene {i} has {} property bins", s.property_bins.len())));
            }
            for (p, &b) in s.property_bins.iter().enumerate() {
                if b >= self.grid.properties()[p].bins.len() {
                    return Err(EnvError::InvalidParameter(format!("scene {i} property {p} bin {b} out of range")));
                }
            }
        }
        Ok(())
    }

    pub fn outcomes(&self) -> Option<Vec<f64>> {
        self.scenes.iter().map(|s| s.outcome).collect()
    }
}

/// Per-feature z-scoring with statistics pooled over frames of the fitting
/// scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Dimensions with (near) zero spread keep unit scale.
    pub fn fit(scenes: &[Scene], ids: &[usize]) -> Self {
        let d = scenes[ids[0]].dims;
        let mut mean = vec![0.0; d];
        let mut count = 0usize;
        for &i in ids {
            for row in scenes[i].features.chunks(d) {
                mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                count += 1;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; d];
        for &i in ids {
            for row in scenes[i].features.chunks(d) {
                for j in 0..d {
                    var[j] += (row[j] - mean[j]).powi(2);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        features.iter().enumerate().map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d]).collect()
    }
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(ds.domain.code());
    w.u32(ds.frames() as u32);
    w.u32(ds.dims() as u32);
    w.u32(ds.len() as u32);
    w.u32(ds.grid.len() as u32);
    for p in ds.grid.properties() {
        w.str(&p.name);
        w.u32(p.bins.len() as u32);
        p.bins.iter().for_each(|v| w.f64(*v));
    }
    for s in &ds.scenes {
        s.features.iter().for_each(|v| w.f64(*v));
    }
    for s in &ds.scenes {
        s.property_bins.iter().for_each(|b| w.u32(*b as u32));
    }
    for s in &ds.scenes {
        w.u64(s.nuisance_seed);
    }
    for s in &ds.scenes {
        w.f64(s.outcome.unwrap_or(f64::NAN));
    }
    w.0
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    if r.take(4, "magic")? != MAGIC {
        return Err(EnvError::Format { offset: 0, msg: "bad magic".into() });
    }
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(EnvError::Format { offset: at, msg: format!("unsupported version {version}") });
    }
    let at = r.pos;
    let domain = Domain::from_code(r.u32("domain")?)
        .ok_or_else(|| EnvError::Format { offset: at, msg: "unknown domain code".into() })?;
    let t = r.u32("frames")? as usize;
    let d = r.u32("dims")? as usize;
    let n = r.u32("scene count")? as usize;
    let n_props = r.u32("property count")? as usize;
    let mut props = Vec::with_capacity(n_props);
    for _ in 0..n_props {
        let name = r.str("property name")?;
        let nb = r.u32("bin count")? as usize;
        let bins = (0..nb).map(|_| r.f64("bin value")).collect::<std::result::Result<Vec<_>, ByteError>>()?;
        props.push((name, bins));
    }
    let grid = PropertyGrid::new(props)?;
    let feat_at = r.pos;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        features.push((0..t * d).map(|_| r.f64("features")).collect::<std::result::Result<Vec<_>, ByteError>>()?);
    }
    let mut bins = Vec::with_capacity(n);
    for _ in 0..n {
        bins.push((0..n_props).map(|_| r.u32("bin index").map(|b| b as usize)).collect::<std::result::Result<Vec<_>, ByteError>>()?);
    }
    let seeds = (0..n).map(|_| r.u64("nuisance seed")).collect::<std::result::Result<Vec<_>, ByteError>>()?;
    let outcomes = (0..n).map(|_| r.f64("outcome")).collect::<std::result::Result<Vec<_>, ByteError>>()?;
    r.finish()?;
    let mut scenes = Vec::with_capacity(n);
    for (id, ((f, b), (seed, outcome))) in features.into_iter().zip(bins).zip(seeds.into_iter().zip(outcomes)).enumerate() {
        if let Some(p) = b.iter().enumerate().find(|(p, bin)| **bin >= grid.properties()[*p].bins.len()) {
            return Err(EnvError::Format {
                offset: feat_at + n * t * d * 8 + (id * n_props + p.0) * 4,
                msg: format!("scene {id} bin index out of range"),
            });
        }
        scenes.push(Scene {
            id,
            features: f,
            frames: t,
            dims: d,
            property_values: grid.values(&b),
            property_bins: b,
            nuisance_seed: seed,
            outcome: if outcome.is_nan() { None } else { Some(outcome) },
        });
    }
    Dataset::new(domain, grid, scenes)
}

impl From<ByteError> for EnvError {
    fn from(e: ByteError) -> Self {
        EnvError::Format { offset: e.offset, msg: e.msg }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> EnvError {
    EnvError::Io(format!("{}: {e}", path.display()))
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, &encode_dataset(ds)).map_err(|e| io_err(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path).map_err(|e| io_err(path, e))?)
}

/// One line per scene: `id cell nuisance_seed`, with the cell written as
/// comma-separated bin indices.
pub fn manifest_text(ds: &Dataset) -> String {
    let mut out = format!("# domain={} scenes={}\n", ds.domain, ds.len());
    for s in &ds.scenes {
        let cell: Vec<String> = s.property_bins.iter().map(|b| b.to_string()).collect();
        out.push_str(&format!("{} {} {}\n", s.id, cell.join(","), s.nuisance_seed));
    }
    out
}

pub fn write_manifest(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, manifest_text(ds).as_bytes()).map_err(|e| io_err(path, e))
}

/// `(id, cell, nuisance_seed)` records.
pub fn read_manifest(path: &Path) -> Result<Vec<(usize, Vec<usize>, u64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_manifest(&text)
}

pub(crate) fn parse_manifest(text: &str) -> Result<Vec<(usize, Vec<usize>, u64)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || EnvError::InvalidParameter(format!("manifest line {}: {line:?}", lineno + 1));
        let mut parts = line.split_whitespace();
        let id = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let cell = parts
            .next()
            .ok_or_else(bad)?
            .split(',')
            .map(|b| b.parse().map_err(|_| bad()))
            .collect::<Result<Vec<usize>>>()?;
        let seed = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        out.push((id, cell, seed));
    }
    Ok(out)
}
