//! External per-frame features.
//!
//! `PHSF` v1, little-endian:
//! magic `PHSF`, version u32, dtype u8 (4 = f32, 8 = f64), scenes u32,
//! frames u32, dims u32, properties u32; per property its name (u32 length +
//! UTF-8), bin count u32 and that many f64 bin values; then per scene its
//! property bins (u32 each), outcome f64 (NaN when absent) and
//! `frames * dims` features in the declared dtype.

use std::path::Path;

use super::{io_err, HarnessError, Result};
use crate::env::{Dataset, Domain, PropertyGrid, Scene};
use crate::io::{ByteError, Reader, Writer};

const MAGIC: &[u8; 4] = b"PHSF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureDtype {
    F32,
    F64,
}

impl From<ByteError> for HarnessError {
    fn from(e: ByteError) -> Self {
        HarnessError::Features { offset: e.offset, msg: e.msg }
    }
}

/// Serialize a dataset's features; f32 output rounds every value.
pub fn encode_features(ds: &Dataset, dtype: FeatureDtype) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(match dtype {
        FeatureDtype::F32 => 4,
        FeatureDtype::F64 => 8,
    });
    w.u32(ds.len() as u32);
    w.u32(ds.frames() as u32);
    w.u32(ds.dims() as u32);
    w.u32(ds.grid.len() as u32);
    for p in ds.grid.properties() {
        w.str(&p.name);
        w.u32(p.bins.len() as u32);
        p.bins.iter().for_each(|b| w.f64(*b));
    }
    for s in &ds.scenes {
        s.property_bins.iter().for_each(|b| w.u32(*b as u32));
        w.f64(s.outcome.unwrap_or(f64::NAN));
        for &x in &s.features {
            match dtype {
                FeatureDtype::F32 => w.f32(x as f32),
                FeatureDtype::F64 => w.f64(x),
            }
        }
    }
    w.0
}

pub fn decode_features(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    if r.take(4, "magic")? != MAGIC {
        return Err(r.err(0, "not a PHSF feature file").into());
    }
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err(at, format!("unsupported version {version}")).into());
    }
    let at = r.pos;
    let dtype = match r.u8("dtype")? {
        4 => FeatureDtype::F32,
        8 => FeatureDtype::F64,
        d => return Err(r.err(at, format!("unknown dtype {d}")).into()),
    };
    let n = r.u32("scene count")? as usize;
    let frames = r.u32("frames")? as usize;
    let dims = r.u32("dims")? as usize;
    let np = r.u32("property count")? as usize;
    let mut props = Vec::with_capacity(np);
    for _ in 0..np {
        let name = r.str("property name")?;
        let nb = r.u32("bin count")? as usize;
        let bins = (0..nb).map(|_| r.f64("bin value")).collect::<std::result::Result<Vec<_>, ByteError>>()?;
        props.push((name, bins));
    }
    let grid = PropertyGrid::new(props)?;
    let mut scenes = Vec::with_capacity(n);
    for id in 0..n {
        let at = r.pos;
        let bins = (0..np).map(|_| r.u32("bin").map(|b| b as usize)).collect::<std::result::Result<Vec<_>, ByteError>>()?;
        if let Some(b) = bins.iter().find(|b| **b >= grid.bins_per_property()) {
            return Err(r.err(at, format!("scene {id} bin {b} outside the grid")).into());
        }
        let outcome = r.f64("outcome")?;
        let features = (0..frames * dims)
            .map(|_| match dtype {
                FeatureDtype::F32 => r.f32("feature").map(f64::from),
                FeatureDtype::F64 => r.f64("feature"),
            })
            .collect::<std::result::Result<Vec<_>, ByteError>>()?;
        scenes.push(Scene {
            id,
            features,
            frames,
            dims,
            property_values: grid.values(&bins),
            property_bins: bins,
            nuisance_seed: 0,
            outcome: (!outcome.is_nan()).then_some(outcome),
        });
    }
    r.finish()?;
    Ok(Dataset::new(Domain::External, grid, scenes)?)
}

pub fn ingest_features(path: &Path) -> Result<Dataset> {
    decode_features(&std::fs::read(path).map_err(io_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_dtypes() {
        let ds = Dataset::generate(Domain::Collision, 30, 2).unwrap();
        let back = decode_features(&encode_features(&ds, FeatureDtype::F64)).unwrap();
        assert_eq!(back.domain, Domain::External);
        assert_eq!(back.grid, ds.grid);
        for (a, b) in back.scenes.iter().zip(&ds.scenes) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.property_bins, b.property_bins);
            assert_eq!(a.outcome, b.outcome);
        }
        let lossy = decode_features(&encode_features(&ds, FeatureDtype::F32)).unwrap();
        assert_eq!(lossy.scenes[3].features[5], ds.scenes[3].features[5] as f32 as f64);
    }

    #[test]
    fn truncation_reports_offset() {
        let ds = Dataset::generate(Domain::SpringMass, 5, 0).unwrap();
        let buf = encode_features(&ds, FeatureDtype::F32);
        match decode_features(&buf[..buf.len() - 2]) {
            Err(HarnessError::Features { offset, .. }) => assert!(offset > 0 && offset < buf.len()),
            other => panic!("expected a feature error, got {other:?}"),
        }
    }
}
