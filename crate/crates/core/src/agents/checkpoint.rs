//! Model checkpoints: a flat `key=value` manifest plus named parameter blobs.
//!
//! `params.bin` layout, little-endian:
//!
//! ```text
//! magic "PHPM", version u32, count u32
//! per parameter: name (u32 length + utf-8), trainable u8, ndim u32,
//!                dims u64 * ndim, values f64 * product(dims)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{AgentError, Result};
use crate::io::{write_atomic, ByteError, Reader, Writer};
use crate::tensor::{ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"PHPM";
const VERSION: u32 = 1;

impl From<ByteError> for AgentError {
    fn from(e: ByteError) -> Self {
        AgentError::Checkpoint(format!("byte {}: {}", e.offset, e.msg))
    }
}

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(store.len() as u32);
    for p in store.iter() {
        w.str(&p.name);
        w.u8(p.trainable as u8);
        w.u32(p.value.shape().len() as u32);
        p.value.shape().iter().for_each(|d| w.u64(*d as u64));
        p.value.data().iter().for_each(|v| w.f64(*v));
    }
    w.0
}

pub fn decode_params(buf: &[u8]) -> Result<ParamStore> {
    let mut r = Reader::new(buf);
    if r.take(4, "magic")? != MAGIC {
        return Err(AgentError::Checkpoint("bad parameter file magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(AgentError::Checkpoint(format!("unsupported parameter file version {version}")));
    }
    let n = r.u32("count")? as usize;
    let mut store = ParamStore::new();
    for _ in 0..n {
        let name = r.str("name")?;
        let trainable = r.u8("trainable flag")? != 0;
        let ndim = r.u32("rank")? as usize;
        let shape = (0..ndim).map(|_| r.u64("extent").map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| r.f64("values")).collect::<std::result::Result<Vec<_>, _>>()?;
        store.add(name, Tensor::new(shape, data)?, trainable);
    }
    r.finish()?;
    Ok(store)
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: BTreeMap<String, String>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(manifest: BTreeMap<String, String>, params: ParamStore) -> Self {
        Checkpoint { manifest, params }
    }

    /// Writes `<dir>/<stem>.manifest` and `<dir>/<stem>.params.bin`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let io = |e: std::io::Error| AgentError::Checkpoint(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        // parameters first: a manifest only ever names a complete blob
        write_atomic(&dir.join(format!("{stem}.params.bin")), &encode_params(&self.params)).map_err(io)?;
        let text: String = self.manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        write_atomic(&dir.join(format!("{stem}.manifest")), text.as_bytes()).map_err(io)
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let io = |e: std::io::Error| AgentError::Checkpoint(format!("{}: {e}", dir.display()));
        let text = std::fs::read_to_string(dir.join(format!("{stem}.manifest"))).map_err(io)?;
        let mut manifest = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AgentError::Checkpoint(format!("manifest line without '=': {line:?}")))?;
            manifest.insert(k.to_string(), v.to_string());
        }
        let params = decode_params(&std::fs::read(dir.join(format!("{stem}.params.bin"))).map_err(io)?)?;
        Ok(Checkpoint { manifest, params })
    }

    /// Overwrite every parameter of `target` from this checkpoint. Names and
    /// shapes must match one-to-one.
    pub fn restore_into(&self, target: &mut ParamStore) -> Result<()> {
        if target.len() != self.params.len() {
            return Err(AgentError::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.params.len(),
                target.len()
            )));
        }
        let n = target.copy_matching(&self.params, |n| Some(n.to_string()));
        if n != target.len() {
            return Err(AgentError::Checkpoint(format!("only {n} of {} tensors matched", target.len())));
        }
        Ok(())
    }
}
