//! Model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "XMCK" | version u32
//! library version  len u32 | utf-8
//! config TOML      len u32 | utf-8
//! array count u32
//! per array: name len u32 | utf-8 | rows u32 | cols u32 | rows×cols f64
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{RunConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"XMCK";
const CHECKPOINT_VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(model: &TrainedModel, cfg: &RunConfig, mut w: W) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_str(&mut w, env!("CARGO_PKG_VERSION"))?;
    write_str(&mut w, &cfg.to_toml())?;
    let params = model.named_params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, m) in &params {
        write_str(&mut w, name)?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        w.write_all(&(m.cols() as u32).to_le_bytes())?;
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("checkpoint truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    fill(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    fill(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("string is not utf-8".into()))
}

/// Reads a checkpoint; the model's shapes come from the embedded config.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(TrainedModel, RunConfig)> {
    let mut magic = [0u8; 4];
    fill(&mut r, &mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic, expected XMCK".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let _library = read_str(&mut r)?;
    let cfg = RunConfig::from_toml(&read_str(&mut r)?)?;
    let count = read_u32(&mut r)? as usize;
    let mut arrays = BTreeMap::new();
    for _ in 0..count {
        let name = read_str(&mut r)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut raw = vec![0u8; rows * cols * 8];
        fill(&mut r, &mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        arrays.insert(name, Matrix::new(rows, cols, data)?);
    }

    let mut model = TrainedModel::init(&cfg);
    let tau = arrays
        .remove("tau")
        .filter(|m| m.shape() == (1, 1))
        .ok_or_else(|| Error::Format("missing tau".into()))?;
    model.tau = tau.data()[0];
    for (name, slot) in model.named_params_mut() {
        let m = arrays
            .remove(&name)
            .ok_or_else(|| Error::Format(format!("missing array {name}")))?;
        if m.shape() != slot.shape() {
            return Err(Error::Format(format!(
                "array {name} has shape {:?}, expected {:?}",
                m.shape(),
                slot.shape()
            )));
        }
        *slot = m;
    }
    if let Some(extra) = arrays.keys().next() {
        return Err(Error::Format(format!("unexpected array {extra}")));
    }
    Ok((model, cfg))
}

pub fn save_checkpoint(model: &TrainedModel, cfg: &RunConfig, path: &Path) -> Result<()> {
    write_checkpoint(model, cfg, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainedModel, RunConfig)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            dim: 16,
            cond_dim: 8,
            global_dim: 8,
            n_masks: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = small();
        let mut model = TrainedModel::init(&cfg);
        model.tau = 0.0423;
        let mut buf = Vec::new();
        write_checkpoint(&model, &cfg, &mut buf).unwrap();
        let (back, cfg2) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_damage() {
        let cfg = small();
        let mut buf = Vec::new();
        write_checkpoint(&TrainedModel::init(&cfg), &cfg, &mut buf).unwrap();
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'Y';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(Error::Format(_))));
    }
}
