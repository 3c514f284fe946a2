//! Model checkpoints: `CQCM`, a `u16` version, the network configuration as
//! canonical JSON (`u32` byte length first), a `u64` parameter count and the
//! little-endian `f64` parameters in layer order (weights, then biases).

use std::io::{Read, Write};

use super::network::{Network, ParameterSet};
use super::NetworkConfig;
use crate::json::to_canonical_string;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CQCM";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, net: &Network) -> Result<()> {
    let json = to_canonical_string(&net.config)?;
    let values = net.params.flat_values();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&u32::try_from(json.len()).map_err(|_| Error::Format("config too large".into()))?.to_le_bytes())?;
    out.write_all(json.as_bytes())?;
    out.write_all(&(values.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Network> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let mut b2 = [0u8; 2];
    input.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
    input.read_exact(&mut json)?;
    let config: NetworkConfig = serde_json::from_slice(&json)?;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != n * 8 {
        return Err(Error::Format(format!("expected {n} parameters, found {} bytes", raw.len())));
    }
    let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let params = ParameterSet::from_flat(&config, &values)?;
    Network::from_parts(config, params)
}
