//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"KGPN"                     magic
//! u32                         format version (1)
//! u32 + bytes                 architecture descriptor (ASCII)
//! u64                         parameter count n
//! f64 * n                     parameters
//! f64 * n                     Adam first moment
//! f64 * n                     Adam second moment
//! u64                         Adam step count
//! f64                         learning rate
//! ```

use std::path::Path;

use super::{Architecture, OptimizerState, PolicyNetwork};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"KGPN";
const VERSION: u32 = 1;

pub fn write_checkpoint(net: &PolicyNetwork, opt: &OptimizerState) -> Vec<u8> {
    let descriptor = net.architecture().to_string();
    let n = net.num_params();
    let mut out = Vec::with_capacity(32 + descriptor.len() + 24 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(descriptor.as_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for block in [net.params(), &opt.first_moment, &opt.second_moment] {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&opt.step_count.to_le_bytes());
    out.extend_from_slice(&opt.learning_rate.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("parameter count overflows")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> std::result::Result<(PolicyNetwork, OptimizerState), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic (expected KGPN)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let len = r.u32()? as usize;
    let descriptor = std::str::from_utf8(r.take(len)?)
        .map_err(|_| "architecture descriptor is not ASCII".to_string())?;
    let arch: Architecture = descriptor.parse().map_err(|e: Error| e.to_string())?;
    let n = r.u64()? as usize;
    if n != arch.param_count() {
        return Err(format!(
            "parameter count {n} does not match architecture `{arch}`"
        ));
    }
    let params = r.f64s(n)?;
    let first_moment = r.f64s(n)?;
    let second_moment = r.f64s(n)?;
    let step_count = r.u64()?;
    let learning_rate = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let net = PolicyNetwork::from_parts(arch, params).map_err(|e| e.to_string())?;
    let mut opt = OptimizerState::new(n, learning_rate);
    opt.first_moment = first_moment;
    opt.second_moment = second_moment;
    opt.step_count = step_count;
    Ok((net, opt))
}

pub fn save_checkpoint(path: &Path, net: &PolicyNetwork, opt: &OptimizerState) -> Result<()> {
    std::fs::write(path, write_checkpoint(net, opt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(PolicyNetwork, OptimizerState)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes).map_err(|msg| Error::parse(path, msg))
}
