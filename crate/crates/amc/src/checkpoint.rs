//! `FIFN` checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FIFN" | u32 version | u32 class count | u32 input size
//! class count × (u32 len, utf-8 name)
//! u32 tensor count
//! tensor count × (u32 name len, utf-8 name, u32 rank, rank × u32 dim, u64 offset)
//! u64 value count | value count × f32
//! ```
//!
//! Offsets count `f32` values from the start of the value block.

use std::fs;
use std::path::Path;

use amc_core::fifnet::{FifNet, FifNetSpec};
use amc_core::nn::{Param, ParamSet};

use crate::error::{HarnessError, IoContext, Result};

pub const MAGIC: &[u8; 4] = b"FIFN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub classes: Vec<String>,
    pub input_size: usize,
    pub params: ParamSet<f32>,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| bad("offset does not fit in memory"))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("name is not utf-8"))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, VERSION as usize);
        put_u32(&mut out, self.classes.len());
        put_u32(&mut out, self.input_size);
        for c in &self.classes {
            put_str(&mut out, c);
        }
        put_u32(&mut out, self.params.len());
        let mut offset = 0u64;
        for p in &self.params.entries {
            put_str(&mut out, &p.name);
            put_u32(&mut out, p.dims.len());
            for &d in &p.dims {
                put_u32(&mut out, d);
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += p.values.len() as u64;
        }
        out.extend_from_slice(&offset.to_le_bytes());
        for p in &self.params.entries {
            for v in &p.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(bad("missing FIFN magic"));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(bad(format!("version {version} is not supported (expected {VERSION})")));
        }
        let class_count = r.u32()?;
        let input_size = r.u32()?;
        let classes = (0..class_count).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let tensors = r.u32()?;
        let mut layout = Vec::new();
        for _ in 0..tensors {
            let name = r.string()?;
            let rank = r.u32()?;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let offset = r.u64()?;
            layout.push((name, dims, offset));
        }
        let total = r.u64()?;
        let raw = r.take(total.checked_mul(4).ok_or_else(|| bad("value count overflows"))?)?;
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let mut expected_offset = 0;
        let mut entries = Vec::with_capacity(layout.len());
        for (name, dims, offset) in layout {
            let len: usize = dims.iter().product();
            if offset != expected_offset || offset + len > total {
                return Err(bad(format!("tensor `{name}` has an inconsistent offset")));
            }
            expected_offset += len;
            entries.push(Param {
                name,
                dims,
                values: values[offset..offset + len].to_vec(),
            });
        }
        if expected_offset != total {
            return Err(bad("value block length does not match the tensor manifest"));
        }
        Ok(Self {
            classes,
            input_size,
            params: ParamSet { entries },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("fifn.tmp");
        fs::write(&tmp, self.encode()).at(&tmp)?;
        fs::rename(&tmp, path).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).at(path)?)
    }

    /// Rebuilds the network and checks that the stored tensors fit it.
    pub fn network(&self, spec: FifNetSpec) -> Result<FifNet> {
        if spec.input_size != self.input_size || spec.num_classes != self.classes.len() {
            return Err(bad(format!(
                "checkpoint is for {0}x{0} inputs and {1} classes, requested {2}x{2} and {3}",
                self.input_size,
                self.classes.len(),
                spec.input_size,
                spec.num_classes
            )));
        }
        let net = FifNet::new(spec)?;
        net.graph.check_params(&self.params)?;
        Ok(net)
    }

    /// Network with default hyperparameters for the stored size and classes.
    pub fn default_network(&self) -> Result<FifNet> {
        self.network(FifNetSpec::new(self.input_size, self.classes.len()))
    }
}
