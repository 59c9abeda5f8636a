//! `PXCK` checkpoint container.
//!
//! ```text
//! "PXCK"  u8 version (=1)
//! u32 config_len  config_len bytes of UTF-8 JSON
//! u64 seed
//! u32 array_count
//! per array: u16 name_len  name  u8 ndim  ndim × u32 dim  prod(dims) × f64
//! ```
//!
//! All integers and floats little-endian.

use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{SeqModel, SeqModelConfig};
use crate::optim::Params;

pub const MAGIC: &[u8; 4] = b"PXCK";
pub const VERSION: u8 = 1;
const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Value,
    pub seed: u64,
    pub arrays: Vec<(String, ArrayD<f64>)>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let cfg = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&len_u32(cfg.len())?.to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&len_u32(self.arrays.len())?.to_le_bytes());
        for (name, arr) in &self.arrays {
            let n = u16::try_from(name.len())
                .map_err(|_| Error::InvalidArgument(format!("array name too long: {name}")))?;
            out.extend_from_slice(&n.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            if arr.ndim() > MAX_NDIM {
                return Err(Error::InvalidArgument(format!("{name} has {} dimensions", arr.ndim())));
            }
            out.push(arr.ndim() as u8);
            for &d in arr.shape() {
                out.extend_from_slice(&len_u32(d)?.to_le_bytes());
            }
            for &x in arr.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        if c.take(4, "magic")? != MAGIC {
            return Err(Error::corrupt(0, "bad magic"));
        }
        let version = c.take(1, "version")?[0];
        if version != VERSION {
            return Err(Error::corrupt(4, format!("unsupported version {version}")));
        }
        let cfg_len = c.u32("config length")? as usize;
        let at = c.pos;
        let cfg = c.take(cfg_len, "config")?;
        let config: Value =
            serde_json::from_slice(cfg).map_err(|e| Error::corrupt(at, format!("config json: {e}")))?;
        let seed = u64::from_le_bytes(c.take(8, "seed")?.try_into().expect("8 bytes"));
        let count = c.u32("array count")? as usize;
        // Smallest possible array record is 3 bytes (empty name, ndim 0 needs 8 more).
        if count > c.remaining() / 3 {
            return Err(Error::corrupt(c.pos, format!("array count {count} exceeds file size")));
        }
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let at = c.pos;
            let nlen = u16::from_le_bytes(c.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(c.take(nlen, "name")?)
                .map_err(|_| Error::corrupt(at, "array name is not UTF-8"))?
                .to_string();
            let ndim = c.take(1, "ndim")?[0] as usize;
            if ndim > MAX_NDIM {
                return Err(Error::corrupt(at, format!("{ndim} dimensions")));
            }
            let mut dims = Vec::with_capacity(ndim);
            let mut total: usize = 1;
            for _ in 0..ndim {
                let d = c.u32("dimension")? as usize;
                total = total
                    .checked_mul(d)
                    .ok_or_else(|| Error::corrupt(at, "array size overflows"))?;
                dims.push(d);
            }
            if total > c.remaining() / 8 {
                return Err(Error::corrupt(c.pos, format!("truncated data for {name}")));
            }
            let raw = c.take(total * 8, "array data")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            // A zero dimension passes the size check even when the others overflow.
            let arr = ArrayD::from_shape_vec(IxDyn(&dims), data)
                .map_err(|e| Error::corrupt(at, format!("bad shape {dims:?} for {name}: {e}")))?;
            arrays.push((name, arr));
        }
        if c.pos != bytes.len() {
            return Err(Error::corrupt(c.pos, "trailing bytes"));
        }
        Ok(Self { config, seed, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn len_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} exceeds u32")))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::corrupt(self.pos, format!("truncated {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Packs a model. The config JSON holds the model config under `"model"`
/// plus any fields of `extra` (which must be an object or null).
pub fn from_model(model: &SeqModel, seed: u64, extra: Value) -> Result<Checkpoint> {
    let mut config = match extra {
        Value::Object(m) => m,
        Value::Null => serde_json::Map::new(),
        _ => return Err(Error::InvalidArgument("checkpoint extras must be a JSON object".into())),
    };
    config.insert("model".into(), serde_json::to_value(model.config)?);
    Ok(Checkpoint {
        config: Value::Object(config),
        seed,
        arrays: model
            .params
            .named()
            .into_iter()
            .map(|(n, a)| (n, a.clone().into_dyn()))
            .collect(),
    })
}

pub fn to_model(ck: &Checkpoint) -> Result<SeqModel> {
    let cfg_json = ck
        .config
        .get("model")
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no model config".into()))?;
    let config: SeqModelConfig = serde_json::from_value(cfg_json.clone())?;
    let mut model = SeqModel::new(config, &mut crate::rng::seeded(0))?;
    for (name, slot) in model.params.named_mut() {
        let arr = ck
            .array(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks {name}")))?;
        if arr.shape() != slot.shape() {
            return Err(Error::Shape(format!("{name}: expected {:?}, got {:?}", slot.shape(), arr.shape())));
        }
        *slot = arr
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| Error::Shape(format!("{name}: {e}")))?;
    }
    if ck.arrays.len() != model.params.named().len() {
        return Err(Error::Shape("checkpoint has extra arrays".into()));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &SeqModel, seed: u64, extra: Value) -> Result<()> {
    from_model(model, seed, extra)?.write(path)
}

pub fn load_model(path: &Path) -> Result<(SeqModel, Checkpoint)> {
    let ck = Checkpoint::read(path)?;
    Ok((to_model(&ck)?, ck))
}

/// Convenience for tests and tools: a 2-D array as a checkpoint entry.
pub fn entry(name: &str, a: &Array2<f64>) -> (String, ArrayD<f64>) {
    (name.to_string(), a.clone().into_dyn())
}
