//! `TALW1` weight files.
//!
//! Layout (all integers little-endian `u32`, floats little-endian `f64`):
//!
//! ```text
//! "TALW1" | version:u8 | arch_len | arch bytes | param_count
//! then per parameter: name_len | name | rank | extents[rank] | data
//! ```
//!
//! Input extents, class count and training metadata travel as two extra
//! parameters, `meta.shape = [H, W, C, classes]` and
//! `meta.train = [trained, seed_lo32, seed_hi32]`, so the file stays a plain
//! list of named tensors.

use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::modelzoo::{ArchSpec, Model, Param};

pub const WEIGHTS_MAGIC: &[u8; 5] = b"TALW1";
pub const WEIGHTS_VERSION: u8 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(buf, name.len());
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, t.shape().len());
    for &e in t.shape() {
        put_u32(buf, e);
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_weights(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.push(WEIGHTS_VERSION);
    let arch = model.spec.arch.as_str();
    put_u32(&mut buf, arch.len());
    buf.extend_from_slice(arch.as_bytes());
    put_u32(&mut buf, model.params.len() + 2);
    let s = &model.spec;
    let shape = Tensor::from_vec(vec![s.height as f64, s.width as f64, s.channels as f64, s.classes as f64]);
    let train = Tensor::from_vec(vec![
        if model.trained { 1.0 } else { 0.0 },
        (model.train_seed & 0xffff_ffff) as f64,
        (model.train_seed >> 32) as f64,
    ]);
    put_tensor(&mut buf, "meta.shape", &shape);
    put_tensor(&mut buf, "meta.train", &train);
    for p in &model.params {
        put_tensor(&mut buf, &p.name, &p.value);
    }
    buf
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'b [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos as u64;
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::format(at, format!("{what} is not UTF-8")))
    }
}

pub fn decode_weights(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(5, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::format(0, "bad magic, expected TALW1"));
    }
    let version = r.take(1, "version")?[0];
    if version != WEIGHTS_VERSION {
        return Err(Error::format(5, format!("unsupported version {version}")));
    }
    let arch_at = r.pos as u64;
    let arch = r.string("arch id")?;
    let arch = arch.parse().map_err(|_| Error::format(arch_at, format!("unknown arch id {arch:?}")))?;
    let count = r.u32("parameter count")?;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string("parameter name")?;
        let rank_at = r.pos as u64;
        let rank = r.u32("rank")?;
        if rank > 8 {
            return Err(Error::format(rank_at, format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")?);
        }
        let n: usize = shape.iter().product();
        if n.saturating_mul(8) > buf.len() - r.pos {
            return Err(Error::format(r.pos as u64, format!("truncated data for {name}")));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.f64("parameter data")?);
        }
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != buf.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after last parameter"));
    }
    let meta = |name: &str, len: usize| -> Result<Vec<f64>> {
        tensors
            .iter()
            .find(|(n, t)| n == name && t.len() == len)
            .map(|(_, t)| t.data().to_vec())
            .ok_or_else(|| Error::format(0, format!("missing {name}")))
    };
    let shape = meta("meta.shape", 4)?;
    let train = meta("meta.train", 3)?;
    let spec = ArchSpec::new(arch, shape[0] as usize, shape[1] as usize, shape[2] as usize, shape[3] as usize);
    let seed = (train[1] as u64) | ((train[2] as u64) << 32);
    let params = tensors
        .into_iter()
        .filter(|(n, _)| !n.starts_with("meta."))
        .map(|(name, value)| Param { name, value })
        .collect();
    Model::from_parts(spec, params, train[0] != 0.0, seed)
        .map_err(|e| Error::format(0, format!("inconsistent parameters: {e}")))
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_weights(model))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    decode_weights(&std::fs::read(path)?)
}
