//! Binary checkpoint container.
//!
//! All integers and scalars are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "QLTCKPT\0"
//! 8       4     u32 format version (1)
//! 12      1     u8 scalar width in bytes (4 = f32, 8 = f64)
//! 13      1     u8 field (0 = real, 1 = quaternion)
//! 14      2     u16 reserved, 0
//! 16      4+n   u32 length + UTF-8 model name
//! ..      4+n   u32 length + UTF-8 JSON model spec
//! ..      4     u32 tensor count
//! per tensor, in registry order:
//!         4+n   u32 length + UTF-8 tensor name
//!         1     u8 flags: bit0 prunable, bit1 mask present, bit2 snapshot present
//!         1     u8 rank
//!         8*r   u64 extents
//!         w*N   current values (N = product of extents)
//!         N     mask bytes, 0 or 1            (if bit1)
//!         w*N   initial values for rewinding  (if bit2)
//! ```

use std::fs;
use std::path::Path;

use super::network::{build_network, Network};
use super::spec::{Field, ModelSpec};
use crate::error::{Error, Result};
use crate::pruning::{Mask, Snapshot};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"QLTCKPT\0";
pub const VERSION: u32 = 1;

const FLAG_PRUNABLE: u8 = 1;
const FLAG_MASK: u8 = 2;
const FLAG_SNAPSHOT: u8 = 4;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes a network (and optionally its pruning state) to bytes.
pub fn encode<T: Scalar>(net: &Network<T>, mask: Option<&Mask>, snapshot: Option<&Snapshot<T>>) -> Result<Vec<u8>> {
    if let Some(m) = mask {
        m.check(net)?;
    }
    if let Some(s) = snapshot {
        if s.values().len() != net.params().len() {
            return Err(Error::State("snapshot does not match the network registry".into()));
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.push(match net.spec.field {
        Field::Real => 0,
        Field::Quaternion => 1,
    });
    out.extend_from_slice(&0u16.to_le_bytes());
    put_str(&mut out, &net.spec.name);
    let spec_json = serde_json::to_string(&net.spec).map_err(|e| Error::State(e.to_string()))?;
    put_str(&mut out, &spec_json);
    out.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    for (i, p) in net.params().iter().enumerate() {
        put_str(&mut out, &p.name);
        let keep = mask.and_then(|m| m.get(i));
        let init = snapshot.map(|s| &s.values()[i]);
        let mut flags = 0;
        if p.prunable() {
            flags |= FLAG_PRUNABLE;
        }
        if keep.is_some() {
            flags |= FLAG_MASK;
        }
        if init.is_some() {
            flags |= FLAG_SNAPSHOT;
        }
        out.push(flags);
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
        if let Some(k) = keep {
            out.extend_from_slice(k);
        }
        if let Some(t) = init {
            if t.shape() != p.value.shape() {
                return Err(Error::State(format!("snapshot shape differs for {}", p.name)));
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
    }
    Ok(out)
}

pub fn save<T: Scalar>(
    path: &Path,
    net: &Network<T>,
    mask: Option<&Mask>,
    snapshot: Option<&Snapshot<T>>,
) -> Result<()> {
    let bytes = encode(net, mask, snapshot)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A decoded checkpoint.
pub struct Checkpoint<T> {
    pub network: Network<T>,
    pub mask: Option<Mask>,
    pub snapshot: Option<Snapshot<T>>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                self.pos as u64,
                format!("truncated while reading {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(self.path, at as u64, format!("{what} is not UTF-8")))
    }

    fn scalars<T: Scalar>(&mut self, n: usize, what: &str) -> Result<Vec<T>> {
        let raw = self.take(n * T::BYTES, what)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

/// Decodes a checkpoint; `path` is only used in error messages.
pub fn decode<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Checkpoint<T>> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(path, 0, "bad magic, not a checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(path, 8, format!("unsupported version {version}")));
    }
    let width = r.u8("scalar width")?;
    if width as usize != T::BYTES {
        return Err(Error::format(
            path,
            12,
            format!("checkpoint stores {width}-byte scalars, reader expects {}", T::BYTES),
        ));
    }
    let field = match r.u8("field")? {
        0 => Field::Real,
        1 => Field::Quaternion,
        other => return Err(Error::format(path, 13, format!("unknown field tag {other}"))),
    };
    r.take(2, "reserved")?;
    let name = r.string("model name")?;
    let spec_at = r.pos;
    let spec_json = r.string("model spec")?;
    let spec: ModelSpec = serde_json::from_str(&spec_json)
        .map_err(|e| Error::format(path, spec_at as u64, format!("bad model spec: {e}")))?;
    if spec.name != name || spec.field != field {
        return Err(Error::format(path, spec_at as u64, "header disagrees with model spec"));
    }
    let mut network: Network<T> = build_network(&spec, 0)?;
    let count = r.u32("tensor count")? as usize;
    if count != network.params().len() {
        return Err(Error::format(
            path,
            (r.pos - 4) as u64,
            format!("{count} tensors, model `{name}` has {}", network.params().len()),
        ));
    }
    let mut mask_entries = Vec::with_capacity(count);
    let mut snap_values = Vec::with_capacity(count);
    let mut any_mask = false;
    let mut all_snap = true;
    for i in 0..count {
        let at = r.pos as u64;
        let tname = r.string("tensor name")?;
        let flags = r.u8("tensor flags")?;
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("tensor extent")? as usize);
        }
        let p = &network.params()[i];
        if tname != p.name || shape != p.value.shape() || (flags & FLAG_PRUNABLE != 0) != p.prunable() {
            return Err(Error::format(
                path,
                at,
                format!("tensor `{tname}` {shape:?} does not match `{}` {:?}", p.name, p.value.shape()),
            ));
        }
        let numel: usize = shape.iter().product();
        let values = r.scalars::<T>(numel, "tensor values")?;
        let keep = if flags & FLAG_MASK != 0 {
            let mat = r.pos as u64;
            let raw = r.take(numel, "mask")?.to_vec();
            if raw.iter().any(|&b| b > 1) {
                return Err(Error::format(path, mat, "mask bytes must be 0 or 1"));
            }
            any_mask = true;
            Some(raw)
        } else {
            None
        };
        mask_entries.push(keep);
        if flags & FLAG_SNAPSHOT != 0 {
            snap_values.push(Tensor::new(shape.clone(), r.scalars::<T>(numel, "snapshot values")?)?);
        } else {
            all_snap = false;
        }
        network.params_mut()[i].value = Tensor::new(shape, values)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, r.pos as u64, "trailing bytes after last tensor"));
    }
    let mask = if any_mask {
        let m = Mask::from_entries(mask_entries)?;
        m.check(&network)
            .map_err(|e| Error::format(path, 0, format!("inconsistent mask: {e}")))?;
        Some(m)
    } else {
        None
    };
    let snapshot = if all_snap && count > 0 {
        let names = network.params().iter().map(|p| p.name.clone()).collect();
        Some(Snapshot::from_parts(names, snap_values)?)
    } else {
        None
    };
    Ok(Checkpoint {
        network,
        mask,
        snapshot,
    })
}

pub fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
