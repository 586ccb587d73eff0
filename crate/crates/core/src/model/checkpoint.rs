// Checkpoint layout, all integers u32 little-endian:
//
//   "DGA1"
//   config text length, config text (UTF-8 `model.* = value` lines)
//   record count
//   per record: name length, name, rank, extents[rank], f32 LE data

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"DGA1";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn text(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::Checkpoint("text field is not UTF-8".into()))
    }
}

impl<T: Real> Model<T> {
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.params.count() * 4 + 1024);
        out.extend_from_slice(MAGIC);
        let text = self.cfg.to_text();
        put_u32(&mut out, text.len())?;
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.params.len())?;
        for (name, tensor) in self.params.iter() {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, tensor.rank())?;
            for &e in tensor.shape() {
                put_u32(&mut out, e)?;
            }
            for v in tensor.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let cfg = ModelConfig::from_text(r.text()?)?;
        let mut model = Model::<T>::new(cfg)?;
        let count = r.u32()?;
        if count != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "{count} records, model expects {}",
                model.params.len()
            )));
        }
        for _ in 0..count {
            let name = r.text()?.to_string();
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            if model.params.get(id).shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {shape:?}, model expects {:?}",
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = Tensor::new(shape, data)?;
        }
        if !r.buf.is_empty() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_checkpoint_bytes()?;
        let mut f = fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        f.write_all(&bytes)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use crate::model::{Model, ModelConfig, Variant};

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let model = Model::<f32>::new(ModelConfig::toy(Variant::ModelB, 5)).unwrap();
        let bytes = model.to_checkpoint_bytes().unwrap();
        assert_eq!(&bytes[..4], b"DGA1");
        let back = Model::<f32>::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(back.config(), model.config());
        for (a, b) in model.params().tensors().iter().zip(back.params().tensors()) {
            let bits = |t: &crate::tensor::Tensor<f32>| {
                t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            };
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn rejects_corruption() {
        let model = Model::<f32>::new(ModelConfig::toy(Variant::Baseline, 3)).unwrap();
        let bytes = model.to_checkpoint_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Model::<f32>::from_checkpoint_bytes(&bad).is_err());
        assert!(Model::<f32>::from_checkpoint_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Model::<f32>::from_checkpoint_bytes(&long).is_err());
    }
}
