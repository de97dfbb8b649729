//! Binary checkpoint format, version 1.
//!
//! ```text
//! "CSAE" | u32 version | u32 tensor count
//! per tensor: u32 name length | UTF-8 name | u32 rank | rank x u64 dims | f32 values
//! ```
//!
//! All integers and floats are little-endian. Tensors are named
//! `{layer}.w` / `{layer}.b` after the layer names of [`CsaeModel`], and only
//! parameters are stored. The architecture is recovered from tensor shapes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ArchPreset, CsaeModel, PresetName};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"CSAE";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &CsaeModel) -> Vec<u8> {
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for (name, p) in model.named_params() {
        tensors.push((format!("{name}.w"), &p.weights));
        if let Some(b) = &p.bias {
            tensors.push((format!("{name}.b"), b));
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(model: &CsaeModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CsaeModel> {
    from_bytes(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "checkpoint ends at byte {} while reading {what}",
                self.buf.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

fn read_tensors(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(Error::BadMagic {
            expected: u32::from_le_bytes(MAGIC),
            found: u32::from_le_bytes(found),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let count = r.u32("tensor count")?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64("dimension")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Malformed(format!("{name}: shape overflows")))?;
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Malformed(format!("{name}: shape overflows")))?,
            &format!("values of {name}"),
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Malformed(format!("{name}: {e}")))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::Malformed(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(tensors)
}

fn dim(tensors: &BTreeMap<String, Tensor>, name: &str, axis: usize) -> Result<usize> {
    tensors
        .get(name)
        .and_then(|t| t.shape().get(axis).copied())
        .ok_or_else(|| Error::Malformed(format!("missing or malformed tensor {name}")))
}

fn infer_preset(tensors: &BTreeMap<String, Tensor>) -> Result<ArchPreset> {
    let mut filters = Vec::new();
    let mut kernels = Vec::new();
    while let Some(w) = tensors.get(&format!("enc.conv{}.w", filters.len())) {
        match w.shape() {
            &[kh, kw, _, f] if kh == kw => {
                kernels.push(kh);
                filters.push(f);
            }
            s => return Err(Error::Malformed(format!("conv kernel shape {s:?}"))),
        }
    }
    let name = match filters.len() {
        2 => PresetName::Small28,
        4 => PresetName::Large128,
        n => {
            return Err(Error::Malformed(format!(
                "{n} encoder convolutions match no preset"
            )))
        }
    };
    let mut preset = ArchPreset::new(
        name,
        dim(tensors, "enc.fc2.w", 1)?,
        dim(tensors, "cls.out.w", 1)?,
    );
    if preset.conv_filters != filters || preset.conv_kernels != kernels {
        return Err(Error::Malformed(format!(
            "convolution stack {filters:?}/{kernels:?} does not match preset {name}"
        )));
    }
    preset.conv_bias = tensors.contains_key("enc.conv0.b");
    Ok(preset)
}

pub fn from_bytes(bytes: &[u8]) -> Result<CsaeModel> {
    let mut tensors = read_tensors(bytes)?;
    let preset = infer_preset(&tensors)?;
    let mut model = CsaeModel::build(preset, 0)
        .map_err(|e| Error::Malformed(format!("checkpoint architecture: {e}")))?;
    let names: Vec<String> = model.named_params().map(|(n, _)| n.to_string()).collect();
    for (name, params) in names.iter().zip(model.params_mut()) {
        let mut fill = |slot: &mut Tensor, key: String| -> Result<()> {
            let t = tensors
                .remove(&key)
                .ok_or_else(|| Error::Malformed(format!("missing tensor {key}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Malformed(format!(
                    "{key}: shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
            Ok(())
        };
        fill(&mut params.weights, format!("{name}.w"))?;
        if let Some(b) = params.bias.as_mut() {
            fill(b, format!("{name}.b"))?;
        }
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Malformed(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = CsaeModel::build(ArchPreset::small28(2, 10), 0).unwrap();
        let b = to_bytes(&m);
        assert_eq!(&b[..4], b"CSAE");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        // 13 dense/conv layers, each with weights and bias.
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 26);
        let name_len = u32::from_le_bytes(b[12..16].try_into().unwrap()) as usize;
        assert_eq!(&b[16..16 + name_len], b"enc.conv0.w");
    }

    #[test]
    fn canonical_names() {
        let m = CsaeModel::build(ArchPreset::small28(2, 10), 0).unwrap();
        let names: Vec<&str> = m.named_params().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "enc.conv0",
                "enc.conv1",
                "enc.fc0",
                "enc.fc1",
                "enc.fc2",
                "dec.fc0",
                "dec.fc1",
                "dec.fc2",
                "dec.tconv0",
                "dec.tconv1",
                "cls.fc0",
                "cls.fc1",
                "cls.out"
            ]
        );
    }

    #[test]
    fn round_trip_in_memory() {
        let mut preset = ArchPreset::large128(3, 4);
        preset.conv_bias = false;
        let m = CsaeModel::build(preset, 8).unwrap();
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back.preset, m.preset);
        for ((na, a), (nb, b)) in m.named_params().zip(back.named_params()) {
            assert_eq!(na, nb);
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn error_kinds() {
        let m = CsaeModel::build(ArchPreset::small28(2, 10), 0).unwrap();
        let good = to_bytes(&m);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(from_bytes(&v2), Err(Error::VersionMismatch(2))));
        assert!(matches!(
            from_bytes(&good[..good.len() / 2]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(from_bytes(&good[..2]), Err(Error::Truncated(_))));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Malformed(_))));
    }
}
