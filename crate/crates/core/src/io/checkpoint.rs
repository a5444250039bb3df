//! MDL1 model checkpoints: named f64 tensors in order.
//!
//! Layout (little-endian): magic `MDL1`, u32 version, u32 tensor count, then
//! per tensor a u16 name length, the UTF-8 name, u32 rank, u32 dims, and the
//! f64 payload.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MDL1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode_checkpoint(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let count: usize = t.dims.iter().product();
        if count != t.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {} has {} values for dims {:?}",
                t.name,
                t.data.len(),
                t.dims
            )));
        }
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidParameter(format!("tensor name too long: {}", t.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                found: self.bytes.len(),
                expected: self.pos + n,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader {
        path,
        bytes,
        pos: 0,
    };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: MAGIC,
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: VERSION,
        });
    }
    let count = r.u32()?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let data = r
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(tensors)
}

pub fn write_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = encode_checkpoint(tensors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor {
                name: "enc1.w".into(),
                dims: vec![2, 1, 3, 3],
                data: (0..18).map(|i| i as f64 * 0.1 - 0.7).collect(),
            },
            NamedTensor {
                name: "b".into(),
                dims: vec![2],
                data: vec![f64::MIN_POSITIVE, -3.5],
            },
        ]
    }

    #[test]
    fn round_trip_exact() {
        let p = Path::new("m.mdl");
        let bytes = encode_checkpoint(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"MDL1");
        assert_eq!(decode_checkpoint(p, &bytes).unwrap(), sample());
    }

    #[test]
    fn corrupt_inputs() {
        let p = Path::new("m.mdl");
        let mut bytes = encode_checkpoint(&sample()).unwrap();
        assert!(matches!(
            decode_checkpoint(p, &bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        bytes[4] = 9;
        assert!(matches!(
            decode_checkpoint(p, &bytes),
            Err(Error::VersionMismatch { .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            decode_checkpoint(p, &bytes),
            Err(Error::BadMagic { .. })
        ));
        let bad = NamedTensor {
            name: "x".into(),
            dims: vec![3],
            data: vec![0.0],
        };
        assert!(encode_checkpoint(&[bad]).is_err());
    }
}
