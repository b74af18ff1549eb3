//! "CTW1" weight checkpoints.
//!
//! Layout (little-endian): magic `CTWGT1`, u16 version, u32 tensor count,
//! then per tensor a u16 name length, UTF-8 name bytes, u8 rank, `rank`
//! u32 dims and the f32 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NeuralError, Result};

const MAGIC: &[u8; 6] = b"CTWGT1";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        NamedTensor {
            name: name.into(),
            dims,
            data,
        }
    }

    pub fn scalar(name: impl Into<String>, v: f32) -> Self {
        NamedTensor::new(name, vec![1], vec![v])
    }
}

pub fn encode_checkpoint(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(NeuralError::Corrupt(format!(
                "tensor name too long: {}",
                t.name
            )));
        }
        if t.dims.len() > u8::MAX as usize {
            return Err(NeuralError::Corrupt(format!(
                "rank too large for `{}`",
                t.name
            )));
        }
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(NeuralError::Shape(format!(
                "`{}`: dims {:?} do not match {} values",
                t.name,
                t.dims,
                t.data.len()
            )));
        }
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(t.dims.len() as u8);
        for &d in &t.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(NeuralError::Corrupt(format!(
                "unexpected end of data at byte {}",
                self.pos
            )));
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

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 6] = c.take(6)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(NeuralError::BadMagic(magic));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(NeuralError::UnsupportedVersion(version));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| NeuralError::Corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = c.take(1)?[0] as usize;
        let dims = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let data = c
            .take(
                n.checked_mul(4)
                    .ok_or_else(|| NeuralError::Corrupt("dims overflow".into()))?,
            )?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, dims, data });
    }
    if c.pos != bytes.len() {
        return Err(NeuralError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

pub fn save_checkpoint(tensors: &[NamedTensor], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_checkpoint(tensors)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
