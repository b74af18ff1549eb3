use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, SimError};

const MAGIC: &[u8; 6] = b"CTSIN1";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 6 + 2 + 3 * 4 + 4;

/// Stack of parallel-beam projections, slice-major then angle-major.
///
/// Angles are implicit: projection `k` is taken at `k·π/n_angles`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_slices: usize,
    pub n_angles: usize,
    pub n_detectors: usize,
    pub detector_spacing: f32,
    pub data: Vec<f32>,
}

impl Sinogram {
    pub fn zeros(
        n_slices: usize,
        n_angles: usize,
        n_detectors: usize,
        detector_spacing: f32,
    ) -> Self {
        Sinogram {
            n_slices,
            n_angles,
            n_detectors,
            detector_spacing,
            data: vec![0.0; n_slices * n_angles * n_detectors],
        }
    }

    pub fn slice_len(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    pub fn slice(&self, s: usize) -> &[f32] {
        let n = self.slice_len();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn slice_mut(&mut self, s: usize) -> &mut [f32] {
        let n = self.slice_len();
        &mut self.data[s * n..(s + 1) * n]
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * std::f64::consts::PI / self.n_angles as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slices == 0 || self.n_angles == 0 || self.n_detectors == 0 {
            return Err(SimError::Shape("sinogram dims must be positive".into()));
        }
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(SimError::Shape("detector spacing must be positive".into()));
        }
        if self.data.len() != self.n_slices * self.n_angles * self.n_detectors {
            return Err(SimError::Shape(format!(
                "sinogram data length {} != {}x{}x{}",
                self.data.len(),
                self.n_slices,
                self.n_angles,
                self.n_detectors
            )));
        }
        Ok(())
    }
}

pub fn encode_sinogram(s: &Sinogram) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * s.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for d in [s.n_slices, s.n_angles, s.n_detectors] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&s.detector_spacing.to_le_bytes());
    for v in &s.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_sinogram(bytes: &[u8]) -> Result<Sinogram> {
    if bytes.len() < HEADER_LEN {
        return Err(SimError::Corrupt(format!(
            "header needs {HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    let magic: [u8; 6] = bytes[..6].try_into().unwrap();
    if &magic != MAGIC {
        return Err(SimError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(SimError::UnsupportedVersion(version));
    }
    let word = |i: usize| -> [u8; 4] { bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap() };
    let [n_slices, n_angles, n_detectors] = [0, 1, 2].map(|i| u32::from_le_bytes(word(i)) as usize);
    let detector_spacing = f32::from_le_bytes(word(3));
    let payload = &bytes[HEADER_LEN..];
    let declared = n_slices * n_angles * n_detectors;
    if payload.len() != declared * 4 {
        return Err(SimError::Corrupt(format!(
            "payload holds {} bytes, header declares {declared} samples",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let s = Sinogram {
        n_slices,
        n_angles,
        n_detectors,
        detector_spacing,
        data,
    };
    s.validate()?;
    Ok(s)
}

pub fn save_sinogram(s: &Sinogram, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_sinogram(s))?;
    w.flush()?;
    Ok(())
}

pub fn load_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_sinogram(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = Sinogram::zeros(2, 3, 4, 0.75);
        for (i, v) in s.data.iter_mut().enumerate() {
            *v = i as f32 * 0.5 - 3.0;
        }
        let back = decode_sinogram(&encode_sinogram(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_corruption() {
        let s = Sinogram::zeros(1, 2, 2, 1.0);
        let mut b = encode_sinogram(&s);
        b[0] = b'X';
        assert!(matches!(decode_sinogram(&b), Err(SimError::BadMagic(_))));
        let b = encode_sinogram(&s);
        assert!(matches!(
            decode_sinogram(&b[..b.len() - 4]),
            Err(SimError::Corrupt(_))
        ));
    }
}
