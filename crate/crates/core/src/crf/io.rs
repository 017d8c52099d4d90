//! Binary model file: `"CRF1"`, then little-endian `u32` version,
//! `u32` feature_dim, `u32` num_labels, followed by the start, end,
//! transition and emission weights as `f64` in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{CrfError, CrfModel, NUM_LABELS};

pub const MODEL_MAGIC: [u8; 4] = *b"CRF1";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model(model: &CrfModel, mut w: impl Write) -> Result<(), CrfError> {
    let dim = model.feature_dim();
    let mut buf = Vec::with_capacity(16 + 8 * (8 + NUM_LABELS * dim));
    buf.extend_from_slice(&MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(NUM_LABELS as u32).to_le_bytes());
    let small = model
        .start
        .iter()
        .chain(&model.end)
        .chain(model.transition.iter().flatten());
    for v in small.chain(model.emission_weights()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_model(model: &CrfModel, path: impl AsRef<Path>) -> Result<(), CrfError> {
    let mut f = fs::File::create(path)?;
    write_model(model, &mut f)?;
    f.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CrfError> {
        if self.bytes.len() < N {
            return Err(CrfError::Truncated);
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32, CrfError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, CrfError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_model(bytes: &[u8]) -> Result<CrfModel, CrfError> {
    let mut c = Cursor { bytes };
    let magic: [u8; 4] = c.take()?;
    if magic != MODEL_MAGIC {
        return Err(CrfError::BadMagic(magic));
    }
    let version = c.u32()?;
    if version != MODEL_VERSION {
        return Err(CrfError::UnsupportedVersion(version));
    }
    let dim = c.u32()? as usize;
    let labels = c.u32()?;
    if labels as usize != NUM_LABELS {
        return Err(CrfError::UnsupportedLabels(labels));
    }
    if c.bytes.len() < 8 * (8 + NUM_LABELS * dim) {
        return Err(CrfError::Truncated);
    }
    let mut m = CrfModel::new(dim);
    for y in 0..NUM_LABELS {
        m.start[y] = c.f64()?;
    }
    for y in 0..NUM_LABELS {
        m.end[y] = c.f64()?;
    }
    for y in 0..NUM_LABELS {
        for z in 0..NUM_LABELS {
            m.transition[y][z] = c.f64()?;
        }
    }
    for w in m.emission_weights_mut() {
        *w = c.f64()?;
    }
    if !c.bytes.is_empty() {
        return Err(CrfError::TrailingBytes(c.bytes.len()));
    }
    if !m.is_finite() {
        return Err(CrfError::NonFinite);
    }
    Ok(m)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CrfModel, CrfError> {
    read_model(&fs::read(path)?)
}
