//! Versioned binary model files.
//!
//! Layout (all integers and reals little-endian): magic `ABRSVM`, `u16`
//! version, `u8` kernel tag (0 linear, 1 rbf), `f64` gamma (0 for linear),
//! `u32` dim, `dim` means, `dim` stds, `u32` support-vector count, the
//! support-vector matrix row by row, the dual coefficients, `f64` bias and a
//! trailing `u64` checksum (first eight bytes of the SHA-256 of the rest).

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{KernelSpec, Standardizer, SvmError, TrainedSvm};

pub const MODEL_MAGIC: &[u8; 6] = b"ABRSVM";
pub const MODEL_VERSION: u16 = 1;

fn checksum(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(Sha256::digest(bytes)[..8].try_into().expect("8 bytes"))
}

pub fn write_model(model: &TrainedSvm) -> Vec<u8> {
    let dim = model.dim();
    let mut b = Vec::new();
    b.extend_from_slice(MODEL_MAGIC);
    b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let (tag, gamma) = match model.kernel {
        KernelSpec::Linear => (0u8, 0.0),
        KernelSpec::Rbf { gamma } => (1u8, gamma),
    };
    b.push(tag);
    b.extend_from_slice(&gamma.to_le_bytes());
    b.extend_from_slice(&(dim as u32).to_le_bytes());
    let reals = |b: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes()));
    reals(&mut b, &model.standardizer.means);
    reals(&mut b, &model.standardizer.stds);
    b.extend_from_slice(&(model.support_vectors.len() as u32).to_le_bytes());
    for sv in &model.support_vectors {
        assert_eq!(sv.len(), dim, "support vector length must equal model dim");
        reals(&mut b, sv);
    }
    reals(&mut b, &model.dual_coeffs);
    b.extend_from_slice(&model.bias.to_le_bytes());
    let sum = checksum(&b);
    b.extend_from_slice(&sum.to_le_bytes());
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SvmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| SvmError::Format("truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, SvmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64, SvmError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>, SvmError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_model(bytes: &[u8]) -> Result<TrainedSvm, SvmError> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(SvmError::Format("missing ABRSVM magic".into()));
    }
    if bytes.len() < MODEL_MAGIC.len() + 2 + 8 {
        return Err(SvmError::Checksum);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    if checksum(body) != u64::from_le_bytes(trailer.try_into().expect("8 bytes")) {
        return Err(SvmError::Checksum);
    }
    let mut r = Reader { buf: body, pos: MODEL_MAGIC.len() };
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != MODEL_VERSION {
        return Err(SvmError::Format(format!("unsupported version {version}")));
    }
    let tag = r.take(1)?[0];
    let gamma = r.f64()?;
    let kernel = match tag {
        0 => KernelSpec::Linear,
        1 => KernelSpec::rbf(gamma)?,
        t => return Err(SvmError::Format(format!("unknown kernel tag {t}"))),
    };
    let dim = r.u32()?;
    let means = r.reals(dim)?;
    let stds = r.reals(dim)?;
    let n_sv = r.u32()?;
    let support_vectors = (0..n_sv).map(|_| r.reals(dim)).collect::<Result<_, _>>()?;
    let dual_coeffs = r.reals(n_sv)?;
    let bias = r.f64()?;
    if r.pos != body.len() {
        return Err(SvmError::Format("trailing bytes".into()));
    }
    Ok(TrainedSvm { support_vectors, dual_coeffs, bias, kernel, standardizer: Standardizer { means, stds } })
}

pub fn save_model(model: &TrainedSvm, path: &Path) -> Result<(), SvmError> {
    std::fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedSvm, SvmError> {
    read_model(&std::fs::read(path)?)
}
