//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"MIRECKPT"
//! 8       4     format version (u32) = 1
//! 12      8     V    item vocabulary (u64)
//! 20      8     d    (u64)
//! 28      8     d_h  (u64)
//! 36      8     d_b  (u64)
//! 44      8     N_x  (u64)
//! 52      8     N_z  (u64)
//! 60      ...   tensors as f64, row-major, in this order:
//!               item_emb        V x d
//!               w1              d_h x d
//!               interest_query  N_z x d_h
//!               w2              d x d
//!               recon_w3        d_b x d_b
//!               recon_w4        (N_x*d_b) x d
//!               recon_w5        d x d_b
//!               position_query  N_x x d_b
//! ```
//!
//! The file ends right after the last tensor.

use std::io::{Read, Write};
use std::path::Path;

use super::{HyperParams, ModelParams};
use crate::error::{Error, Result};
use crate::gradcore::DenseMatrix;

pub const MAGIC: &[u8; 8] = b"MIRECKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub vocab: usize,
    pub d: usize,
    pub d_h: usize,
    pub d_b: usize,
    pub n_x: usize,
    pub n_z: usize,
}

impl CheckpointHeader {
    pub fn of(params: &ModelParams) -> Self {
        Self {
            version: FORMAT_VERSION,
            vocab: params.vocab(),
            d: params.dim(),
            d_h: params.w1.rows(),
            d_b: params.recon_w3.rows(),
            n_x: params.n_x(),
            n_z: params.n_z(),
        }
    }

    /// `hp` with the shape fields taken from this header.
    pub fn apply_to(&self, hp: &HyperParams) -> HyperParams {
        HyperParams {
            d: self.d,
            d_h: self.d_h,
            d_b: self.d_b,
            n_x: self.n_x,
            n_z: self.n_z,
            ..hp.clone()
        }
    }
}

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.tensors().iter().map(|(_, m)| m.data().len()).sum::<usize>());
    write(params, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write<W: Write>(params: &ModelParams, w: &mut W) -> std::io::Result<()> {
    let h = CheckpointHeader::of(params);
    w.write_all(MAGIC)?;
    w.write_all(&h.version.to_le_bytes())?;
    for v in [h.vocab, h.d, h.d_h, h.d_b, h.n_x, h.n_z] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for (_, m) in params.tensors() {
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, to_bytes(params)).map_err(Error::io(path))
}

pub fn read_header<R: Read>(r: &mut R) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Invalid("not a checkpoint file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    read_exact(r, &mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        let mut b8 = [0u8; 8];
        read_exact(r, &mut b8)?;
        *d = usize::try_from(u64::from_le_bytes(b8))
            .map_err(|_| Error::Invalid("checkpoint dimension overflows usize".into()))?;
    }
    Ok(CheckpointHeader {
        version,
        vocab: dims[0],
        d: dims[1],
        d_h: dims[2],
        d_b: dims[3],
        n_x: dims[4],
        n_z: dims[5],
    })
}

pub fn read<R: Read>(r: &mut R) -> Result<(CheckpointHeader, ModelParams)> {
    let h = read_header(r)?;
    let shapes = [
        (h.vocab, h.d),
        (h.d_h, h.d),
        (h.n_z, h.d_h),
        (h.d, h.d),
        (h.d_b, h.d_b),
        (h.n_x * h.d_b, h.d),
        (h.d, h.d_b),
        (h.n_x, h.d_b),
    ];
    let mut tensors = Vec::with_capacity(shapes.len());
    for (rows, cols) in shapes {
        let mut buf = vec![0u8; rows * cols * 8];
        read_exact(r, &mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(DenseMatrix::from_vec(rows, cols, data)?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(Error::io("checkpoint"))? != 0 {
        return Err(Error::Invalid("trailing bytes after checkpoint tensors".into()));
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("eight tensors");
    let params = ModelParams {
        item_emb: next(),
        w1: next(),
        interest_query: next(),
        w2: next(),
        recon_w3: next(),
        recon_w4: next(),
        recon_w5: next(),
        position_query: next(),
    };
    if let Some((key, i)) = params.first_non_finite() {
        return Err(Error::NonFinite(format!("checkpoint tensor {} entry {i}", key.name())));
    }
    Ok((h, params))
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    read(&mut bytes.as_slice())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Invalid("checkpoint is truncated".into())
        } else {
            Error::Io {
                path: "checkpoint".into(),
                source: e,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        let hp = HyperParams {
            d: 3,
            d_h: 4,
            d_b: 2,
            n_z: 2,
            n_x: 5,
            ..HyperParams::default()
        };
        ModelParams::init(7, &hp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = params();
        let bytes = to_bytes(&p);
        let (h, q) = read(&mut bytes.as_slice()).unwrap();
        assert_eq!(p, q);
        assert_eq!(h, CheckpointHeader::of(&p));
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = to_bytes(&params());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 7);
        assert_eq!(u64::from_le_bytes(bytes[52..60].try_into().unwrap()), 2);
        let floats = 7 * 3 + 4 * 3 + 2 * 4 + 3 * 3 + 2 * 2 + 10 * 3 + 3 * 2 + 5 * 2;
        assert_eq!(bytes.len(), HEADER_LEN + 8 * floats);
        // first float is item_emb[0,0]
        let p = params();
        assert_eq!(f64::from_le_bytes(bytes[60..68].try_into().unwrap()), p.item_emb[(0, 0)]);
    }

    #[test]
    fn version_mismatch_reports_both() {
        let mut bytes = to_bytes(&params());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = read(&mut bytes.as_slice()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let bytes = to_bytes(&params());
        assert!(read(&mut &bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(read(&mut longer.as_slice()).is_err());
    }
}
