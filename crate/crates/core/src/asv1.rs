//! Flat binary tensor container ("ASV1").
//!
//! Layout, all little-endian:
//!
//! ```text
//! bytes 0..4   magic "ASV1"
//! byte  4      dtype code, 0 = IEEE-754 binary32
//! byte  5      rank r, 1..=4
//! bytes 6..8   reserved, must be zero
//! next  8*r    dims, u64 each
//! rest         row-major payload, 4 bytes per element
//! ```
//!
//! Rank disambiguates the in-memory type: 4 → feature volume, 3 → saliency
//! volume, 2 → score/feature sequence, 1 → plain vector. Read/write pairs
//! are bit-exact inverses; non-finite payloads are rejected in both
//! directions so invalid tensors never reach disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{FeatureVolume, SaliencyVolume, Stage};

pub const MAGIC: [u8; 4] = *b"ASV1";
pub const DTYPE_F32: u8 = 0;

/// Serializes `data` under the given dims. Fails on rank outside 1..=4,
/// zero dims, element-count overflow, length mismatch, or non-finite values.
pub fn write_raw<W: Write>(mut w: W, dims: &[u64], data: &[f32]) -> Result<()> {
    if dims.is_empty() || dims.len() > 4 {
        return Err(Error::BadRank(dims.len() as u8));
    }
    let count = checked_count(dims)?;
    if count != data.len() as u64 {
        return Err(Error::ShapeMismatch {
            expected: format!("{count} elements for dims {dims:?}"),
            found: format!("{}", data.len()),
        });
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }

    w.write_all(&MAGIC)?;
    w.write_all(&[DTYPE_F32, dims.len() as u8, 0, 0])?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Deserializes a tensor, validating the header and payload length and
/// rejecting non-finite values.
pub fn read_raw<R: Read>(mut r: R) -> Result<(Vec<u64>, Vec<f32>)> {
    let mut header = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut header, 8)?;

    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if header[4] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(header[4]));
    }
    let rank = header[5];
    if !(1..=4).contains(&rank) {
        return Err(Error::BadRank(rank));
    }
    let reserved = u16::from_le_bytes([header[6], header[7]]);
    if reserved != 0 {
        return Err(Error::ReservedNonZero(reserved));
    }

    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let mut d = [0u8; 8];
        read_exact_or_truncated(&mut r, &mut d, 8)?;
        dims.push(u64::from_le_bytes(d));
    }
    let count = checked_count(&dims)?;
    let expected_bytes = count
        .checked_mul(4)
        .ok_or_else(|| Error::DimOverflow { dims: dims.clone() })?;

    // Read whatever is actually there, then compare: sizing the buffer from
    // the header would let a corrupt header drive a huge allocation.
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let found_bytes = payload.len() as u64;
    if found_bytes < expected_bytes {
        return Err(Error::Truncated {
            expected: expected_bytes,
            found: found_bytes,
        });
    }
    if found_bytes > expected_bytes {
        return Err(Error::TrailingBytes(found_bytes - expected_bytes));
    }

    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok((dims, data))
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], _want: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(Error::Truncated {
                expected: buf.len() as u64,
                found: filled as u64,
            });
        }
        filled += n;
    }
    Ok(())
}

fn checked_count(dims: &[u64]) -> Result<u64> {
    let mut count: u64 = 1;
    for (i, &d) in dims.iter().enumerate() {
        if d == 0 {
            return Err(Error::ZeroDim {
                dim: i,
                dims: dims.to_vec(),
            });
        }
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::DimOverflow { dims: dims.to_vec() })?;
    }
    // Must be addressable in memory on this platform.
    if count > usize::MAX as u64 / 4 {
        return Err(Error::DimOverflow { dims: dims.to_vec() });
    }
    Ok(count)
}

pub fn write_file<P: AsRef<Path>>(path: P, dims: &[u64], data: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_raw(&mut w, dims, data)?;
    w.flush()?;
    Ok(())
}

pub fn read_file<P: AsRef<Path>>(path: P) -> Result<(Vec<u64>, Vec<f32>)> {
    read_raw(BufReader::new(File::open(path)?))
}

/// A tensor decoded by rank into the type that rank denotes.
#[derive(Debug, Clone)]
pub enum Tensor {
    /// Rank 1.
    Vector(Vec<f32>),
    /// Rank 2: `rows × cols`, interpretation (scores vs. features) is the
    /// caller's; construct the validated type from the parts.
    Matrix {
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    },
    /// Rank 3, loaded at the `Raw` stage; callers re-validate to claim a
    /// later pipeline stage.
    Saliency(SaliencyVolume),
    /// Rank 4.
    Volume(FeatureVolume),
}

pub fn read_typed<P: AsRef<Path>>(path: P) -> Result<Tensor> {
    let (dims, data) = read_file(path)?;
    typed_from_parts(&dims, data)
}

pub fn typed_from_parts(dims: &[u64], data: Vec<f32>) -> Result<Tensor> {
    match dims.len() {
        1 => Ok(Tensor::Vector(data)),
        2 => Ok(Tensor::Matrix {
            rows: dims[0] as usize,
            cols: dims[1] as usize,
            data,
        }),
        3 => Ok(Tensor::Saliency(SaliencyVolume::new(
            dims[0] as usize,
            dims[1] as usize,
            dims[2] as usize,
            data,
            Stage::Raw,
        )?)),
        4 => Ok(Tensor::Volume(FeatureVolume::new(
            dims[0] as usize,
            dims[1] as usize,
            dims[2] as usize,
            dims[3] as usize,
            data,
        )?)),
        r => Err(Error::BadRank(r as u8)),
    }
}

pub fn write_volume<P: AsRef<Path>>(path: P, fv: &FeatureVolume) -> Result<()> {
    write_file(
        path,
        &[
            fv.frames as u64,
            fv.channels as u64,
            fv.height as u64,
            fv.width as u64,
        ],
        fv.data(),
    )
}

pub fn write_saliency<P: AsRef<Path>>(path: P, sv: &SaliencyVolume) -> Result<()> {
    write_file(
        path,
        &[sv.frames as u64, sv.height as u64, sv.width as u64],
        sv.data(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(dims: &[u64], data: &[f32]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_raw(&mut buf, dims, data).unwrap();
        buf
    }

    #[test]
    fn header_layout_is_frozen() {
        let buf = encode(&[2, 3], &[0.0; 6]);
        assert_eq!(&buf[0..4], b"ASV1");
        assert_eq!(buf[4], 0); // dtype f32
        assert_eq!(buf[5], 2); // rank
        assert_eq!(&buf[6..8], &[0, 0]);
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        assert_eq!(buf.len(), 24 + 6 * 4);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        // Includes a negative zero and a subnormal: equality must hold at
        // the bit level, not just numerically.
        let data = vec![0.0f32, -0.0, 1.5, f32::MIN_POSITIVE / 2.0, -3.25e7];
        let buf = encode(&[5], &data);
        let (dims, out) = read_raw(&buf[..]).unwrap();
        assert_eq!(dims, vec![5]);
        let bits_in: Vec<u32> = data.iter().map(|v| v.to_bits()).collect();
        let bits_out: Vec<u32> = out.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_in, bits_out);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = encode(&[1], &[1.0]);
        buf[0] = b'X';
        assert!(matches!(
            read_raw(&buf[..]),
            Err(Error::BadMagic { found }) if &found == b"XSV1"
        ));
    }

    #[test]
    fn rejects_unknown_dtype() {
        let mut buf = encode(&[1], &[1.0]);
        buf[4] = 7;
        assert!(matches!(read_raw(&buf[..]), Err(Error::UnsupportedDtype(7))));
    }

    #[test]
    fn rejects_bad_rank() {
        let mut buf = encode(&[1], &[1.0]);
        buf[5] = 0;
        assert!(matches!(read_raw(&buf[..]), Err(Error::BadRank(0))));
        buf[5] = 5;
        assert!(matches!(read_raw(&buf[..]), Err(Error::BadRank(5))));
    }

    #[test]
    fn rejects_reserved_bytes() {
        let mut buf = encode(&[1], &[1.0]);
        buf[6] = 1;
        assert!(matches!(read_raw(&buf[..]), Err(Error::ReservedNonZero(1))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let buf = encode(&[4], &[1.0, 2.0, 3.0, 4.0]);
        let cut = &buf[..buf.len() - 5];
        assert!(matches!(
            read_raw(cut),
            Err(Error::Truncated { expected: 16, found: 11 })
        ));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut buf = encode(&[1], &[1.0]);
        buf.push(0xAB);
        assert!(matches!(read_raw(&buf[..]), Err(Error::TrailingBytes(1))));
    }

    #[test]
    fn rejects_truncated_header_and_dims() {
        let buf = encode(&[2, 2], &[0.0; 4]);
        assert!(matches!(read_raw(&buf[..5]), Err(Error::Truncated { .. })));
        assert!(matches!(read_raw(&buf[..12]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn rejects_zero_dim_and_overflow() {
        assert!(matches!(
            write_raw(Vec::new(), &[2, 0], &[]),
            Err(Error::ZeroDim { dim: 1, .. })
        ));
        // Forged header with overflowing dims; payload empty.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"ASV1");
        buf.extend_from_slice(&[0, 2, 0, 0]);
        buf.extend_from_slice(&u64::MAX.to_le_bytes());
        buf.extend_from_slice(&2u64.to_le_bytes());
        assert!(matches!(read_raw(&buf[..]), Err(Error::DimOverflow { .. })));
    }

    #[test]
    fn rejects_non_finite_payload_both_ways() {
        assert!(matches!(
            write_raw(Vec::new(), &[1], &[f32::NAN]),
            Err(Error::NonFinite(0))
        ));
        // Hand-build a file holding +inf.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"ASV1");
        buf.extend_from_slice(&[0, 1, 0, 0]);
        buf.extend_from_slice(&1u64.to_le_bytes());
        buf.extend_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(read_raw(&buf[..]), Err(Error::NonFinite(0))));
    }

    #[test]
    fn typed_read_dispatches_on_rank() {
        let (dims, data) = (vec![2u64, 1, 2, 2], vec![0.5f32; 8]);
        match typed_from_parts(&dims, data).unwrap() {
            Tensor::Volume(fv) => {
                assert_eq!((fv.frames, fv.channels, fv.height, fv.width), (2, 1, 2, 2));
            }
            other => panic!("expected volume, got {other:?}"),
        }
        match typed_from_parts(&[2, 3], vec![0.0; 6]).unwrap() {
            Tensor::Matrix { rows: 2, cols: 3, .. } => {}
            other => panic!("expected matrix, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.asv1");
        let data: Vec<f32> = (0..12).map(|v| v as f32 * 0.5).collect();
        write_file(&path, &[2, 2, 3], &data).unwrap();
        let (dims, out) = read_file(&path).unwrap();
        assert_eq!(dims, vec![2, 2, 3]);
        assert_eq!(out, data);
    }
}
