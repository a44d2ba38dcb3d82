//! FXT1 binary tensor files.
//!
//! Layout (little-endian):
//! - bytes 0..4: magic `FXT1`
//! - byte 4: bitwidth (8 or 16)
//! - byte 5: fraction bits
//! - byte 6: ndim (1..=4)
//! - byte 7: reserved, zero
//! - ndim × u32 dims
//! - row-major payload, i16 for 16-bit tensors and i8 for 8-bit tensors

use std::fs;
use std::path::Path;

use super::{checked_numel, Bitwidth, FixedTensor, QuantSpec};
use crate::error::{Error, Result};

pub const FXT_MAGIC: [u8; 4] = *b"FXT1";
const HEADER_LEN: usize = 8;
const MAX_NDIM: usize = 4;

pub fn encode_fxt(t: &FixedTensor) -> Result<Vec<u8>> {
    let ndim = t.shape().len();
    if !(1..=MAX_NDIM).contains(&ndim) {
        return Err(Error::Shape(format!("FXT1 stores 1 to 4 dimensions, tensor has {ndim}")));
    }
    let elem = element_bytes(t.bitwidth());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * ndim + elem * t.len());
    out.extend_from_slice(&FXT_MAGIC);
    out.push(t.bitwidth().bits() as u8);
    out.push(t.spec().frac_bits as u8);
    out.push(ndim as u8);
    out.push(0);
    for &d in t.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::DimensionOverflow(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match t.bitwidth() {
        Bitwidth::B16 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as i16).to_le_bytes())),
        Bitwidth::B8 => t.data().iter().for_each(|&v| out.push(v as i8 as u8)),
    }
    Ok(out)
}

pub fn decode_fxt(bytes: &[u8]) -> Result<FixedTensor> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != FXT_MAGIC {
            return Err(Error::BadMagic { found: bytes[..4].try_into().unwrap() });
        }
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FXT_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let bitwidth = Bitwidth::from_bits(bytes[4] as u32)
        .map_err(|_| Error::BadHeader(format!("unsupported bitwidth {}", bytes[4])))?;
    let spec = QuantSpec::new(bitwidth, bytes[5] as u32)
        .map_err(|_| Error::BadHeader(format!("frac_bits {} invalid for {bitwidth}-bit", bytes[5])))?;
    let ndim = bytes[6] as usize;
    if !(1..=MAX_NDIM).contains(&ndim) {
        return Err(Error::BadHeader(format!("ndim {ndim} outside 1..=4")));
    }
    if bytes[7] != 0 {
        return Err(Error::BadHeader("reserved byte is nonzero".into()));
    }

    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::Truncated { expected: dims_end, found: bytes.len() });
    }
    let shape: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(Error::BadHeader(format!("zero-sized dimension in {shape:?}")));
    }
    let numel = checked_numel(&shape)?;
    let payload_len = numel
        .checked_mul(element_bytes(bitwidth))
        .and_then(|n| n.checked_add(dims_end))
        .ok_or_else(|| Error::DimensionOverflow(format!("payload size of {shape:?} overflows")))?;
    if bytes.len() < payload_len {
        return Err(Error::Truncated { expected: payload_len, found: bytes.len() });
    }
    if bytes.len() > payload_len {
        return Err(Error::TrailingBytes { extra: bytes.len() - payload_len });
    }

    let payload = &bytes[dims_end..];
    let data: Vec<i32> = match bitwidth {
        Bitwidth::B16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
            .collect(),
        Bitwidth::B8 => payload.iter().map(|&b| b as i8 as i32).collect(),
    };
    FixedTensor::new(shape, spec, data)
}

pub fn save_tensor(t: &FixedTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_fxt(t)?)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<FixedTensor> {
    decode_fxt(&fs::read(path)?)
}

fn element_bytes(b: Bitwidth) -> usize {
    match b {
        Bitwidth::B8 => 1,
        Bitwidth::B16 => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FixedTensor {
        FixedTensor::new(
            vec![2, 3],
            QuantSpec::weights(Bitwidth::B16),
            vec![1, -2, 3, 0, 32767, -32767],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fxt");
        let t = sample();
        save_tensor(&t, &path).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), t);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_fxt(&sample()).unwrap();
        assert_eq!(&bytes[..8], &[b'F', b'X', b'T', b'1', 16, 15, 2, 0]);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[1, 0, 0xfe, 0xff]);
        assert_eq!(bytes.len(), 16 + 12);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_fxt(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_fxt(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let t = FixedTensor::new(vec![4], QuantSpec::weights(Bitwidth::B8), vec![1, 2, 3, 4]).unwrap();
        let bytes = encode_fxt(&t).unwrap();
        let err = decode_fxt(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Truncated { expected: 16, found: 15 }));
        assert!(matches!(decode_fxt(&bytes[..10]), Err(Error::Truncated { .. })));
        assert!(matches!(decode_fxt(&bytes[..3]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn dimension_overflow() {
        let mut bytes = vec![b'F', b'X', b'T', b'1', 16, 0, 4, 0];
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(decode_fxt(&bytes), Err(Error::DimensionOverflow(_))));
    }

    #[test]
    fn header_errors_are_distinct() {
        let good = encode_fxt(&sample()).unwrap();
        let mut b = good.clone();
        b[4] = 12;
        assert!(matches!(decode_fxt(&b), Err(Error::BadHeader(_))));
        let mut b = good.clone();
        b[6] = 5;
        assert!(matches!(decode_fxt(&b), Err(Error::BadHeader(_))));
        let mut b = good.clone();
        b[7] = 1;
        assert!(matches!(decode_fxt(&b), Err(Error::BadHeader(_))));
        let mut b = good.clone();
        b.push(0);
        assert!(matches!(decode_fxt(&b), Err(Error::TrailingBytes { extra: 1 })));
        let mut b = good;
        // -32768 is outside the symmetric range
        b[16] = 0x00;
        b[17] = 0x80;
        assert!(matches!(decode_fxt(&b), Err(Error::OutOfRange { index: 0, .. })));
    }

    #[test]
    fn refuses_five_dimensions() {
        let t = FixedTensor::zeros(vec![1, 1, 1, 1, 2], QuantSpec::weights(Bitwidth::B8)).unwrap();
        assert!(encode_fxt(&t).is_err());
    }
}
