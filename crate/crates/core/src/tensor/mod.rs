//! Fixed-point tensors.
//!
//! Every element is stored in a symmetric range `±(2^(B-1) - 1)` so that it
//! always has a sign-magnitude form whose magnitude fits in `B - 1` bits. The
//! kneading and bit-statistics code work on that magnitude field directly.

mod fxt;
mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fxt::{decode_fxt, encode_fxt, load_tensor, save_tensor, FXT_MAGIC};
pub use synth::{synth_tensor, Distribution};

/// Supported storage widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Bitwidth {
    B8,
    B16,
}

impl Bitwidth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(Bitwidth::B8),
            16 => Ok(Bitwidth::B16),
            other => Err(Error::InvalidSpec(format!("bitwidth must be 8 or 16, got {other}"))),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Bitwidth::B8 => 8,
            Bitwidth::B16 => 16,
        }
    }

    /// Width of the magnitude field, `B - 1`.
    pub fn magnitude_bits(self) -> usize {
        self.bits() as usize - 1
    }

    /// Largest representable magnitude, `2^(B-1) - 1`.
    pub fn max_value(self) -> i32 {
        (1i32 << (self.bits() - 1)) - 1
    }

    pub fn contains(self, v: i64) -> bool {
        v.abs() <= self.max_value() as i64
    }
}

impl TryFrom<u32> for Bitwidth {
    type Error = Error;

    fn try_from(bits: u32) -> Result<Self> {
        Bitwidth::from_bits(bits)
    }
}

impl From<Bitwidth> for u32 {
    fn from(b: Bitwidth) -> u32 {
        b.bits()
    }
}

impl fmt::Display for Bitwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Q-format description: storage width and number of fraction bits.
///
/// Rounding is always round-half-to-even and out-of-range values saturate to
/// the symmetric range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bitwidth: Bitwidth,
    pub frac_bits: u32,
}

impl QuantSpec {
    pub fn new(bitwidth: Bitwidth, frac_bits: u32) -> Result<Self> {
        if frac_bits >= bitwidth.bits() {
            return Err(Error::InvalidSpec(format!(
                "frac_bits {frac_bits} must be below bitwidth {bitwidth}"
            )));
        }
        Ok(QuantSpec { bitwidth, frac_bits })
    }

    /// Q1.(B-1): the default for weights.
    pub fn weights(bitwidth: Bitwidth) -> Self {
        QuantSpec { bitwidth, frac_bits: bitwidth.bits() - 1 }
    }

    /// Q8.8 for 16-bit and Q4.4 for 8-bit activations.
    pub fn activations(bitwidth: Bitwidth) -> Self {
        QuantSpec { bitwidth, frac_bits: bitwidth.bits() / 2 }
    }

    pub fn validate(&self) -> Result<()> {
        QuantSpec::new(self.bitwidth, self.frac_bits).map(|_| ())
    }

    /// Quantizes one finite real value.
    pub fn quantize_value(&self, v: f64) -> i32 {
        let max = self.bitwidth.max_value() as f64;
        let scaled = (v * (1u64 << self.frac_bits) as f64).round_ties_even();
        scaled.clamp(-max, max) as i32
    }

    pub fn dequantize_value(&self, q: i32) -> f64 {
        q as f64 / (1u64 << self.frac_bits) as f64
    }

    /// Smallest real step, `2^-f`.
    pub fn step(&self) -> f64 {
        1.0 / (1u64 << self.frac_bits) as f64
    }
}

/// Row-major N-dimensional integer tensor with fixed-point metadata.
///
/// Immutable after construction; the constructor enforces the symmetric
/// range and the shape/length agreement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedTensor {
    shape: Vec<usize>,
    spec: QuantSpec,
    data: Vec<i32>,
}

impl FixedTensor {
    pub fn new(shape: Vec<usize>, spec: QuantSpec, data: Vec<i32>) -> Result<Self> {
        spec.validate()?;
        let len = checked_numel(&shape)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        let max = spec.bitwidth.max_value();
        if let Some((index, &v)) = data.iter().enumerate().find(|(_, v)| v.abs() > max) {
            return Err(Error::OutOfRange { index, value: v as i64, max: max as i64 });
        }
        Ok(FixedTensor { shape, spec, data })
    }

    pub fn zeros(shape: Vec<usize>, spec: QuantSpec) -> Result<Self> {
        let len = checked_numel(&shape)?;
        FixedTensor::new(shape, spec, vec![0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spec(&self) -> QuantSpec {
        self.spec
    }

    pub fn bitwidth(&self) -> Bitwidth {
        self.spec.bitwidth
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        FixedTensor::new(shape, self.spec, self.data)
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data.iter().map(|&q| self.spec.dequantize_value(q)).collect()
    }
}

/// Element count of a shape; every dimension must be positive.
pub(crate) fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("shape must have at least one dimension".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
    }
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| {
        Error::DimensionOverflow(format!("element count of {shape:?} overflows"))
    })
}

/// Quantizes a flat sequence into a 1-D tensor.
pub fn quantize(values: &[f64], spec: QuantSpec) -> Result<FixedTensor> {
    quantize_shaped(values, vec![values.len()], spec)
}

pub fn quantize_shaped(values: &[f64], shape: Vec<usize>, spec: QuantSpec) -> Result<FixedTensor> {
    spec.validate()?;
    if values.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let data = values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v.is_finite() {
                Ok(spec.quantize_value(v))
            } else {
                Err(Error::NonFinite { index })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FixedTensor::new(shape, spec, data)
}

/// Wide integer tensor holding convolution outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntTensor {
    pub shape: Vec<usize>,
    pub data: Vec<i64>,
}

impl IntTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        IntTensor { shape, data: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Converts accumulator values to a fixed-point tensor: arithmetic right
    /// shift by `shift` with round-half-to-even, then saturation to `spec`.
    pub fn requantize(&self, shift: u32, spec: QuantSpec) -> Result<FixedTensor> {
        let max = spec.bitwidth.max_value() as i64;
        let data = self
            .data
            .iter()
            .map(|&v| shift_round_half_even(v, shift).clamp(-max, max) as i32)
            .collect();
        FixedTensor::new(self.shape.clone(), spec, data)
    }
}

fn shift_round_half_even(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    if shift >= 63 {
        return 0;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i64 << (shift - 1);
    match rem.cmp(&half) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => floor + (floor & 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q16() -> QuantSpec {
        QuantSpec::weights(Bitwidth::B16)
    }

    #[test]
    fn quantize_examples() {
        let t = quantize(&[0.5, 0.0, 1.0, -1.0], q16()).unwrap();
        assert_eq!(t.data(), &[16384, 0, 32767, -32767]);
    }

    #[test]
    fn quantize_ties_to_even() {
        let spec = QuantSpec::new(Bitwidth::B8, 0).unwrap();
        let t = quantize(&[0.5, 1.5, 2.5, -0.5, -1.5], spec).unwrap();
        assert_eq!(t.data(), &[0, 2, 2, 0, -2]);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let err = quantize(&[0.1, f64::NAN, 0.2], q16()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
        let err = quantize(&[f64::INFINITY], q16()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 0 }));
    }

    #[test]
    fn spec_validation() {
        assert!(QuantSpec::new(Bitwidth::B8, 8).is_err());
        assert!(QuantSpec::new(Bitwidth::B8, 7).is_ok());
        assert!(Bitwidth::from_bits(12).is_err());
        assert_eq!(QuantSpec::activations(Bitwidth::B16).frac_bits, 8);
        assert_eq!(QuantSpec::activations(Bitwidth::B8).frac_bits, 4);
    }

    #[test]
    fn rejects_asymmetric_minimum() {
        let err = FixedTensor::new(vec![2], q16(), vec![0, -32768]).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { index: 1, .. }));
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(FixedTensor::new(vec![2, 2], q16(), vec![1, 2, 3]).is_err());
        assert!(FixedTensor::new(vec![0], q16(), vec![]).is_err());
    }

    #[test]
    fn requantize_rounds_and_saturates() {
        let t = IntTensor { shape: vec![5], data: vec![6, 10, 14, -6, 1 << 40] };
        let spec = QuantSpec::new(Bitwidth::B8, 0).unwrap();
        // 6/4 = 1.5 -> 2, 10/4 = 2.5 -> 2, 14/4 = 3.5 -> 4, -1.5 -> -2
        assert_eq!(t.requantize(2, spec).unwrap().data(), &[2, 2, 4, -2, 127]);
    }

    #[test]
    fn quantize_error_bound() {
        let spec = QuantSpec::activations(Bitwidth::B16);
        let values: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.0371).sin() * 100.0).collect();
        let t = quantize(&values, spec).unwrap();
        for (v, d) in values.iter().zip(t.dequantize()) {
            assert!((v - d).abs() <= spec.step() / 2.0 + 1e-12);
        }
    }
}
