//! Ineffectual-computation statistics over the sign-magnitude bits of a
//! tensor: zero-valued elements, zero bits, and per-column density of
//! essential (1) bits.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Bitwidth, FixedTensor};

const CHUNK: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BitReport {
    pub bitwidth: Bitwidth,
    pub n_values: u64,
    pub zero_values: u64,
    /// Count of elements with magnitude bit `b` set, indexed by `b`.
    pub column_ones: Vec<u64>,
    pub zero_value_fraction: f64,
    pub zero_bit_fraction: f64,
    pub column_density: Vec<f64>,
}

#[derive(Serialize)]
struct ColumnRow {
    bit: usize,
    ones: u64,
    density: f64,
}

impl BitReport {
    pub fn of(t: &FixedTensor) -> Result<Self> {
        BitReport::from_values(t.data(), t.bitwidth())
    }

    pub fn from_values(values: &[i32], bitwidth: Bitwidth) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let m = bitwidth.magnitude_bits();
        let (zero_values, column_ones) = values
            .par_chunks(CHUNK)
            .map(|chunk| count_chunk(chunk, m))
            .reduce(
                || (0, vec![0; m]),
                |(za, mut ca), (zb, cb)| {
                    ca.iter_mut().zip(&cb).for_each(|(a, b)| *a += b);
                    (za + zb, ca)
                },
            );
        let n = values.len() as u64;
        let column_density: Vec<f64> = column_ones.iter().map(|&c| c as f64 / n as f64).collect();
        let mean_density = column_density.iter().sum::<f64>() / m as f64;
        Ok(BitReport {
            bitwidth,
            n_values: n,
            zero_values,
            zero_value_fraction: zero_values as f64 / n as f64,
            zero_bit_fraction: 1.0 - mean_density,
            column_ones,
            column_density,
        })
    }

    pub fn magnitude_bits(&self) -> usize {
        self.column_ones.len()
    }

    /// Total zero bits over all magnitude fields.
    pub fn zero_bits(&self) -> u64 {
        self.n_values * self.magnitude_bits() as u64 - self.essential_bits()
    }

    pub fn essential_bits(&self) -> u64 {
        self.column_ones.iter().sum()
    }

    pub fn mean_column_density(&self) -> f64 {
        self.column_density.iter().sum::<f64>() / self.magnitude_bits() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One CSV row per bit column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (bit, (&ones, &density)) in self.column_ones.iter().zip(&self.column_density).enumerate() {
            out.serialize(ColumnRow { bit, ones, density })?;
        }
        out.flush()?;
        Ok(())
    }
}

fn count_chunk(values: &[i32], m: usize) -> (u64, Vec<u64>) {
    let mut ones = vec![0u64; m];
    let mut zeros = 0u64;
    for &v in values {
        let mut mag = v.unsigned_abs();
        if mag == 0 {
            zeros += 1;
            continue;
        }
        while mag != 0 {
            let b = mag.trailing_zeros() as usize;
            ones[b] += 1;
            mag &= mag - 1;
        }
    }
    (zeros, ones)
}

pub fn zero_value_fraction(t: &FixedTensor) -> Result<f64> {
    Ok(BitReport::of(t)?.zero_value_fraction)
}

pub fn zero_bit_fraction(t: &FixedTensor) -> Result<f64> {
    Ok(BitReport::of(t)?.zero_bit_fraction)
}

pub fn bit_column_density(t: &FixedTensor) -> Result<Vec<f64>> {
    Ok(BitReport::of(t)?.column_density)
}
