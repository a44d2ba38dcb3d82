//! Comparison engines and the ground-truth convolution.
//!
//! `mac_lane` models a bit-parallel MAC datapath: one pair per cycle whatever
//! the operand values. `bitserial_lane` models an essential-bit serial engine
//! on the weight side: one cycle per set magnitude bit, zero weights free.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sac::{EventCounts, LaneResult};
use crate::tensor::{FixedTensor, IntTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EngineKind {
    #[serde(rename = "tetris-fp16")]
    TetrisFp16,
    #[serde(rename = "tetris-int8")]
    TetrisInt8,
    #[serde(rename = "mac")]
    MacParallel,
    #[serde(rename = "bitserial")]
    BitSerialEssential,
}

impl EngineKind {
    pub const ALL: [EngineKind; 4] =
        [EngineKind::TetrisFp16, EngineKind::TetrisInt8, EngineKind::MacParallel, EngineKind::BitSerialEssential];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::TetrisFp16 => "tetris-fp16",
            EngineKind::TetrisInt8 => "tetris-int8",
            EngineKind::MacParallel => "mac",
            EngineKind::BitSerialEssential => "bitserial",
        }
    }

    pub fn is_tetris(self) -> bool {
        matches!(self, EngineKind::TetrisFp16 | EngineKind::TetrisInt8)
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown engine {s:?}")))
    }
}

fn dot(weights: &[i32], activations: &[i32]) -> Result<i64> {
    if weights.len() != activations.len() {
        return Err(Error::LengthMismatch { weights: weights.len(), activations: activations.len() });
    }
    weights.iter().zip(activations).try_fold(0i64, |acc, (&w, &a)| {
        acc.checked_add(w as i64 * a as i64).ok_or(Error::Overflow { column: 0 })
    })
}

/// Bit-parallel MAC: one cycle per pair.
pub fn mac_lane(weights: &[i32], activations: &[i32]) -> Result<LaneResult> {
    let sum = dot(weights, activations)?;
    let n = weights.len() as u64;
    Ok(LaneResult {
        sum,
        accumulation_cycles: n,
        tree_cycles: 0,
        events: EventCounts { macs: n, buffer_reads: 2 * n, ..EventCounts::default() },
    })
}

/// Weight-side essential-bit serial engine: one cycle per set magnitude bit.
pub fn bitserial_lane(weights: &[i32], activations: &[i32]) -> Result<LaneResult> {
    let sum = dot(weights, activations)?;
    let bits: u64 = weights.iter().map(|w| w.unsigned_abs().count_ones() as u64).sum();
    let n = weights.len() as u64;
    Ok(LaneResult {
        sum,
        accumulation_cycles: bits,
        tree_cycles: 0,
        events: EventCounts { segment_adds: bits, buffer_reads: 2 * n, ..EventCounts::default() },
    })
}

/// Output geometry of a 2-D convolution over NCHW input and FCKK weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weights: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [batch, channels, height, width] = *input else {
            return Err(Error::Shape(format!("input must be NCHW, got {input:?}")));
        };
        let [filters, wc, kernel_h, kernel_w] = *weights else {
            return Err(Error::Shape(format!("weights must be FCKK, got {weights:?}")));
        };
        if wc != channels {
            return Err(Error::Shape(format!("weights expect {wc} channels, input has {channels}")));
        }
        if stride == 0 {
            return Err(Error::Shape("stride must be at least 1".into()));
        }
        let out = |size: usize, k: usize| {
            let padded = size + 2 * pad;
            if padded < k {
                Err(Error::Shape(format!("kernel {k} larger than padded extent {padded}")))
            } else {
                Ok((padded - k) / stride + 1)
            }
        };
        let out_h = out(height, kernel_h)?;
        let out_w = out(width, kernel_w)?;
        Ok(ConvGeometry {
            batch,
            channels,
            height,
            width,
            filters,
            kernel_h,
            kernel_w,
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    pub fn lane_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn lane_count(&self) -> usize {
        self.batch * self.filters * self.out_h * self.out_w
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.filters, self.out_h, self.out_w]
    }
}

/// Direct integer convolution; the oracle every engine is checked against.
pub fn reference_conv(input: &FixedTensor, weights: &FixedTensor, stride: usize, pad: usize) -> Result<IntTensor> {
    let g = ConvGeometry::new(input.shape(), weights.shape(), stride, pad)?;
    let x = input.data();
    let w = weights.data();
    let mut out = IntTensor::zeros(g.output_shape());
    let mut o = 0;
    for n in 0..g.batch {
        for f in 0..g.filters {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let mut acc = 0i64;
                    for c in 0..g.channels {
                        for kh in 0..g.kernel_h {
                            let ih = (oh * stride + kh) as isize - pad as isize;
                            if ih < 0 || ih >= g.height as isize {
                                continue;
                            }
                            for kw in 0..g.kernel_w {
                                let iw = (ow * stride + kw) as isize - pad as isize;
                                if iw < 0 || iw >= g.width as isize {
                                    continue;
                                }
                                let xv = x[((n * g.channels + c) * g.height + ih as usize) * g.width + iw as usize];
                                let wv = w[((f * g.channels + c) * g.kernel_h + kh) * g.kernel_w + kw];
                                acc = acc
                                    .checked_add(xv as i64 * wv as i64)
                                    .ok_or(Error::Overflow { column: 0 })?;
                            }
                        }
                    }
                    out.data[o] = acc;
                    o += 1;
                }
            }
        }
    }
    Ok(out)
}
