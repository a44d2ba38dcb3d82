//! Lowering of a convolution layer into lanes.
//!
//! Lane `i` reduces output element `i` of the NFHW output in row-major order,
//! so lanes are ordered `(n, f, out_y, out_x)`. Pairs inside a lane follow the
//! filter's own `(c, kh, kw)` layout. Out-of-bounds taps are kept as explicit
//! zero-activation pairs so every lane has length `C·KH·KW`.
//!
//! Weights are stored once per filter and activations once per receptive
//! field; a lane is a view joining the two.

use crate::baselines::ConvGeometry;
use crate::error::Result;
use crate::tensor::{Bitwidth, FixedTensor};

#[derive(Clone, Debug)]
pub struct LaneStream {
    pub geometry: ConvGeometry,
    pub weight_bits: Bitwidth,
    filters: Vec<Vec<i32>>,
    /// Receptive fields indexed by `(n, out_y, out_x)`.
    patches: Vec<Vec<i32>>,
}

/// One lane: everything reduced into a single output element.
#[derive(Clone, Copy, Debug)]
pub struct Lane<'a> {
    pub index: usize,
    pub batch: usize,
    pub filter: usize,
    pub out_y: usize,
    pub out_x: usize,
    pub weights: &'a [i32],
    pub activations: &'a [i32],
}

impl<'a> Lane<'a> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(weight, activation)` pairs followed by the implicit pass marker.
    pub fn pairs(&self) -> impl Iterator<Item = (i32, i32)> + 'a {
        self.weights.iter().copied().zip(self.activations.iter().copied())
    }
}

impl LaneStream {
    pub fn len(&self) -> usize {
        self.geometry.lane_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lane_len(&self) -> usize {
        self.geometry.lane_len()
    }

    pub fn filter_weights(&self, f: usize) -> &[i32] {
        &self.filters[f]
    }

    pub fn filters(&self) -> &[Vec<i32>] {
        &self.filters
    }

    pub fn lane(&self, index: usize) -> Lane<'_> {
        let g = &self.geometry;
        let out_x = index % g.out_w;
        let out_y = (index / g.out_w) % g.out_h;
        let filter = (index / (g.out_w * g.out_h)) % g.filters;
        let batch = index / (g.out_w * g.out_h * g.filters);
        let patch = (batch * g.out_h + out_y) * g.out_w + out_x;
        Lane {
            index,
            batch,
            filter,
            out_y,
            out_x,
            weights: &self.filters[filter],
            activations: &self.patches[patch],
        }
    }

    pub fn lanes(&self) -> impl Iterator<Item = Lane<'_>> + '_ {
        (0..self.len()).map(move |i| self.lane(i))
    }
}

pub fn lower_conv(weights: &FixedTensor, input: &FixedTensor, stride: usize, pad: usize) -> Result<LaneStream> {
    let g = ConvGeometry::new(input.shape(), weights.shape(), stride, pad)?;
    let filters = weights.data().chunks(g.lane_len()).map(<[i32]>::to_vec).collect();
    let x = input.data();
    let mut patches = Vec::with_capacity(g.batch * g.out_h * g.out_w);
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut patch = Vec::with_capacity(g.lane_len());
                for c in 0..g.channels {
                    for kh in 0..g.kernel_h {
                        for kw in 0..g.kernel_w {
                            let iy = (oy * stride + kh).checked_sub(pad).filter(|&v| v < g.height);
                            let ix = (ox * stride + kw).checked_sub(pad).filter(|&v| v < g.width);
                            patch.push(match (iy, ix) {
                                (Some(iy), Some(ix)) => x[((n * g.channels + c) * g.height + iy) * g.width + ix],
                                _ => 0,
                            });
                        }
                    }
                }
                patches.push(patch);
            }
        }
    }
    Ok(LaneStream { geometry: g, weight_bits: weights.bitwidth(), filters, patches })
}
