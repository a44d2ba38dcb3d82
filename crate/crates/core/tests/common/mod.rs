//! Test-only oracles, written independently of the library's code paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, FixedTensor, QuantSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Popcount of the magnitude by counting '1' characters of its binary text.
pub fn naive_popcount(v: i32) -> u32 {
    format!("{:b}", (v as i64).abs()).chars().filter(|&c| c == '1').count() as u32
}

/// Bit `b` of the magnitude, read from its binary text.
pub fn naive_bit(v: i32, b: usize) -> bool {
    let s = format!("{:b}", (v as i64).abs());
    s.len() > b && s.as_bytes()[s.len() - 1 - b] == b'1'
}

pub fn naive_dot(w: &[i32], a: &[i32]) -> i64 {
    w.iter().zip(a).map(|(&w, &a)| w as i64 * a as i64).sum()
}

/// Convolution by materializing the zero-padded input first.
pub fn naive_conv(input: &FixedTensor, weights: &FixedTensor, stride: usize, pad: usize) -> Vec<i64> {
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (f, kh, kw) = (weights.shape()[0], weights.shape()[2], weights.shape()[3]);
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut padded = vec![vec![vec![vec![0i64; pw]; ph]; c]; n];
    for (i, &v) in input.data().iter().enumerate() {
        let x = i % w;
        let y = (i / w) % h;
        let ch = (i / (w * h)) % c;
        let b = i / (w * h * c);
        padded[b][ch][y + pad][x + pad] = v as i64;
    }
    let kernel = |fi: usize, ch: usize, y: usize, x: usize| weights.data()[((fi * c + ch) * kh + y) * kw + x] as i64;
    let oh = (ph - kh) / stride + 1;
    let ow = (pw - kw) / stride + 1;
    let mut out = Vec::with_capacity(n * f * oh * ow);
    for img in &padded {
        for fi in 0..f {
            for y in 0..oh {
                for x in 0..ow {
                    let mut s = 0;
                    for (ch, plane) in img.iter().enumerate() {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                s += plane[y * stride + dy][x * stride + dx] * kernel(fi, ch, dy, dx);
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

pub fn random_dist(r: &mut ChaCha8Rng) -> Distribution {
    match r.random_range(0..4) {
        0 => Distribution::Uniform,
        1 => Distribution::bernoulli(r.random_range(0.0..=1.0)),
        2 => Distribution::sparse(r.random_range(0.0..=1.0), Distribution::bernoulli(r.random_range(0.0..=1.0))),
        _ => Distribution::sparse(r.random_range(0.0..=1.0), Distribution::Uniform),
    }
}

pub fn random_lane(r: &mut ChaCha8Rng, bits: Bitwidth, max_len: usize) -> Vec<i32> {
    let len = r.random_range(0..=max_len);
    if len == 0 {
        return vec![];
    }
    let dist = random_dist(r);
    synth_tensor(vec![len], QuantSpec::weights(bits), &dist, r.random()).unwrap().data().to_vec()
}

pub fn random_activations(r: &mut ChaCha8Rng, bits: Bitwidth, len: usize) -> Vec<i32> {
    let max = bits.max_value();
    (0..len).map(|_| r.random_range(-max..=max)).collect()
}

pub struct RandomLayer {
    pub weights: FixedTensor,
    pub input: FixedTensor,
    pub stride: usize,
    pub pad: usize,
}

/// Layer with C ≤ 16, F ≤ 8, K ≤ 5, H = W ≤ 16.
pub fn random_layer(r: &mut ChaCha8Rng, bits: Bitwidth) -> RandomLayer {
    let c = r.random_range(1..=16);
    let f = r.random_range(1..=8);
    let k = r.random_range(1..=5);
    let pad = r.random_range(0..=k / 2);
    let hw = r.random_range(k.max(1)..=16);
    let stride = r.random_range(1..=2);
    let n = r.random_range(1..=2);
    let wdist = random_dist(r);
    let weights = synth_tensor(vec![f, c, k, k], QuantSpec::weights(bits), &wdist, r.random()).unwrap();
    let idist = random_dist(r);
    let input = synth_tensor(vec![n, c, hw, hw], QuantSpec::activations(bits), &idist, r.random()).unwrap();
    RandomLayer { weights, input, stride, pad }
}
