//! Seeded synthetic tensors used as stand-ins for real weight populations.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{checked_numel, FixedTensor, QuantSpec};
use crate::error::{Error, Result};

/// Element distribution for [`synth_tensor`].
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    /// Uniform over the symmetric integer range.
    Uniform,
    /// Each magnitude bit `b` is set independently with probability
    /// `densities[b]`; a single entry applies to every column. Sign is uniform.
    PerBitBernoulli(Vec<f64>),
    /// Zero with probability `p_zero`, otherwise drawn from `base`.
    Sparse { p_zero: f64, base: Box<Distribution> },
}

impl Distribution {
    pub fn bernoulli(density: f64) -> Self {
        Distribution::PerBitBernoulli(vec![density])
    }

    pub fn sparse(p_zero: f64, base: Distribution) -> Self {
        Distribution::Sparse { p_zero, base: Box::new(base) }
    }

    fn validate(&self, magnitude_bits: usize) -> Result<()> {
        match self {
            Distribution::Uniform => Ok(()),
            Distribution::PerBitBernoulli(d) => {
                if d.len() != 1 && d.len() != magnitude_bits {
                    return Err(Error::InvalidSpec(format!(
                        "expected 1 or {magnitude_bits} column densities, got {}",
                        d.len()
                    )));
                }
                d.iter().try_for_each(|&p| check_probability("column density", p))
            }
            Distribution::Sparse { p_zero, base } => {
                check_probability("p_zero", *p_zero)?;
                base.validate(magnitude_bits)
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, spec: QuantSpec) -> i32 {
        match self {
            Distribution::Uniform => {
                let max = spec.bitwidth.max_value();
                rng.random_range(-max..=max)
            }
            Distribution::PerBitBernoulli(d) => {
                let m = spec.bitwidth.magnitude_bits();
                let mut mag = 0i32;
                for b in 0..m {
                    let p = if d.len() == 1 { d[0] } else { d[b] };
                    if rng.random_bool(p) {
                        mag |= 1 << b;
                    }
                }
                if rng.random_bool(0.5) {
                    -mag
                } else {
                    mag
                }
            }
            Distribution::Sparse { p_zero, base } => {
                if rng.random_bool(*p_zero) {
                    0
                } else {
                    base.sample(rng, spec)
                }
            }
        }
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

/// Parses `uniform`, `bernoulli:D`, `bernoulli:D0,D1,...` and
/// `sparse:P:<base>`.
impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse distribution {s:?}"));
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "uniform" if rest.is_empty() => Ok(Distribution::Uniform),
            "bernoulli" => {
                let d = rest
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Distribution::PerBitBernoulli(d))
            }
            "sparse" => {
                let (p, base) = rest.split_once(':').ok_or_else(bad)?;
                let p: f64 = p.parse().map_err(|_| bad())?;
                Ok(Distribution::sparse(p, base.parse()?))
            }
            _ => Err(bad()),
        }
    }
}

/// Generates a tensor deterministically from `seed`.
pub fn synth_tensor(shape: Vec<usize>, spec: QuantSpec, dist: &Distribution, seed: u64) -> Result<FixedTensor> {
    spec.validate()?;
    dist.validate(spec.bitwidth.magnitude_bits())?;
    let len = checked_numel(&shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..len).map(|_| dist.sample(&mut rng, spec)).collect();
    FixedTensor::new(shape, spec, data)
}
