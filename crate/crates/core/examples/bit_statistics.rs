//! Zero-value and zero-bit statistics of synthetic weight tensors.
//!
//! cargo run --example bit_statistics

use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, QuantSpec};
use tetris_sim::BitReport;

fn main() -> tetris_sim::Result<()> {
    let spec = QuantSpec::weights(Bitwidth::B16);
    let cases = [
        ("uniform", Distribution::Uniform),
        ("bernoulli 0.311", Distribution::bernoulli(0.311)),
        ("sparse 0.5 over bernoulli 0.311", Distribution::sparse(0.5, Distribution::bernoulli(0.311))),
    ];
    println!("{:<34} {:>10} {:>10}", "distribution", "zero vals", "zero bits");
    for (name, dist) in &cases {
        let t = synth_tensor(vec![64, 64, 3, 3], spec, dist, 1)?;
        let r = BitReport::of(&t)?;
        println!("{name:<34} {:>9.2}% {:>9.2}%", 100.0 * r.zero_value_fraction, 100.0 * r.zero_bit_fraction);
    }

    let t = synth_tensor(vec![4096], spec, &cases[2].1, 2)?;
    let r = BitReport::of(&t)?;
    println!("\nper-column density, LSB first:");
    for (b, d) in r.column_density.iter().enumerate() {
        println!("  bit {b:>2}: {d:.3} {}", "#".repeat((d * 40.0) as usize));
    }
    Ok(())
}
