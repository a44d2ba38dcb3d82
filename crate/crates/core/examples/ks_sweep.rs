//! How the kneading stride trades window length for cycles.
//!
//! cargo run --example ks_sweep

use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, QuantSpec};
use tetris_sim::{sweep_ks, ConvLayer, EngineKind, SimConfig};

fn main() -> tetris_sim::Result<()> {
    let bits = Bitwidth::B16;
    let w = synth_tensor(vec![8, 32, 3, 3], QuantSpec::weights(bits), &Distribution::bernoulli(0.311), 7)?;
    let x = synth_tensor(vec![1, 32, 8, 8], QuantSpec::activations(bits), &Distribution::Uniform, 8)?;
    let layer = ConvLayer::new("conv", w, 1, 1);

    let rows = sweep_ks(EngineKind::TetrisFp16, &layer, &x, &[1, 2, 4, 8, 10, 16, 20, 32, 64], &SimConfig::default())?;
    println!("{:>4} {:>9} {:>9} {:>7}", "ks", "cycles", "base", "ratio");
    for r in rows {
        println!("{:>4} {:>9} {:>9} {:>7.3}", r.ks, r.cycles, r.base_cycles, r.ratio);
    }
    Ok(())
}
