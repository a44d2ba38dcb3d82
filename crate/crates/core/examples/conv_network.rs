//! A three-layer network with ReLU and requantization between layers.
//!
//! cargo run --example conv_network

use tetris_sim::sim::run_network;
use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, QuantSpec};
use tetris_sim::{ConvLayer, EngineKind, SimConfig};

fn main() -> tetris_sim::Result<()> {
    let bits = Bitwidth::B16;
    let wspec = QuantSpec::weights(bits);
    let aspec = QuantSpec::activations(bits);
    let dist = Distribution::sparse(0.2, Distribution::bernoulli(0.311));
    let layers = vec![
        ConvLayer::new("conv1", synth_tensor(vec![8, 3, 3, 3], wspec, &dist, 1)?, 1, 1).with_relu(true),
        ConvLayer::new("conv2", synth_tensor(vec![16, 8, 3, 3], wspec, &dist, 2)?, 2, 1).with_relu(true),
        ConvLayer::new("conv3", synth_tensor(vec![8, 16, 1, 1], wspec, &dist, 3)?, 1, 0),
    ];
    let input = synth_tensor(vec![1, 3, 16, 16], aspec, &Distribution::Uniform, 4)?;
    let cfg = SimConfig { jobs: 2, ..SimConfig::default() };

    let tetris = run_network(EngineKind::TetrisFp16, &layers, &input, aspec, &cfg)?;
    let mac = run_network(EngineKind::MacParallel, &layers, &input, aspec, &cfg)?;
    assert_eq!(tetris.output, mac.output);

    println!("{:<6} {:>6} {:>9} {:>9}", "layer", "lanes", "mac", "tetris");
    for (t, m) in tetris.report.layers.iter().zip(&mac.report.layers) {
        println!("{:<6} {:>6} {:>9} {:>9}", t.name, t.lanes, m.total_cycles, t.total_cycles);
    }
    println!("output shape {:?}, speedup {:.2}x", tetris.output.shape, tetris.report.speedup_over(&mac.report));
    Ok(())
}
