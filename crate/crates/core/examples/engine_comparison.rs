//! Run one conv layer on every engine and compare cycles and energy-delay.
//!
//! cargo run --example engine_comparison

use tetris_sim::sim::{energy_report, EnergyModel};
use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, QuantSpec};
use tetris_sim::{reference_conv, run_layer, ConvLayer, EngineKind, SimConfig};

fn main() -> tetris_sim::Result<()> {
    let bits = Bitwidth::B8;
    let w = synth_tensor(vec![16, 16, 3, 3], QuantSpec::weights(bits), &Distribution::bernoulli(0.311), 5)?;
    let x = synth_tensor(vec![1, 16, 12, 12], QuantSpec::activations(bits), &Distribution::Uniform, 6)?;
    let layer = ConvLayer::new("conv", w, 1, 1);
    let cfg = SimConfig::default();
    let expected = reference_conv(&x, &layer.weights, 1, 1)?;

    let mut reports = Vec::new();
    for engine in EngineKind::ALL {
        let run = run_layer(engine, &layer, &x, &cfg)?;
        assert_eq!(run.output, expected, "{engine}");
        reports.push(run.report);
    }
    let edp = energy_report(&reports, &EnergyModel::default(), EngineKind::MacParallel)?;
    let mac = reports.iter().find(|r| r.engine == EngineKind::MacParallel).unwrap();

    println!("{:<12} {:>10} {:>9} {:>10}", "engine", "cycles", "speedup", "norm EDP");
    for (r, e) in reports.iter().zip(&edp) {
        println!("{:<12} {:>10} {:>8.2}x {:>10.3}", r.engine, r.total_cycles, r.speedup_over(mac), e.normalized_edp.unwrap_or(f64::NAN));
    }
    Ok(())
}
