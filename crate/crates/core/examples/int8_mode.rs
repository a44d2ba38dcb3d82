//! The int8 datapath runs two 8-bit lanes at once, one per half.
//!
//! cargo run --example int8_mode

use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, QuantSpec};
use tetris_sim::{knead_lane, run_lane_fp16, run_lane_int8, SacConfig};

fn main() -> tetris_sim::Result<()> {
    let spec = QuantSpec::weights(Bitwidth::B8);
    let a = synth_tensor(vec![144], spec, &Distribution::bernoulli(0.3), 1)?;
    let b = synth_tensor(vec![144], spec, &Distribution::bernoulli(0.3), 2)?;
    let acts_a: Vec<i32> = (0..144).map(|i| (i % 31) - 15).collect();
    let acts_b: Vec<i32> = (0..144).map(|i| 20 - (i % 41)).collect();
    let cfg = SacConfig::default();

    let la = knead_lane(a.data(), Bitwidth::B8, 16)?;
    let lb = knead_lane(b.data(), Bitwidth::B8, 16)?;
    let single_a = run_lane_fp16(&la, &acts_a, cfg)?;
    let single_b = run_lane_fp16(&lb, &acts_b, cfg)?;
    let pair = run_lane_int8(&la, &lb, &acts_a, &acts_b, cfg)?;

    println!("lane A alone: {} cycles, lane B alone: {} cycles", single_a.cycles(), single_b.cycles());
    println!("both in int8 mode: {} cycles, {} words consumed", pair.cycles(), pair.events.words_consumed);
    println!("sums {:?} (expected [{}, {}])", pair.sums, single_a.sum, single_b.sum);
    assert_eq!(pair.sums, [single_a.sum, single_b.sum]);
    Ok(())
}
