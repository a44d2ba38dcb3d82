//! One lane through the split-and-accumulate datapath, next to MAC and
//! bit-serial execution of the same pairs.
//!
//! cargo run --example sac_lane

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetris_sim::tensor::{synth_tensor, Bitwidth, Distribution, QuantSpec};
use tetris_sim::{bitserial_lane, knead_lane, mac_lane, run_lane_fp16, SacConfig};

fn main() -> tetris_sim::Result<()> {
    let w = synth_tensor(vec![288], QuantSpec::weights(Bitwidth::B16), &Distribution::bernoulli(0.311), 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let acts: Vec<i32> = (0..w.len()).map(|_| rng.random_range(-4096..=4096)).collect();

    let cfg = SacConfig::default();
    let mac = mac_lane(w.data(), &acts)?;
    let serial = bitserial_lane(w.data(), &acts)?;
    println!("{:<12} {:>14} {:>8}", "engine", "sum", "cycles");
    println!("{:<12} {:>14} {:>8}", "mac", mac.sum, mac.cycles());
    println!("{:<12} {:>14} {:>8}", "bit-serial", serial.sum, serial.cycles());
    for ks in [1, 8, 16, 32] {
        let lane = knead_lane(w.data(), Bitwidth::B16, ks)?;
        let r = run_lane_fp16(&lane, &acts, cfg)?;
        assert_eq!(r.sum, mac.sum);
        println!("{:<12} {:>14} {:>8}   ({} segment adds)", format!("tetris ks={ks}"), r.sum, r.cycles(), r.events.segment_adds);
    }
    Ok(())
}
