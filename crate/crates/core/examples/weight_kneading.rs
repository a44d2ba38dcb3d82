//! Knead a short lane and print the resulting words.
//!
//! cargo run --example weight_kneading

use tetris_sim::kneader::{decode_lane, group_cycle_count, knead_lane, validate_kneading, Sign};
use tetris_sim::Bitwidth;

fn main() -> tetris_sim::Result<()> {
    let weights = [0b0110, -0b0101, 0b0011, 0b1000, -0b0001, 0b0100];
    let lane = knead_lane(&weights, Bitwidth::B16, 6)?;

    println!("weights (column 3..0):");
    for (i, w) in weights.iter().enumerate() {
        println!("  w{i} {}{:04b}", if *w < 0 { '-' } else { '+' }, w.abs());
    }
    let group = &lane.groups[0];
    println!("\n{} weights kneaded into {} words:", weights.len(), group_cycle_count(group));
    for (i, word) in group.words.iter().enumerate() {
        let cells: Vec<String> = (0..4)
            .rev()
            .map(|c| match word.get(c) {
                Some(e) => format!("{}w{}", if e.sign == Sign::Neg { '-' } else { '+' }, e.pointer()),
                None => "  . ".into(),
            })
            .collect();
        println!("  word {i}: [{}]", cells.join(" "));
    }

    validate_kneading(&weights, &lane).expect("kneading invariants");
    assert_eq!(decode_lane(&lane).unwrap(), weights);
    println!("\nvalidated and decoded back to the original weights");
    Ok(())
}
