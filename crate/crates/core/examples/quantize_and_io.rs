//! Quantize real values to fixed point, save them as FXT1, and load them back.
//!
//! cargo run --example quantize_and_io

use tetris_sim::tensor::{load_tensor, quantize_shaped, save_tensor, Bitwidth, QuantSpec};

fn main() -> tetris_sim::Result<()> {
    let values: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) * 0.137).collect();
    let spec = QuantSpec::weights(Bitwidth::B16);
    let t = quantize_shaped(&values, vec![3, 4], spec)?;

    println!("Q1.{} step {:e}", spec.frac_bits, spec.step());
    for (x, (q, back)) in values.iter().zip(t.data().iter().zip(t.dequantize())) {
        println!("{x:>8.4} -> {q:>6} -> {back:>8.4}");
    }

    let dir = std::env::temp_dir().join("tetris-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("weights.fxt");
    save_tensor(&t, &path)?;
    let back = load_tensor(&path)?;
    assert_eq!(back, t);
    println!("round trip through {} ok ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
