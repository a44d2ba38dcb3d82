//! Functional and cycle-level model of a weight-kneading split-and-accumulate
//! (SAC) convolution accelerator.
//!
//! Weights are stored in sign-magnitude fixed point. Within a window of `ks`
//! consecutive weights of a lane, the essential (1) bits of every magnitude
//! column are squeezed together so the window costs as many cycles as its
//! most populated column instead of one per weight. The SAC datapath routes
//! each essential bit's activation to a per-column segment accumulator and
//! performs a single shift-and-add per lane.
//!
//! Modules, bottom up:
//!
//! - [`tensor`]: fixed-point tensors, quantization, FXT1 files, synthetic data
//! - [`bitstats`]: zero-value / zero-bit statistics and per-column density
//! - [`kneader`]: weight kneading, decoding, and validation
//! - [`sac`]: splitter, segment accumulators, rear adder tree, fp16/int8 lanes
//! - [`baselines`]: bit-parallel MAC, bit-serial engine, reference convolution
//! - [`sim`]: conv lowering, layer/network runs, reports, energy, KS sweeps
//! - [`cli`]: the `tetris` command line
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod baselines;
pub mod bitstats;
pub mod cli;
pub mod error;
pub mod kneader;
pub mod sac;
pub mod sim;
pub mod tensor;

pub use baselines::{bitserial_lane, mac_lane, reference_conv, EngineKind};
pub use bitstats::BitReport;
pub use error::{Error, Result};
pub use kneader::{group_cycle_count, knead_lane, validate_kneading, KneadedLane};
pub use sac::{run_lane_fp16, run_lane_int8, SacConfig};
pub use sim::{run_layer, sweep_ks, ConvLayer, CycleReport, SimConfig};
pub use tensor::{Bitwidth, Distribution, FixedTensor, IntTensor, QuantSpec};
