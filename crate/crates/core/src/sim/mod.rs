//! Layer- and network-level simulation on top of the lane engines.

mod energy;
mod lanes;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bitserial_lane, mac_lane, EngineKind};
use crate::error::{Error, Result};
use crate::kneader::{check_stride, knead_lane, KneadedLane, DEFAULT_STRIDE};
use crate::sac::{run_lane_fp16, run_lane_int8, EventCounts, LaneResult, SacConfig};
use crate::tensor::{Bitwidth, FixedTensor, IntTensor, QuantSpec};

pub use energy::{energy_report, EdpRow, EnergyModel};
pub use lanes::{lower_conv, Lane, LaneStream};
pub use report::{CycleReport, LayerCycles};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub ks: usize,
    pub tree_latency: u64,
    /// Issue units (lanes, or lane pairs in int8 mode) per PE step.
    pub lanes_per_unit: usize,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { ks: DEFAULT_STRIDE, tree_latency: 1, lanes_per_unit: 16, jobs: 1 }
    }
}

impl SimConfig {
    fn sac(&self) -> SacConfig {
        SacConfig { tree_latency: self.tree_latency }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub name: String,
    /// FCKK weights.
    pub weights: FixedTensor,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
}

impl ConvLayer {
    pub fn new(name: impl Into<String>, weights: FixedTensor, stride: usize, pad: usize) -> Self {
        ConvLayer { name: name.into(), weights, stride, pad, relu: false }
    }

    pub fn with_relu(mut self, relu: bool) -> Self {
        self.relu = relu;
        self
    }
}

#[derive(Clone, Debug)]
pub struct LayerRun {
    pub output: IntTensor,
    pub report: CycleReport,
}

pub fn relu(t: &IntTensor) -> IntTensor {
    IntTensor { shape: t.shape.clone(), data: t.data.iter().map(|&v| v.max(0)).collect() }
}

fn check_engine(engine: EngineKind, weights: Bitwidth, input: Bitwidth) -> Result<()> {
    if engine == EngineKind::TetrisInt8 {
        for b in [weights, input] {
            if b != Bitwidth::B8 {
                return Err(Error::IncompatibleEngine { engine: engine.name().into(), bits: b.bits() });
            }
        }
    }
    Ok(())
}

fn map_units<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Lane results of one layer, plus per-unit cycles.
struct LayerLanes {
    sums: Vec<i64>,
    units: Vec<LaneResult>,
}

fn execute(engine: EngineKind, stream: &LaneStream, cfg: &SimConfig) -> Result<LayerLanes> {
    let n = stream.len();
    match engine {
        EngineKind::MacParallel | EngineKind::BitSerialEssential => {
            let run = if engine == EngineKind::MacParallel { mac_lane } else { bitserial_lane };
            let units = map_units(n, cfg.jobs, |i| {
                let l = stream.lane(i);
                run(l.weights, l.activations)
            })?;
            Ok(LayerLanes { sums: units.iter().map(|u| u.sum).collect(), units })
        }
        EngineKind::TetrisFp16 => {
            let kneaded = knead_filters(stream, cfg.ks)?;
            let units = map_units(n, cfg.jobs, |i| {
                let l = stream.lane(i);
                run_lane_fp16(&kneaded[l.filter], l.activations, cfg.sac())
            })?;
            Ok(LayerLanes { sums: units.iter().map(|u| u.sum).collect(), units })
        }
        EngineKind::TetrisInt8 => {
            let kneaded = knead_filters(stream, cfg.ks)?;
            let empty = knead_lane(&[], Bitwidth::B8, cfg.ks)?;
            let pairs = map_units(n.div_ceil(2), cfg.jobs, |u| {
                let a = stream.lane(2 * u);
                let (lane_b, acts_b) = if 2 * u + 1 < n {
                    let b = stream.lane(2 * u + 1);
                    (&kneaded[b.filter], b.activations)
                } else {
                    (&empty, &[][..])
                };
                run_lane_int8(&kneaded[a.filter], lane_b, a.activations, acts_b, cfg.sac())
            })?;
            let sums = pairs.iter().flat_map(|p| p.sums).take(n).collect();
            let units = pairs
                .iter()
                .map(|p| LaneResult {
                    sum: 0,
                    accumulation_cycles: p.accumulation_cycles,
                    tree_cycles: p.tree_cycles,
                    events: p.events,
                })
                .collect();
            Ok(LayerLanes { sums, units })
        }
    }
}

fn knead_filters(stream: &LaneStream, ks: usize) -> Result<Vec<KneadedLane>> {
    stream.filters().iter().map(|w| knead_lane(w, stream.weight_bits, ks)).collect()
}

fn layer_cycles(name: &str, stream: &LaneStream, units: &[LaneResult], cfg: &SimConfig) -> LayerCycles {
    let mut events = EventCounts::default();
    for u in units {
        events += u.events;
    }
    let unit_cycles: Vec<u64> = units.iter().map(LaneResult::cycles).collect();
    let accumulation_cycles = units.iter().map(|u| u.accumulation_cycles).sum();
    let tree_cycles = units.iter().map(|u| u.tree_cycles).sum();
    LayerCycles {
        name: name.to_string(),
        lanes: stream.len() as u64,
        pairs: (stream.len() * stream.lane_len()) as u64,
        accumulation_cycles,
        tree_cycles,
        total_cycles: unit_cycles.iter().sum(),
        pe_step_cycles: report::pe_step_cycles(&unit_cycles, cfg.lanes_per_unit),
        events,
        unit_cycles,
    }
}

fn run_layer_inner(engine: EngineKind, layer: &ConvLayer, input: &FixedTensor, cfg: &SimConfig) -> Result<(IntTensor, LayerCycles)> {
    check_engine(engine, layer.weights.bitwidth(), input.bitwidth())?;
    if engine.is_tetris() {
        check_stride(cfg.ks)?;
    }
    let stream = lower_conv(&layer.weights, input, layer.stride, layer.pad)?;
    let lanes = execute(engine, &stream, cfg)?;
    let mut output = IntTensor { shape: stream.geometry.output_shape(), data: lanes.sums };
    if layer.relu {
        output = relu(&output);
    }
    Ok((output, layer_cycles(&layer.name, &stream, &lanes.units, cfg)))
}

fn report_for(engine: EngineKind, cfg: &SimConfig, layers: Vec<LayerCycles>) -> CycleReport {
    let ks = engine.is_tetris().then_some(cfg.ks);
    let tree = if engine.is_tetris() { cfg.tree_latency } else { 0 };
    CycleReport::from_layers(engine, ks, tree, cfg.lanes_per_unit, layers)
}

/// Runs one convolution layer on `engine`.
pub fn run_layer(engine: EngineKind, layer: &ConvLayer, input: &FixedTensor, cfg: &SimConfig) -> Result<LayerRun> {
    let (output, cycles) = run_layer_inner(engine, layer, input, cfg)?;
    Ok(LayerRun { output, report: report_for(engine, cfg, vec![cycles]) })
}

#[derive(Clone, Debug)]
pub struct NetworkRun {
    /// Raw accumulator output of the last layer.
    pub output: IntTensor,
    pub report: CycleReport,
}

/// Runs a conv/ReLU stack. Between layers the accumulators are shifted back to
/// `act_spec`'s fraction bits (round half to even) and saturated.
pub fn run_network(
    engine: EngineKind,
    layers: &[ConvLayer],
    input: &FixedTensor,
    act_spec: QuantSpec,
    cfg: &SimConfig,
) -> Result<NetworkRun> {
    if layers.is_empty() {
        return Err(Error::Config("network has no layers".into()));
    }
    let mut x = input.clone();
    let mut cycles = Vec::with_capacity(layers.len());
    let mut last = None;
    for (i, layer) in layers.iter().enumerate() {
        let (out, c) = run_layer_inner(engine, layer, &x, cfg)?;
        cycles.push(c);
        if i + 1 < layers.len() {
            let shift = (x.spec().frac_bits + layer.weights.spec().frac_bits).saturating_sub(act_spec.frac_bits);
            x = out.requantize(shift, act_spec)?;
        }
        last = Some(out);
    }
    Ok(NetworkRun { output: last.unwrap(), report: report_for(engine, cfg, cycles) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub ks: usize,
    pub cycles: u64,
    pub accumulation_cycles: u64,
    pub base_cycles: u64,
    /// `cycles / base_cycles`.
    pub ratio: f64,
}

/// Cycles of a Tetris engine over a list of kneading strides. The base is the
/// same datapath without kneading, one issue slot per weight: the pair count
/// in fp16 mode, and per lane pair the longer lane in int8 mode.
pub fn sweep_ks(
    engine: EngineKind,
    layer: &ConvLayer,
    input: &FixedTensor,
    ks_list: &[usize],
    cfg: &SimConfig,
) -> Result<Vec<SweepRow>> {
    if !engine.is_tetris() {
        return Err(Error::Config(format!("sweep needs a tetris engine, got {engine}")));
    }
    if ks_list.is_empty() {
        return Err(Error::Config("empty KS list".into()));
    }
    ks_list.iter().try_for_each(|&ks| check_stride(ks))?;
    let g = crate::baselines::ConvGeometry::new(input.shape(), layer.weights.shape(), layer.stride, layer.pad)?;
    let units = match engine {
        EngineKind::TetrisInt8 => g.lane_count().div_ceil(2),
        _ => g.lane_count(),
    };
    let base_cycles = (units * g.lane_len()) as u64;
    ks_list
        .iter()
        .map(|&ks| {
            let run = run_layer(engine, layer, input, &SimConfig { ks, ..*cfg })?;
            Ok(SweepRow {
                ks,
                cycles: run.report.total_cycles,
                accumulation_cycles: run.report.accumulation_cycles,
                base_cycles,
                ratio: run.report.total_cycles as f64 / base_cycles as f64,
            })
        })
        .collect()
}
