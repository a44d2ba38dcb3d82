use std::io::Write;

use serde::Serialize;

use crate::baselines::EngineKind;
use crate::error::Result;
use crate::sac::EventCounts;

/// Cycle accounting for one layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerCycles {
    pub name: String,
    pub lanes: u64,
    pub pairs: u64,
    pub accumulation_cycles: u64,
    pub tree_cycles: u64,
    pub total_cycles: u64,
    /// Cycles with `lanes_per_unit` issue units running side by side, each
    /// step lasting as long as its slowest unit.
    pub pe_step_cycles: u64,
    pub events: EventCounts,
    /// One entry per issue unit: a lane, or a lane pair in int8 mode.
    pub unit_cycles: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleReport {
    pub engine: EngineKind,
    pub ks: Option<usize>,
    pub tree_latency: u64,
    pub lanes_per_unit: usize,
    pub total_cycles: u64,
    pub accumulation_cycles: u64,
    pub tree_cycles: u64,
    pub pe_step_cycles: u64,
    pub events: EventCounts,
    pub layers: Vec<LayerCycles>,
}

#[derive(Serialize)]
struct LayerRow<'a> {
    engine: EngineKind,
    layer: &'a str,
    lanes: u64,
    pairs: u64,
    accumulation_cycles: u64,
    tree_cycles: u64,
    total_cycles: u64,
    pe_step_cycles: u64,
    words_consumed: u64,
    segment_adds: u64,
    tree_firings: u64,
    splitter_decodes: u64,
    buffer_reads: u64,
    macs: u64,
}

#[derive(Serialize)]
struct UnitRow<'a> {
    engine: EngineKind,
    layer: &'a str,
    unit: usize,
    cycles: u64,
}

impl CycleReport {
    pub(crate) fn from_layers(
        engine: EngineKind,
        ks: Option<usize>,
        tree_latency: u64,
        lanes_per_unit: usize,
        layers: Vec<LayerCycles>,
    ) -> Self {
        let mut events = EventCounts::default();
        for l in &layers {
            events += l.events;
        }
        CycleReport {
            engine,
            ks,
            tree_latency,
            lanes_per_unit,
            total_cycles: layers.iter().map(|l| l.total_cycles).sum(),
            accumulation_cycles: layers.iter().map(|l| l.accumulation_cycles).sum(),
            tree_cycles: layers.iter().map(|l| l.tree_cycles).sum(),
            pe_step_cycles: layers.iter().map(|l| l.pe_step_cycles).sum(),
            events,
            layers,
        }
    }

    /// `baseline_cycles / self_cycles`.
    pub fn speedup_over(&self, baseline: &CycleReport) -> f64 {
        baseline.total_cycles as f64 / self.total_cycles as f64
    }

    /// Per-layer rows.
    pub fn write_layer_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for l in &self.layers {
            out.serialize(LayerRow {
                engine: self.engine,
                layer: &l.name,
                lanes: l.lanes,
                pairs: l.pairs,
                accumulation_cycles: l.accumulation_cycles,
                tree_cycles: l.tree_cycles,
                total_cycles: l.total_cycles,
                pe_step_cycles: l.pe_step_cycles,
                words_consumed: l.events.words_consumed,
                segment_adds: l.events.segment_adds,
                tree_firings: l.events.tree_firings,
                splitter_decodes: l.events.splitter_decodes,
                buffer_reads: l.events.buffer_reads,
                macs: l.events.macs,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per-unit rows.
    pub fn write_lane_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for l in &self.layers {
            for (unit, &cycles) in l.unit_cycles.iter().enumerate() {
                out.serialize(UnitRow { engine: self.engine, layer: &l.name, unit, cycles })?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn pe_step_cycles(unit_cycles: &[u64], lanes_per_unit: usize) -> u64 {
    unit_cycles.chunks(lanes_per_unit.max(1)).map(|c| c.iter().copied().max().unwrap_or(0)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pe_steps_take_slowest_unit() {
        assert_eq!(pe_step_cycles(&[3, 1, 4, 1, 5], 2), 3 + 4 + 5);
        assert_eq!(pe_step_cycles(&[3, 1, 4], 1), 8);
        assert_eq!(pe_step_cycles(&[], 16), 0);
    }
}
