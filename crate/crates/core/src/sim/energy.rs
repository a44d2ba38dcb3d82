//! Relative energy and energy-delay product.
//!
//! Costs are unitless per-event weights, not calibrated joules; only ratios
//! between engines are meaningful.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::CycleReport;
use crate::baselines::EngineKind;
use crate::error::{Error, Result};
use crate::sac::EventCounts;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub mac: f64,
    pub segment_add: f64,
    pub splitter_decode: f64,
    pub tree_fire: f64,
    pub buffer_read: f64,
}

impl Default for EnergyModel {
    /// A 16-bit multiplier costs several adders; the rear tree about one MAC.
    fn default() -> Self {
        EnergyModel { mac: 1.0, segment_add: 0.2, splitter_decode: 0.05, tree_fire: 1.0, buffer_read: 0.5 }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("mac", self.mac),
            ("segment_add", self.segment_add),
            ("splitter_decode", self.splitter_decode),
            ("tree_fire", self.tree_fire),
            ("buffer_read", self.buffer_read),
        ];
        for (name, c) in costs {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::EnergyModel(format!("cost {name} = {c} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// Parses a JSON cost table; unknown or missing keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: EnergyModel = serde_json::from_str(text).map_err(|e| Error::EnergyModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        EnergyModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn scaled(&self, k: f64) -> Self {
        EnergyModel {
            mac: self.mac * k,
            segment_add: self.segment_add * k,
            splitter_decode: self.splitter_decode * k,
            tree_fire: self.tree_fire * k,
            buffer_read: self.buffer_read * k,
        }
    }

    pub fn energy(&self, e: &EventCounts) -> f64 {
        e.macs as f64 * self.mac
            + e.segment_adds as f64 * self.segment_add
            + e.splitter_decodes as f64 * self.splitter_decode
            + e.tree_firings as f64 * self.tree_fire
            + e.buffer_reads as f64 * self.buffer_read
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdpRow {
    pub engine: EngineKind,
    pub energy: f64,
    pub cycles: u64,
    pub edp: f64,
    /// EDP divided by the baseline's; `None` when the baseline EDP is zero.
    pub normalized_edp: Option<f64>,
}

pub fn energy_report(reports: &[CycleReport], model: &EnergyModel, baseline: EngineKind) -> Result<Vec<EdpRow>> {
    model.validate()?;
    let edp = |r: &CycleReport| {
        let energy = model.energy(&r.events);
        (energy, energy * r.total_cycles as f64)
    };
    let base = reports
        .iter()
        .find(|r| r.engine == baseline)
        .ok_or_else(|| Error::Config(format!("baseline engine {baseline} not among the reports")))?;
    let (_, base_edp) = edp(base);
    Ok(reports
        .iter()
        .map(|r| {
            let (energy, e) = edp(r);
            EdpRow {
                engine: r.engine,
                energy,
                cycles: r.total_cycles,
                edp: e,
                normalized_edp: (base_edp > 0.0).then(|| e / base_edp),
            }
        })
        .collect())
}
