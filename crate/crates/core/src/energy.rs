//! Linear event-cost energy model: every counted event has a fixed pJ
//! price and a trace's energy is the dot product of the two vectors.
//! The bundled table is an estimate for a 12nm-class process, intended
//! for ratio comparisons rather than absolute joules; swap in a measured
//! table via TOML for anything stronger.

use serde::{Deserialize, Serialize};

use crate::config::CURRENT_SCHEMA_VERSION;
use crate::error::{SimError, SimResult};
use crate::trace::{Counters, EventKind, ALL_EVENT_KINDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyTable {
    pub schema_version: u32,
    /// Where the numbers came from; comparisons refuse to mix tables with
    /// different provenance.
    pub source: String,
    pub mac_pj: f64,
    pub shared_read_pj: f64,
    pub shared_write_pj: f64,
    pub rf_read_word_pj: f64,
    pub rf_write_word_pj: f64,
    pub global_transaction_pj: f64,
    pub stall_cycle_pj: f64,
    pub instruction_issue_pj: f64,
    pub controller_cycle_pj: f64,
}

impl EnergyTable {
    pub fn bundled() -> EnergyTable {
        EnergyTable {
            schema_version: CURRENT_SCHEMA_VERSION,
            source: "bundled-estimate".into(),
            mac_pj: 1.0,
            shared_read_pj: 2.5,
            shared_write_pj: 2.5,
            rf_read_word_pj: 1.2,
            rf_write_word_pj: 1.2,
            global_transaction_pj: 100.0,
            stall_cycle_pj: 0.0,
            instruction_issue_pj: 0.5,
            controller_cycle_pj: 0.05,
        }
    }

    pub fn from_toml(text: &str) -> SimResult<EnergyTable> {
        let table: EnergyTable =
            toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("energy table serializes")
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.schema_version != CURRENT_SCHEMA_VERSION {
            return Err(SimError::TableMismatch(format!(
                "energy table schema {} (tool speaks {})",
                self.schema_version, CURRENT_SCHEMA_VERSION
            )));
        }
        for kind in ALL_EVENT_KINDS {
            let c = self.cost(kind);
            if !c.is_finite() || c < 0.0 {
                return Err(SimError::Invariant(format!(
                    "energy cost for {kind:?} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn cost(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::Mac => self.mac_pj,
            EventKind::SharedRead => self.shared_read_pj,
            EventKind::SharedWrite => self.shared_write_pj,
            EventKind::RfReadWord => self.rf_read_word_pj,
            EventKind::RfWriteWord => self.rf_write_word_pj,
            EventKind::GlobalTransaction => self.global_transaction_pj,
            EventKind::StallCycle => self.stall_cycle_pj,
            EventKind::InstructionIssue => self.instruction_issue_pj,
            EventKind::ControllerCycle => self.controller_cycle_pj,
        }
    }
}

pub const STRUCTURES: [&str; 5] = [
    "compute",
    "register_file",
    "shared_memory",
    "global",
    "control",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub total_pj: f64,
    pub compute_pj: f64,
    pub register_file_pj: f64,
    pub shared_memory_pj: f64,
    pub global_pj: f64,
    pub control_pj: f64,
}

impl EnergyReport {
    pub fn by_structure(&self) -> [(&'static str, f64); 5] {
        [
            ("compute", self.compute_pj),
            ("register_file", self.register_file_pj),
            ("shared_memory", self.shared_memory_pj),
            ("global", self.global_pj),
            ("control", self.control_pj),
        ]
    }
}

pub fn account(counters: &Counters, table: &EnergyTable) -> EnergyReport {
    let e = |kind: EventKind| counters.get(kind) as f64 * table.cost(kind);
    let compute = e(EventKind::Mac);
    let rf = e(EventKind::RfReadWord) + e(EventKind::RfWriteWord);
    let shared = e(EventKind::SharedRead) + e(EventKind::SharedWrite);
    let global = e(EventKind::GlobalTransaction);
    let control = e(EventKind::InstructionIssue)
        + e(EventKind::ControllerCycle)
        + e(EventKind::StallCycle);
    EnergyReport {
        total_pj: compute + rf + shared + global + control,
        compute_pj: compute,
        register_file_pj: rf,
        shared_memory_pj: shared,
        global_pj: global,
        control_pj: control,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyComparison {
    pub baseline: EnergyReport,
    pub candidate: EnergyReport,
    /// candidate / baseline.
    pub total_ratio: f64,
    /// Structure with the largest absolute pJ delta.
    pub dominant_delta_structure: &'static str,
    pub dominant_delta_pj: f64,
    pub table_source: String,
}

/// Compare two traces priced against (nominally) the same table; pricing
/// them with tables of different provenance is a category error.
pub fn compare_energy(
    baseline: &Counters,
    candidate: &Counters,
    baseline_table: &EnergyTable,
    candidate_table: &EnergyTable,
) -> SimResult<EnergyComparison> {
    if baseline_table.source != candidate_table.source {
        return Err(SimError::TableMismatch(format!(
            "baseline priced with `{}`, candidate with `{}`",
            baseline_table.source, candidate_table.source
        )));
    }
    baseline_table.validate()?;
    candidate_table.validate()?;
    let b = account(baseline, baseline_table);
    let c = account(candidate, candidate_table);
    if b.total_pj <= 0.0 {
        return Err(SimError::Invariant("baseline trace has zero energy".into()));
    }
    let (mut name, mut delta) = ("compute", 0.0f64);
    for (&(n, bv), &(_, cv)) in b.by_structure().iter().zip(c.by_structure().iter()) {
        if (cv - bv).abs() > delta.abs() {
            name = n;
            delta = cv - bv;
        }
    }
    Ok(EnergyComparison {
        baseline: b,
        candidate: c,
        total_ratio: c.total_pj / b.total_pj,
        dominant_delta_structure: name,
        dominant_delta_pj: delta,
        table_source: baseline_table.source.clone(),
    })
}
