//! Execution traces: aggregated event counters, coalescing signatures per
//! operand matrix, and data-reuse statistics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Mac,
    SharedRead,
    SharedWrite,
    RfReadWord,
    RfWriteWord,
    GlobalTransaction,
    StallCycle,
    InstructionIssue,
    ControllerCycle,
}

pub const ALL_EVENT_KINDS: [EventKind; 9] = [
    EventKind::Mac,
    EventKind::SharedRead,
    EventKind::SharedWrite,
    EventKind::RfReadWord,
    EventKind::RfWriteWord,
    EventKind::GlobalTransaction,
    EventKind::StallCycle,
    EventKind::InstructionIssue,
    EventKind::ControllerCycle,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub mac: u64,
    pub shared_read: u64,
    pub shared_write: u64,
    pub rf_read_word: u64,
    pub rf_write_word: u64,
    pub global_transaction: u64,
    pub stall_cycle: u64,
    pub instruction_issue: u64,
    pub controller_cycle: u64,
}

impl Counters {
    pub fn get(&self, kind: EventKind) -> u64 {
        match kind {
            EventKind::Mac => self.mac,
            EventKind::SharedRead => self.shared_read,
            EventKind::SharedWrite => self.shared_write,
            EventKind::RfReadWord => self.rf_read_word,
            EventKind::RfWriteWord => self.rf_write_word,
            EventKind::GlobalTransaction => self.global_transaction,
            EventKind::StallCycle => self.stall_cycle,
            EventKind::InstructionIssue => self.instruction_issue,
            EventKind::ControllerCycle => self.controller_cycle,
        }
    }

    pub fn add(&mut self, other: &Counters) {
        self.mac += other.mac;
        self.shared_read += other.shared_read;
        self.shared_write += other.shared_write;
        self.rf_read_word += other.rf_read_word;
        self.rf_write_word += other.rf_write_word;
        self.global_transaction += other.global_transaction;
        self.stall_cycle += other.stall_cycle;
        self.instruction_issue += other.instruction_issue;
        self.controller_cycle += other.controller_cycle;
    }

    pub fn scale(&self, factor: u64) -> Counters {
        Counters {
            mac: self.mac * factor,
            shared_read: self.shared_read * factor,
            shared_write: self.shared_write * factor,
            rf_read_word: self.rf_read_word * factor,
            rf_write_word: self.rf_write_word * factor,
            global_transaction: self.global_transaction * factor,
            stall_cycle: self.stall_cycle * factor,
            instruction_issue: self.instruction_issue * factor,
            controller_cycle: self.controller_cycle * factor,
        }
    }
}

/// Per-operand-matrix coalescing signature: how many warp/unit requests to
/// each matrix were uncoalesced vs. coalesced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalescingSignature {
    pub uncoalesced_a_requests: u64,
    pub uncoalesced_b_requests: u64,
    pub uncoalesced_c_requests: u64,
    pub coalesced_requests: u64,
}

impl CoalescingSignature {
    pub fn add(&mut self, other: &CoalescingSignature) {
        self.uncoalesced_a_requests += other.uncoalesced_a_requests;
        self.uncoalesced_b_requests += other.uncoalesced_b_requests;
        self.uncoalesced_c_requests += other.uncoalesced_c_requests;
        self.coalesced_requests += other.coalesced_requests;
    }

    pub fn total_uncoalesced(&self) -> u64 {
        self.uncoalesced_a_requests + self.uncoalesced_b_requests + self.uncoalesced_c_requests
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub total_cycles: u64,
    pub counters: Counters,
    pub signature: CoalescingSignature,
    /// Set when a SIMD access raced an inflight LSMA C region.
    pub race_detected: bool,
    /// Optional per-cycle event stream (small runs only, behind verbosity).
    pub per_cycle_events: Option<Vec<String>>,
}

impl ExecutionTrace {
    pub fn merge_serial(&mut self, other: &ExecutionTrace) {
        self.total_cycles += other.total_cycles;
        self.counters.add(&other.counters);
        self.signature.add(&other.signature);
        self.race_detected |= other.race_detected;
    }
}

/// Memory traffic per operand and the macs-per-element-fetched reuse
/// factors. Reuse is the structural reuse of the dataflow: each A fetch is
/// broadcast to the full column (or dot-product lane group), so the factor
/// equals macs / fetches by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReuseStats {
    pub a_reads_from_memory: f64,
    pub b_reads_from_memory: f64,
    pub c_writes_to_memory: f64,
    pub a_reuse_factor: f64,
    pub b_reuse_factor: f64,
}

impl ReuseStats {
    pub fn from_reads(macs: u64, a_reads: f64, b_reads: f64, c_writes: f64) -> ReuseStats {
        ReuseStats {
            a_reads_from_memory: a_reads,
            b_reads_from_memory: b_reads,
            c_writes_to_memory: c_writes,
            a_reuse_factor: if a_reads > 0.0 { macs as f64 / a_reads } else { 0.0 },
            b_reuse_factor: if b_reads > 0.0 { macs as f64 / b_reads } else { 0.0 },
        }
    }
}
