//! Classic (TPU-style) weight-stationary systolic engine, simulated on the
//! GPU memory system: A is fetched through the general 32-bank shared pool
//! with column accesses (row stride = array cols), which conflict, and the
//! skewed C exits are uncoalesced RF writes.
//!
//! Bank-conflict serialization on the A feed is partially hidden by the
//! controller's input staging FIFOs; the exposed fraction is the
//! `ws_stall_absorption` config knob.

use crate::config::MachineConfig;
use crate::error::SimResult;
use crate::mem::{shared_access, MemOp, MemoryRequest, Space};
use crate::oracle::GemmProblem;
use crate::trace::{CoalescingSignature, Counters, ExecutionTrace, ReuseStats};

use super::{systolic_functional, EngineOutput, TimingOutput};

/// Conflict degree of the A-column access pattern (row stride = `cols`
/// words) through the full shared-memory pool.
pub fn ws_conflict_degree(cols: usize, cfg: &MachineConfig) -> u32 {
    let wb = cfg.word_bytes as u64;
    let addrs: Vec<u64> = (0..cols as u64).map(|i| i * cols as u64 * wb).collect();
    let req = MemoryRequest::new(Space::Shared, MemOp::Read, addrs, cfg.word_bytes);
    shared_access(&req, cfg.shared_mem_banks)
        .map(|v| v.bank_conflict_degree)
        .unwrap_or(1)
}

/// Exposed stall cycles for one tile with `steps` streaming cycles.
pub(crate) fn ws_stall(steps: u64, cols: usize, cfg: &MachineConfig) -> u64 {
    let degree = ws_conflict_degree(cols, cfg) as f64;
    ((degree - 1.0) * cfg.ws_stall_absorption * steps as f64).round() as u64
}

pub fn timing_weight_stationary(
    m: usize,
    n: usize,
    k: usize,
    rows: usize,
    cols: usize,
    cfg: &MachineConfig,
) -> SimResult<TimingOutput> {
    let preload = cfg.weight_preload() as u64;
    let bubble = cfg.issue_bubble_cycles as u64;
    let mut counters = Counters::default();
    let mut signature = CoalescingSignature::default();
    let mut total_cycles = 0u64;
    let mut tiles = 0u64;
    for k0 in (0..k).step_by(cols) {
        let vk = cols.min(k - k0) as u64;
        for n0 in (0..n).step_by(rows) {
            let vn = rows.min(n - n0) as u64;
            let mm = m as u64;
            let steps = mm + vk - 1;
            let stall = ws_stall(steps, cols, cfg);
            let cycles = preload + steps + stall;
            total_cycles += cycles;
            tiles += 1;
            counters.mac += mm * vn * vk;
            counters.shared_read += mm * vk;
            counters.rf_read_word += vk * vn + mm * vn;
            counters.rf_write_word += mm * vn;
            counters.stall_cycle += stall;
            counters.instruction_issue += 1;
            counters.controller_cycle += cycles;
            // Both the A feed and the skewed C exits touch different matrix
            // rows each cycle.
            signature.uncoalesced_a_requests += steps;
            signature.uncoalesced_c_requests += steps;
            signature.coalesced_requests += vk + mm; // B preload + C in
        }
    }
    total_cycles += tiles.saturating_sub(1) * bubble;
    let macs = counters.mac;
    let reuse = ReuseStats::from_reads(
        macs,
        macs as f64 / rows as f64,
        (k * n) as f64,
        (m * n) as f64,
    );
    Ok(TimingOutput {
        trace: ExecutionTrace {
            total_cycles,
            counters,
            signature,
            ..Default::default()
        },
        reuse,
    })
}

pub fn run_weight_stationary(
    p: &GemmProblem,
    rows: usize,
    cols: usize,
    cfg: &MachineConfig,
) -> SimResult<EngineOutput> {
    let timing = timing_weight_stationary(p.m, p.n, p.k, rows, cols, cfg)?;
    let result = systolic_functional(p)?;
    Ok(EngineOutput {
        result,
        trace: timing.trace,
        reuse: timing.reuse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::test_util::{assert_close, rand_problem};
    use crate::engine::timing_semi_broadcast;
    use crate::oracle::gemm_reference;

    fn cfg() -> MachineConfig {
        MachineConfig::preset("tpu-dataflow").unwrap()
    }

    #[test]
    fn conflict_degree_is_two_at_defaults() {
        assert_eq!(ws_conflict_degree(8, &cfg()), 2);
    }

    #[test]
    fn slower_than_semi_broadcast_within_band() {
        for size in [256usize, 1024, 2048] {
            let ws = timing_weight_stationary(size, size, size, 8, 8, &cfg()).unwrap();
            let sb = timing_semi_broadcast(size, size, size, 8, 8, &cfg()).unwrap();
            let ratio = ws.trace.total_cycles as f64 / sb.trace.total_cycles as f64;
            assert!(ratio > 1.0, "size {size}: ratio {ratio}");
            assert!((1.10..=1.60).contains(&ratio), "size {size}: ratio {ratio}");
        }
    }

    #[test]
    fn mac_count_matches_semi_broadcast() {
        let ws = timing_weight_stationary(100, 37, 53, 8, 8, &cfg()).unwrap();
        let sb = timing_semi_broadcast(100, 37, 53, 8, 8, &cfg()).unwrap();
        assert_eq!(ws.trace.counters.mac, sb.trace.counters.mac);
        assert_eq!(ws.reuse.a_reuse_factor, 8.0);
    }

    #[test]
    fn signature_a_and_c_uncoalesced() {
        let t = timing_weight_stationary(256, 256, 256, 8, 8, &cfg()).unwrap();
        assert!(t.trace.signature.uncoalesced_a_requests > 0);
        assert!(t.trace.signature.uncoalesced_c_requests > 0);
    }

    #[test]
    fn functional_equals_oracle() {
        let p = rand_problem(21, 65, 23, 40);
        let out = run_weight_stationary(&p, 8, 8, &cfg()).unwrap();
        assert_close(&out.result, &gemm_reference(&p).unwrap(), 1e-5);
    }
}
