//! Semi-broadcast weight-stationary systolic engine.
//!
//! Per (k-slice, n-slice) sub-problem the array holds the B sub-tile
//! stationary; at cycle t after preload, array column k consumes A[t-k][k]
//! (skewed) and broadcasts it down the column; partial sums flow rightward
//! and each completed C row leaves the right edge as one coalesced RF write.
//!
//! The A-tile lives row-major in the assigned shared-memory banks, so the
//! skewed per-cycle set {A[t][0], A[t-1][1], ...} maps to distinct banks:
//! word (i*cols + k) lands in bank k of the assigned range.

use crate::config::MachineConfig;
use crate::error::{SimError, SimResult};
use crate::mem::{shared_access, MemOp, MemoryRequest, Space};
use crate::oracle::GemmProblem;
use crate::trace::{CoalescingSignature, Counters, ExecutionTrace, ReuseStats};

use super::{systolic_functional, EngineOutput, TimingOutput};

/// Tile-analytic timing, counters, and reuse for an m x n x k GEMM streamed
/// through one `rows` x `cols` array.
pub fn timing_semi_broadcast(
    m: usize,
    n: usize,
    k: usize,
    rows: usize,
    cols: usize,
    cfg: &MachineConfig,
) -> SimResult<TimingOutput> {
    if rows == 0 || cols == 0 {
        return Err(SimError::Dimension("array dims must be positive".into()));
    }
    if cfg.sma_banks_assigned < cols as u32 {
        return Err(SimError::Invariant(format!(
            "bank assignment width {} < array cols {cols}",
            cfg.sma_banks_assigned
        )));
    }
    debug_assert_eq!(skew_conflict_degree(cols, cfg), 1);
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
            let cycles = preload + mm + vk - 1;
            total_cycles += cycles;
            tiles += 1;
            counters.mac += mm * vn * vk;
            counters.shared_read += mm * vk; // A stream
            counters.rf_read_word += vk * vn + mm * vn; // B preload + C in
            counters.rf_write_word += mm * vn; // C out
            counters.instruction_issue += 1;
            counters.controller_cycle += cycles;
            // One skewed (multi-row) A request per streaming cycle.
            signature.uncoalesced_a_requests += mm + vk - 1;
            // B preload rows and C row read/writes are contiguous.
            signature.coalesced_requests += vk + 2 * mm;
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

/// Functional + timing run of the full problem on one array.
pub fn run_semi_broadcast(
    p: &GemmProblem,
    rows: usize,
    cols: usize,
    cfg: &MachineConfig,
) -> SimResult<EngineOutput> {
    let timing = timing_semi_broadcast(p.m, p.n, p.k, rows, cols, cfg)?;
    let result = systolic_functional(p)?;
    Ok(EngineOutput {
        result,
        trace: timing.trace,
        reuse: timing.reuse,
    })
}

/// Bank-conflict degree of the skewed A pattern within the assigned banks.
/// One cycle's addresses are {(t - j) * cols + j : j}, folded into the
/// assigned bank range; row-major layout keeps them conflict-free.
fn skew_conflict_degree(cols: usize, cfg: &MachineConfig) -> u32 {
    let wb = cfg.word_bytes as u64;
    let addrs: Vec<u64> = (0..cols as u64)
        .map(|j| ((cols as u64 - 1 - j) * cols as u64 + j) * wb)
        .collect();
    let req = MemoryRequest::new(Space::Shared, MemOp::Read, addrs, cfg.word_bytes);
    shared_access(&req, cfg.sma_banks_assigned)
        .map(|v| v.bank_conflict_degree)
        .unwrap_or(u32::MAX)
}
