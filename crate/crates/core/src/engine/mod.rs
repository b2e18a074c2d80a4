//! Cycle-level engines for the three GEMM dataflows. Each produces a
//! functional result, an `ExecutionTrace`, and reuse/coalescing statistics.
//!
//! Timing is computed tile-analytically (per-LSMA / per-primitive), with the
//! per-cycle schedule validated against the event-level controller
//! simulation in `sma` for small cases.

mod dot_product;
mod semi_broadcast;
mod weight_stationary;

pub use dot_product::{run_dot_product, timing_dot_product};
pub use semi_broadcast::{run_semi_broadcast, timing_semi_broadcast};
pub use weight_stationary::{run_weight_stationary, timing_weight_stationary, ws_conflict_degree};
pub(crate) use weight_stationary::ws_stall;

use crate::config::MachineConfig;
use crate::error::{SimError, SimResult};
use crate::matrix::Matrix;
use crate::oracle::GemmProblem;
use crate::trace::{ExecutionTrace, ReuseStats};

pub struct EngineOutput {
    pub result: Matrix,
    pub trace: ExecutionTrace,
    pub reuse: ReuseStats,
}

/// Timing-only result, usable without materializing matrices (sweeps).
#[derive(Debug, Clone)]
pub struct TimingOutput {
    pub trace: ExecutionTrace,
    pub reuse: ReuseStats,
}

/// Achieved FLOPS divided by peak FLOPS, against an explicit peak MAC rate.
pub fn flops_efficiency_with_peak(trace: &ExecutionTrace, peak_macs_per_cycle: u64) -> SimResult<f64> {
    if trace.total_cycles == 0 {
        return Err(SimError::ZeroCycleTrace);
    }
    if peak_macs_per_cycle == 0 {
        return Err(SimError::Invariant("zero peak MAC rate".into()));
    }
    Ok((2.0 * trace.counters.mac as f64 / trace.total_cycles as f64)
        / (2.0 * peak_macs_per_cycle as f64))
}

/// Efficiency of a chip-level trace against the machine's chip-wide peak.
pub fn flops_efficiency(trace: &ExecutionTrace, cfg: &MachineConfig) -> SimResult<f64> {
    flops_efficiency_with_peak(trace, cfg.peak_macs_per_cycle_chip())
}

/// Shared functional path for the systolic engines: f32 accumulation in
/// ascending-k order per output element, which is exactly the order partial
/// sums accumulate through the array and across chained LSMAs.
pub(crate) fn systolic_functional(p: &GemmProblem) -> SimResult<Matrix> {
    p.validate()?;
    let (m, n, k) = (p.m, p.n, p.k);
    // Alpha folds into the A-tile loads; beta pre-scales C before the k-loop.
    let a: Vec<f32> = p.a.to_row_major().iter().map(|v| p.alpha * v).collect();
    let b = p.b.to_row_major();
    let mut out: Vec<f32> = p.c.to_row_major().iter().map(|v| p.beta * v).collect();
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    Matrix::from_rows(m, n, out)
}
