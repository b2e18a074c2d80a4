//! Dot-product (TensorCore-style) engine: GEMM decomposed into 4x4x4
//! primitives. Every operand access is a coalesced register-file access;
//! the price is low reuse (4) and heavy RF bandwidth, which is the
//! throughput limiter at defaults.

use crate::config::MachineConfig;
use crate::error::{SimError, SimResult};
use crate::mem::{rf_access, MemOp, MemoryRequest, Space};
use crate::oracle::GemmProblem;
use crate::trace::{CoalescingSignature, Counters, ExecutionTrace, ReuseStats};

use super::{systolic_functional, EngineOutput, TimingOutput};

pub const PRIM_DIM: usize = 4;
pub const PRIM_MACS: u64 = 64;
/// Words read per primitive: 4x4 tiles of A, B, and C-in.
pub const PRIM_READ_WORDS: u64 = 48;
const PIPELINE_FILL_CYCLES: u64 = 8;

/// Tile-analytic timing for the dot-product path. `fedp_units` is the
/// number of 4-element dot-product units (16 per TC); each sustains 4 FP16
/// MACs per cycle, i.e. 2 FP32-equivalent MACs.
pub fn timing_dot_product(
    m: usize,
    n: usize,
    k: usize,
    fedp_units: u32,
    cfg: &MachineConfig,
) -> SimResult<TimingOutput> {
    if fedp_units == 0 {
        return Err(SimError::Invariant("fedp_units must be positive".into()));
    }
    let (m64, n64, k64) = (m as u64, n as u64, k as u64);
    let tm = m64.div_ceil(PRIM_DIM as u64);
    let tn = n64.div_ceil(PRIM_DIM as u64);
    let tk = k64.div_ceil(PRIM_DIM as u64);
    let prims = tm * tn * tk;

    // Sum of valid-extent products over the tiling grid, in closed form.
    let mk_pairs = m64 * k64 * tn; // A tile reads
    let kn_pairs = k64 * n64 * tm; // B tile reads
    let mn_pairs = m64 * n64 * tk; // C read-modify-write

    let mut counters = Counters::default();
    counters.mac = m64 * n64 * k64;
    counters.rf_read_word = mk_pairs + kn_pairs + mn_pairs;
    counters.rf_write_word = mn_pairs;
    counters.instruction_issue = prims;

    // MAC-limited primitive rate in FP32-equivalent terms.
    let mac_rate = fedp_units as f64 * 4.0 / 2.0 / PRIM_MACS as f64;
    // RF-limited rate: one full-width read burst per primitive through the
    // operand-collector ports.
    let burst = MemoryRequest::new(
        Space::Rf,
        MemOp::Read,
        (0..PRIM_READ_WORDS).map(|w| w * cfg.word_bytes as u64).collect(),
        cfg.word_bytes,
    );
    let burst_cycles = rf_access(&burst, cfg.rf_words_per_bank_per_cycle)?.cycles as f64;
    let rf_rate = cfg.operand_collector_ports as f64 / burst_cycles;
    let rate = mac_rate.min(rf_rate);
    let total_cycles = (prims as f64 / rate).ceil() as u64 + PIPELINE_FILL_CYCLES;
    let mac_limited = (prims as f64 / mac_rate).ceil() as u64 + PIPELINE_FILL_CYCLES;
    counters.stall_cycle = total_cycles.saturating_sub(mac_limited);

    let signature = CoalescingSignature {
        coalesced_requests: 4 * prims,
        ..Default::default()
    };
    let macs = counters.mac;
    let reuse = ReuseStats::from_reads(
        macs,
        macs as f64 / PRIM_DIM as f64,
        macs as f64 / PRIM_DIM as f64,
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

pub fn run_dot_product(
    p: &GemmProblem,
    fedp_units: u32,
    cfg: &MachineConfig,
) -> SimResult<EngineOutput> {
    let timing = timing_dot_product(p.m, p.n, p.k, fedp_units, cfg)?;
    // 4-wide k-blocking accumulates in the same ascending-k order.
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
    use crate::engine::flops_efficiency_with_peak;
    use crate::oracle::gemm_reference;

    fn cfg() -> MachineConfig {
        MachineConfig::preset("4-tc").unwrap()
    }

    #[test]
    fn single_primitive_counts() {
        let t = timing_dot_product(4, 4, 4, 64, &cfg()).unwrap();
        assert_eq!(t.trace.counters.mac, 64);
        assert_eq!(t.trace.counters.rf_read_word, 48);
        assert_eq!(t.trace.counters.rf_write_word, 16);
        assert_eq!(t.trace.counters.instruction_issue, 1);
    }

    #[test]
    fn reuse_factor_is_four() {
        let t = timing_dot_product(100, 37, 53, 64, &cfg()).unwrap();
        assert_eq!(t.reuse.a_reuse_factor, 4.0);
        assert_eq!(t.trace.counters.mac, 100 * 37 * 53);
    }

    #[test]
    fn rf_port_limits_efficiency() {
        // 4 TCs = 64 FEDP units: MAC-limited 2 prims/cycle, RF-limited
        // 1 prim/cycle at 2 ports, so large GEMMs sit near 50% of peak.
        let t = timing_dot_product(1024, 1024, 1024, 64, &cfg()).unwrap();
        let eff = flops_efficiency_with_peak(&t.trace, 128).unwrap();
        assert!(eff > 0.45 && eff < 0.55, "eff {eff}");
        assert!(t.trace.counters.stall_cycle > 0);
    }

    #[test]
    fn all_requests_coalesced() {
        let t = timing_dot_product(256, 256, 256, 64, &cfg()).unwrap();
        assert_eq!(t.trace.signature.total_uncoalesced(), 0);
        assert!(t.trace.signature.coalesced_requests > 0);
    }

    #[test]
    fn functional_equals_oracle() {
        let p = rand_problem(31, 47, 21, 33);
        let out = run_dot_product(&p, 64, &cfg()).unwrap();
        assert_close(&out.result, &gemm_reference(&p).unwrap(), 1e-5);
    }
}
