//! Thread-block tiling and the chip-level timing model: each thread block
//! owns a C tile held in the register file, streams A/B tiles through
//! shared memory with double buffering, and deals C sub-tiles across the
//! SM's SMA units round-robin. Timing is analytic per iteration; the
//! functional path accumulates exactly like chained `lsma` blocks.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::config::{GemmPath, MachineConfig};
use crate::engine::{
    timing_dot_product, timing_semi_broadcast, timing_weight_stationary, ws_stall,
};
use crate::error::{SimError, SimResult};
use crate::matrix::Matrix;
use crate::oracle::GemmProblem;
use crate::sched::{round_robin_sma, SchedulerKind};
use crate::trace::{Counters, ExecutionTrace};

pub const TB_TILE_M: usize = 128;
pub const TB_TILE_N: usize = 128;
pub const WARPS_PER_TB: u32 = 64;
pub const WARP_SETS: u32 = 2;
/// Shared-memory staging replication for the dot-product path: operand
/// fragments are laid out once per participating quad.
pub const DOT_STAGING_REPLICATION: u64 = 4;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TilingPlan {
    pub tile_m: usize,
    pub tile_n: usize,
    pub k_step: usize,
    pub tb_rows: usize,
    pub tb_cols: usize,
    pub k_iters: usize,
    pub subtiles_per_tb: usize,
    pub warps_per_tb: u32,
    pub warp_sets: u32,
    pub rf_bytes_for_c: u64,
    pub shared_bytes_staged: u64,
}

impl TilingPlan {
    pub fn thread_blocks(&self) -> usize {
        self.tb_rows * self.tb_cols
    }
}

/// Choose the C tile each thread block owns. The full tile must fit in
/// half the register file (the other half feeds the SIMD-mode warps);
/// tiles shrink along n, then m, until it does.
pub fn plan_tiling(m: usize, n: usize, k: usize, cfg: &MachineConfig) -> SimResult<TilingPlan> {
    if m == 0 || n == 0 || k == 0 {
        return Err(SimError::Dimension(format!(
            "GEMM sizes must be positive, got {m}x{n}x{k}"
        )));
    }
    cfg.validate()?;
    let rows = cfg.sma_array_rows as usize;
    let cols = cfg.sma_array_cols as usize;
    let word = cfg.word_bytes as u64;
    let mut tile_m = TB_TILE_M;
    let mut tile_n = TB_TILE_N;
    loop {
        let c_bytes = (tile_m * tile_n) as u64 * word;
        if c_bytes * 2 <= cfg.rf_bytes_per_sm {
            break;
        }
        if tile_n > rows {
            tile_n /= 2;
        } else if tile_m > 1 {
            tile_m /= 2;
        } else {
            return Err(SimError::Invariant(format!(
                "register file of {} bytes cannot hold any C tile",
                cfg.rf_bytes_per_sm
            )));
        }
    }
    let k_step = cols;
    let shared = 2 * (tile_m * k_step + k_step * tile_n) as u64 * word;
    if shared > cfg.shared_mem_bytes {
        return Err(SimError::Invariant(format!(
            "double-buffered tiles need {shared} bytes of shared memory, SM has {}",
            cfg.shared_mem_bytes
        )));
    }
    Ok(TilingPlan {
        tile_m,
        tile_n,
        k_step,
        tb_rows: m.div_ceil(tile_m),
        tb_cols: n.div_ceil(tile_n),
        k_iters: k.div_ceil(k_step),
        subtiles_per_tb: tile_n.div_ceil(rows),
        warps_per_tb: WARPS_PER_TB,
        warp_sets: WARP_SETS,
        rf_bytes_for_c: (tile_m * tile_n) as u64 * word,
        shared_bytes_staged: shared,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MapperOptions {
    pub scheduler: SchedulerKind,
    pub double_buffered: bool,
}

impl Default for MapperOptions {
    fn default() -> Self {
        MapperOptions {
            scheduler: SchedulerKind::RoundRobin,
            double_buffered: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChipTiming {
    pub total_cycles: u64,
    pub trace: ExecutionTrace,
    pub efficiency: f64,
    pub plan: TilingPlan,
}

fn global_tx(words: u64, cfg: &MachineConfig) -> u64 {
    (words * cfg.word_bytes as u64).div_ceil(cfg.global_line_bytes as u64)
}

/// Cycles one thread block of extent tm x tn spends, plus its event
/// counters. Systolic paths only.
fn systolic_tb(
    tm: usize,
    tn: usize,
    k: usize,
    path: GemmPath,
    cfg: &MachineConfig,
    opt: MapperOptions,
) -> SimResult<(u64, Counters)> {
    let rows = cfg.sma_array_rows as usize;
    let cols = cfg.sma_array_cols as usize;
    let units = cfg.sma_units_per_sm;
    let subtiles = tn.div_ceil(rows);
    let assignment = round_robin_sma(subtiles, units)?;
    let busiest = (0..units)
        .map(|u| assignment.iter().filter(|&&x| x == u).count() as u64)
        .max()
        .unwrap_or(0);
    let preload = cfg.weight_preload() as u64;
    let bubble = cfg.issue_bubble_cycles as u64;

    let iter_busy = |vk: usize| -> u64 {
        let mut busy = preload + busiest * tm as u64 + busiest.saturating_sub(1) * bubble
            + (vk as u64 - 1);
        if path == GemmPath::WeightStationary {
            busy += busiest * ws_stall((tm + vk - 1) as u64, cols, cfg);
        }
        busy
    };
    let iter_load = |vk: usize| -> u64 {
        let tx = global_tx((tm * vk + vk * tn) as u64, cfg);
        cfg.global_latency_cycles as u64 + tx
    };
    let combine = |busy: u64, load: u64| -> u64 {
        if opt.double_buffered && opt.scheduler == SchedulerKind::RoundRobin {
            busy.max(load)
        } else {
            // Serialized, or GTO starving the loader warps until the
            // compute warps block on the buffer flip.
            busy + load
        }
    };

    let k_iters = k.div_ceil(cols);
    let vk_last = k - (k_iters - 1) * cols;
    let barrier = cfg.barrier_cycles as u64;
    let mut cycles = iter_load(cols.min(k)); // first tile load is exposed
    cycles += (k_iters as u64 - 1) * (combine(iter_busy(cols), iter_load(cols)) + barrier);
    cycles += combine(iter_busy(vk_last), iter_load(vk_last)) + barrier;
    // C tile writeback.
    let wb_tx = global_tx((tm * tn) as u64, cfg);
    cycles += wb_tx;

    let timing = match path {
        GemmPath::SemiBroadcast => timing_semi_broadcast(tm, tn, k, rows, cols, cfg)?,
        GemmPath::WeightStationary => timing_weight_stationary(tm, tn, k, rows, cols, cfg)?,
        _ => unreachable!("systolic_tb called for a non-systolic path"),
    };
    let mut counters = timing.trace.counters;
    counters.global_transaction += (0..k_iters)
        .map(|i| {
            let vk = if i + 1 == k_iters { vk_last } else { cols };
            global_tx((tm * vk + vk * tn) as u64, cfg)
        })
        .sum::<u64>()
        + wb_tx;
    Ok((cycles, counters))
}

/// Dot-product thread block: the same double-buffered k loop, compute
/// rate set by the 4x4x4 primitive pipeline, operands staged through
/// shared memory with replication.
fn dot_tb(
    tm: usize,
    tn: usize,
    k: usize,
    cfg: &MachineConfig,
    opt: MapperOptions,
) -> SimResult<(u64, Counters)> {
    let fedp = cfg.tc_units_per_sm * 16;
    let k_step = 8usize;
    let k_iters = k.div_ceil(k_step);
    let vk_last = k - (k_iters - 1) * k_step;
    let barrier = cfg.barrier_cycles as u64;
    let busy = |vk: usize| -> SimResult<u64> {
        Ok(timing_dot_product(tm, tn, vk, fedp, cfg)?.trace.total_cycles)
    };
    let load = |vk: usize| -> u64 {
        let tx = global_tx((tm * vk + vk * tn) as u64, cfg);
        cfg.global_latency_cycles as u64 + tx
    };
    let combine = |busy: u64, load: u64| -> u64 {
        if opt.double_buffered && opt.scheduler == SchedulerKind::RoundRobin {
            busy.max(load)
        } else {
            busy + load
        }
    };
    let wb_tx = global_tx((tm * tn) as u64, cfg);
    let mut cycles = load(k_step.min(k));
    cycles += (k_iters as u64 - 1) * (combine(busy(k_step)?, load(k_step)) + barrier);
    cycles += combine(busy(vk_last)?, load(vk_last)) + barrier + wb_tx;

    let timing = timing_dot_product(tm, tn, k, fedp, cfg)?;
    let mut counters = timing.trace.counters;
    // Fragments pass through shared memory on their way to the register
    // file, replicated per consuming quad.
    let staged: u64 = (0..k_iters)
        .map(|i| {
            let vk = if i + 1 == k_iters { vk_last } else { k_step };
            (tm * vk + vk * tn) as u64
        })
        .sum();
    counters.shared_write += staged;
    counters.shared_read += DOT_STAGING_REPLICATION * staged;
    counters.global_transaction += (0..k_iters)
        .map(|i| {
            let vk = if i + 1 == k_iters { vk_last } else { k_step };
            global_tx((tm * vk + vk * tn) as u64, cfg)
        })
        .sum::<u64>()
        + wb_tx;
    Ok((cycles, counters))
}

/// SIMD fallback: a plain FMA loop over the lanes, no tensor hardware.
fn simd_tb(tm: usize, tn: usize, k: usize, cfg: &MachineConfig) -> SimResult<(u64, Counters)> {
    let macs = (tm * tn * k) as u64;
    let rate = (cfg.simd_lanes_per_sm as f64 * cfg.simd_utilization).max(1.0);
    let cycles = (macs as f64 / rate).ceil() as u64 + cfg.global_latency_cycles as u64;
    let mut counters = Counters::default();
    counters.mac = macs;
    counters.rf_read_word = 3 * macs;
    counters.rf_write_word = macs;
    counters.instruction_issue = macs / 32.max(1);
    counters.global_transaction =
        global_tx((tm * k + k * tn + tm * tn) as u64, cfg);
    Ok((cycles, counters))
}

/// Chip-level GEMM timing: plan the thread-block grid, time each distinct
/// edge shape once, and list-schedule the blocks onto the SMs.
pub fn simulate_chip_gemm(
    m: usize,
    n: usize,
    k: usize,
    cfg: &MachineConfig,
    opt: MapperOptions,
) -> SimResult<ChipTiming> {
    let plan = plan_tiling(m, n, k, cfg)?;
    let path = cfg.gemm_path();

    // At most four distinct shapes: interior, right edge, bottom edge,
    // corner.
    let m_edge = m - (plan.tb_rows - 1) * plan.tile_m;
    let n_edge = n - (plan.tb_cols - 1) * plan.tile_n;
    let mut shapes: Vec<(usize, usize, u64)> = Vec::new();
    for (tm, rcount) in [(plan.tile_m, plan.tb_rows - 1), (m_edge, 1)] {
        for (tn, ccount) in [(plan.tile_n, plan.tb_cols - 1), (n_edge, 1)] {
            let count = (rcount * ccount) as u64;
            if count > 0 {
                shapes.push((tm, tn, count));
            }
        }
    }

    let mut total = Counters::default();
    let mut timed: Vec<(u64, u64)> = Vec::new();
    for &(tm, tn, count) in &shapes {
        let (cycles, counters) = match path {
            GemmPath::SemiBroadcast | GemmPath::WeightStationary => {
                systolic_tb(tm, tn, k, path, cfg, opt)?
            }
            GemmPath::DotProduct => dot_tb(tm, tn, k, cfg, opt)?,
            GemmPath::SimdOnly => simd_tb(tm, tn, k, cfg)?,
        };
        total.add(&counters.scale(count));
        timed.push((cycles, count));
    }

    // Earliest-free list scheduling across SMs.
    let mut heap: BinaryHeap<Reverse<u64>> = (0..cfg.sm_count).map(|_| Reverse(0u64)).collect();
    for (cycles, count) in timed {
        for _ in 0..count {
            let Reverse(free) = heap.pop().expect("at least one SM");
            heap.push(Reverse(free + cycles));
        }
    }
    let makespan = heap.into_iter().map(|Reverse(t)| t).max().unwrap_or(0);

    let trace = ExecutionTrace {
        total_cycles: makespan,
        counters: total,
        ..Default::default()
    };
    let efficiency = crate::engine::flops_efficiency(&trace, cfg)?;
    Ok(ChipTiming {
        total_cycles: makespan,
        trace,
        efficiency,
        plan,
    })
}

/// Functional double-buffered GEMM: the exact accumulation the mapped
/// kernel performs, k chunks in ascending order per C element, f32
/// partial sums. The scheduler and unit count change timing, never the
/// result.
pub fn run_double_buffered(
    p: &GemmProblem,
    cfg: &MachineConfig,
    opt: MapperOptions,
) -> SimResult<(Matrix, ChipTiming)> {
    p.validate()?;
    let timing = simulate_chip_gemm(p.m, p.n, p.k, cfg, opt)?;
    let plan = timing.plan;
    let (m, n, k) = (p.m, p.n, p.k);
    let a: Vec<f32> = p.a.to_row_major().iter().map(|v| p.alpha * v).collect();
    let b = p.b.to_row_major();
    let mut c: Vec<f32> = p.c.to_row_major().iter().map(|v| p.beta * v).collect();

    for tb_r in 0..plan.tb_rows {
        for tb_c in 0..plan.tb_cols {
            let i0 = tb_r * plan.tile_m;
            let j0 = tb_c * plan.tile_n;
            let i1 = m.min(i0 + plan.tile_m);
            let j1 = n.min(j0 + plan.tile_n);
            for k0 in (0..k).step_by(plan.k_step) {
                let k1 = k.min(k0 + plan.k_step);
                for i in i0..i1 {
                    let arow = &a[i * k + k0..i * k + k1];
                    let crow = &mut c[i * n + j0..i * n + j1];
                    for (kk, &av) in arow.iter().enumerate() {
                        let brow = &b[(k0 + kk) * n + j0..(k0 + kk) * n + j1];
                        for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                            *cv += av * bv;
                        }
                    }
                }
            }
        }
    }
    Ok((Matrix::from_rows(m, n, c)?, timing))
}
