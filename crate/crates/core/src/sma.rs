//! Event-level model of one SMA unit: the `lsma` instruction, weight
//! preload, the skewed A stream, per-PE masking, and the tiny controller
//! that tracks in-flight blocks. The tile-analytic engines are validated
//! against this cycle-stepped model.

use std::collections::HashMap;
use std::ops::Range;

use crate::config::MachineConfig;
use crate::error::{SimError, SimResult};
use crate::matrix::Matrix;
use crate::oracle::GemmProblem;
use crate::trace::{Counters, ExecutionTrace};

pub type Ticket = u64;

/// Backing storage the unit reads and writes, word-addressed f32. A tiles
/// live in `shared`, weights and C tiles in `rf`.
#[derive(Debug, Default, Clone)]
pub struct SmaContext {
    pub shared: Vec<f32>,
    pub rf: Vec<f32>,
}

/// One `lsma` block operation: C[kh x n] += A[kh x k] * B[k x n], where
/// k and n are the array's column and row extents. Addresses are word
/// indices; strides are words between consecutive block rows.
#[derive(Debug, Clone)]
pub struct LsmaInstruction {
    pub addr_a: usize,
    pub stride_a: usize,
    pub addr_c: usize,
    pub stride_c: usize,
    /// Weights, k x n (array cols x array rows).
    pub b: Matrix,
    pub k_height: usize,
}

impl LsmaInstruction {
    fn c_region(&self, lanes: usize) -> Range<usize> {
        let last = self.addr_c + (self.k_height - 1) * self.stride_c + lanes;
        self.addr_c..last
    }
}

#[derive(Debug)]
struct Active {
    ticket: Ticket,
    instr: LsmaInstruction,
    /// Local cycle within the instruction, counting preload first.
    local: u64,
    /// In-flight partial-sum rows, keyed by A row index.
    psums: HashMap<usize, Vec<f32>>,
}

/// Cycle-stepped SMA unit. At most one instruction executes and one more
/// may be queued behind it; queueing a block whose C input overlaps the
/// unsynced output of an earlier block raises the race flag (the model
/// still serializes, so results stay deterministic).
#[derive(Debug)]
pub struct SmaUnit {
    pub rows: usize,
    pub cols: usize,
    preload_cycles: u64,
    /// active[n][k]; a masked PE passes its partial sum through untouched.
    active: Vec<Vec<bool>>,
    cycle: u64,
    next_ticket: Ticket,
    retired_below: Ticket,
    inflight: Option<Active>,
    pending: Option<(Ticket, LsmaInstruction)>,
    unsynced_c: Vec<Range<usize>>,
    race_detected: bool,
    counters: Counters,
    log: Option<Vec<String>>,
}

impl SmaUnit {
    pub fn new(rows: usize, cols: usize, preload_cycles: u32) -> SmaUnit {
        SmaUnit {
            rows,
            cols,
            preload_cycles: preload_cycles as u64,
            active: vec![vec![true; cols]; rows],
            cycle: 0,
            next_ticket: 0,
            retired_below: 0,
            inflight: None,
            pending: None,
            unsynced_c: Vec::new(),
            race_detected: false,
            counters: Counters::default(),
            log: None,
        }
    }

    pub fn from_config(cfg: &MachineConfig) -> SmaUnit {
        SmaUnit::new(
            cfg.sma_array_rows as usize,
            cfg.sma_array_cols as usize,
            cfg.weight_preload(),
        )
    }

    /// Fused array spanning `units` physical units along the output (n)
    /// dimension: one A stream broadcasts to all of them.
    pub fn combined(cfg: &MachineConfig, units: u32) -> SimResult<SmaUnit> {
        if units == 0 {
            return Err(SimError::Invariant("combining zero units".into()));
        }
        Ok(SmaUnit::new(
            (cfg.sma_array_rows * units) as usize,
            cfg.sma_array_cols as usize,
            cfg.weight_preload(),
        ))
    }

    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn take_log(&mut self) -> Vec<String> {
        self.log.take().unwrap_or_default()
    }

    pub fn set_active_mask(&mut self, mask: &[bool]) -> SimResult<()> {
        if mask.len() != self.rows * self.cols {
            return Err(SimError::Dimension(format!(
                "mask has {} entries, array is {}x{}",
                mask.len(),
                self.rows,
                self.cols
            )));
        }
        for n in 0..self.rows {
            for k in 0..self.cols {
                self.active[n][k] = mask[n * self.cols + k];
            }
        }
        Ok(())
    }

    /// Convenience: enable exactly the top-left `vn` x `vk` corner.
    pub fn mask_corner(&mut self, vn: usize, vk: usize) -> SimResult<()> {
        if vn > self.rows || vk > self.cols {
            return Err(SimError::Dimension("mask corner exceeds array".into()));
        }
        let mask: Vec<bool> = (0..self.rows * self.cols)
            .map(|i| i / self.cols < vn && i % self.cols < vk)
            .collect();
        self.set_active_mask(&mask)
    }

    pub fn race_detected(&self) -> bool {
        self.race_detected
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn trace(&self) -> ExecutionTrace {
        ExecutionTrace {
            total_cycles: self.cycle,
            counters: self.counters.clone(),
            race_detected: self.race_detected,
            ..Default::default()
        }
    }

    fn check_instr(&self, instr: &LsmaInstruction) -> SimResult<()> {
        if instr.k_height == 0 {
            return Err(SimError::Dimension("lsma with k_height 0".into()));
        }
        if instr.b.rows != self.cols || instr.b.cols != self.rows {
            return Err(SimError::Shape(format!(
                "weights are {}x{}, array wants {}x{}",
                instr.b.rows, instr.b.cols, self.cols, self.rows
            )));
        }
        if instr.stride_a < self.cols || instr.stride_c < self.rows {
            return Err(SimError::Dimension("lsma stride smaller than block row".into()));
        }
        Ok(())
    }

    pub fn issue_lsma(&mut self, instr: LsmaInstruction) -> SimResult<Ticket> {
        self.check_instr(&instr)?;
        if self.pending.is_some() {
            return Err(SimError::UnitBusy(
                "lsma queue full (one in flight, one pending)".into(),
            ));
        }
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        let reads = instr.c_region(self.rows);
        if self
            .unsynced_c
            .iter()
            .any(|w| w.start < reads.end && reads.start < w.end)
        {
            self.race_detected = true;
        }
        self.unsynced_c.push(reads.clone());
        self.counters.instruction_issue += 1;
        if self.inflight.is_some() {
            self.pending = Some((ticket, instr));
        } else {
            self.inflight = Some(Active {
                ticket,
                instr,
                local: 0,
                psums: HashMap::new(),
            });
        }
        Ok(ticket)
    }

    /// Block until `ticket` has drained. Returns the cycles spent waiting;
    /// syncing an already-retired ticket is a no-op returning zero.
    pub fn sync_lsma(&mut self, ticket: Ticket, ctx: &mut SmaContext) -> SimResult<u64> {
        if ticket >= self.next_ticket {
            return Err(SimError::OutOfRange(format!(
                "sync on unissued ticket {ticket}"
            )));
        }
        let start = self.cycle;
        while self.retired_below <= ticket {
            self.step(ctx)?;
        }
        self.unsynced_c.clear();
        Ok(self.cycle - start)
    }

    fn row_lanes(&self) -> u64 {
        (0..self.rows)
            .filter(|&n| (0..self.cols).any(|k| self.active[n][k]))
            .count() as u64
    }

    /// Advance one cycle.
    pub fn step(&mut self, ctx: &mut SmaContext) -> SimResult<()> {
        self.cycle += 1;
        let Some(mut act) = self.inflight.take() else {
            return Ok(());
        };
        self.counters.controller_cycle += 1;
        let local = act.local;
        act.local += 1;

        if local < self.preload_cycles {
            // Weight registers fill a slice of the array per cycle.
            if local == 0 {
                let live: u64 = self
                    .active
                    .iter()
                    .map(|r| r.iter().filter(|&&a| a).count() as u64)
                    .sum();
                self.counters.rf_read_word += live;
            }
            if let Some(log) = &mut self.log {
                log.push(format!("c{} t{} preload", self.cycle, local));
            }
            self.inflight = Some(act);
            return Ok(());
        }

        let t = (local - self.preload_cycles) as usize;
        let kh = act.instr.k_height;
        let lanes = self.row_lanes();
        let mut fed = Vec::new();
        for k in 0..self.cols {
            let Some(row) = t.checked_sub(k) else { continue };
            if row >= kh {
                continue;
            }
            if k == 0 {
                // Row enters the array: one coalesced C read.
                let base = act.instr.addr_c + row * act.instr.stride_c;
                let psum: Vec<f32> = (0..self.rows)
                    .map(|n| {
                        if (0..self.cols).any(|kk| self.active[n][kk]) {
                            ctx.rf[base + n]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                act.psums.insert(row, psum);
                self.counters.rf_read_word += lanes;
            }
            let col_live = (0..self.rows).any(|n| self.active[n][k]);
            let a = if col_live {
                self.counters.shared_read += 1;
                ctx.shared[act.instr.addr_a + row * act.instr.stride_a + k]
            } else {
                0.0
            };
            let psum = act.psums.get_mut(&row).expect("row entered at column 0");
            for n in 0..self.rows {
                if self.active[n][k] {
                    psum[n] += a * act.instr.b.get(k, n);
                    self.counters.mac += 1;
                }
            }
            if k == self.cols - 1 {
                // Row exits: one coalesced C write.
                let psum = act.psums.remove(&row).unwrap();
                let base = act.instr.addr_c + row * act.instr.stride_c;
                for n in 0..self.rows {
                    if (0..self.cols).any(|kk| self.active[n][kk]) {
                        ctx.rf[base + n] = psum[n];
                    }
                }
                self.counters.rf_write_word += lanes;
            }
            if col_live {
                fed.push(k);
            }
        }
        if let Some(log) = &mut self.log {
            log.push(format!("c{} t{} stream cols={fed:?}", self.cycle, t));
        }
        if t + 1 == kh + self.cols - 1 {
            self.retired_below = act.ticket + 1;
            if let Some((ticket, instr)) = self.pending.take() {
                self.inflight = Some(Active {
                    ticket,
                    instr,
                    local: 0,
                    psums: HashMap::new(),
                });
            }
        } else {
            self.inflight = Some(act);
        }
        Ok(())
    }
}

/// Full GEMM on one SMA unit: n blocked by the array rows, k by the array
/// cols, ragged edges masked, each k-chunk accumulating into C in the RF.
/// Accumulation order per element matches the analytic engines bit for bit.
pub fn run_sma_gemm(p: &GemmProblem, cfg: &MachineConfig) -> SimResult<(Matrix, ExecutionTrace)> {
    p.validate()?;
    let rows = cfg.sma_array_rows as usize;
    let cols = cfg.sma_array_cols as usize;
    let (m, n, k) = (p.m, p.n, p.k);

    let mut ctx = SmaContext {
        shared: p.a.to_row_major().iter().map(|v| p.alpha * v).collect(),
        rf: p.c.to_row_major().iter().map(|v| p.beta * v).collect(),
    };
    let b = p.b.to_row_major();
    let mut unit = SmaUnit::from_config(cfg);

    for k0 in (0..k).step_by(cols) {
        let vk = cols.min(k - k0);
        for n0 in (0..n).step_by(rows) {
            let vn = rows.min(n - n0);
            unit.mask_corner(vn, vk)?;
            let mut weights = Matrix::zeros(cols, rows);
            for kk in 0..vk {
                for nn in 0..vn {
                    weights.set(kk, nn, b[(k0 + kk) * n + n0 + nn]);
                }
            }
            let ticket = unit.issue_lsma(LsmaInstruction {
                addr_a: k0,
                stride_a: k,
                addr_c: n0,
                stride_c: n,
                b: weights,
                k_height: m,
            })?;
            unit.sync_lsma(ticket, &mut ctx)?;
        }
    }
    let out = Matrix::from_rows(m, n, ctx.rf)?;
    Ok((out, unit.trace()))
}
