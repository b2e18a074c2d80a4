//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does. Run with `--nocapture` to see the
//! lines on success.

use std::time::Instant;

use smasim_core::config::{controller_overhead_ratio, controller_storage_bytes};
use smasim_core::engine::{
    run_dot_product, run_semi_broadcast, timing_dot_product, timing_semi_broadcast,
    timing_weight_stationary,
};
use smasim_core::experiments::{
    cmd_compare, cmd_pipeline, cmd_sweep, cmd_validate, validation_case, CompareKind,
};
use smasim_core::sched::{simulate_scheduler, SchedWorkload, SchedulerKind};
use smasim_core::sma::{LsmaInstruction, SmaContext, SmaUnit};
use smasim_core::workload::{bundled_models, run_model};
use smasim_core::{MachineConfig, Matrix};

type Check = fn() -> Result<String, String>;

fn cfg(name: &str) -> MachineConfig {
    MachineConfig::preset(name).expect("preset exists")
}

/// 1. All engines and the mapper match the reference on 500 random GEMMs,
/// in under five minutes.
fn c01_oracle_equivalence() -> Result<String, String> {
    let start = Instant::now();
    let report = cmd_validate(1, 500, false).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !report.passed() {
        return Err(format!(
            "{} failures, first: {:?}",
            report.failures.len(),
            report.failures.first()
        ));
    }
    if elapsed.as_secs() >= 300 {
        return Err(format!("500 cases took {elapsed:?} (budget 5 min)"));
    }
    Ok(format!("500 cases in {:.1}s", elapsed.as_secs_f64()))
}

/// 2. MAC conservation and exact structural A-reuse (8 semi-broadcast,
/// 4 dot-product) on a sample of the same case distribution.
fn c02_conservation_and_reuse() -> Result<String, String> {
    let sb = cfg("2-sma");
    let tc = cfg("4-tc");
    for idx in 0..25 {
        let p = validation_case(2, idx);
        let macs = (p.m * p.n * p.k) as u64;
        let out = run_semi_broadcast(&p, 8, 8, &sb).map_err(|e| e.to_string())?;
        if out.trace.counters.mac != macs {
            return Err(format!("case {idx}: sb macs {} != {macs}", out.trace.counters.mac));
        }
        if out.reuse.a_reuse_factor != 8.0 {
            return Err(format!("case {idx}: sb a-reuse {}", out.reuse.a_reuse_factor));
        }
        let out = run_dot_product(&p, tc.tc_units_per_sm * 16, &tc).map_err(|e| e.to_string())?;
        if out.trace.counters.mac != macs {
            return Err(format!("case {idx}: dp macs {} != {macs}", out.trace.counters.mac));
        }
        if out.reuse.a_reuse_factor != 4.0 {
            return Err(format!("case {idx}: dp a-reuse {}", out.reuse.a_reuse_factor));
        }
    }
    Ok("25 sampled cases".into())
}

/// 3. Coalescing signatures per dataflow on a 256-cubed GEMM.
fn c03_coalescing_signatures() -> Result<String, String> {
    let sb = timing_semi_broadcast(256, 256, 256, 8, 8, &cfg("2-sma"))
        .map_err(|e| e.to_string())?
        .trace
        .signature;
    if sb.uncoalesced_a_requests == 0 || sb.uncoalesced_b_requests != 0 || sb.uncoalesced_c_requests != 0
    {
        return Err(format!("semi-broadcast signature {sb:?}"));
    }
    let ws = timing_weight_stationary(256, 256, 256, 8, 8, &cfg("tpu-dataflow"))
        .map_err(|e| e.to_string())?
        .trace
        .signature;
    if ws.uncoalesced_a_requests == 0 || ws.uncoalesced_c_requests == 0 {
        return Err(format!("weight-stationary signature {ws:?}"));
    }
    let tc = cfg("4-tc");
    let dp = timing_dot_product(256, 256, 256, tc.tc_units_per_sm * 16, &tc)
        .map_err(|e| e.to_string())?
        .trace
        .signature;
    if dp.total_uncoalesced() != 0 || dp.coalesced_requests == 0 {
        return Err(format!("dot-product signature {dp:?}"));
    }
    Ok("sb A-only, ws A+C, dp none".into())
}

/// 4. Stall-free instruction latency: preload(8) + M + 7 on the 8x8 array,
/// event simulation against the analytic formula for M in {1, 2, 3, 128}.
fn c04_cycle_formula() -> Result<String, String> {
    for (m, want) in [(1usize, 16u64), (2, 17), (3, 18), (128, 143)] {
        let mut ctx = SmaContext {
            shared: vec![1.0; m * 8],
            rf: vec![0.0; m * 8],
        };
        let mut unit = SmaUnit::new(8, 8, 8);
        let ticket = unit
            .issue_lsma(LsmaInstruction {
                addr_a: 0,
                stride_a: 8,
                addr_c: 0,
                stride_c: 8,
                b: Matrix::identity(8),
                k_height: m,
            })
            .map_err(|e| e.to_string())?;
        unit.sync_lsma(ticket, &mut ctx).map_err(|e| e.to_string())?;
        if unit.cycle() != want {
            return Err(format!("event sim M={m}: {} cycles, want {want}", unit.cycle()));
        }
        let analytic = timing_semi_broadcast(m, 8, 8, 8, 8, &cfg("2-sma"))
            .map_err(|e| e.to_string())?
            .trace
            .total_cycles;
        if analytic != want {
            return Err(format!("analytic M={m}: {analytic} cycles, want {want}"));
        }
    }
    Ok("143 at M=128; 16/17/18 at M=1/2/3".into())
}

/// 5. FLOPS efficiency above 0.90 on the 2-unit config at size 4096.
fn c05_efficiency_saturation() -> Result<String, String> {
    let report =
        cmd_sweep(&["2-sma".to_string()], &[4096]).map_err(|e| e.to_string())?;
    let eff = report.rows[0].efficiency;
    if eff > 0.90 {
        Ok(format!("efficiency {eff:.4}"))
    } else {
        Err(format!("efficiency {eff:.4} <= 0.90"))
    }
}

/// 6. Iso-FLOP ordering: 2-unit systolic beats 4 dot-product units at every
/// square size >= 1024, by at least 15% at 4096.
fn c06_iso_flop() -> Result<String, String> {
    let report = cmd_compare(CompareKind::IsoFlop, &[1024, 2048, 4096])
        .map_err(|e| e.to_string())?;
    let mut at_4096 = 0.0;
    for row in &report.rows {
        if row.speedup <= 1.0 {
            return Err(format!("{}: speedup {:.3} <= 1", row.label, row.speedup));
        }
        if row.label == "gemm-4096" {
            at_4096 = row.speedup;
        }
    }
    if at_4096 < 1.15 {
        return Err(format!("speedup at 4096 is {at_4096:.3} < 1.15"));
    }
    Ok(format!("speedup at 4096: {at_4096:.3}"))
}

/// 7. Classic weight-stationary is slower than semi-broadcast at every size
/// >= 256, with the slowdown inside [1.10, 1.60] at the three largest.
fn c07_tpu_dataflow_penalty() -> Result<String, String> {
    let sizes = [256usize, 512, 1024, 2048, 4096];
    let report = cmd_compare(CompareKind::TpuDataflow, &sizes).map_err(|e| e.to_string())?;
    let mut banded = Vec::new();
    for (row, &size) in report.rows.iter().zip(sizes.iter()) {
        let slowdown = row.candidate_cycles as f64 / row.baseline_cycles as f64;
        if slowdown <= 1.0 {
            return Err(format!("{}: slowdown {slowdown:.3} <= 1", row.label));
        }
        if size >= 1024 {
            if !(1.10..=1.60).contains(&slowdown) {
                return Err(format!(
                    "{}: slowdown {slowdown:.3} outside [1.10, 1.60]",
                    row.label
                ));
            }
            banded.push(format!("{size}:{slowdown:.3}"));
        }
    }
    Ok(banded.join(" "))
}

/// 8. Iso-area: 3-SMA < 2-SMA < 4-TC latency on every bundled pure-GEMM
/// model, and 3-SMA speedup over 4-TC >= 1.35.
fn c08_iso_area() -> Result<String, String> {
    let report = cmd_compare(CompareKind::IsoArea, &[]).map_err(|e| e.to_string())?;
    let mut min_speedup = f64::INFINITY;
    for row in &report.rows {
        if row.speedup < 1.35 {
            return Err(format!("{}: 3-sma/4-tc speedup {:.3} < 1.35", row.label, row.speedup));
        }
        min_speedup = min_speedup.min(row.speedup);
    }
    let (two, three, four) = (cfg("2-sma"), cfg("3-sma"), cfg("4-tc"));
    for model in bundled_models().into_iter().filter(|m| m.is_pure_gemm()) {
        let c2 = run_model(&model, &two).map_err(|e| e.to_string())?.total_cycles;
        let c3 = run_model(&model, &three).map_err(|e| e.to_string())?.total_cycles;
        let c4 = run_model(&model, &four).map_err(|e| e.to_string())?.total_cycles;
        if !(c3 < c2 && c2 < c4) {
            return Err(format!("{}: cycles 3-sma {c3}, 2-sma {c2}, 4-tc {c4}", model.name));
        }
    }
    Ok(format!("min speedup {min_speedup:.3}"))
}

/// 9. Energy direction: 3-SMA under 4-TC in total, with the dominant delta
/// in the register file or shared memory.
fn c09_energy_direction() -> Result<String, String> {
    let report = cmd_compare(CompareKind::Energy, &[]).map_err(|e| e.to_string())?;
    if report.energy_rows.is_empty() {
        return Err("no energy rows".into());
    }
    for row in &report.energy_rows {
        if row.candidate_over_baseline >= 1.0 {
            return Err(format!(
                "{}: energy ratio {:.3} >= 1",
                row.label, row.candidate_over_baseline
            ));
        }
        if row.dominant_delta_structure != "register_file"
            && row.dominant_delta_structure != "shared_memory"
        {
            return Err(format!(
                "{}: dominant delta in {}",
                row.label, row.dominant_delta_structure
            ));
        }
    }
    let worst = report
        .energy_rows
        .iter()
        .map(|r| r.candidate_over_baseline)
        .fold(0.0, f64::max);
    Ok(format!("worst ratio {worst:.3}"))
}

/// 10. Scheduler property on 20 random double-buffered workloads: GTO's
/// loader issue-gap exceeds round-robin's and round-robin never stalls more.
fn c10_scheduler_property() -> Result<String, String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xacce97);
    for case in 0..20 {
        let w = SchedWorkload {
            compute_warps: rng.gen_range(8..32),
            loader_warps: rng.gen_range(2..8),
            iterations: rng.gen_range(4..10),
            compute_insts_per_iter: rng.gen_range(64..256),
            load_insts_per_iter: rng.gen_range(4..16),
            warp_turnaround: rng.gen_range(1..3),
            load_latency: rng.gen_range(100..400),
        };
        let gto = simulate_scheduler(SchedulerKind::Gto, &w).map_err(|e| e.to_string())?;
        let rr = simulate_scheduler(SchedulerKind::RoundRobin, &w).map_err(|e| e.to_string())?;
        if gto.max_issue_gap_loader <= rr.max_issue_gap_loader {
            return Err(format!(
                "case {case}: gaps gto {} <= rr {} for {w:?}",
                gto.max_issue_gap_loader, rr.max_issue_gap_loader
            ));
        }
        if rr.total_stall_cycles > gto.total_stall_cycles {
            return Err(format!(
                "case {case}: stalls rr {} > gto {}",
                rr.total_stall_cycles, gto.total_stall_cycles
            ));
        }
    }
    Ok("20 random workloads".into())
}

/// 11. Pipeline latency is non-increasing in the detection interval, and
/// the N=4 reduction versus N=1 lies in [40%, 55%].
fn c11_pipeline() -> Result<String, String> {
    let report =
        cmd_pipeline(&[1, 2, 4, 8], "volta-baseline").map_err(|e| e.to_string())?;
    let avg: Vec<f64> = report.rows.iter().map(|r| r.average_ms).collect();
    for pair in avg.windows(2) {
        if pair[1] > pair[0] {
            return Err(format!("average latency increased: {avg:?}"));
        }
    }
    let reduction = 1.0 - avg[2] / avg[0];
    if !(0.40..=0.55).contains(&reduction) {
        return Err(format!("N=4 reduction {:.1}% outside [40, 55]", reduction * 100.0));
    }
    Ok(format!("N=4 reduction {:.1}%", reduction * 100.0))
}

/// 12. Controller overhead: 256 bytes on the 3-unit SM, under 0.1% of
/// on-chip storage.
fn c12_overhead() -> Result<String, String> {
    let three = cfg("3-sma");
    let bytes = controller_storage_bytes(&three);
    if bytes != 256 {
        return Err(format!("controller storage {bytes} B, want 256"));
    }
    let ratio = controller_overhead_ratio(&three);
    if ratio >= 0.001 {
        return Err(format!("overhead ratio {ratio:.5} >= 0.1%"));
    }
    Ok(format!("256 B, {:.4}% of on-chip storage", ratio * 100.0))
}

/// 13. Determinism: two identical sweep invocations of the binary produce
/// byte-identical output.
fn c13_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("sweep-{run}.csv"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_smasim"))
            .args(["sweep", "--config", "2-sma", "--config", "4-tc"])
            .args(["--sizes", "256,512,1024", "--format", "csv"])
            .arg("--out")
            .arg(&path)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("sweep run {run} exited with {status}"));
        }
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if outputs[0] != outputs[1] {
        return Err("sweep outputs differ between runs".into());
    }
    Ok(format!("{} identical bytes", outputs[0].len()))
}

#[test]
fn acceptance_criteria() {
    let checks: [(&str, Check); 13] = [
        ("functional oracle equivalence (500 random GEMMs)", c01_oracle_equivalence),
        ("MAC conservation and exact A-reuse", c02_conservation_and_reuse),
        ("coalescing signatures per dataflow", c03_coalescing_signatures),
        ("stall-free cycle formula vs event simulation", c04_cycle_formula),
        ("efficiency saturation at size 4096", c05_efficiency_saturation),
        ("iso-FLOP ordering", c06_iso_flop),
        ("classic weight-stationary penalty band", c07_tpu_dataflow_penalty),
        ("iso-area model ordering", c08_iso_area),
        ("energy direction and dominant structure", c09_energy_direction),
        ("GTO vs round-robin scheduler property", c10_scheduler_property),
        ("pipeline latency amortization", c11_pipeline),
        ("controller overhead accounting", c12_overhead),
        ("byte-identical repeated sweeps", c13_determinism),
    ];
    let mut failed = 0usize;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:2}: PASS  {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:2}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
