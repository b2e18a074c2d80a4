//! Experiment drivers behind the CLI: the randomized validation harness,
//! efficiency sweeps, pairwise comparisons, and the pipeline latency
//! table. Every report embeds its invocation so it can be replayed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{iso_flop_pair, MachineConfig};
use crate::energy::{account, compare_energy, EnergyReport, EnergyTable};
use crate::engine::{
    run_dot_product, run_semi_broadcast, run_weight_stationary, timing_dot_product,
    timing_semi_broadcast, timing_weight_stationary,
};
use crate::error::{SimError, SimResult};
use crate::mapper::{plan_tiling, run_double_buffered, simulate_chip_gemm, MapperOptions, TilingPlan};
use crate::matrix::{Layout, Matrix};
use crate::oracle::{gemm_reference, GemmProblem};
use crate::sched::SchedulerKind;
use crate::trace::Counters;
use crate::workload::{bundled_pipeline, run_model, run_pipeline, ModelDescriptor, Op};
use crate::GemmPath;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The arguments that produced a report; `--replay` re-runs these.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    #[serde(default)]
    pub configs: Vec<String>,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub intervals: Vec<u32>,
    #[serde(default)]
    pub experiment: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayKey {
    pub seed: u64,
    pub case_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureCase {
    pub replay: ReplayKey,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f32,
    pub beta: f32,
    pub stage: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub tool_version: &'static str,
    pub invocation: Invocation,
    pub cases_run: usize,
    pub failures: Vec<FailureCase>,
    pub warning: Option<String>,
}

impl ValidateReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Deterministically regenerate validation case `index` of `seed`.
pub fn validation_case(seed: u64, index: usize) -> GemmProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64 * 0x9e37_79b9));
    let m = rng.gen_range(1..=512);
    let n = rng.gen_range(1..=512);
    let k = rng.gen_range(1..=512);
    let mut mk = |r: usize, c: usize| {
        let layout = if rng.gen::<bool>() {
            Layout::RowMajor
        } else {
            Layout::ColMajor
        };
        let data = (0..r * c).map(|_| rng.gen::<f32>()).collect();
        Matrix::with_layout(r, c, layout, data).expect("sized buffer")
    };
    let a = mk(m, k);
    let b = mk(k, n);
    let c = mk(m, n);
    let alpha = rng.gen_range(0.25..2.0);
    let beta = rng.gen_range(0.25..2.0);
    GemmProblem::new(alpha, beta, a, b, c).expect("valid case")
}

fn max_rel_err(got: &Matrix, want: &Matrix) -> f64 {
    got.data
        .iter()
        .zip(want.data.iter())
        .map(|(&g, &w)| ((g - w).abs() / w.abs().max(1.0)) as f64)
        .fold(0.0, f64::max)
}

const REL_TOL: f64 = 1e-5;

fn record(
    out: &mut Vec<FailureCase>,
    seed: u64,
    idx: usize,
    p: &GemmProblem,
    stage: &str,
    detail: String,
) {
    out.push(FailureCase {
        replay: ReplayKey {
            seed,
            case_index: idx,
        },
        m: p.m,
        n: p.n,
        k: p.k,
        alpha: p.alpha,
        beta: p.beta,
        stage: stage.into(),
        detail,
    });
}

/// Random-GEMM oracle equivalence across all engines and the mapper, plus
/// the conservation/reuse invariants every run must satisfy. Set
/// `inject_fault` to verify the harness actually catches mismatches.
pub fn cmd_validate(seed: u64, count: usize, inject_fault: bool) -> SimResult<ValidateReport> {
    let invocation = Invocation {
        command: "validate".into(),
        seed,
        count,
        ..Default::default()
    };
    if count == 0 {
        return Ok(ValidateReport {
            tool_version: TOOL_VERSION,
            invocation,
            cases_run: 0,
            failures: Vec::new(),
            warning: Some("count=0: vacuous pass".into()),
        });
    }
    let sb_cfg = MachineConfig::preset("2-sma").expect("preset");
    let ws_cfg = MachineConfig::preset("tpu-dataflow").expect("preset");
    let tc_cfg = MachineConfig::preset("4-tc").expect("preset");

    let failures: Vec<FailureCase> = (0..count)
        .into_par_iter()
        .flat_map_iter(|idx| {
            let p = validation_case(seed, idx);
            let mut local = Vec::new();
            macro_rules! fail {
                ($stage:expr, $detail:expr $(,)?) => {
                    record(&mut local, seed, idx, &p, $stage, $detail)
                };
            }
            let want = match gemm_reference(&p) {
                Ok(w) => w,
                Err(e) => {
                    fail!("oracle", e.to_string());
                    return local;
                }
            };
            let macs = (p.m * p.n * p.k) as u64;

            let rows = sb_cfg.sma_array_rows as usize;
            let cols = sb_cfg.sma_array_cols as usize;
            match run_semi_broadcast(&p, rows, cols, &sb_cfg) {
                Ok(mut out) => {
                    if inject_fault && idx == 0 {
                        out.result.data[0] += 1.0;
                    }
                    let err = max_rel_err(&out.result, &want);
                    if err > REL_TOL {
                        fail!("semi-broadcast", format!("max rel err {err:.3e}"));
                    }
                    if out.trace.counters.mac != macs {
                        fail!(
                            "semi-broadcast",
                            format!("mac count {} != {macs}", out.trace.counters.mac),
                        );
                    }
                    if out.reuse.a_reuse_factor != 8.0 {
                        fail!(
                            "semi-broadcast",
                            format!("a_reuse {} != 8", out.reuse.a_reuse_factor),
                        );
                    }
                }
                Err(e) => fail!("semi-broadcast", e.to_string()),
            }

            match run_weight_stationary(&p, rows, cols, &ws_cfg) {
                Ok(out) => {
                    let err = max_rel_err(&out.result, &want);
                    if err > REL_TOL {
                        fail!("weight-stationary", format!("max rel err {err:.3e}"));
                    }
                    if out.trace.counters.mac != macs {
                        fail!(
                            "weight-stationary",
                            format!("mac count {} != {macs}", out.trace.counters.mac),
                        );
                    }
                }
                Err(e) => fail!("weight-stationary", e.to_string()),
            }

            match run_dot_product(&p, tc_cfg.tc_units_per_sm * 16, &tc_cfg) {
                Ok(out) => {
                    let err = max_rel_err(&out.result, &want);
                    if err > REL_TOL {
                        fail!("dot-product", format!("max rel err {err:.3e}"));
                    }
                    if out.reuse.a_reuse_factor != 4.0 {
                        fail!(
                            "dot-product",
                            format!("a_reuse {} != 4", out.reuse.a_reuse_factor),
                        );
                    }
                }
                Err(e) => fail!("dot-product", e.to_string()),
            }

            let mut mapper_cfg = sb_cfg.clone();
            mapper_cfg.sma_units_per_sm = 1 + (idx as u32 % 3);
            let opt = MapperOptions {
                scheduler: if idx % 2 == 0 {
                    SchedulerKind::RoundRobin
                } else {
                    SchedulerKind::Gto
                },
                double_buffered: true,
            };
            match run_double_buffered(&p, &mapper_cfg, opt) {
                Ok((got, timing)) => {
                    let err = max_rel_err(&got, &want);
                    if err > REL_TOL {
                        fail!("mapper", format!("max rel err {err:.3e}"));
                    }
                    if timing.trace.counters.mac != macs {
                        fail!(
                            "mapper",
                            format!("mac count {} != {macs}", timing.trace.counters.mac),
                        );
                    }
                }
                Err(e) => fail!("mapper", e.to_string()),
            }
            local
        })
        .collect();

    Ok(ValidateReport {
        tool_version: TOOL_VERSION,
        invocation,
        cases_run: count,
        failures,
        warning: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub config: String,
    pub size_m: usize,
    pub size_n: usize,
    pub size_k: usize,
    pub cycles: u64,
    pub macs: u64,
    pub efficiency: f64,
    pub a_reuse: f64,
    pub stall_cycles: u64,
    pub energy_total_pj: f64,
    pub energy_compute_pj: f64,
    pub energy_register_file_pj: f64,
    pub energy_shared_memory_pj: f64,
    pub energy_global_pj: f64,
    pub energy_control_pj: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub tool_version: &'static str,
    pub invocation: Invocation,
    /// Full config text per name, so the report is self-describing.
    pub configs: BTreeMap<String, String>,
    pub rows: Vec<SweepRow>,
}

fn structural_a_reuse(cfg: &MachineConfig, m: usize, n: usize, k: usize) -> SimResult<f64> {
    let rows = cfg.sma_array_rows as usize;
    let cols = cfg.sma_array_cols as usize;
    Ok(match cfg.gemm_path() {
        GemmPath::SemiBroadcast => {
            timing_semi_broadcast(m, n, k, rows, cols, cfg)?.reuse.a_reuse_factor
        }
        GemmPath::WeightStationary => {
            timing_weight_stationary(m, n, k, rows, cols, cfg)?.reuse.a_reuse_factor
        }
        GemmPath::DotProduct => {
            timing_dot_product(m, n, k, cfg.tc_units_per_sm * 16, cfg)?.reuse.a_reuse_factor
        }
        GemmPath::SimdOnly => 1.0,
    })
}

fn sweep_point(name: &str, cfg: &MachineConfig, size: usize) -> SimResult<SweepRow> {
    let t = simulate_chip_gemm(size, size, size, cfg, MapperOptions::default())?;
    let table = EnergyTable::bundled();
    let e = account(&t.trace.counters, &table);
    Ok(SweepRow {
        config: name.to_string(),
        size_m: size,
        size_n: size,
        size_k: size,
        cycles: t.total_cycles,
        macs: t.trace.counters.mac,
        efficiency: t.efficiency,
        a_reuse: structural_a_reuse(cfg, size, size, size)?,
        stall_cycles: t.trace.counters.stall_cycle,
        energy_total_pj: e.total_pj,
        energy_compute_pj: e.compute_pj,
        energy_register_file_pj: e.register_file_pj,
        energy_shared_memory_pj: e.shared_memory_pj,
        energy_global_pj: e.global_pj,
        energy_control_pj: e.control_pj,
    })
}

pub fn cmd_sweep(config_names: &[String], sizes: &[usize]) -> SimResult<SweepReport> {
    if config_names.is_empty() || sizes.is_empty() {
        return Err(SimError::Invariant("sweep needs configs and sizes".into()));
    }
    let mut configs = BTreeMap::new();
    let mut loaded = Vec::new();
    for name in config_names {
        let cfg = MachineConfig::load(name)?;
        configs.insert(name.clone(), cfg.emit());
        loaded.push((name.clone(), cfg));
    }
    let points: Vec<(usize, &(String, MachineConfig), usize)> = loaded
        .iter()
        .enumerate()
        .flat_map(|(ci, named)| sizes.iter().map(move |&s| (ci, named, s)))
        .collect();
    let mut rows = points
        .par_iter()
        .map(|&(_, (name, cfg), size)| sweep_point(name, cfg, size))
        .collect::<SimResult<Vec<SweepRow>>>()?;
    rows.sort_by(|a, b| (&a.config, a.size_m).cmp(&(&b.config, b.size_m)));
    Ok(SweepReport {
        tool_version: TOOL_VERSION,
        invocation: Invocation {
            command: "sweep".into(),
            configs: config_names.to_vec(),
            sizes: sizes.to_vec(),
            ..Default::default()
        },
        configs,
        rows,
    })
}

pub const SWEEP_CSV_HEADER: &str = "config,size_m,size_n,size_k,cycles,macs,efficiency,a_reuse,\
stall_cycles,energy_total_pj,energy_compute_pj,energy_register_file_pj,energy_shared_memory_pj,\
energy_global_pj,energy_control_pj";

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.3},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            r.config,
            r.size_m,
            r.size_n,
            r.size_k,
            r.cycles,
            r.macs,
            r.efficiency,
            r.a_reuse,
            r.stall_cycles,
            r.energy_total_pj,
            r.energy_compute_pj,
            r.energy_register_file_pj,
            r.energy_shared_memory_pj,
            r.energy_global_pj,
            r.energy_control_pj,
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareKind {
    IsoFlop,
    IsoArea,
    Energy,
    TpuDataflow,
}

impl CompareKind {
    pub fn name(self) -> &'static str {
        match self {
            CompareKind::IsoFlop => "iso-flop",
            CompareKind::IsoArea => "iso-area",
            CompareKind::Energy => "energy",
            CompareKind::TpuDataflow => "tpu-dataflow",
        }
    }

    pub fn parse(s: &str) -> SimResult<CompareKind> {
        Ok(match s {
            "iso-flop" => CompareKind::IsoFlop,
            "iso-area" => CompareKind::IsoArea,
            "energy" => CompareKind::Energy,
            "tpu-dataflow" => CompareKind::TpuDataflow,
            other => {
                return Err(SimError::Parse(format!(
                    "unknown comparison `{other}` (iso-flop|iso-area|energy|tpu-dataflow)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub baseline_cycles: u64,
    pub candidate_cycles: u64,
    /// baseline / candidate: >1 means the candidate is faster.
    pub speedup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub label: String,
    pub baseline: EnergyReport,
    pub candidate: EnergyReport,
    pub candidate_over_baseline: f64,
    pub dominant_delta_structure: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub tool_version: &'static str,
    pub invocation: Invocation,
    pub experiment: CompareKind,
    pub baseline_config: String,
    pub candidate_config: String,
    pub expectation: String,
    pub rows: Vec<CompareRow>,
    pub energy_rows: Vec<EnergyRow>,
}

fn model_gemm_counters(model: &ModelDescriptor, cfg: &MachineConfig) -> SimResult<(u64, Counters)> {
    let mut cycles = 0u64;
    let mut counters = Counters::default();
    for op in &model.ops {
        let (m, n, k) = match op {
            Op::Conv(layer) => layer.gemm_dims()?,
            Op::Gemm { m, n, k } => (*m, *n, *k),
            Op::SimdOp { .. } => continue,
        };
        let t = simulate_chip_gemm(m, n, k, cfg, MapperOptions::default())?;
        cycles += t.total_cycles;
        counters.add(&t.trace.counters);
    }
    Ok((cycles, counters))
}

fn pure_gemm_models() -> Vec<ModelDescriptor> {
    crate::workload::bundled_models()
        .into_iter()
        .filter(|m| m.is_pure_gemm())
        .collect()
}

pub fn cmd_compare(kind: CompareKind, sizes: &[usize]) -> SimResult<CompareReport> {
    let invocation = Invocation {
        command: "compare".into(),
        sizes: sizes.to_vec(),
        experiment: Some(kind.name().to_string()),
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut energy_rows = Vec::new();
    let (baseline_name, candidate_name, expectation) = match kind {
        CompareKind::IsoFlop => (
            "4-tc",
            "2-sma",
            "equal peak FP16-equivalent units; semi-broadcast reuse should win at every size >= 1024",
        ),
        CompareKind::TpuDataflow => (
            "2-sma",
            "tpu-dataflow",
            "classic weight-stationary pays shared-memory bank conflicts; expected 1.10-1.60x slower at large sizes",
        ),
        CompareKind::IsoArea => (
            "4-tc",
            "3-sma",
            "at matched silicon area the 3-unit config should beat the 4-TC config on every pure-GEMM model",
        ),
        CompareKind::Energy => (
            "4-tc",
            "3-sma",
            "lower total energy, with the dominant saving in the register file or shared memory",
        ),
    };
    let baseline = MachineConfig::load(baseline_name)?;
    let candidate = MachineConfig::load(candidate_name)?;

    match kind {
        CompareKind::IsoFlop | CompareKind::TpuDataflow => {
            if kind == CompareKind::IsoFlop && !iso_flop_pair(&baseline, &candidate) {
                return Err(SimError::Invariant(
                    "configs are not an iso-FLOP pair".into(),
                ));
            }
            let sizes: Vec<usize> = if sizes.is_empty() {
                vec![256, 512, 1024, 2048, 4096]
            } else {
                sizes.to_vec()
            };
            for &s in &sizes {
                let b = simulate_chip_gemm(s, s, s, &baseline, MapperOptions::default())?;
                let c = simulate_chip_gemm(s, s, s, &candidate, MapperOptions::default())?;
                rows.push(CompareRow {
                    label: format!("gemm-{s}"),
                    baseline_cycles: b.total_cycles,
                    candidate_cycles: c.total_cycles,
                    speedup: b.total_cycles as f64 / c.total_cycles as f64,
                });
            }
        }
        CompareKind::IsoArea => {
            for model in pure_gemm_models() {
                let b = run_model(&model, &baseline)?;
                let c = run_model(&model, &candidate)?;
                rows.push(CompareRow {
                    label: model.name.clone(),
                    baseline_cycles: b.total_cycles,
                    candidate_cycles: c.total_cycles,
                    speedup: b.total_cycles as f64 / c.total_cycles as f64,
                });
            }
        }
        CompareKind::Energy => {
            let table = EnergyTable::bundled();
            for model in pure_gemm_models() {
                let (bc, bcount) = model_gemm_counters(&model, &baseline)?;
                let (cc, ccount) = model_gemm_counters(&model, &candidate)?;
                let cmp = compare_energy(&bcount, &ccount, &table, &table)?;
                rows.push(CompareRow {
                    label: model.name.clone(),
                    baseline_cycles: bc,
                    candidate_cycles: cc,
                    speedup: bc as f64 / cc as f64,
                });
                energy_rows.push(EnergyRow {
                    label: model.name.clone(),
                    baseline: cmp.baseline,
                    candidate: cmp.candidate,
                    candidate_over_baseline: cmp.total_ratio,
                    dominant_delta_structure: cmp.dominant_delta_structure.to_string(),
                });
            }
        }
    }
    Ok(CompareReport {
        tool_version: TOOL_VERSION,
        invocation,
        experiment: kind,
        baseline_config: baseline_name.into(),
        candidate_config: candidate_name.into(),
        expectation: expectation.into(),
        rows,
        energy_rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineRow {
    pub detection_interval: u32,
    pub average_ms: f64,
    pub worst_ms: f64,
    pub target_met: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub tool_version: &'static str,
    pub invocation: Invocation,
    pub latency_target_ms: f64,
    pub rows: Vec<PipelineRow>,
}

pub fn cmd_pipeline(intervals: &[u32], config_name: &str) -> SimResult<PipelineReport> {
    if intervals.is_empty() {
        return Err(SimError::Invariant("pipeline needs at least one N".into()));
    }
    let cfg = &MachineConfig::load(config_name)?;
    let mut rows = Vec::new();
    let mut target = 100.0;
    for &n in intervals {
        let spec = bundled_pipeline(n);
        target = spec.latency_target_ms;
        let run = run_pipeline(&spec, cfg)?;
        rows.push(PipelineRow {
            detection_interval: n,
            average_ms: run.average_ms,
            worst_ms: run.worst_ms,
            target_met: run.target_met,
        });
    }
    Ok(PipelineReport {
        tool_version: TOOL_VERSION,
        invocation: Invocation {
            command: "pipeline".into(),
            configs: vec![config_name.to_string()],
            intervals: intervals.to_vec(),
            ..Default::default()
        },
        latency_target_ms: target,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub tool_version: &'static str,
    pub config: String,
    pub size_m: usize,
    pub size_n: usize,
    pub size_k: usize,
    pub plan: TilingPlan,
}

pub fn cmd_explain_plan(
    config_name: &str,
    m: usize,
    n: usize,
    k: usize,
) -> SimResult<PlanReport> {
    let cfg = MachineConfig::load(config_name)?;
    Ok(PlanReport {
        tool_version: TOOL_VERSION,
        config: config_name.to_string(),
        size_m: m,
        size_n: n,
        size_k: k,
        plan: plan_tiling(m, n, k, &cfg)?,
    })
}
