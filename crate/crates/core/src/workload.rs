//! DNN workload descriptors (conv stacks lowered to GEMM, plus
//! GEMM-incompatible ops costed on the SIMD lanes) and the driving-stack
//! frame pipeline: detection every N frames, tracking every frame,
//! localization concurrent on the SIMD resources.

use serde::{Deserialize, Serialize};

use crate::config::MachineConfig;
use crate::error::{SimError, SimResult};
use crate::mapper::{simulate_chip_gemm, MapperOptions};
use crate::oracle::ConvLayer;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Conv(ConvLayer),
    Gemm { m: usize, n: usize, k: usize },
    SimdOp {
        name: String,
        flop_count: u64,
        simd_only: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub ops: Vec<Op>,
}

impl ModelDescriptor {
    pub fn from_toml(text: &str) -> SimResult<ModelDescriptor> {
        let m: ModelDescriptor =
            toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.ops.is_empty() {
            return Err(SimError::Invariant(format!(
                "model `{}` has no ops",
                self.name
            )));
        }
        for op in &self.ops {
            match op {
                Op::Conv(layer) => {
                    layer.out_dims()?;
                }
                Op::Gemm { m, n, k } => {
                    if *m == 0 || *n == 0 || *k == 0 {
                        return Err(SimError::Dimension(format!(
                            "model `{}` has a degenerate GEMM {m}x{n}x{k}",
                            self.name
                        )));
                    }
                }
                Op::SimdOp { name, flop_count, .. } => {
                    if *flop_count == 0 {
                        return Err(SimError::Invariant(format!(
                            "simd op `{name}` has zero flops"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn conv_count(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, Op::Conv(_))).count()
    }

    pub fn is_pure_gemm(&self) -> bool {
        self.ops
            .iter()
            .all(|o| matches!(o, Op::Conv(_) | Op::Gemm { .. }))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OpRun {
    pub label: String,
    pub cycles: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRun {
    pub model: String,
    pub total_cycles: u64,
    pub total_ms: f64,
    pub total_macs: u64,
    pub ops: Vec<OpRun>,
}

pub fn cycles_to_ms(cycles: u64, cfg: &MachineConfig) -> f64 {
    cycles as f64 / (cfg.clock_ghz * 1e6)
}

/// Run a model end to end: convs lower through img2col dimensions onto the
/// machine's GEMM path; simd ops run on whatever lanes the machine exposes
/// in SIMD mode, which on a temporally-integrated config includes the SMA
/// units themselves.
pub fn run_model(model: &ModelDescriptor, cfg: &MachineConfig) -> SimResult<ModelRun> {
    model.validate()?;
    let opt = MapperOptions::default();
    let mut runs = Vec::with_capacity(model.ops.len());
    let mut total_cycles = 0u64;
    let mut total_macs = 0u64;
    for (idx, op) in model.ops.iter().enumerate() {
        let run = match op {
            Op::Conv(layer) => {
                let (m, n, k) = layer.gemm_dims()?;
                let t = simulate_chip_gemm(m, n, k, cfg, opt)?;
                OpRun {
                    label: format!("conv{idx}:{m}x{n}x{k}"),
                    cycles: t.total_cycles + cfg.mode_switch_cycles as u64,
                    macs: t.trace.counters.mac,
                }
            }
            Op::Gemm { m, n, k } => {
                let t = simulate_chip_gemm(*m, *n, *k, cfg, opt)?;
                OpRun {
                    label: format!("gemm{idx}:{m}x{n}x{k}"),
                    cycles: t.total_cycles + cfg.mode_switch_cycles as u64,
                    macs: t.trace.counters.mac,
                }
            }
            Op::SimdOp {
                name,
                flop_count,
                simd_only,
            } => {
                let lanes = cfg.simd_mode_lanes() as u64 * cfg.sm_count as u64;
                if lanes == 0 {
                    if *simd_only {
                        return Err(SimError::UnsupportedOp {
                            op: name.clone(),
                            reason: "machine exposes no SIMD-mode lanes".into(),
                        });
                    }
                    return Err(SimError::UnsupportedOp {
                        op: name.clone(),
                        reason: "no lanes available for a non-GEMM op".into(),
                    });
                }
                let rate = 2.0 * lanes as f64 * cfg.simd_utilization;
                OpRun {
                    label: format!("simd{idx}:{name}"),
                    cycles: (*flop_count as f64 / rate).ceil() as u64
                        + cfg.mode_switch_cycles as u64,
                    macs: 0,
                }
            }
        };
        total_cycles += run.cycles;
        total_macs += run.macs;
        runs.push(run);
    }
    Ok(ModelRun {
        model: model.name.clone(),
        total_cycles,
        total_ms: cycles_to_ms(total_cycles, cfg),
        total_macs,
        ops: runs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSpec {
    Model(ModelDescriptor),
    FixedMs(f64),
}

impl TaskSpec {
    fn latency_ms(&self, cfg: &MachineConfig) -> SimResult<f64> {
        match self {
            TaskSpec::Model(m) => Ok(run_model(m, cfg)?.total_ms),
            TaskSpec::FixedMs(ms) => {
                if *ms < 0.0 || !ms.is_finite() {
                    return Err(SimError::Invariant("fixed latency must be >= 0 ms".into()));
                }
                Ok(*ms)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub det: TaskSpec,
    pub tra: TaskSpec,
    pub loc: TaskSpec,
    pub detection_interval: u32,
    pub latency_target_ms: f64,
}

impl PipelineSpec {
    pub fn from_toml(text: &str) -> SimResult<PipelineSpec> {
        let s: PipelineSpec =
            toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.detection_interval == 0 {
            return Err(SimError::Invariant("detection interval must be >= 1".into()));
        }
        if !(self.latency_target_ms > 0.0) {
            return Err(SimError::Invariant("latency target must be positive".into()));
        }
        Ok(())
    }
}

/// Per-task latencies estimated for the baseline stack; calibration
/// values, not measurements.
pub const BUNDLED_DET_MS: f64 = 60.0;
pub const BUNDLED_TRA_MS: f64 = 20.0;
pub const BUNDLED_LOC_MS: f64 = 24.0;

pub fn bundled_pipeline(detection_interval: u32) -> PipelineSpec {
    PipelineSpec {
        det: TaskSpec::FixedMs(BUNDLED_DET_MS),
        tra: TaskSpec::FixedMs(BUNDLED_TRA_MS),
        loc: TaskSpec::FixedMs(BUNDLED_LOC_MS),
        detection_interval,
        latency_target_ms: 100.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineRun {
    pub detection_interval: u32,
    /// One detection period's worth of frame latencies.
    pub frame_latency_ms: Vec<f64>,
    pub average_ms: f64,
    pub worst_ms: f64,
    pub latency_target_ms: f64,
    pub target_met: bool,
}

/// One detection period: frame 0 runs DET then TRA (tracking consumes the
/// detection output), later frames run TRA against the last detection.
/// LOC runs concurrently, so each frame costs max(CNN chain, LOC).
pub fn run_pipeline(spec: &PipelineSpec, cfg: &MachineConfig) -> SimResult<PipelineRun> {
    spec.validate()?;
    let det = spec.det.latency_ms(cfg)?;
    let tra = spec.tra.latency_ms(cfg)?;
    let loc = spec.loc.latency_ms(cfg)?;
    let n = spec.detection_interval;
    let frames: Vec<f64> = (0..n)
        .map(|f| {
            let cnn = if f == 0 { det + tra } else { tra };
            cnn.max(loc)
        })
        .collect();
    let average_ms = frames.iter().sum::<f64>() / n as f64;
    let worst_ms = frames.iter().cloned().fold(0.0, f64::max);
    Ok(PipelineRun {
        detection_interval: n,
        average_ms,
        worst_ms,
        target_met: worst_ms <= spec.latency_target_ms,
        latency_target_ms: spec.latency_target_ms,
        frame_latency_ms: frames,
    })
}

fn conv(
    in_hw: usize,
    in_c: usize,
    kernel: usize,
    out_c: usize,
    stride: usize,
    pad: usize,
) -> Op {
    Op::Conv(ConvLayer {
        batch: 1,
        in_h: in_hw,
        in_w: in_hw,
        in_c,
        kernel_r: kernel,
        kernel_s: kernel,
        out_c,
        stride,
        pad,
    })
}

/// Classic 5-conv stack (AlexNet shapes).
pub fn alexnet() -> ModelDescriptor {
    ModelDescriptor {
        name: "alexnet".into(),
        ops: vec![
            conv(227, 3, 11, 96, 4, 0),
            conv(27, 96, 5, 256, 1, 2),
            conv(13, 256, 3, 384, 1, 1),
            conv(13, 384, 3, 384, 1, 1),
            conv(13, 384, 3, 256, 1, 1),
        ],
    }
}

/// 8-conv stack (VGG-A shapes).
pub fn vgg_a() -> ModelDescriptor {
    ModelDescriptor {
        name: "vgg-a".into(),
        ops: vec![
            conv(224, 3, 3, 64, 1, 1),
            conv(112, 64, 3, 128, 1, 1),
            conv(56, 128, 3, 256, 1, 1),
            conv(56, 256, 3, 256, 1, 1),
            conv(28, 256, 3, 512, 1, 1),
            conv(28, 512, 3, 512, 1, 1),
            conv(14, 512, 3, 512, 1, 1),
            conv(14, 512, 3, 512, 1, 1),
        ],
    }
}

/// 57-conv stack: a 3-conv stem plus nine 6-conv inception-style modules.
/// Shapes are canonical estimates; only the layer count is load-bearing.
pub fn googlenet() -> ModelDescriptor {
    let mut ops = vec![
        conv(223, 3, 7, 64, 2, 3),
        conv(56, 64, 1, 64, 1, 0),
        conv(56, 64, 3, 192, 1, 1),
    ];
    let modules: [(usize, usize); 9] = [
        (28, 192),
        (28, 256),
        (14, 480),
        (14, 512),
        (14, 512),
        (14, 512),
        (14, 528),
        (7, 832),
        (7, 832),
    ];
    for (hw, cin) in modules {
        ops.push(conv(hw, cin, 1, 64, 1, 0));
        ops.push(conv(hw, cin, 1, 96, 1, 0));
        ops.push(conv(hw, 96, 3, 128, 1, 1));
        ops.push(conv(hw, cin, 1, 16, 1, 0));
        ops.push(conv(hw, 16, 5, 32, 1, 2));
        ops.push(conv(hw, cin, 1, 32, 1, 0));
    }
    ModelDescriptor {
        name: "googlenet".into(),
        ops,
    }
}

fn bottleneck(ops: &mut Vec<Op>, hw: usize, cin: usize, mid: usize) {
    ops.push(conv(hw, cin, 1, mid, 1, 0));
    ops.push(conv(hw, mid, 3, mid, 1, 1));
    ops.push(conv(hw, mid, 1, mid * 4, 1, 0));
}

fn resnet_backbone(ops: &mut Vec<Op>, stage3_blocks: usize) {
    ops.push(conv(223, 3, 7, 64, 2, 3));
    let stages: [(usize, usize, usize, usize); 4] = [
        (56, 64, 64, 3),
        (28, 256, 128, 4),
        (14, 512, 256, stage3_blocks),
        (7, 1024, 512, 3),
    ];
    for (hw, cin, mid, blocks) in stages {
        ops.push(conv(hw, cin, 1, mid * 4, 1, 0)); // projection shortcut
        bottleneck(ops, hw, cin, mid);
        for _ in 1..blocks {
            bottleneck(ops, hw, mid * 4, mid);
        }
    }
}

/// 132-conv hybrid: ResNet-50-style backbone, FPN, RPN and head stacks,
/// plus the two GEMM-incompatible ops costed on the SIMD lanes.
pub fn mask_rcnn() -> ModelDescriptor {
    let mut ops = Vec::new();
    resnet_backbone(&mut ops, 6); // 53 convs
    for hw in [56, 28, 14, 7] {
        ops.push(conv(hw, 256, 1, 256, 1, 0)); // FPN lateral
        ops.push(conv(hw, 256, 3, 256, 1, 1)); // FPN output
    }
    for _ in 0..5 {
        ops.push(conv(14, 256, 3, 256, 1, 1)); // RPN tower
    }
    ops.push(Op::SimdOp {
        name: "region-proposal".into(),
        flop_count: 400_000_000,
        simd_only: true,
    });
    // Per-RoI head stacks (estimated shapes).
    while ops.iter().filter(|o| matches!(o, Op::Conv(_))).count() < 132 {
        ops.push(conv(14, 256, 3, 256, 1, 1));
    }
    ops.push(Op::SimdOp {
        name: "roi-align".into(),
        flop_count: 600_000_000,
        simd_only: true,
    });
    ModelDescriptor {
        name: "mask-rcnn".into(),
        ops,
    }
}

/// 108-conv hybrid: ResNet-101-style backbone plus an ASPP head, with the
/// argmax/CRF post-processing costed on the SIMD lanes.
pub fn deeplab() -> ModelDescriptor {
    let mut ops = Vec::new();
    resnet_backbone(&mut ops, 23); // 104 convs
    for _ in 0..4 {
        ops.push(conv(28, 2048, 3, 256, 1, 1)); // ASPP branches
    }
    ops.push(Op::SimdOp {
        name: "argmax".into(),
        flop_count: 120_000_000,
        simd_only: true,
    });
    ops.push(Op::SimdOp {
        name: "crf".into(),
        flop_count: 900_000_000,
        simd_only: true,
    });
    ModelDescriptor {
        name: "deeplab".into(),
        ops,
    }
}

pub fn bundled_models() -> Vec<ModelDescriptor> {
    vec![alexnet(), vgg_a(), googlenet(), mask_rcnn(), deeplab()]
}

pub fn bundled_model(name: &str) -> Option<ModelDescriptor> {
    bundled_models().into_iter().find(|m| m.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_conv_counts() {
        for (name, want) in [
            ("alexnet", 5),
            ("vgg-a", 8),
            ("googlenet", 57),
            ("mask-rcnn", 132),
            ("deeplab", 108),
        ] {
            let m = bundled_model(name).unwrap();
            m.validate().unwrap();
            assert_eq!(m.conv_count(), want, "{name}");
        }
    }

    #[test]
    fn model_macs_match_layer_oracle() {
        let m = alexnet();
        let cfg = MachineConfig::preset("2-sma").unwrap();
        let run = run_model(&m, &cfg).unwrap();
        let want: u64 = m
            .ops
            .iter()
            .map(|op| match op {
                Op::Conv(l) => l.macs().unwrap(),
                _ => 0,
            })
            .sum();
        assert_eq!(run.total_macs, want);
        assert_eq!(run.ops.len(), 5);
    }

    #[test]
    fn pure_gemm_model_faster_on_more_sma_units() {
        let m = vgg_a();
        let t3 = run_model(&m, &MachineConfig::preset("3-sma").unwrap()).unwrap();
        let t2 = run_model(&m, &MachineConfig::preset("2-sma").unwrap()).unwrap();
        let tc = run_model(&m, &MachineConfig::preset("4-tc").unwrap()).unwrap();
        assert!(t3.total_cycles < t2.total_cycles);
        assert!(t2.total_cycles < tc.total_cycles);
    }

    #[test]
    fn simd_only_op_needs_simd_lanes() {
        let m = ModelDescriptor {
            name: "post".into(),
            ops: vec![Op::SimdOp {
                name: "nms".into(),
                flop_count: 1_000_000,
                simd_only: true,
            }],
        };
        let err = run_model(&m, &MachineConfig::preset("tpu-dataflow").unwrap());
        assert!(matches!(err, Err(SimError::UnsupportedOp { .. })));
        // Temporal integration: the SMA machines run it on the same silicon.
        let ok = run_model(&m, &MachineConfig::preset("2-sma").unwrap()).unwrap();
        assert!(ok.total_cycles > 0);
        // And the latency is independent of the GEMM engine count only in
        // proportion to the lanes the units contribute.
        let ok3 = run_model(&m, &MachineConfig::preset("3-sma").unwrap()).unwrap();
        assert!(ok3.total_cycles <= ok.total_cycles);
    }

    #[test]
    fn hybrid_model_runs_both_modes_on_sma() {
        let m = mask_rcnn();
        let run = run_model(&m, &MachineConfig::preset("2-sma").unwrap()).unwrap();
        assert!(run.ops.iter().any(|o| o.label.contains("simd")));
        assert!(run.ops.iter().any(|o| o.label.contains("conv")));
    }

    #[test]
    fn pipeline_interval_amortizes_detection() {
        let cfg = MachineConfig::preset("volta-baseline").unwrap();
        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 8] {
            let run = run_pipeline(&bundled_pipeline(n), &cfg).unwrap();
            assert!(run.average_ms <= prev + 1e-9, "N={n}");
            prev = run.average_ms;
        }
        let n1 = run_pipeline(&bundled_pipeline(1), &cfg).unwrap();
        let n4 = run_pipeline(&bundled_pipeline(4), &cfg).unwrap();
        let reduction = 1.0 - n4.average_ms / n1.average_ms;
        assert!((0.40..=0.55).contains(&reduction), "reduction {reduction}");
    }

    #[test]
    fn pipeline_closed_form_example() {
        // L_DET = L_TRA = L, LOC negligible: N=4 average is 1.25 L.
        let spec = PipelineSpec {
            det: TaskSpec::FixedMs(10.0),
            tra: TaskSpec::FixedMs(10.0),
            loc: TaskSpec::FixedMs(0.0),
            detection_interval: 4,
            latency_target_ms: 100.0,
        };
        let cfg = MachineConfig::preset("volta-baseline").unwrap();
        let run = run_pipeline(&spec, &cfg).unwrap();
        assert!((run.average_ms - 12.5).abs() < 1e-9);
        let one = PipelineSpec {
            detection_interval: 1,
            ..spec
        };
        let run1 = run_pipeline(&one, &cfg).unwrap();
        assert!((run1.average_ms - 20.0).abs() < 1e-9);
    }

    #[test]
    fn model_toml_round_trip() {
        let text = toml::to_string(&alexnet()).unwrap();
        let back = ModelDescriptor::from_toml(&text).unwrap();
        assert_eq!(back.conv_count(), 5);
    }
}
