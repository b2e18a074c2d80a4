//! Hardware parameterization for the simulated machine: baseline GPU,
//! TensorCore-style, TPU-dataflow, and SMA configurations, plus the
//! iso-FLOP / iso-area resource accounting used by the comparisons.

use crate::error::{SimError, SimResult};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CURRENT_SCHEMA_VERSION: u32 = 1;

/// Which GEMM dataflow the systolic units run. `DotProduct` and `SimdOnly`
/// are derived paths for machines without SMA units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataflow {
    SemiBroadcast,
    WeightStationary,
}

/// Resolved execution path for GEMM on a given machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GemmPath {
    SemiBroadcast,
    WeightStationary,
    DotProduct,
    SimdOnly,
}

fn default_schema_version() -> u32 {
    CURRENT_SCHEMA_VERSION
}
fn default_sm_count() -> u32 {
    80
}
fn default_lanes() -> u32 {
    64
}
fn default_tc_units() -> u32 {
    4
}
fn default_array_dim() -> u32 {
    8
}
fn default_banks() -> u32 {
    32
}
fn default_shared_bytes() -> u64 {
    96 * 1024
}
fn default_sma_banks() -> u32 {
    8
}
fn default_rf_bytes() -> u64 {
    256 * 1024
}
fn default_rf_words() -> u32 {
    32
}
fn default_word_bytes() -> u32 {
    4
}
fn default_clock() -> f64 {
    1.2
}
fn default_ports() -> u32 {
    2
}
fn default_global_latency() -> u32 {
    400
}
fn default_line_bytes() -> u32 {
    128
}
fn default_barrier() -> u32 {
    10
}
fn default_bubble() -> u32 {
    1
}
fn default_ws_absorption() -> f64 {
    0.3
}
fn default_simd_util() -> f64 {
    0.5
}

/// Full parameterization of one SM plus chip-level SM count.
///
/// The structured-text on-disk form is TOML, versioned with
/// `schema_version`; every field has a default so documents only need to
/// state what differs from the Volta-like baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_sm_count")]
    pub sm_count: u32,
    #[serde(default = "default_lanes")]
    pub simd_lanes_per_sm: u32,
    #[serde(default = "default_tc_units")]
    pub tc_units_per_sm: u32,
    #[serde(default)]
    pub sma_units_per_sm: u32,
    #[serde(default = "default_array_dim")]
    pub sma_array_rows: u32,
    #[serde(default = "default_array_dim")]
    pub sma_array_cols: u32,
    #[serde(default = "default_banks")]
    pub shared_mem_banks: u32,
    #[serde(default = "default_shared_bytes")]
    pub shared_mem_bytes: u64,
    /// Shared-memory banks reserved for A-tile streaming per SMA unit.
    #[serde(default = "default_sma_banks")]
    pub sma_banks_assigned: u32,
    #[serde(default = "default_rf_bytes")]
    pub rf_bytes_per_sm: u64,
    #[serde(default = "default_rf_words")]
    pub rf_words_per_bank_per_cycle: u32,
    #[serde(default = "default_word_bytes")]
    pub word_bytes: u32,
    /// Cycles spent loading a stationary weight block; defaults to the
    /// array row count when absent.
    #[serde(default)]
    pub weight_preload_cycles: Option<u32>,
    #[serde(default = "default_clock")]
    pub clock_ghz: f64,
    /// Systolic dataflow run by the SMA units. Defaults to semi-broadcast.
    #[serde(default)]
    pub dataflow: Option<Dataflow>,
    /// Operand-collector read ports feeding the dot-product units, each
    /// delivering `rf_words_per_bank_per_cycle` words per cycle.
    #[serde(default = "default_ports")]
    pub operand_collector_ports: u32,
    #[serde(default = "default_global_latency")]
    pub global_latency_cycles: u32,
    #[serde(default = "default_line_bytes")]
    pub global_line_bytes: u32,
    /// Cost of the inter-iteration group barrier in the mapper.
    #[serde(default = "default_barrier")]
    pub barrier_cycles: u32,
    /// Exposed cycles between back-to-back LSMA issues on one unit
    /// (weight preload minus the drain it overlaps, at defaults).
    #[serde(default = "default_bubble")]
    pub issue_bubble_cycles: u32,
    /// Fraction of bank-conflict serialization on the weight-stationary
    /// A feed that the controller's staging FIFOs fail to hide.
    #[serde(default = "default_ws_absorption")]
    pub ws_stall_absorption: f64,
    /// Sustained fraction of peak the SIMD lanes reach on GEMM-incompatible
    /// ops (bundled estimate, not a measured value).
    #[serde(default = "default_simd_util")]
    pub simd_utilization: f64,
    /// Cycles charged per SIMD<->systolic mode switch. Zero by default;
    /// a knob for sensitivity studies.
    #[serde(default)]
    pub mode_switch_cycles: u32,
}

impl Default for MachineConfig {
    fn default() -> Self {
        // Volta-like GPGPU column: 80 SMs, 64 FP32 lanes, 4 TCs.
        MachineConfig {
            schema_version: CURRENT_SCHEMA_VERSION,
            sm_count: default_sm_count(),
            simd_lanes_per_sm: default_lanes(),
            tc_units_per_sm: default_tc_units(),
            sma_units_per_sm: 0,
            sma_array_rows: default_array_dim(),
            sma_array_cols: default_array_dim(),
            shared_mem_banks: default_banks(),
            shared_mem_bytes: default_shared_bytes(),
            sma_banks_assigned: default_sma_banks(),
            rf_bytes_per_sm: default_rf_bytes(),
            rf_words_per_bank_per_cycle: default_rf_words(),
            word_bytes: default_word_bytes(),
            weight_preload_cycles: None,
            clock_ghz: default_clock(),
            dataflow: None,
            operand_collector_ports: default_ports(),
            global_latency_cycles: default_global_latency(),
            global_line_bytes: default_line_bytes(),
            barrier_cycles: default_barrier(),
            issue_bubble_cycles: default_bubble(),
            ws_stall_absorption: default_ws_absorption(),
            simd_utilization: default_simd_util(),
            mode_switch_cycles: 0,
        }
    }
}

pub const PRESET_NAMES: &[&str] = &["volta-baseline", "2-sma", "3-sma", "4-tc", "tpu-dataflow"];

impl MachineConfig {
    /// Built-in presets addressable by name from the CLI.
    pub fn preset(name: &str) -> Option<MachineConfig> {
        let mut cfg = MachineConfig::default();
        match name {
            "volta-baseline" => {}
            "4-tc" => {
                // Same silicon as the baseline; named for the iso comparisons.
            }
            "2-sma" => {
                cfg.simd_lanes_per_sm = 0;
                cfg.tc_units_per_sm = 0;
                cfg.sma_units_per_sm = 2;
            }
            "3-sma" => {
                cfg.simd_lanes_per_sm = 0;
                cfg.tc_units_per_sm = 0;
                cfg.sma_units_per_sm = 3;
            }
            "tpu-dataflow" => {
                cfg.simd_lanes_per_sm = 0;
                cfg.tc_units_per_sm = 0;
                cfg.sma_units_per_sm = 2;
                cfg.dataflow = Some(Dataflow::WeightStationary);
            }
            _ => return None,
        }
        Some(cfg)
    }

    /// Loads a config from a preset name, a path, or (fallback) a file found
    /// under `SMASIM_CONFIG_DIR`.
    pub fn load(source: &str) -> SimResult<MachineConfig> {
        if let Some(cfg) = Self::preset(source) {
            return Ok(cfg);
        }
        let path = Path::new(source);
        let text = if path.exists() {
            std::fs::read_to_string(path)?
        } else if let Ok(dir) = std::env::var("SMASIM_CONFIG_DIR") {
            let candidate = Path::new(&dir).join(source);
            if candidate.exists() {
                std::fs::read_to_string(candidate)?
            } else {
                return Err(SimError::UnknownConfig(source.to_string()));
            }
        } else {
            return Err(SimError::UnknownConfig(source.to_string()));
        };
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> SimResult<MachineConfig> {
        let cfg: MachineConfig =
            toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> SimResult<()> {
        fn positive(name: &str, v: u64) -> SimResult<()> {
            if v == 0 {
                Err(SimError::Invariant(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        }
        positive("sm_count", self.sm_count as u64)?;
        positive("sma_array_rows", self.sma_array_rows as u64)?;
        positive("sma_array_cols", self.sma_array_cols as u64)?;
        positive("shared_mem_banks", self.shared_mem_banks as u64)?;
        positive("shared_mem_bytes", self.shared_mem_bytes)?;
        positive("rf_bytes_per_sm", self.rf_bytes_per_sm)?;
        positive("rf_words_per_bank_per_cycle", self.rf_words_per_bank_per_cycle as u64)?;
        positive("word_bytes", self.word_bytes as u64)?;
        if self.simd_lanes_per_sm == 0 && self.tc_units_per_sm == 0 && self.sma_units_per_sm == 0 {
            return Err(SimError::Invariant(
                "machine has no compute units at all".into(),
            ));
        }
        if self.shared_mem_bytes > 96 * 1024 {
            return Err(SimError::Invariant(
                "shared_mem_bytes exceeds the 96 KiB limit".into(),
            ));
        }
        if self.sma_banks_assigned > self.shared_mem_banks {
            return Err(SimError::Invariant(format!(
                "sma_banks_assigned ({}) > shared_mem_banks ({})",
                self.sma_banks_assigned, self.shared_mem_banks
            )));
        }
        if self.sma_units_per_sm * self.sma_banks_assigned > self.shared_mem_banks {
            return Err(SimError::Invariant(format!(
                "sma_units_per_sm * sma_banks_assigned ({}) > shared_mem_banks ({})",
                self.sma_units_per_sm * self.sma_banks_assigned,
                self.shared_mem_banks
            )));
        }
        if self.sma_units_per_sm > 0 && self.sma_banks_assigned < self.sma_array_cols {
            return Err(SimError::Invariant(format!(
                "sma_banks_assigned ({}) narrower than the array ({} cols)",
                self.sma_banks_assigned, self.sma_array_cols
            )));
        }
        if !(self.clock_ghz > 0.0) {
            return Err(SimError::Invariant("clock_ghz must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ws_stall_absorption) {
            return Err(SimError::Invariant(
                "ws_stall_absorption must lie in [0, 1]".into(),
            ));
        }
        if !(0.0 < self.simd_utilization && self.simd_utilization <= 1.0) {
            return Err(SimError::Invariant(
                "simd_utilization must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn weight_preload(&self) -> u32 {
        self.weight_preload_cycles.unwrap_or(self.sma_array_rows)
    }

    /// Which engine services GEMM on this machine.
    pub fn gemm_path(&self) -> GemmPath {
        if self.sma_units_per_sm > 0 {
            match self.dataflow.unwrap_or(Dataflow::SemiBroadcast) {
                Dataflow::SemiBroadcast => GemmPath::SemiBroadcast,
                Dataflow::WeightStationary => GemmPath::WeightStationary,
            }
        } else if self.tc_units_per_sm > 0 {
            GemmPath::DotProduct
        } else {
            GemmPath::SimdOnly
        }
    }

    /// FP16-equivalent MAC units on the GEMM path of one SM. One FP32 MAC
    /// counts as two FP16 units; a TC unit is 64 FP16 units. Falls back to
    /// the SIMD lanes when the machine has no GEMM engine.
    pub fn fp16_equiv_gemm_units(&self) -> u64 {
        let gemm = 2 * (self.sma_units_per_sm * self.sma_array_rows * self.sma_array_cols) as u64
            + 64 * self.tc_units_per_sm as u64;
        if gemm > 0 {
            gemm
        } else {
            2 * self.simd_lanes_per_sm as u64
        }
    }

    /// Peak FP32-equivalent MACs per cycle per SM on the GEMM path.
    pub fn peak_macs_per_cycle_sm(&self) -> u64 {
        match self.gemm_path() {
            GemmPath::SemiBroadcast | GemmPath::WeightStationary => {
                (self.sma_units_per_sm * self.sma_array_rows * self.sma_array_cols) as u64
            }
            GemmPath::DotProduct => 32 * self.tc_units_per_sm as u64,
            GemmPath::SimdOnly => self.simd_lanes_per_sm as u64,
        }
    }

    pub fn peak_macs_per_cycle_chip(&self) -> u64 {
        self.peak_macs_per_cycle_sm() * self.sm_count as u64
    }

    /// FP32 lanes usable by SIMD-mode code. SMA units running the
    /// semi-broadcast dataflow reconfigure in place to SIMD lanes (temporal
    /// integration); TC units and TPU-style arrays do not.
    pub fn simd_mode_lanes(&self) -> u32 {
        let systolic_as_simd = match self.dataflow.unwrap_or(Dataflow::SemiBroadcast) {
            Dataflow::SemiBroadcast => {
                self.sma_units_per_sm * self.sma_array_rows * self.sma_array_cols
            }
            Dataflow::WeightStationary => 0,
        };
        self.simd_lanes_per_sm + systolic_as_simd
    }
}

/// Unit-count area accounting plus declared controller storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceFootprint {
    pub fp16_equiv_units: u64,
    pub mac_units_fp32: u64,
    pub extra_storage_bytes: u64,
}

/// True iff the two machines have equal per-SM FP16-equivalent MAC units on
/// their GEMM paths.
pub fn iso_flop_pair(a: &MachineConfig, b: &MachineConfig) -> bool {
    a.fp16_equiv_gemm_units() == b.fp16_equiv_gemm_units()
}

/// Counts SIMD lanes, TC units, and SMA units in FP16 equivalents, plus the
/// systolic controller staging storage (`rows*8` bytes of A-in plus
/// `rows*8` bytes of C-out per unit).
pub fn iso_area_units(cfg: &MachineConfig) -> ResourceFootprint {
    let fp32 = (cfg.simd_lanes_per_sm
        + cfg.sma_units_per_sm * cfg.sma_array_rows * cfg.sma_array_cols)
        as u64;
    let fp16 = 2 * fp32 + 64 * cfg.tc_units_per_sm as u64;
    let extra = controller_storage_bytes(cfg);
    ResourceFootprint {
        fp16_equiv_units: fp16,
        mac_units_fp32: fp16 / 2,
        extra_storage_bytes: extra,
    }
}

/// A-in staging shared across the combined units plus per-unit C-out
/// staging: `rows*8 + units*rows*8` bytes (256 B for the 3-unit SM).
pub fn controller_storage_bytes(cfg: &MachineConfig) -> u64 {
    if cfg.sma_units_per_sm == 0 {
        return 0;
    }
    let rows = cfg.sma_array_rows as u64;
    rows * 8 + cfg.sma_units_per_sm as u64 * rows * 8
}

/// Controller storage as a fraction of on-chip RF + shared storage.
pub fn controller_overhead_ratio(cfg: &MachineConfig) -> f64 {
    controller_storage_bytes(cfg) as f64 / (cfg.rf_bytes_per_sm + cfg.shared_mem_bytes) as f64
}
