//! `smasim`: experiment driver for the tensor-dataflow SM simulator.
//! Exit codes: 0 success, 1 validation failure, 2 config/usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use smasim_core::experiments::{
    cmd_compare, cmd_explain_plan, cmd_pipeline, cmd_sweep, cmd_validate, sweep_csv, CompareKind,
    CompareReport, PipelineReport, SweepReport, ValidateReport,
};
use smasim_core::SimError;

#[derive(Parser)]
#[command(name = "smasim", version, about = "GPU tensor-dataflow simulator")]
struct Cli {
    /// Worker threads for sweep points (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Re-run the invocation embedded in a previous JSON report.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SizesArg {
    /// Comma-separated square sizes, e.g. 256,1024,4096.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Random-GEMM oracle equivalence across all engines and the mapper.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// FLOPS-efficiency sweep over configs and square sizes (CSV default).
    Sweep {
        /// Preset name or config file; repeatable.
        #[arg(long, required = true)]
        config: Vec<String>,
        #[command(flatten)]
        sizes: SizesArg,
        /// Also dump per-point event counters to this CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Pairwise experiment: iso-flop | iso-area | energy | tpu-dataflow.
    Compare {
        experiment: String,
        #[command(flatten)]
        sizes: SizesArg,
    },
    /// Frame-pipeline latency for a list of detection intervals.
    Pipeline {
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 4, 8])]
        intervals: Vec<u32>,
        #[arg(long, default_value = "volta-baseline")]
        config: String,
    },
    /// Show the thread-block tiling a GEMM would use.
    ExplainPlan {
        #[arg(long, default_value = "2-sma")]
        config: String,
        /// Size as N (square) or MxNxK.
        #[arg(long, default_value = "4096")]
        size: String,
    },
}

fn emit<T: Serialize>(report: &T, csv: Option<String>, cli: &Cli) -> Result<(), SimError> {
    let format = cli.format.unwrap_or(if csv.is_some() {
        Format::Csv
    } else {
        Format::Json
    });
    let text = match (format, csv) {
        (Format::Csv, Some(c)) => c,
        (Format::Csv, None) => {
            return Err(SimError::Parse(
                "this report has no CSV form; use --format json".into(),
            ))
        }
        (Format::Json, _) => {
            let mut t = serde_json::to_string_pretty(report)
                .map_err(|e| SimError::Parse(e.to_string()))?;
            t.push('\n');
            t
        }
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_dims(size: &str) -> Result<(usize, usize, usize), SimError> {
    let parts: Vec<&str> = size.split('x').collect();
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| SimError::Parse(format!("bad size component `{s}`")))
    };
    match parts.as_slice() {
        [s] => {
            let n = parse(s)?;
            Ok((n, n, n))
        }
        [m, n, k] => Ok((parse(m)?, parse(n)?, parse(k)?)),
        _ => Err(SimError::Parse(format!(
            "size must be N or MxNxK, got `{size}`"
        ))),
    }
}

fn compare_csv(report: &CompareReport) -> String {
    let mut out = String::from("label,baseline_cycles,candidate_cycles,speedup\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{:.4}\n",
            r.label, r.baseline_cycles, r.candidate_cycles, r.speedup
        ));
    }
    out
}

fn pipeline_csv(report: &PipelineReport) -> String {
    let mut out = String::from("detection_interval,average_ms,worst_ms,target_met\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{:.3},{:.3},{}\n",
            r.detection_interval, r.average_ms, r.worst_ms, r.target_met
        ));
    }
    out
}

fn validate_csv(report: &ValidateReport) -> String {
    let mut out = String::from("stage,case_index,m,n,k,detail\n");
    for f in &report.failures {
        out.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            f.stage, f.replay.case_index, f.m, f.n, f.k, f.detail
        ));
    }
    out
}

fn trace_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "config,size_m,cycles,macs,stall_cycles,energy_total_pj\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.config, r.size_m, r.cycles, r.macs, r.stall_cycles, r.energy_total_pj
        ));
    }
    out
}

fn replay_command(path: &PathBuf) -> Result<Command, SimError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| SimError::Parse(e.to_string()))?;
    let inv = value
        .get("invocation")
        .ok_or_else(|| SimError::Parse("report has no `invocation` field".into()))?;
    let inv: smasim_core::experiments::Invocation =
        serde_json::from_value(inv.clone()).map_err(|e| SimError::Parse(e.to_string()))?;
    Ok(match inv.command.as_str() {
        "validate" => Command::Validate {
            seed: inv.seed,
            count: inv.count,
        },
        "sweep" => Command::Sweep {
            config: inv.configs,
            sizes: SizesArg { sizes: inv.sizes },
            trace: None,
        },
        "compare" => Command::Compare {
            experiment: inv
                .experiment
                .ok_or_else(|| SimError::Parse("compare report missing experiment".into()))?,
            sizes: SizesArg { sizes: inv.sizes },
        },
        "pipeline" => Command::Pipeline {
            intervals: inv.intervals,
            config: inv
                .configs
                .first()
                .cloned()
                .unwrap_or_else(|| "volta-baseline".into()),
        },
        other => return Err(SimError::Parse(format!("cannot replay `{other}`"))),
    })
}

fn run(cli: &Cli, command: Command) -> Result<u8, SimError> {
    match command {
        Command::Validate { seed, count } => {
            let inject = std::env::var("SMASIM_INJECT_FAULT").is_ok();
            let report = cmd_validate(seed, count, inject)?;
            let ok = report.passed();
            emit(&report, Some(validate_csv(&report)), cli)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            Ok(if ok { 0 } else { 1 })
        }
        Command::Sweep {
            config,
            sizes,
            trace,
        } => {
            if sizes.sizes.is_empty() {
                return Err(SimError::Parse("sweep needs --sizes".into()));
            }
            let report = cmd_sweep(&config, &sizes.sizes)?;
            if let Some(path) = trace {
                std::fs::write(path, trace_csv(&report))?;
            }
            emit(&report, Some(sweep_csv(&report)), cli)?;
            Ok(0)
        }
        Command::Compare { experiment, sizes } => {
            let kind = CompareKind::parse(&experiment)?;
            let report = cmd_compare(kind, &sizes.sizes)?;
            emit(&report, Some(compare_csv(&report)), cli)?;
            Ok(0)
        }
        Command::Pipeline { intervals, config } => {
            let report = cmd_pipeline(&intervals, &config)?;
            emit(&report, Some(pipeline_csv(&report)), cli)?;
            Ok(0)
        }
        Command::ExplainPlan { config, size } => {
            let (m, n, k) = parse_dims(&size)?;
            let report = cmd_explain_plan(&config, m, n, k)?;
            emit(&report, None, cli)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized; --jobs ignored");
        }
    }
    let command = match (&cli.replay, cli.command.is_some()) {
        (Some(path), false) => match replay_command(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        (Some(_), true) => {
            eprintln!("error: --replay conflicts with an explicit subcommand");
            return ExitCode::from(2);
        }
        (None, _) => match cli.command.take() {
            Some(c) => c,
            None => {
                eprintln!("error: a subcommand or --replay is required");
                return ExitCode::from(2);
            }
        },
    };
    match run(&cli, command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
