//! Cycle-approximate simulator for a GPU streaming multiprocessor extended
//! with a temporally-integrated systolic mode.
//!
//! The crate models GEMM execution under three dataflows (semi-broadcast
//! weight-stationary systolic, classic weight-stationary systolic, and
//! dot-product), the shared-memory/register-file subsystem that serves them,
//! the software tiling and double-buffered warp scheduling that maps large
//! GEMMs onto the arrays, a linear event-cost energy model, and workload
//! descriptors for DNN models and a frame pipeline.

pub mod config;
pub mod energy;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod mapper;
pub mod matrix;
pub mod mem;
pub mod oracle;
pub mod sched;
pub mod sma;
pub mod trace;
pub mod workload;

pub use config::{Dataflow, GemmPath, MachineConfig, ResourceFootprint};
pub use error::SimError;
pub use matrix::{Layout, Matrix, Tensor};
pub use oracle::{ConvLayer, GemmProblem};
pub use trace::{Counters, EventKind, ExecutionTrace, ReuseStats};
