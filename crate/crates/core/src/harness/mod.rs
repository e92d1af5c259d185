//! Training, evaluation, sweeps, gradient checks, configuration, and
//! persistence.

pub mod config;
pub mod evaluate;
pub mod gradcheck;
pub mod model;
pub mod record;
pub mod rng;
pub mod train;

pub use config::{EvalConfig, RunConfig, SystemKind, TrainConfig};
pub use evaluate::{evaluate, sweep_distance, sweep_window, TestSet};
pub use gradcheck::{grad_check, grad_check_all, GradCheckConfig, GradPath, GRAD_TOLERANCE};
pub use model::Model;
pub use record::{DistanceRow, RunRecord, WindowRow};
pub use rng::{mersenne_stream, tausworthe_stream, Mt19937, RngKind, Tausworthe};
pub use train::{train, train_with, Trained};
