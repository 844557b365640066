//! Seeded random-matrix experiments.

pub mod experiment;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod oracle;

pub use model::{sample_model, ExperimentConfig, Model, Observed, Sample, SignalSpec};
pub use oracle::{decompose, oracle_rie, Decomposition, Oracle};
pub use experiment::{Estimator, EmpiricalCurve, Scoreboard, TrialResult};
