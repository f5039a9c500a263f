//! Configuration, trajectory files, grid experiments, reports, plots and
//! the verification battery.

pub mod config;
pub mod estimate;
pub mod experiment;
pub mod persist;
pub mod plot;
pub mod report;
pub mod verify;

pub use config::{BaselineConfig, ExperimentConfig, MeasureConfig, SystemConfig};
pub use estimate::{load_estimator_config, run_estimate, EstimateRecord};
pub use experiment::{run_experiment, write_outputs};
pub use persist::{load_trajectory, save_trajectory, LoadedTrajectory, TrajectoryMeta};
pub use report::ExperimentReport;
pub use verify::{run_verify, SuiteVerdict};
