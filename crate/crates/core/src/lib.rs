//! Learning linear dynamical systems from self-selected (censored)
//! observations.
//!
//! The state follows `x_{t+1} = A x_t + w_t` with standard Gaussian noise,
//! and `x_t` is revealed only when it lies in an observation set `S_t`
//! that may depend on the past. The crate provides the observation sets,
//! truncated-Gaussian primitives, a simulator, the estimator and an
//! experiment harness.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod sets;
pub mod simulator;
pub mod truncated;

pub use error::{Error, Result};
pub use estimator::{learn_censored_lds, son_sg, warmup, ConfidenceEllipsoid, LearnReport, SonSgConfig};
pub use rng::NormalStream;
pub use sets::{make_chasing_schedule, make_static_schedule, HalfSpace, ObservableSet, SetSchedule};
pub use simulator::{simulate, CensoredTrajectory, CensoredView, SystemSpec};
