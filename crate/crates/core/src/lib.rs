//! Model stitching, SLO-driven placement and variant selection, hot-subgraph
//! preloading, and a discrete-event simulator for running several DNN tasks
//! on a heterogeneous SoC.

pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod optimizer;
pub mod preloader;
pub mod profiles;
pub mod rng;
pub mod simulator;
pub mod zoo;

pub use error::{Error, Result};
pub use estimator::{AccuracySource, LatencySource};
pub use optimizer::{PlacementOrder, PlanResult, SloConfig, TaskSlo};
pub use profiles::{Processor, ProfileTable};
pub use zoo::{StitchMap, Task, Zoo};
