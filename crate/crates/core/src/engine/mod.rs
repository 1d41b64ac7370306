//! Round orchestration: local schedules, participation, aggregation.

mod aggregate;
mod checkpoint;
mod client;
mod federation;
mod mode;

pub use aggregate::{mean_shared, GlobalModel, SharedTensors};
pub use checkpoint::{load_federation, save_federation};
pub use client::{ClientState, LocalTraining};
pub use federation::{run_experiment, select_participants, Federation, FederationConfig};
pub use mode::{Mode, ScheduleConfig, SharedPart};
