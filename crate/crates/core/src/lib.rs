pub mod circuit;
pub mod clock;
pub mod drone;
pub mod error;
pub mod flight;
pub mod geometry;
pub mod gripper;
pub mod mission;
pub mod mmc;
pub mod perception;
pub mod powertrain;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod summary;
pub mod sweep;
pub mod telemetry;

pub use error::{Result, SimError};
pub use scenario::Scenario;
pub use sim::Simulator;
