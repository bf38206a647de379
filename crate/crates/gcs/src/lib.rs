//! Ground-control service and command-line front end for the simulator.

pub mod service;

pub use service::{router, spawn_simulation, CommandBody, ServiceConfig, SimHandle};
