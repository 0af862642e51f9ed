//! Data-grid resource broker: plan language, replica catalog, grid model,
//! job decomposition, bandwidth-aware scheduling and a deterministic
//! simulator of the testbed the broker drives.

pub mod catalog;
pub mod decompose;
pub mod experiment;
pub mod grid;
pub mod ids;
pub mod plan;
pub mod scenario;
pub mod scheduler;
pub mod sim;
