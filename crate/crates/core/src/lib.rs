//! A laboratory for distributed GNN training with periodic model averaging.
//!
//! Graphs are partitioned across simulated machines that train local models
//! on their own subgraphs; a simulated parameter server averages them and,
//! optionally, corrects the average with full-neighbor gradient steps on the
//! global graph. Communication is accounted in bytes rather than performed.

pub mod config;
pub mod error;
pub mod gradients;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
