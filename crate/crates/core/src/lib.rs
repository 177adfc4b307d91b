//! Simulation framework for knowledge distillation between pre-trained
//! models under heterogeneous data partitions.
//!
//! The crate is organized bottom-up: [`nn`] (classifier, losses, training),
//! [`data`] (datasets, partitioners, transfer sets), [`distill`] (KD
//! procedures), [`orchestrator`] (experiment protocol), [`fed`] (FedAvg),
//! [`metrics`] and [`report`].

pub mod data;
pub mod distill;
pub mod error;
pub mod fed;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod orchestrator;
pub mod report;
pub mod rng;

pub use error::{KdError, Result};
