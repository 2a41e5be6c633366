//! Self-balancing federated learning simulator.
//!
//! Clients hold class-imbalanced data. Before training, the server plans
//! minority-class augmentation from the pooled class histogram
//! ([`augmentation`]); every round it groups the online clients into
//! mediators whose pooled class mix is close to uniform ([`rescheduler`]),
//! trains each mediator's clients sequentially, and averages the mediator
//! updates by sample count ([`engine`]). A plain FedAvg baseline, traffic
//! accounting ([`metrics`]) and an experiment runner ([`runner`]) round it out.

pub mod apportion;
pub mod augmentation;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rescheduler;
pub mod runner;
pub mod seed;

pub use error::{Error, Result};
