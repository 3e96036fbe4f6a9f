//! Differentially private synthetic data via a genetic projection step.

pub mod cli;
pub mod dataset;
pub mod dp;
pub mod error;
pub mod evalkit;
pub mod gsd;
pub mod mechanisms;
pub mod queries;
pub mod rng;
pub mod sigmoid;

pub use dataset::{Attribute, AttributeKind, Column, Dataset, DomainSchema, Normalization, Value};
pub use dp::PrivacyLedger;
pub use error::{Error, Result};
pub use gsd::{GsdConfig, GsdOutcome, Optimizer};
pub use mechanisms::{adaptive, one_shot, MechanismOptions, MechanismOutput};
pub use queries::{Query, QuerySet, Workload, WorkloadKind, WorkloadManifest};
