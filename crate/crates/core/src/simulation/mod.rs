//! Synthetic instances with known ground truth and a replication harness.

pub mod discrete;
pub mod example3;
pub mod replication;

pub use discrete::{discrete_expectations, gen_discrete, DiscreteInstance, DiscreteRow};
pub use example3::{gen_example3, oracle_example3, Example3Spec};
pub use replication::{quantile, replication_study, ReplicationConfig, ReplicationReport, ReplicationRow, Strategy, TestSettings};
