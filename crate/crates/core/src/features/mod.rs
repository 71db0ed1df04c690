//! Feature registries, hourly aggregation, imputation, static encoding,
//! flattening, standardization and the on-disk matrix format.

pub mod aggregate;
pub mod container;
pub mod impute;
pub mod input;
pub mod spec;
pub mod standardize;
pub mod statics;

pub use aggregate::{aggregate_hourly, FeatureIndex, HourlyMatrix};
pub use container::{ContainerError, ContainerHeader, FeatureMatrix, FeatureRow, StaticKind};
pub use impute::impute_simple;
pub use input::{flat_len, ModelInput};
pub use spec::*;
pub use standardize::{Preprocessing, Standardizer};
pub use statics::{Demographics, StaticEncoder};
