pub mod cohort;
pub mod drift;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod sepsis;
pub mod synth;
pub mod timeline;
pub mod types;
