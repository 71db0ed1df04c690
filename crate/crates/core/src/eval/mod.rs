pub mod auc;
pub mod results;
pub mod split;

pub use auc::{auc, AucError};
pub use results::{read_results_csv, write_results_csv, CellSummary, Column, ExperimentResult, ResultsTable};
pub use split::{make_split, Assignment, Regime, SplitError, SplitMember, SplitPlan, SplitRatios};
