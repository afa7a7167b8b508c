//! Dataset ingest, standardization, partitioning and synthetic shift data.

pub mod dataset;
pub mod scaler;
pub mod splits;
pub mod synth;

pub use dataset::{load_csv, parse_cell, read_csv, CsvOptions, Dataset};
pub use scaler::{fit_scaler, StandardScaler, STD_FLOOR};
pub use splits::{make_splits, SplitData, SplitPlan};
pub use synth::{synth_shift, SynthShift};
