//! The experiment runner behind the command-line tool: dataset simulation,
//! per-cell training runs with resumable run directories, and report tables.

pub mod cell;
pub mod config;
pub mod data;
pub mod report;
pub mod run;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub use cell::{adapt_and_evaluate, embed_representation, pooled_eval_rows, CellOutcome};
pub use config::{DataSource, ExperimentConfig};
pub use data::{load_band, simulate_all, BandData, DataFile};
pub use report::{build_report, write_report, Report, Table};
pub use run::{cell_dir, run_experiment, CellMetrics, CellStatus, Manifest, RunOptions, SummaryRow};

/// Writes `bytes` to a sibling temporary file and renames it into place, so
/// readers never observe a partial file. The temporary is removed on failure.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    let result = fs::write(tmp, bytes).and_then(|()| fs::rename(tmp, path));
    result.map_err(|e| {
        let _ = fs::remove_file(tmp);
        Error::file(path, e)
    })
}
