pub mod eval;
pub mod partition;
pub mod serve;
pub mod train;

use std::path::Path;

use anyhow::anyhow;

use crate::CmdError;

/// Datasets are directories holding train.txt / valid.txt / test.txt.
pub fn check_dataset_dir(dir: &Path) -> Result<(), CmdError> {
    if !dir.join("train.txt").exists() {
        return Err(CmdError::usage(anyhow!(
            "dataset path {} does not contain train.txt",
            dir.display()
        )));
    }
    Ok(())
}
