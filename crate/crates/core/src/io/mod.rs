//! Point-cloud and grid file formats, report serialization.

mod cloud;
mod grid;
mod report;

pub use cloud::{load_cloud, load_cloud_with, save_cloud, CloudFormat, LoadedCloud};
pub use grid::{load_grid_raw, read_pgm16, save_grid, GridFormat, RAW_MAGIC};
pub use report::{from_report_str, load_report, save_report, to_report_string, Provenance, TOOL_NAME};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    // temp files are created owner-only; give the result ordinary permissions
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
