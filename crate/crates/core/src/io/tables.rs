//! CSV tables with header rows.

use std::path::Path;

use crate::error::{Error, Result};
use crate::holo::FocusScan;
use crate::mgd::HistoryRecord;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Columns `iter, c1, c2, theta, e_d, t`.
pub fn write_history(path: impl AsRef<Path>, history: &[HistoryRecord]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryRecord>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Columns `z, sigma, contrast` with `contrast = sqrt(sigma)`.
pub fn write_focus_scan(path: impl AsRef<Path>, scan: &FocusScan) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["z", "sigma", "contrast"])?;
    for ((z, s), c) in scan.z_list.iter().zip(&scan.sigma_list).zip(&scan.contrast_list) {
        w.write_record([z.to_string(), s.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
