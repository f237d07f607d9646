use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::ModeKind;
use crate::error::{Error, Result};
use crate::train::SweepRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size_mb: f64,
    pub accuracy: f64,
    pub mode: ModeKind,
}

/// Dev accuracy against size, one curve per mode, each sorted by size.
/// Failed runs are skipped.
pub fn emit_curves(records: &[SweepRecord]) -> Result<Vec<CurvePoint>> {
    if records.is_empty() {
        return Err(Error::invalid("no sweep records"));
    }
    let mut pts: Vec<CurvePoint> = records
        .iter()
        .filter_map(|r| {
            r.dev_acc.map(|accuracy| CurvePoint {
                size_mb: r.size_mb,
                accuracy,
                mode: r.mode,
            })
        })
        .collect();
    pts.sort_by(|a, b| {
        a.mode
            .code()
            .cmp(&b.mode.code())
            .then(a.size_mb.total_cmp(&b.size_mb))
            .then(a.accuracy.total_cmp(&b.accuracy))
    });
    Ok(pts)
}

pub fn write_curves(points: &[CurvePoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
