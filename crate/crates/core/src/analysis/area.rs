use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaRatio {
    pub grid: usize,
    pub occupied: usize,
    pub ratio: f64,
}

fn cell(x: f64, grid: usize) -> usize {
    let c = ((x + 1.0) / 2.0 * grid as f64).floor();
    if c.is_nan() || c < 0.0 {
        0
    } else {
        (c as usize).min(grid - 1)
    }
}

/// Fraction of cells of a `grid × grid` partition of `[−1, 1]²` holding at
/// least one point. Points on the upper edge fall in the last cell; points
/// outside the square are clamped to the border cells.
pub fn area_ratio(points: &[(f64, f64)], grid: usize) -> Result<AreaRatio> {
    if points.is_empty() {
        return Err(Error::invalid("area ratio of an empty point set"));
    }
    if grid == 0 {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let mut seen = vec![false; grid * grid];
    for &(x, y) in points {
        seen[cell(y, grid) * grid + cell(x, grid)] = true;
    }
    let occupied = seen.iter().filter(|&&s| s).count();
    Ok(AreaRatio {
        grid,
        occupied,
        ratio: occupied as f64 / (grid * grid) as f64,
    })
}
