use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::tensor_core::ParamStore;

/// Final hidden states of a two-unit encoder, one per example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenStatePlotData {
    pub points: Vec<(f64, f64)>,
    pub labels: Vec<usize>,
    /// `[x_min, y_min, x_max, y_max]` of the points.
    pub bbox: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    label: usize,
}

impl HiddenStatePlotData {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (&(x, y), &label) in self.points.iter().zip(&self.labels) {
            w.serialize(Row { x, y, label })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `x,y[,label]` rows as written by [`HiddenStatePlotData::write_csv`].
pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 2,
                    message: format!("column {} is not a number", j + 1),
                })
        };
        out.push((num(0)?, num(1)?));
    }
    Ok(out)
}

pub fn export_hidden_states(
    arch: &Architecture,
    store: &ParamStore<f32>,
    data: &EncodedDataset,
) -> Result<HiddenStatePlotData> {
    if arch.config.hidden != 2 {
        return Err(Error::invalid(format!(
            "hidden-state export needs 2 hidden units, model has {}",
            arch.config.hidden
        )));
    }
    let mut points = Vec::with_capacity(data.len());
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for seq in &data.sequences {
        let h = arch.hidden_eval(store, seq)?;
        let (x, y) = (h[0] as f64, h[1] as f64);
        bbox = [bbox[0].min(x), bbox[1].min(y), bbox[2].max(x), bbox[3].max(y)];
        points.push((x, y));
    }
    Ok(HiddenStatePlotData {
        points,
        labels: data.labels.clone(),
        bbox,
    })
}
