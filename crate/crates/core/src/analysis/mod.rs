//! Post-hoc analyses of trained and deployed models.

mod area;
mod clusters;
mod curves;
mod hidden;

pub use area::{area_ratio, AreaRatio, DEFAULT_GRID};
pub use clusters::{dump_clusters, ClusterGroup, ClusterReport};
pub use curves::{emit_curves, write_curves, CurvePoint};
pub use hidden::{export_hidden_states, read_points, HiddenStatePlotData};
